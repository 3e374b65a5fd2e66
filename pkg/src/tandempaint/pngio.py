"""PNG codec for the interchange formats the toolkit reads and writes.

Supports 8- and 16-bit grayscale, RGB, gray+alpha and RGBA, non-interlaced.
Palette images and interlacing are rejected as unsupported rather than
malformed. Gray+alpha decodes to a 4-channel raster (luma replicated).
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import DecodeError, ParameterError, UnsupportedFormatError
from .raster import Raster

_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_CHANNELS_FOR_COLOR_TYPE = {0: 1, 2: 3, 4: 2, 6: 4}
_COLOR_TYPE_FOR_CHANNELS = {1: 0, 3: 2, 4: 6}


def _chunk(ctype: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + ctype
        + payload
        + struct.pack(">I", zlib.crc32(ctype + payload) & 0xFFFFFFFF)
    )


def _paeth_vec(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    p = a + b - c
    pa = np.abs(p - a)
    pb = np.abs(p - b)
    pc = np.abs(p - c)
    return np.where((pa <= pb) & (pa <= pc), a, np.where(pb <= pc, b, c))


def _filter_rows(rows: np.ndarray, bpp: int, filter_type: int) -> bytes:
    """Prefix each scanline with ``filter_type`` and apply that filter."""
    h, stride = rows.shape
    out = bytearray()
    prev = np.zeros(stride, dtype=np.int16)
    for y in range(h):
        cur = rows[y].astype(np.int16)
        left = np.zeros(stride, dtype=np.int16)
        left[bpp:] = cur[:-bpp]
        upleft = np.zeros(stride, dtype=np.int16)
        upleft[bpp:] = prev[:-bpp]
        if filter_type == 0:
            f = cur
        elif filter_type == 1:
            f = cur - left
        elif filter_type == 2:
            f = cur - prev
        elif filter_type == 3:
            f = cur - ((left + prev) >> 1)
        elif filter_type == 4:
            f = cur - _paeth_vec(left, prev, upleft)
        else:
            raise ParameterError(f"invalid PNG filter type {filter_type}")
        out.append(filter_type)
        out += (f % 256).astype(np.uint8).tobytes()
        prev = cur
    return bytes(out)


def _encode(img: Raster, bit_depth: int, filter_type: int) -> bytes:
    if bit_depth not in (8, 16):
        raise ParameterError(f"bit depth must be 8 or 16, got {bit_depth}")
    color_type = _COLOR_TYPE_FOR_CHANNELS[img.channels]
    maxv = (1 << bit_depth) - 1
    q = np.round(img.pixels.astype(np.float64) * maxv)
    if bit_depth == 8:
        rows = q.astype(np.uint8).reshape(img.height, -1)
        bpp = img.channels
    else:
        rows = (
            np.ascontiguousarray(q.astype(">u2"))
            .view(np.uint8)
            .reshape(img.height, -1)
        )
        bpp = img.channels * 2
    raw = _filter_rows(rows, bpp, filter_type)
    ihdr = struct.pack(">IIBBBBB", img.width, img.height, bit_depth, color_type, 0, 0, 0)
    return (
        _SIGNATURE
        + _chunk(b"IHDR", ihdr)
        + _chunk(b"IDAT", zlib.compress(raw, 6))
        + _chunk(b"IEND", b"")
    )


def png_encode(img: Raster, bit_depth: int = 8) -> bytes:
    """Serialize a raster as a PNG (gray, RGB, or RGBA per its channels)."""
    return _encode(img, bit_depth, filter_type=0)


def _defilter(raw: bytes, h: int, stride: int, bpp: int, err_offset: int) -> np.ndarray:
    recon = np.zeros((h, stride), dtype=np.uint8)
    pos = 0
    for y in range(h):
        ftype = raw[pos]
        pos += 1
        line = np.frombuffer(raw, dtype=np.uint8, count=stride, offset=pos)
        pos += stride
        prev = recon[y - 1] if y else np.zeros(stride, dtype=np.uint8)
        if ftype == 0:
            recon[y] = line
        elif ftype == 1:
            sums = np.cumsum(line.reshape(-1, bpp).astype(np.int64), axis=0)
            recon[y] = (sums % 256).astype(np.uint8).reshape(-1)
        elif ftype == 2:
            recon[y] = line + prev  # uint8 wraparound is the mod-256 we need
        elif ftype == 3:
            out = [0] * stride
            lp = line.tolist()
            pv = prev.tolist()
            for i in range(stride):
                left = out[i - bpp] if i >= bpp else 0
                out[i] = (lp[i] + ((left + pv[i]) >> 1)) & 0xFF
            recon[y] = out
        elif ftype == 4:
            out = [0] * stride
            lp = line.tolist()
            pv = prev.tolist()
            for i in range(stride):
                a = out[i - bpp] if i >= bpp else 0
                b = pv[i]
                c = pv[i - bpp] if i >= bpp else 0
                p = a + b - c
                pa = abs(p - a)
                pb = abs(p - b)
                pc = abs(p - c)
                pred = a if (pa <= pb and pa <= pc) else (b if pb <= pc else c)
                out[i] = (lp[i] + pred) & 0xFF
            recon[y] = out
        else:
            raise DecodeError(f"invalid scanline filter type {ftype} in row {y}", err_offset)
    return recon


def png_decode(data: bytes) -> Raster:
    """Decode PNG bytes to a Raster. Errors name the offending byte offset."""
    if len(data) < len(_SIGNATURE):
        raise DecodeError("file shorter than the PNG signature", offset=0)
    if data[: len(_SIGNATURE)] != _SIGNATURE:
        raise DecodeError("bad PNG signature", offset=0)

    ihdr = None
    ihdr_offset = None
    idat = bytearray()
    first_idat_offset = None
    seen_iend = False
    offset = len(_SIGNATURE)
    while offset < len(data):
        if len(data) - offset < 8:
            raise DecodeError("truncated chunk header", offset)
        (length,) = struct.unpack(">I", data[offset : offset + 4])
        ctype = data[offset + 4 : offset + 8]
        dstart = offset + 8
        dend = dstart + length
        if dend + 4 > len(data):
            raise DecodeError(f"truncated {ctype.decode('latin1')} chunk", offset)
        payload = data[dstart:dend]
        (crc,) = struct.unpack(">I", data[dend : dend + 4])
        if zlib.crc32(ctype + payload) & 0xFFFFFFFF != crc:
            raise DecodeError(f"CRC mismatch in {ctype.decode('latin1')} chunk", offset)
        if ctype == b"IHDR":
            if ihdr is not None or offset != len(_SIGNATURE):
                raise DecodeError("IHDR must be the first and only header chunk", offset)
            if length != 13:
                raise DecodeError(f"IHDR length {length}, expected 13", offset)
            ihdr = struct.unpack(">IIBBBBB", payload)
            ihdr_offset = offset
        elif ctype == b"IDAT":
            if ihdr is None:
                raise DecodeError("IDAT before IHDR", offset)
            if first_idat_offset is None:
                first_idat_offset = offset
            idat += payload
        elif ctype == b"IEND":
            seen_iend = True
            break
        # Ancillary chunks are skipped.
        offset = dend + 4

    if ihdr is None:
        raise DecodeError("missing IHDR chunk", len(_SIGNATURE))
    if not seen_iend:
        raise DecodeError("missing IEND chunk", len(data))
    if not idat:
        raise DecodeError("no IDAT data", len(data))

    w, h, bit_depth, color_type, compression, filter_method, interlace = ihdr
    if w < 1 or h < 1:
        raise DecodeError(f"invalid dimensions {w}x{h}", ihdr_offset)
    if color_type == 3:
        raise UnsupportedFormatError("palette (indexed) PNGs are not supported")
    if color_type not in _CHANNELS_FOR_COLOR_TYPE:
        raise DecodeError(f"invalid color type {color_type}", ihdr_offset)
    if bit_depth not in (8, 16):
        raise UnsupportedFormatError(f"bit depth {bit_depth} not supported (need 8 or 16)")
    if compression != 0 or filter_method != 0:
        raise DecodeError(
            f"invalid compression/filter method {compression}/{filter_method}", ihdr_offset
        )
    if interlace == 1:
        raise UnsupportedFormatError("Adam7 interlaced PNGs are not supported")
    if interlace != 0:
        raise DecodeError(f"invalid interlace method {interlace}", ihdr_offset)

    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as exc:
        raise DecodeError(f"IDAT inflate failed: {exc}", first_idat_offset) from None

    file_channels = _CHANNELS_FOR_COLOR_TYPE[color_type]
    bpp = file_channels * bit_depth // 8
    stride = w * bpp
    if len(raw) != h * (stride + 1):
        raise DecodeError(
            f"decompressed pixel data is {len(raw)} bytes, expected {h * (stride + 1)}",
            first_idat_offset,
        )
    recon = _defilter(raw, h, stride, bpp, first_idat_offset)

    maxv = (1 << bit_depth) - 1
    if bit_depth == 8:
        samples = recon.reshape(h, w, file_channels).astype(np.float32)
    else:
        samples = (
            np.frombuffer(recon.tobytes(), dtype=">u2")
            .reshape(h, w, file_channels)
            .astype(np.float32)
        )
    values = samples / np.float32(maxv)
    if color_type == 4:
        gray = values[:, :, 0]
        values = np.stack([gray, gray, gray, values[:, :, 1]], axis=-1)
    return Raster.from_array(values, copy=False)
