"""PNG codec round-trips and malformed-input contracts."""

import struct
import zlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tandempaint import DecodeError, Raster, UnsupportedFormatError, png_decode, png_encode
from tandempaint.pngio import _encode

SIGNATURE = b"\x89PNG\r\n\x1a\n"


def rng_raster(seed, h, w, c):
    return Raster.from_array(np.random.default_rng(seed).random((h, w, c)).astype(np.float32))


def chunks_of(data):
    """Parse (offset, type, payload) triples from a valid PNG."""
    out = []
    pos = len(SIGNATURE)
    while pos < len(data):
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        ctype = data[pos + 4 : pos + 8]
        payload = data[pos + 8 : pos + 8 + length]
        out.append((pos, ctype, payload))
        pos += 12 + length
    return out


def rebuild(chunk_list):
    parts = [SIGNATURE]
    for _, ctype, payload in chunk_list:
        crc = zlib.crc32(ctype + payload) & 0xFFFFFFFF
        parts.append(struct.pack(">I", len(payload)) + ctype + payload + struct.pack(">I", crc))
    return b"".join(parts)


class TestRoundTrip:
    @pytest.mark.parametrize("channels", [1, 3, 4])
    def test_8bit_quantization_bound(self, channels):
        img = rng_raster(channels, 13, 17, channels)
        back = png_decode(png_encode(img, bit_depth=8))
        assert (back.height, back.width, back.channels) == (13, 17, channels)
        assert np.abs(back.pixels - img.pixels).max() <= 1.0 / 255.0

    @pytest.mark.parametrize("channels", [1, 3, 4])
    def test_16bit_quantization_bound(self, channels):
        img = rng_raster(channels + 10, 9, 11, channels)
        back = png_decode(png_encode(img, bit_depth=16))
        assert np.abs(back.pixels - img.pixels).max() <= 1.0 / 65535.0

    def test_quarter_levels_2x2(self):
        vals = np.array(
            [[[0.0] * 3, [1 / 3] * 3], [[2 / 3] * 3, [1.0] * 3]], dtype=np.float32
        )
        back = png_decode(png_encode(Raster.from_array(vals)))
        assert np.abs(back.pixels - vals).max() <= 1.0 / 255.0

    def test_decode_then_encode_is_pixel_identical(self):
        img = rng_raster(99, 21, 8, 3)
        payload = png_encode(img)
        once = png_decode(payload)
        twice = png_decode(png_encode(once))
        assert np.array_equal(once.pixels, twice.pixels)

    def test_alpha_survives(self):
        arr = np.zeros((4, 4, 4), dtype=np.float32)
        arr[:, :, 3] = np.linspace(0, 1, 16, dtype=np.float32).reshape(4, 4)
        back = png_decode(png_encode(Raster.from_array(arr)))
        assert back.channels == 4
        assert np.abs(back.pixels[:, :, 3] - arr[:, :, 3]).max() <= 1.0 / 255.0

    @pytest.mark.parametrize("filter_type", [0, 1, 2, 3, 4])
    def test_all_scanline_filters_decode(self, filter_type):
        # the public encoder always writes filter 0; the private hook covers
        # the decoder's sub/up/average/paeth reconstruction paths
        img = rng_raster(filter_type, 12, 10, 3)
        reference = png_decode(_encode(img, 8, 0))
        filtered = png_decode(_encode(img, 8, filter_type))
        assert np.array_equal(reference.pixels, filtered.pixels)

    @pytest.mark.parametrize("filter_type", [1, 2, 3, 4])
    def test_filters_16bit(self, filter_type):
        img = rng_raster(50 + filter_type, 7, 9, 4)
        reference = png_decode(_encode(img, 16, 0))
        filtered = png_decode(_encode(img, 16, filter_type))
        assert np.array_equal(reference.pixels, filtered.pixels)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=15, deadline=None)
    def test_roundtrip_property(self, seed):
        rng = np.random.default_rng(seed)
        h, w = int(rng.integers(1, 20)), int(rng.integers(1, 20))
        c = int(rng.choice([1, 3, 4]))
        img = Raster.from_array(rng.random((h, w, c)).astype(np.float32))
        back = png_decode(png_encode(img))
        assert np.abs(back.pixels - img.pixels).max() <= 1.0 / 255.0

    def test_gray_alpha_expands_to_rgba(self):
        # color type 4 (gray+alpha) is hand-built: 2x1, gray 0x40 alpha 0xFF
        ihdr = struct.pack(">IIBBBBB", 2, 1, 8, 4, 0, 0, 0)
        raw = b"\x00" + bytes([0x40, 0xFF, 0xC0, 0x80])
        chunk_list = [
            (0, b"IHDR", ihdr),
            (0, b"IDAT", zlib.compress(raw)),
            (0, b"IEND", b""),
        ]
        img = png_decode(rebuild(chunk_list))
        assert img.channels == 4
        assert img.pixels[0, 0, 0] == img.pixels[0, 0, 1] == img.pixels[0, 0, 2]
        assert img.pixels[0, 0, 0] == pytest.approx(0x40 / 255)
        assert img.pixels[0, 1, 3] == pytest.approx(0x80 / 255)


class TestMalformedInput:
    def test_bad_signature_names_offset_zero(self):
        with pytest.raises(DecodeError) as exc_info:
            png_decode(b"NOTAPNG" + b"\x00" * 40)
        assert exc_info.value.offset == 0

    def test_empty_input(self):
        with pytest.raises(DecodeError):
            png_decode(b"")

    def test_truncated_file_names_offset(self):
        payload = png_encode(rng_raster(0, 6, 6, 3))
        with pytest.raises(DecodeError) as exc_info:
            png_decode(payload[: len(payload) - 9])
        assert exc_info.value.offset is not None
        assert "offset" in str(exc_info.value)

    def test_truncation_never_yields_partial_raster(self):
        payload = png_encode(rng_raster(1, 8, 8, 3))
        for cut in range(0, len(payload) - 1, 7):
            with pytest.raises((DecodeError, UnsupportedFormatError)):
                png_decode(payload[:cut])

    def test_crc_corruption_detected(self):
        payload = bytearray(png_encode(rng_raster(2, 6, 6, 1)))
        offset, ctype, chunk_payload = chunks_of(bytes(payload))[1]  # IDAT
        payload[offset + 8] ^= 0xFF
        with pytest.raises(DecodeError) as exc_info:
            png_decode(bytes(payload))
        assert "CRC" in str(exc_info.value)
        assert exc_info.value.offset == offset

    def test_palette_unsupported(self):
        ihdr = struct.pack(">IIBBBBB", 1, 1, 8, 3, 0, 0, 0)
        data = rebuild([
            (0, b"IHDR", ihdr),
            (0, b"PLTE", b"\x00\x00\x00"),
            (0, b"IDAT", zlib.compress(b"\x00\x00")),
            (0, b"IEND", b""),
        ])
        with pytest.raises(UnsupportedFormatError) as exc_info:
            png_decode(data)
        assert "palette" in str(exc_info.value).lower()

    def test_interlace_unsupported(self):
        ihdr = struct.pack(">IIBBBBB", 1, 1, 8, 0, 0, 0, 1)
        data = rebuild([
            (0, b"IHDR", ihdr),
            (0, b"IDAT", zlib.compress(b"\x00\x00")),
            (0, b"IEND", b""),
        ])
        with pytest.raises(UnsupportedFormatError):
            png_decode(data)

    def test_low_bit_depth_unsupported(self):
        ihdr = struct.pack(">IIBBBBB", 1, 1, 4, 0, 0, 0, 0)
        data = rebuild([
            (0, b"IHDR", ihdr),
            (0, b"IDAT", zlib.compress(b"\x00\x00")),
            (0, b"IEND", b""),
        ])
        with pytest.raises(UnsupportedFormatError):
            png_decode(data)

    def test_idat_before_ihdr_rejected(self):
        payload = png_encode(rng_raster(3, 4, 4, 3))
        parsed = chunks_of(payload)
        reordered = [parsed[1], parsed[0]] + parsed[2:]
        with pytest.raises(DecodeError):
            png_decode(rebuild(reordered))

    def test_missing_iend_rejected(self):
        payload = png_encode(rng_raster(4, 4, 4, 1))
        parsed = chunks_of(payload)
        with pytest.raises(DecodeError):
            png_decode(rebuild(parsed[:-1]))

    def test_garbage_idat_stream(self):
        ihdr = struct.pack(">IIBBBBB", 4, 4, 8, 0, 0, 0, 0)
        data = rebuild([
            (0, b"IHDR", ihdr),
            (0, b"IDAT", b"this is not zlib"),
            (0, b"IEND", b""),
        ])
        with pytest.raises(DecodeError) as exc_info:
            png_decode(data)
        assert exc_info.value.offset is not None

    def test_wrong_decompressed_length(self):
        ihdr = struct.pack(">IIBBBBB", 4, 4, 8, 0, 0, 0, 0)
        data = rebuild([
            (0, b"IHDR", ihdr),
            (0, b"IDAT", zlib.compress(b"\x00" * 7)),  # needs 4*(4+1)=20
            (0, b"IEND", b""),
        ])
        with pytest.raises(DecodeError):
            png_decode(data)

    def test_bad_scanline_filter_type(self):
        ihdr = struct.pack(">IIBBBBB", 2, 1, 8, 0, 0, 0, 0)
        data = rebuild([
            (0, b"IHDR", ihdr),
            (0, b"IDAT", zlib.compress(b"\x09\x00\x00")),
            (0, b"IEND", b""),
        ])
        with pytest.raises(DecodeError) as exc_info:
            png_decode(data)
        assert "filter" in str(exc_info.value)
