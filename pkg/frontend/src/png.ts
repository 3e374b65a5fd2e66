/**
 * Minimal PNG support for the studio: encode the RGBA hint layer into a
 * standard PNG (8-bit RGBA, filter 0, stored-block zlib stream — valid for
 * any decoder, no compression library needed), read back exactly that
 * subset, and sniff width/height off arbitrary PNG files.
 */

const SIGNATURE = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];
const MAX_STORED_BLOCK = 65535;

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(bytes: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) {
    c = CRC_TABLE[(c ^ bytes[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

function adler32(bytes: Uint8Array): number {
  let a = 1;
  let b = 0;
  for (let i = 0; i < bytes.length; i++) {
    a = (a + bytes[i]) % 65521;
    b = (b + a) % 65521;
  }
  return ((b << 16) | a) >>> 0;
}

function storedDeflate(raw: Uint8Array): Uint8Array {
  const blocks = Math.max(1, Math.ceil(raw.length / MAX_STORED_BLOCK));
  const out = new Uint8Array(2 + blocks * 5 + raw.length + 4);
  out[0] = 0x78; // 32K window, deflate
  out[1] = 0x01; // no preset dictionary, fastest-compression flag
  let pos = 2;
  for (let i = 0; i < blocks; i++) {
    const start = i * MAX_STORED_BLOCK;
    const len = Math.min(MAX_STORED_BLOCK, raw.length - start);
    out[pos++] = i === blocks - 1 ? 1 : 0; // BFINAL, BTYPE=00 (stored)
    out[pos++] = len & 0xff;
    out[pos++] = len >>> 8;
    out[pos++] = ~len & 0xff;
    out[pos++] = (~len >>> 8) & 0xff;
    out.set(raw.subarray(start, start + len), pos);
    pos += len;
  }
  const sum = adler32(raw);
  const view = new DataView(out.buffer);
  view.setUint32(pos, sum, false);
  return out;
}

function storedInflate(stream: Uint8Array): Uint8Array {
  if (stream.length < 6) {
    throw new Error('zlib stream truncated');
  }
  if ((stream[0] & 0x0f) !== 0x08) {
    throw new Error('not a deflate stream');
  }
  const parts: Uint8Array[] = [];
  let total = 0;
  let pos = 2;
  for (;;) {
    if (pos >= stream.length - 4) {
      throw new Error('deflate block header missing');
    }
    const header = stream[pos++];
    if ((header & 0x06) !== 0) {
      throw new Error('only stored deflate blocks are supported');
    }
    const len = stream[pos] | (stream[pos + 1] << 8);
    const nlen = stream[pos + 2] | (stream[pos + 3] << 8);
    if ((len ^ nlen) !== 0xffff) {
      throw new Error('stored block length check failed');
    }
    pos += 4;
    parts.push(stream.subarray(pos, pos + len));
    total += len;
    pos += len;
    if (header & 1) {
      break;
    }
  }
  const raw = new Uint8Array(total);
  let offset = 0;
  for (const part of parts) {
    raw.set(part, offset);
    offset += part.length;
  }
  const sum = new DataView(stream.buffer, stream.byteOffset).getUint32(pos, false);
  if (sum !== adler32(raw)) {
    throw new Error('zlib checksum mismatch');
  }
  return raw;
}

function chunk(tag: string, payload: Uint8Array): Uint8Array {
  const out = new Uint8Array(12 + payload.length);
  const view = new DataView(out.buffer);
  view.setUint32(0, payload.length, false);
  for (let i = 0; i < 4; i++) {
    out[4 + i] = tag.charCodeAt(i);
  }
  out.set(payload, 8);
  view.setUint32(8 + payload.length, crc32(out.subarray(4, 8 + payload.length)), false);
  return out;
}

export function encodeRgbaPng(
  width: number,
  height: number,
  rgba: Uint8ClampedArray | Uint8Array,
): Uint8Array<ArrayBuffer> {
  if (width < 1 || height < 1 || rgba.length !== width * height * 4) {
    throw new Error(`pixel buffer does not match ${width}x${height} RGBA`);
  }
  const stride = width * 4;
  const raw = new Uint8Array((stride + 1) * height);
  for (let y = 0; y < height; y++) {
    raw[y * (stride + 1)] = 0; // filter: none
    raw.set(rgba.subarray(y * stride, (y + 1) * stride), y * (stride + 1) + 1);
  }
  const ihdr = new Uint8Array(13);
  const view = new DataView(ihdr.buffer);
  view.setUint32(0, width, false);
  view.setUint32(4, height, false);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 6; // color type: RGBA
  const idat = chunk('IDAT', storedDeflate(raw));
  const head = chunk('IHDR', ihdr);
  const end = chunk('IEND', new Uint8Array(0));
  const out = new Uint8Array(8 + head.length + idat.length + end.length);
  out.set(SIGNATURE, 0);
  out.set(head, 8);
  out.set(idat, 8 + head.length);
  out.set(end, 8 + head.length + idat.length);
  return out;
}

export interface PngHeader {
  width: number;
  height: number;
  bitDepth: number;
  colorType: number;
}

/** Width/height sniffing for any PNG; null when the bytes are not a PNG. */
export function parsePngHeader(bytes: Uint8Array): PngHeader | null {
  if (bytes.length < 33) {
    return null;
  }
  for (let i = 0; i < 8; i++) {
    if (bytes[i] !== SIGNATURE[i]) {
      return null;
    }
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  if (view.getUint32(8, false) !== 13) {
    return null;
  }
  const tag = String.fromCharCode(bytes[12], bytes[13], bytes[14], bytes[15]);
  if (tag !== 'IHDR') {
    return null;
  }
  const width = view.getUint32(16, false);
  const height = view.getUint32(20, false);
  if (width < 1 || height < 1) {
    return null;
  }
  return { width, height, bitDepth: bytes[24], colorType: bytes[25] };
}

export interface DecodedPng {
  width: number;
  height: number;
  data: Uint8ClampedArray<ArrayBuffer>;
}

/** Inverse of encodeRgbaPng; rejects PNGs outside that profile. */
export function decodeRgbaPng(bytes: Uint8Array): DecodedPng {
  const header = parsePngHeader(bytes);
  if (!header) {
    throw new Error('not a PNG file');
  }
  if (header.bitDepth !== 8 || header.colorType !== 6) {
    throw new Error('only 8-bit RGBA PNGs are supported');
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const idatParts: Uint8Array[] = [];
  let pos = 8;
  while (pos + 8 <= bytes.length) {
    const length = view.getUint32(pos, false);
    const tag = String.fromCharCode(
      bytes[pos + 4], bytes[pos + 5], bytes[pos + 6], bytes[pos + 7],
    );
    if (tag === 'IDAT') {
      idatParts.push(bytes.subarray(pos + 8, pos + 8 + length));
    }
    pos += 12 + length;
    if (tag === 'IEND') {
      break;
    }
  }
  const stream = new Uint8Array(idatParts.reduce((n, p) => n + p.length, 0));
  let offset = 0;
  for (const part of idatParts) {
    stream.set(part, offset);
    offset += part.length;
  }
  const raw = storedInflate(stream);
  const { width, height } = header;
  const stride = width * 4;
  if (raw.length !== (stride + 1) * height) {
    throw new Error('scanline data does not match the header dimensions');
  }
  const data = new Uint8ClampedArray(width * height * 4);
  for (let y = 0; y < height; y++) {
    if (raw[y * (stride + 1)] !== 0) {
      throw new Error('only filter-0 scanlines are supported');
    }
    data.set(raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1)), y * stride);
  }
  return { width, height, data };
}
