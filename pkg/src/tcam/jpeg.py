"""Baseline JPEG-style codec operating one 16x16 macro-block at a time.

Per MCB (4:2:0): four 8x8 luma blocks in raster order, then Cb, then Cr.
DC prediction restarts at every MCB so each one decodes on its own, which is
what lets the ISP compress while the sensor is still streaming rows.
Huffman tables are the ITU-T T.81 Annex K defaults.
"""

from __future__ import annotations

import numpy as np

from .bitio import BitReader, BitWriter, codes_from_bits_vals, unpack_bits
from .bitstream import Bitstream, CodecTag, ImageHeader
from .errors import DecodeError, FormatError
from .frame import MCB, YuvFrame, mcb_grid

DEFAULT_QF = 78

STD_LUMA_QT = np.array([
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
]).reshape(8, 8)

STD_CHROMA_QT = np.array([
    17, 18, 24, 47, 99, 99, 99, 99,
    18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
]).reshape(8, 8)

_DC_LUMA_BITS = [0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0]
_DC_CHROMA_BITS = [0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0]
_DC_VALS = list(range(12))
_AC_LUMA_BITS = [0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7D]
_AC_LUMA_VALS = [
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06, 0x13, 0x51, 0x61, 0x07,
    0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xA1, 0x08, 0x23, 0x42, 0xB1, 0xC1, 0x15, 0x52, 0xD1, 0xF0,
    0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0A, 0x16, 0x17, 0x18, 0x19, 0x1A, 0x25, 0x26, 0x27, 0x28,
    0x29, 0x2A, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49,
    0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69,
    0x6A, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7A, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
    0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5, 0xA6, 0xA7,
    0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6, 0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3, 0xC4, 0xC5,
    0xC6, 0xC7, 0xC8, 0xC9, 0xCA, 0xD2, 0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA, 0xE1, 0xE2,
    0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA, 0xF1, 0xF2, 0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8,
    0xF9, 0xFA,
]
_AC_CHROMA_BITS = [0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77]
_AC_CHROMA_VALS = [
    0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41, 0x51, 0x07, 0x61, 0x71,
    0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91, 0xA1, 0xB1, 0xC1, 0x09, 0x23, 0x33, 0x52, 0xF0,
    0x15, 0x62, 0x72, 0xD1, 0x0A, 0x16, 0x24, 0x34, 0xE1, 0x25, 0xF1, 0x17, 0x18, 0x19, 0x1A, 0x26,
    0x27, 0x28, 0x29, 0x2A, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48,
    0x49, 0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68,
    0x69, 0x6A, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7A, 0x82, 0x83, 0x84, 0x85, 0x86, 0x87,
    0x88, 0x89, 0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5,
    0xA6, 0xA7, 0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6, 0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3,
    0xC4, 0xC5, 0xC6, 0xC7, 0xC8, 0xC9, 0xCA, 0xD2, 0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA,
    0xE2, 0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA, 0xF2, 0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8,
    0xF9, 0xFA,
]

DC_CODES = (codes_from_bits_vals(_DC_LUMA_BITS, _DC_VALS),
            codes_from_bits_vals(_DC_CHROMA_BITS, _DC_VALS))
AC_CODES = (codes_from_bits_vals(_AC_LUMA_BITS, _AC_LUMA_VALS),
            codes_from_bits_vals(_AC_CHROMA_BITS, _AC_CHROMA_VALS))
_DC_DECODE = tuple({c: s for s, c in t.items()} for t in DC_CODES)
_AC_DECODE = tuple({c: s for s, c in t.items()} for t in AC_CODES)

ZIGZAG = np.array([
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5,
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6, 7, 14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
])


def qf_scale(qf: int) -> int:
    """Percentage scale applied to base quantizer tables (IJG convention)."""
    if not 1 <= qf <= 100:
        raise ValueError(f"quality factor must be in 1..100, got {qf}")
    return 5000 // qf if qf < 50 else 200 - 2 * qf


def scaled_table(base: np.ndarray, qf: int) -> np.ndarray:
    return np.clip((base * qf_scale(qf) + 50) // 100, 1, 255)


def _dct_matrix(n=8):
    k = np.arange(n)
    m = np.cos(np.pi * (2 * k[None, :] + 1) * k[:, None] / (2 * n)) * np.sqrt(2.0 / n)
    m[0] /= np.sqrt(2.0)
    return m


DCT8 = _dct_matrix(8)


def _blocks_of(frame: YuvFrame):
    """Return (n_mcb, 6, 8, 8) int array of MCB blocks in raster MCB order."""
    gw, gh = mcb_grid(frame.width, frame.height)
    y = frame.y.astype(np.int32).reshape(gh, 2, 8, gw, 2, 8).transpose(0, 3, 1, 4, 2, 5)
    y = y.reshape(gh * gw, 4, 8, 8)
    u = frame.u.astype(np.int32).reshape(gh, 8, gw, 8).transpose(0, 2, 1, 3).reshape(gh * gw, 1, 8, 8)
    v = frame.v.astype(np.int32).reshape(gh, 8, gw, 8).transpose(0, 2, 1, 3).reshape(gh * gw, 1, 8, 8)
    return np.concatenate([y, u, v], axis=1)


def _quant_tables(qf):
    ql = scaled_table(STD_LUMA_QT, qf)
    qc = scaled_table(STD_CHROMA_QT, qf)
    return np.stack([ql] * 4 + [qc, qc])  # (6, 8, 8)


def forward_blocks(blocks: np.ndarray, qf: int) -> np.ndarray:
    """Level-shift, DCT and quantize; returns zigzag-ordered int levels (n, 6, 64)."""
    coef = DCT8 @ (blocks - 128.0) @ DCT8.T
    q = np.rint(coef / _quant_tables(qf)).astype(np.int32)
    return q.reshape(*q.shape[:2], 64)[..., ZIGZAG]


def inverse_blocks(levels: np.ndarray, qf: int) -> np.ndarray:
    flat = np.empty_like(levels)
    flat[..., ZIGZAG] = levels
    coef = flat.reshape(*levels.shape[:2], 8, 8) * _quant_tables(qf)
    pix = DCT8.T @ coef @ DCT8 + 128.0
    return np.clip(np.floor(pix + 0.5), 0, 255).astype(np.uint8)


def _magnitude(v):
    """JPEG (category, appended bits) for a signed value."""
    a = -v if v < 0 else v
    size = a.bit_length()
    if size == 0:
        return 0, ""
    bits = v if v > 0 else v + (1 << size) - 1
    return size, format(bits, f"0{size}b")


def _extend(bits, size):
    if size == 0:
        return 0
    return bits if bits >> (size - 1) else bits - (1 << size) + 1


def _encode_mcb(bw: BitWriter, mcb_levels):
    pred = [0, 0, 0]  # Y, Cb, Cr predictors, reset per MCB
    for b in range(6):
        comp = 0 if b < 4 else b - 3
        table = 0 if b < 4 else 1
        z = mcb_levels[b]
        diff = int(z[0]) - pred[comp]
        pred[comp] = int(z[0])
        size, extra = _magnitude(diff)
        bw.write_bits(DC_CODES[table][size] + extra)
        ac = AC_CODES[table]
        nz = np.flatnonzero(z[1:])
        last = 0
        for k in nz:
            k = int(k) + 1
            run = k - last - 1
            while run > 15:
                bw.write_bits(ac[0xF0])
                run -= 16
            size, extra = _magnitude(int(z[k]))
            bw.write_bits(ac[(run << 4) | size] + extra)
            last = k
        if last != 63:
            bw.write_bits(ac[0x00])


def jpeg_encode(frame: YuvFrame, qf: int = DEFAULT_QF) -> Bitstream:
    if frame.subsampling != "420":
        raise ValueError("JPEG-style codec expects 4:2:0 chroma")
    levels = forward_blocks(_blocks_of(frame), qf)
    bw = BitWriter()
    for m in range(levels.shape[0]):
        _encode_mcb(bw, levels[m])
    payload, nbits = bw.getvalue()
    hdr = ImageHeader(frame.width, frame.height, qf).pack()
    return Bitstream(CodecTag.JPEG_MCB, hdr, payload, nbits)


def _decode_mcb(br: BitReader, out):
    pred = [0, 0, 0]
    for b in range(6):
        comp = 0 if b < 4 else b - 3
        table = 0 if b < 4 else 1
        size = br.read_huffman(_DC_DECODE[table])
        if size > 11:
            raise DecodeError("DC category out of range", br.pos)
        pred[comp] += _extend(br.read(size), size)
        out[b, 0] = pred[comp]
        ac = _AC_DECODE[table]
        k = 1
        while k < 64:
            rs = br.read_huffman(ac)
            run, size = rs >> 4, rs & 15
            if size == 0:
                if run == 15:
                    k += 16
                    continue
                if run == 0:
                    break
                raise DecodeError(f"invalid AC symbol 0x{rs:02x}", br.pos)
            k += run
            if k > 63:
                raise DecodeError("AC run past end of block", br.pos)
            out[b, k] = _extend(br.read(size), size)
            k += 1


def jpeg_decode_levels(bs: Bitstream):
    if bs.codec_tag != CodecTag.JPEG_MCB:
        raise FormatError("not a JPEG_MCB bitstream")
    hdr = bs.image_header()
    gw, gh = mcb_grid(hdr.width, hdr.height)
    br = BitReader(unpack_bits(bs.payload, bs.bit_length))
    levels = np.zeros((gw * gh, 6, 64), np.int32)
    for m in range(gw * gh):
        _decode_mcb(br, levels[m])
    if br.remaining():
        raise DecodeError(f"{br.remaining()} unused payload bits", br.pos)
    return hdr, levels


def _assemble(blocks, gw, gh) -> YuvFrame:
    y = blocks[:, :4].reshape(gh, gw, 2, 2, 8, 8).transpose(0, 2, 4, 1, 3, 5).reshape(gh * MCB, gw * MCB)
    u = blocks[:, 4].reshape(gh, gw, 8, 8).transpose(0, 2, 1, 3).reshape(gh * 8, gw * 8)
    v = blocks[:, 5].reshape(gh, gw, 8, 8).transpose(0, 2, 1, 3).reshape(gh * 8, gw * 8)
    return YuvFrame(y, u, v, "420")


def jpeg_decode(bs: Bitstream) -> YuvFrame:
    hdr, levels = jpeg_decode_levels(bs)
    gw, gh = mcb_grid(hdr.width, hdr.height)
    return _assemble(inverse_blocks(levels, hdr.qf), gw, gh)


def jpeg_decode_mcbs(bs: Bitstream) -> np.ndarray:
    """Decoded pixels per MCB as (n_mcb, 6, 8, 8) uint8, raster order."""
    hdr, levels = jpeg_decode_levels(bs)
    return inverse_blocks(levels, hdr.qf)


__all__ = ["jpeg_encode", "jpeg_decode", "jpeg_decode_mcbs", "qf_scale", "scaled_table",
           "DEFAULT_QF"]
