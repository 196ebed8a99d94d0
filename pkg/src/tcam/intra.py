"""H.264-style intra codec with no dependence between macro-blocks.

Each MCB carries 16 luma and 4+4 chroma 4x4 blocks (4:2:0). A block is
predicted (DC / vertical / horizontal) only from already reconstructed
pixels of the *same* MCB, transformed with the 4x4 integer core transform,
uniformly quantized and coded with zigzag run/level exp-Golomb symbols.
Because nothing crosses an MCB boundary, any subset of MCBs can be coded,
dropped or decoded on its own; that is what makes RoI pruning work.

Payload = MCB records in raster order, only for MCBs selected by the mask.
Record = for every 4x4 block: [mode ue, if >1 mode available] ue(nnz)
then nnz x (ue(run), se(level)).
"""

from __future__ import annotations

import numpy as np

from .bitio import BitReader, BitWriter, pack_bits, unpack_bits
from .bitstream import Bitstream, CodecTag, ImageHeader
from .errors import ConsistencyError, DecodeError, FormatError
from .frame import MCB, MacroBlock, YuvFrame, mcb_grid
from .jpeg import qf_scale

DEFAULT_QF = 20
# quantizer step at qf=50; scaled by the IJG law like the JPEG tables
LUMA_STEP = 17.0
CHROMA_STEP = 34.0

MODE_DC, MODE_V, MODE_H = 0, 1, 2

CORE = np.array([[1, 1, 1, 1], [2, 1, -1, -2], [1, -1, -1, 1], [1, -2, 2, -1]], np.int64)
_S = np.array([0.5, 1 / np.sqrt(10), 0.5, 1 / np.sqrt(10)])
NORM = np.outer(_S, _S)
ZIGZAG4 = np.array([0, 1, 4, 8, 5, 2, 3, 6, 9, 12, 13, 10, 7, 11, 14, 15])

# (plane index, block row, block col) for the 24 blocks of an MCB, coding order
BLOCKS = ([(0, r, c) for r in range(4) for c in range(4)]
          + [(1, r, c) for r in range(2) for c in range(2)]
          + [(2, r, c) for r in range(2) for c in range(2)])


def _available(r, c):
    modes = [MODE_DC]
    if r > 0:
        modes.append(MODE_V)
    if c > 0:
        modes.append(MODE_H)
    return modes


def quant_steps(qf: int):
    s = qf_scale(qf) / 100.0
    return LUMA_STEP * s, CHROMA_STEP * s


def _predict(rec, r, c):
    """All three predictions for block (r, c) of every MCB: (n, 3, 4, 4)."""
    n = rec.shape[0]
    ys, xs = 4 * r, 4 * c
    preds = np.empty((n, 3, 4, 4), np.int32)
    total = np.zeros(n, np.int32)
    count = 0
    if r > 0:
        top = rec[:, ys - 1, xs:xs + 4].astype(np.int32)
        preds[:, MODE_V] = top[:, None, :]
        total += top.sum(axis=1)
        count += 4
    if c > 0:
        left = rec[:, ys:ys + 4, xs - 1].astype(np.int32)
        preds[:, MODE_H] = left[:, :, None]
        total += left.sum(axis=1)
        count += 4
    dc = (total + count // 2) // count if count else np.full(n, 128, np.int32)
    preds[:, MODE_DC] = dc[:, None, None]
    return preds


DEADZONE = 1.0 / 3.0  # rounding offset, as in H.264 intra


def _forward(res, step):
    w = CORE @ res.astype(np.int64) @ CORE.T
    x = w * NORM / step
    return (np.sign(x) * np.floor(np.abs(x) + DEADZONE)).astype(np.int32)


def _inverse(levels, step):
    d = np.rint(levels * step * NORM * 64.0).astype(np.int64)
    x = CORE.T @ d @ CORE
    return (x + 32) >> 6


def _code_planes(planes, steps, levels=None, modes=None):
    """Run prediction + (optional) transform for all MCBs.

    Encoding: ``levels``/``modes`` are None and are chosen here.
    Decoding: they are given and only reconstruction happens.
    Returns reconstructed planes, levels (n, 24, 16 zigzag) and modes (n, 24).
    """
    encode = levels is None
    n = planes[0].shape[0] if encode else levels.shape[0]
    rec = [np.zeros((n, MCB, MCB), np.uint8), np.zeros((n, 8, 8), np.uint8), np.zeros((n, 8, 8), np.uint8)]
    if encode:
        levels = np.zeros((n, len(BLOCKS), 16), np.int32)
        modes = np.zeros((n, len(BLOCKS)), np.int8)
    idx = np.arange(n)
    for b, (p, r, c) in enumerate(BLOCKS):
        step = steps[0] if p == 0 else steps[1]
        preds = _predict(rec[p], r, c)
        ys, xs = 4 * r, 4 * c
        if encode:
            src = planes[p][:, ys:ys + 4, xs:xs + 4].astype(np.int32)
            avail = _available(r, c)
            sad = np.stack([np.abs(src - preds[:, m]).sum(axis=(1, 2)) for m in avail], axis=1)
            mode = np.asarray(avail)[np.argmin(sad, axis=1)]
            modes[:, b] = mode
            pred = preds[idx, mode]
            lv = _forward(src - pred, step)
            levels[:, b] = lv.reshape(n, 16)[:, ZIGZAG4]
        else:
            pred = preds[idx, modes[:, b].astype(np.intp)]
            lv = np.zeros((n, 16), np.int32)
            lv[:, ZIGZAG4] = levels[:, b]
            lv = lv.reshape(n, 4, 4)
        recon = pred + _inverse(lv, step)
        rec[p][:, ys:ys + 4, xs:xs + 4] = np.clip(recon, 0, 255)
    return rec, levels, modes


def _write_mcb(bw: BitWriter, levels, modes):
    for b, (_, r, c) in enumerate(BLOCKS):
        avail = _available(r, c)
        if len(avail) > 1:
            bw.write_ue(avail.index(int(modes[b])))
        z = levels[b]
        nz = np.flatnonzero(z)
        bw.write_ue(len(nz))
        last = -1
        for k in nz:
            bw.write_ue(int(k) - last - 1)
            bw.write_se(int(z[k]))
            last = int(k)


def _read_mcb(br: BitReader, levels, modes):
    for b, (_, r, c) in enumerate(BLOCKS):
        avail = _available(r, c)
        if len(avail) > 1:
            i = br.read_ue()
            if i >= len(avail):
                raise DecodeError(f"invalid prediction mode index {i}", br.pos)
            modes[b] = avail[i]
        else:
            modes[b] = MODE_DC
        nnz = br.read_ue()
        if nnz > 16:
            raise DecodeError(f"block claims {nnz} coefficients", br.pos)
        k = -1
        for _ in range(nnz):
            k += br.read_ue() + 1
            if k > 15:
                raise DecodeError("coefficient run past end of block", br.pos)
            levels[b, k] = br.read_se()


def _mcb_planes(frame: YuvFrame):
    gw, gh = mcb_grid(frame.width, frame.height)
    y = frame.y.reshape(gh, MCB, gw, MCB).transpose(0, 2, 1, 3).reshape(-1, MCB, MCB)
    u = frame.u.reshape(gh, 8, gw, 8).transpose(0, 2, 1, 3).reshape(-1, 8, 8)
    v = frame.v.reshape(gh, 8, gw, 8).transpose(0, 2, 1, 3).reshape(-1, 8, 8)
    return [y, u, v]


def full_mask(width, height) -> np.ndarray:
    gw, gh = mcb_grid(width, height)
    return np.ones((gh, gw), bool)


def _check_mask(mask, gw, gh):
    mask = np.asarray(mask, bool)
    if mask.shape != (gh, gw):
        raise ConsistencyError(f"mask is {mask.shape[1]}x{mask.shape[0]} but frame grid is {gw}x{gh}")
    return mask


def intra_encode(frame: YuvFrame, qf: int = DEFAULT_QF, mask=None) -> Bitstream:
    """Encode the MCBs selected by ``mask`` (True = changed/coded); None codes all."""
    if frame.subsampling != "420":
        raise ValueError("intra codec expects 4:2:0 chroma")
    gw, gh = mcb_grid(frame.width, frame.height)
    has_map = mask is not None
    mask = full_mask(frame.width, frame.height) if mask is None else _check_mask(mask, gw, gh)
    sel = np.flatnonzero(mask.ravel())
    planes = [p[sel] for p in _mcb_planes(frame)]
    bw = BitWriter()
    if len(sel):
        _, levels, modes = _code_planes(planes, quant_steps(qf))
        for i in range(len(sel)):
            _write_mcb(bw, levels[i], modes[i])
    payload, nbits = bw.getvalue()
    hdr = ImageHeader(frame.width, frame.height, qf, has_map=has_map).pack()
    return Bitstream(CodecTag.INTRA_ROI, hdr, payload, nbits)


def _parse(bs: Bitstream, sel, gw):
    """Entropy-decode one record per selected MCB.

    Any disagreement between the mask and the payload is reported against the
    first MCB whose record is missing or malformed.
    """
    if bs.codec_tag != CodecTag.INTRA_ROI:
        raise FormatError("not an INTRA_ROI bitstream")
    br = BitReader(unpack_bits(bs.payload, bs.bit_length))
    count = len(sel)
    levels = np.zeros((count, len(BLOCKS), 16), np.int32)
    modes = np.zeros((count, len(BLOCKS)), np.int8)
    bounds = []

    def where(i):
        return int(sel[i] % gw), int(sel[i] // gw)

    for i in range(count):
        start = br.pos
        if not br.remaining():
            raise ConsistencyError(f"stream holds {i} MCB records but the mask selects {count}", where(i))
        try:
            _read_mcb(br, levels[i], modes[i])
        except DecodeError as e:
            raise ConsistencyError(f"malformed MCB record: {e}", where(i)) from None
        bounds.append((start, br.pos))
    if br.remaining():
        last = where(count - 1) if count else None
        raise ConsistencyError(f"{br.remaining()} payload bits left after {count} MCB records", last)
    return br.bits, levels, modes, bounds


def _selected(bs, mask):
    hdr = bs.image_header()
    gw, gh = mcb_grid(hdr.width, hdr.height)
    mask = full_mask(hdr.width, hdr.height) if mask is None else _check_mask(mask, gw, gh)
    return hdr, gw, mask, np.flatnonzero(mask.ravel())


def intra_decode(bs: Bitstream, mask=None) -> dict[tuple[int, int], MacroBlock]:
    """Decode the coded MCBs; returns {(block_x, block_y): MacroBlock}."""
    hdr, gw, mask, sel = _selected(bs, mask)
    _, levels, modes, _ = _parse(bs, sel, gw)
    out = {}
    if not len(sel):
        return out
    rec, _, _ = _code_planes(None, quant_steps(hdr.qf), levels, modes)
    for i, m in enumerate(sel):
        bx, by = int(m % gw), int(m // gw)
        out[(bx, by)] = MacroBlock(bx, by, rec[0][i], rec[1][i], rec[2][i])
    return out


def intra_decode_frame(bs: Bitstream, fill: int = 0) -> YuvFrame:
    """Decode a full-frame (or masked) stream into a frame; uncoded MCBs get ``fill``."""
    hdr = bs.image_header()
    gw, gh = mcb_grid(hdr.width, hdr.height)
    y = np.full((hdr.height, hdr.width), fill, np.uint8)
    u = np.full((hdr.height // 2, hdr.width // 2), 128, np.uint8)
    v = u.copy()
    for (bx, by), m in intra_decode(bs).items():
        y[by * MCB:(by + 1) * MCB, bx * MCB:(bx + 1) * MCB] = m.y
        u[by * 8:(by + 1) * 8, bx * 8:(bx + 1) * 8] = m.u
        v[by * 8:(by + 1) * 8, bx * 8:(bx + 1) * 8] = m.v
    return YuvFrame(y, u, v, "420")


def split_records(bs: Bitstream, mask=None) -> dict[tuple[int, int], str]:
    """Per-MCB record bits, keyed by grid position."""
    _, gw, mask, sel = _selected(bs, mask)
    bits, _, _, bounds = _parse(bs, sel, gw)
    return {(int(m % gw), int(m // gw)): bits[a:b] for m, (a, b) in zip(sel, bounds)}


def drop_mcbs(bs: Bitstream, mask, keep) -> tuple[Bitstream, np.ndarray]:
    """Remove MCB records from a stream without re-encoding.

    ``keep`` is a boolean grid; the result holds records for mask & keep.
    """
    records = split_records(bs, mask)
    keep = np.asarray(keep, bool)
    new_mask = np.asarray(mask, bool) & keep
    gh, gw = new_mask.shape
    bits = "".join(records[(x, y)] for y in range(gh) for x in range(gw) if new_mask[y, x])
    return Bitstream(bs.codec_tag, bs.header, pack_bits(bits), len(bits)), new_mask
