"""Scene-change detection, RoI pruning and gateway-side reconstruction.

Every MCB is summarised by a 64-bit pattern vector: the sixteen 4x4
sub-block means of its luma, each cut to 4 bits. Comparing the vectors of
the current frame against those of the stored reference gives the 40x30
change map, and only the changed MCBs are intra-coded for storage/egress.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

from .bitstream import Bitstream, CodecTag
from .errors import ConsistencyError, FormatError
from .frame import MCB, RgbFrame, SubFrame, YuvFrame, mcb_grid, yuv_to_rgb
from .intra import DEFAULT_QF, intra_decode, intra_encode
from .jpeg import DEFAULT_QF as JPEG_QF
from .jpeg import jpeg_decode, jpeg_decode_mcbs, jpeg_encode

DEFAULT_TAU = 8
DEFAULT_PIX_THRESH = 16
DEFAULT_COUNT_THRESH = 4


class Distance(enum.Enum):
    MAGNITUDE = "magnitude"  # sum of |nibble difference|
    HAMMING = "hamming"  # differing bits in the 64-bit words


def pattern_nibbles(luma: np.ndarray) -> np.ndarray:
    """(..., 16) nibble array for one MCB (16, 16) or a full luma plane (H, W).

    For a plane the result is (H/16, W/16, 16).
    """
    luma = np.asarray(luma)
    h, w = luma.shape
    gh, gw = h // MCB, w // MCB
    s = luma.astype(np.int64).reshape(gh, 4, 4, gw, 4, 4).sum(axis=(2, 5))  # (gh, 4, gw, 4)
    nib = ((s // 16) >> 4).transpose(0, 2, 1, 3).reshape(gh, gw, 16)
    return nib.astype(np.uint8) if luma.shape != (MCB, MCB) else nib[0, 0].astype(np.uint8)


def pack_nibbles(nib) -> int:
    v = 0
    for n in np.asarray(nib).ravel():
        v = (v << 4) | int(n)
    return v


def pattern_vector(mcb_luma: np.ndarray) -> int:
    """64-bit signature of one MCB; first sub-block in the top nibble."""
    mcb_luma = np.asarray(mcb_luma)
    if mcb_luma.shape != (MCB, MCB):
        raise ValueError("pattern vector needs a 16x16 luma block")
    return pack_nibbles(pattern_nibbles(mcb_luma))


def vector_distance(a, b, distance=Distance.MAGNITUDE):
    """Distance between nibble arrays of shape (..., 16)."""
    a = np.asarray(a, np.int16)
    b = np.asarray(b, np.int16)
    if Distance(distance) is Distance.MAGNITUDE:
        return np.abs(a - b).sum(axis=-1)
    x = (a ^ b).astype(np.uint8)
    return np.unpackbits(x[..., None], axis=-1)[..., 4:].sum(axis=(-1, -2))


@dataclass(frozen=True)
class ChangeMap:
    bits: np.ndarray  # (rows, cols) bool, True = changed

    WIDTH = 40
    HEIGHT = 30
    MAGIC = b"TCAMCD1"

    def __post_init__(self):
        b = np.asarray(self.bits, bool)
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def nbits(self) -> int:
        return self.bits.size

    def changed_fraction(self) -> float:
        return float(self.bits.mean())

    def count(self) -> int:
        return int(self.bits.sum())

    def to_bytes(self) -> bytes:
        h, w = self.bits.shape
        return self.MAGIC + struct.pack("<BB", w, h) + np.packbits(self.bits.ravel()).tobytes()

    @classmethod
    def from_bytes(cls, data: bytes):
        if data[:7] != cls.MAGIC or len(data) < 9:
            raise FormatError("not a TCAMCD1 change map")
        w, h = struct.unpack_from("<BB", data, 7)
        n = (w * h + 7) // 8
        body = data[9:]
        if len(body) != n:
            raise FormatError(f"change map body is {len(body)} bytes, expected {n}")
        bits = np.unpackbits(np.frombuffer(body, np.uint8))[: w * h].reshape(h, w)
        return cls(bits.astype(bool))

    def save(self, path):
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())

    @classmethod
    def full(cls, rows=HEIGHT, cols=WIDTH, value=True):
        return cls(np.full((rows, cols), value, bool))


@dataclass(frozen=True)
class ReferenceState:
    """JPEG-compressed reference plus the pattern vectors of its *decoded* luma."""

    bitstream: Bitstream
    nibbles: np.ndarray  # (rows, cols, 16)

    @classmethod
    def from_frame(cls, frame: YuvFrame, qf: int = JPEG_QF):
        return cls.from_bitstream(jpeg_encode(frame, qf))

    @classmethod
    def from_bitstream(cls, bs: Bitstream):
        if bs.codec_tag != CodecTag.JPEG_MCB:
            raise FormatError("reference must be a JPEG_MCB bitstream")
        return cls(bs, pattern_nibbles(jpeg_decode(bs).y))

    def vectors(self) -> list[list[int]]:
        return [[pack_nibbles(n) for n in row] for row in self.nibbles]

    @property
    def grid(self):
        return self.nibbles.shape[1], self.nibbles.shape[0]


def change_map(current: YuvFrame, ref: ReferenceState, tau: int = DEFAULT_TAU,
               distance=Distance.MAGNITUDE) -> ChangeMap:
    if mcb_grid(current.width, current.height) != ref.grid:
        raise ConsistencyError("current frame and reference differ in size")
    d = vector_distance(pattern_nibbles(current.y), ref.nibbles, distance)
    return ChangeMap(d > tau)


def prune_and_encode(current: YuvFrame, cmap: ChangeMap, qf: int = DEFAULT_QF):
    """Intra-code only the changed MCBs. Returns (roi bitstream, change map)."""
    return intra_encode(current, qf, cmap.bits), cmap


def egress_bits(roi: Bitstream, cmap: ChangeMap) -> int:
    """Bits sent to the gateway: change map plus RoI header and payload."""
    return cmap.nbits + roi.total_bits


def reconstruct_yuv(ref: ReferenceState, cmap: ChangeMap, roi: Bitstream) -> YuvFrame:
    rh = ref.bitstream.image_header()
    oh = roi.image_header()
    gw, gh = ref.grid
    if (rh.width, rh.height) != (oh.width, oh.height) or cmap.bits.shape != (gh, gw):
        raise ConsistencyError("reference, change map and RoI stream differ in size")
    base = jpeg_decode(ref.bitstream)
    y, u, v = base.y.copy(), base.u.copy(), base.v.copy()
    for (bx, by), m in intra_decode(roi, cmap.bits).items():
        y[by * MCB:(by + 1) * MCB, bx * MCB:(bx + 1) * MCB] = m.y
        u[by * 8:(by + 1) * 8, bx * 8:(bx + 1) * 8] = m.u
        v[by * 8:(by + 1) * 8, bx * 8:(bx + 1) * 8] = m.v
    return YuvFrame(y, u, v, "420")


def reconstruct(ref: ReferenceState, cmap: ChangeMap, roi: Bitstream) -> RgbFrame:
    """Unchanged MCBs from the reference, changed ones from the RoI stream."""
    return yuv_to_rgb(reconstruct_yuv(ref, cmap, roi))


def reference_mcbs(ref: ReferenceState) -> np.ndarray:
    return jpeg_decode_mcbs(ref.bitstream)


def motion_detect(cur: SubFrame, prev: SubFrame, pix_thresh: int = DEFAULT_PIX_THRESH,
                  count_thresh: int = DEFAULT_COUNT_THRESH) -> bool:
    diff = np.abs(cur.data.astype(np.int16) - prev.data.astype(np.int16))
    return int((diff > pix_thresh).sum()) >= count_thresh
