"""Pixel containers and the front-end image pipeline.

Raw capture is a single 12-bit Bayer plane; everything downstream works on
8-bit RGB or YUV planes. All frames are immutable numpy-backed dataclasses.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError

VGA_W, VGA_H = 640, 480
MCB = 16
SUB_W, SUB_H = 32, 20
VGA_RAW_BITS = VGA_W * VGA_H * 12  # 3,686,400

# channel index at each of the four 2x2 mosaic sites, row-major
BAYER_PATTERNS = {
    "RGGB": ((0, 1), (1, 2)),
    "BGGR": ((2, 1), (1, 0)),
    "GRBG": ((1, 0), (2, 1)),
    "GBRG": ((1, 2), (0, 1)),
}


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RawFrame:
    data: np.ndarray  # (H, W) uint16 mosaic samples
    bit_depth: int = 12
    black_level: int = 0
    pattern: str = "RGGB"

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 2:
            raise ValueError("raw frame must be a single plane")
        if self.pattern not in BAYER_PATTERNS:
            raise ValueError(f"unknown Bayer pattern {self.pattern!r}")
        if d.size and int(d.max()) >= 1 << self.bit_depth:
            raise ValueError(f"sample exceeds {self.bit_depth}-bit range")
        if not 0 <= self.black_level < 1 << self.bit_depth:
            raise ValueError("black level out of range")
        object.__setattr__(self, "data", _frozen(d.astype(np.uint16)))

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def nbits(self):
        return self.width * self.height * self.bit_depth


@dataclass(frozen=True)
class RgbFrame:
    data: np.ndarray  # (H, W, 3) uint8

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 3 or d.shape[2] != 3:
            raise ValueError("RGB frame must have shape (H, W, 3)")
        object.__setattr__(self, "data", _frozen(d.astype(np.uint8)))

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]


@dataclass(frozen=True)
class YuvFrame:
    y: np.ndarray
    u: np.ndarray
    v: np.ndarray
    subsampling: str = "420"

    def __post_init__(self):
        if self.subsampling not in ("420", "444"):
            raise ValueError("subsampling must be '420' or '444'")
        y = np.asarray(self.y)
        h, w = y.shape
        ch = (h // 2, w // 2) if self.subsampling == "420" else (h, w)
        for name in ("u", "v"):
            if np.asarray(getattr(self, name)).shape != ch:
                raise ValueError(f"{name} plane must be {ch} for {self.subsampling}")
        for name in ("y", "u", "v"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name)).astype(np.uint8)))

    @property
    def height(self):
        return self.y.shape[0]

    @property
    def width(self):
        return self.y.shape[1]


@dataclass(frozen=True)
class SubFrame:
    data: np.ndarray  # (20, 32) uint8

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.shape != (SUB_H, SUB_W):
            raise ValueError(f"sub-frame must be {SUB_W}x{SUB_H}")
        object.__setattr__(self, "data", _frozen(d.astype(np.uint8)))


@dataclass(frozen=True)
class MacroBlock:
    block_x: int
    block_y: int
    y: np.ndarray  # (16, 16)
    u: np.ndarray = field(default=None)  # (8, 8) for 4:2:0, (16, 16) for 4:4:4
    v: np.ndarray = field(default=None)


def _round_div(num, den):
    """Round-half-up integer division for non-negative numerators."""
    return (num + den // 2) // den


def black_level_correct(raw: RawFrame) -> RawFrame:
    d = raw.data.astype(np.int32) - raw.black_level
    return RawFrame(np.maximum(d, 0), raw.bit_depth, 0, raw.pattern)


def mosaic(rgb: np.ndarray, pattern="RGGB", bit_depth=12) -> RawFrame:
    """Sample an RGB image through a Bayer CFA (8-bit values scaled up to bit_depth)."""
    rgb = np.asarray(rgb)
    h, w, _ = rgb.shape
    out = np.empty((h, w), np.uint16)
    sites = BAYER_PATTERNS[pattern]
    shift = bit_depth - 8
    for dy in range(2):
        for dx in range(2):
            out[dy::2, dx::2] = rgb[dy::2, dx::2, sites[dy][dx]].astype(np.uint16) << shift
    return RawFrame(out, bit_depth=bit_depth, pattern=pattern)


def debayer(raw: RawFrame) -> RgbFrame:
    """Bilinear demosaic; mirror padding keeps the CFA phase at the borders."""
    h, w = raw.data.shape
    if h % 2 or w % 2:
        raise ValueError("debayer needs even frame dimensions")
    sites = BAYER_PATTERNS[raw.pattern]
    chan = np.empty((h, w), np.int8)
    for dy in range(2):
        for dx in range(2):
            chan[dy::2, dx::2] = sites[dy][dx]
    d = np.pad(raw.data.astype(np.int64), 1, mode="reflect")
    c = np.pad(chan, 1, mode="reflect")
    shift = raw.bit_depth - 8
    out = np.empty((h, w, 3), np.uint8)
    for k in range(3):
        s = np.zeros((h, w), np.int64)
        n = np.zeros((h, w), np.int64)
        for oy in (0, 1, 2):
            for ox in (0, 1, 2):
                if oy == 1 and ox == 1:
                    continue
                # G sites use the 4-neighbourhood only; R/B use all 8
                if k == 1 and oy != 1 and ox != 1:
                    continue
                m = c[oy:oy + h, ox:ox + w] == k
                s += np.where(m, d[oy:oy + h, ox:ox + w], 0)
                n += m
        est = _round_div(s, np.maximum(n, 1))
        native = chan == k
        val = np.where(native, raw.data, est)
        out[..., k] = (val >> shift).astype(np.uint8)
    return RgbFrame(out)


_RGB2YUV = np.array([
    [0.299, 0.587, 0.114],
    [-0.168736, -0.331264, 0.5],
    [0.5, -0.418688, -0.081312],
])


def _to_u8(x):
    return np.clip(np.floor(x + 0.5), 0, 255).astype(np.uint8)


def rgb_to_yuv(frame: RgbFrame, subsampling="420") -> YuvFrame:
    """BT.601 full-range conversion; 4:2:0 chroma is the rounded 2x2 mean."""
    rgb = frame.data.astype(np.float64)
    yuv = rgb @ _RGB2YUV.T
    yuv[..., 1:] += 128.0
    yuv = _to_u8(yuv)
    y, u, v = yuv[..., 0], yuv[..., 1], yuv[..., 2]
    if subsampling == "420":
        if frame.height % 2 or frame.width % 2:
            raise ValueError("4:2:0 needs even dimensions")
        u, v = _down2(u), _down2(v)
    return YuvFrame(y, u, v, subsampling)


def _down2(p):
    p = p.astype(np.int32)
    s = p[0::2, 0::2] + p[1::2, 0::2] + p[0::2, 1::2] + p[1::2, 1::2]
    return _round_div(s, 4).astype(np.uint8)


def _up2(p):
    return np.repeat(np.repeat(p, 2, axis=0), 2, axis=1)


def yuv_to_rgb(frame: YuvFrame) -> RgbFrame:
    u, v = frame.u, frame.v
    if frame.subsampling == "420":
        u, v = _up2(u), _up2(v)
    y = frame.y.astype(np.float64)
    u = u.astype(np.float64) - 128.0
    v = v.astype(np.float64) - 128.0
    r = y + 1.402 * v
    g = y - 0.344136 * u - 0.714136 * v
    b = y + 1.772 * u
    return RgbFrame(_to_u8(np.stack([r, g, b], axis=-1)))


def subsample(luma: np.ndarray) -> SubFrame:
    """Average a 640x480 luma plane down to the 32x20 motion-detection frame."""
    luma = np.asarray(luma)
    if luma.shape != (VGA_H, VGA_W):
        raise ValueError(f"subsample expects a {VGA_W}x{VGA_H} plane, got {luma.shape[::-1]}")
    bh, bw = VGA_H // SUB_H, VGA_W // SUB_W  # 24, 20
    s = luma.astype(np.int64).reshape(SUB_H, bh, SUB_W, bw).sum(axis=(1, 3))
    return SubFrame(_round_div(s, bh * bw))


def mcb_grid(width, height):
    if width % MCB or height % MCB:
        raise ValueError(f"frame {width}x{height} is not a multiple of {MCB}")
    return width // MCB, height // MCB


def tile_mcbs(frame: YuvFrame) -> list[list[MacroBlock]]:
    """Split a frame into a row-major grid of macro-blocks: grid[by][bx]."""
    gw, gh = mcb_grid(frame.width, frame.height)
    c = MCB // 2 if frame.subsampling == "420" else MCB
    grid = []
    for by in range(gh):
        row = []
        for bx in range(gw):
            ys, xs = by * MCB, bx * MCB
            cy, cx = by * c, bx * c
            row.append(MacroBlock(
                bx, by,
                frame.y[ys:ys + MCB, xs:xs + MCB],
                frame.u[cy:cy + c, cx:cx + c],
                frame.v[cy:cy + c, cx:cx + c],
            ))
        grid.append(row)
    return grid


def untile_mcbs(grid: list[list[MacroBlock]], subsampling="420") -> YuvFrame:
    gh, gw = len(grid), len(grid[0])
    c = MCB // 2 if subsampling == "420" else MCB
    y = np.zeros((gh * MCB, gw * MCB), np.uint8)
    u = np.zeros((gh * c, gw * c), np.uint8)
    v = np.zeros_like(u)
    for row in grid:
        for m in row:
            y[m.block_y * MCB:(m.block_y + 1) * MCB, m.block_x * MCB:(m.block_x + 1) * MCB] = m.y
            u[m.block_y * c:(m.block_y + 1) * c, m.block_x * c:(m.block_x + 1) * c] = m.u
            v[m.block_y * c:(m.block_y + 1) * c, m.block_x * c:(m.block_x + 1) * c] = m.v
    return YuvFrame(y, u, v, subsampling)


# ---------------------------------------------------------------- file I/O

def _open(path, mode):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode)
    return open(path, mode)


def _read_netpbm(path):
    with _open(path, "rb") as f:
        data = f.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated netpbm header")
        tokens.append(data[start:pos])
    pos += 1
    magic = tokens[0].decode("ascii", "replace")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(f"{path}: bad netpbm header") from None
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit netpbm is supported")
    return magic, w, h, data[pos:]


def read_image(path) -> RgbFrame | np.ndarray:
    """Read a P6 (-> RgbFrame) or P5 (-> 2-D uint8 array) image, optionally gzipped."""
    magic, w, h, body = _read_netpbm(path)
    if magic == "P6":
        if len(body) < w * h * 3:
            raise FormatError(f"{path}: truncated pixel data")
        return RgbFrame(np.frombuffer(body, np.uint8, w * h * 3).reshape(h, w, 3))
    if magic == "P5":
        if len(body) < w * h:
            raise FormatError(f"{path}: truncated pixel data")
        return np.frombuffer(body, np.uint8, w * h).reshape(h, w).copy()
    raise FormatError(f"{path}: unsupported netpbm type {magic}")


def read_rgb(path) -> RgbFrame:
    img = read_image(path)
    if isinstance(img, RgbFrame):
        return img
    return RgbFrame(np.repeat(img[..., None], 3, axis=2))


def write_ppm(path, frame: RgbFrame):
    h, w = frame.height, frame.width
    with _open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(frame.data.tobytes())


def write_pgm(path, plane: np.ndarray):
    plane = np.asarray(plane, np.uint8)
    h, w = plane.shape
    with _open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(plane.tobytes())


BAYER_MAGIC = b"BYR12o"


def write_bayer12(path, raw: RawFrame):
    hdr = BAYER_MAGIC + struct.pack("<HHH", raw.width, raw.height, raw.black_level)
    hdr += b"\0" * (16 - len(hdr))
    with open(path, "wb") as f:
        f.write(hdr)
        f.write(raw.data.astype("<u2").tobytes())


def read_bayer12(path) -> RawFrame:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 16 or data[:6] != BAYER_MAGIC:
        raise FormatError(f"{path}: not a .bayer12 file")
    w, h, black = struct.unpack_from("<HHH", data, 6)
    n = w * h
    if len(data) < 16 + 2 * n:
        raise FormatError(f"{path}: truncated sample data")
    samples = np.frombuffer(data, "<u2", n, 16).reshape(h, w)
    try:
        return RawFrame(samples, 12, black)
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from None


def load_frame(path) -> RgbFrame:
    """Load any supported image; .bayer12 goes through black-level + debayer."""
    if str(path).endswith(".bayer12"):
        return debayer(black_level_correct(read_bayer12(path)))
    return read_rgb(path)


def psnr(a, b, mask=None, peak=255.0) -> float:
    """PSNR in dB over all pixels, or over the True entries of an (H, W) mask."""
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    if a.shape != b.shape:
        raise ValueError("PSNR needs equal shapes")
    d = (a - b) ** 2
    if mask is not None:
        d = d[np.asarray(mask, bool)]
    mse = float(d.mean()) if d.size else 0.0
    return float("inf") if mse == 0 else 10 * np.log10(peak * peak / mse)
