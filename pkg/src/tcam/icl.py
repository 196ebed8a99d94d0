"""Image-correcting layers: lens distortion and colour correction as linear ops.

The lens is modelled as a two-term even radial polynomial about a centre
(cx, cy), radii normalised by the half-diagonal, mapping a captured pixel to
its place in the true scene::

    r_t = r_d * (1 + k1 r_d^2 + k2 r_d^4)

so k1 > 0 is fisheye-style barrel distortion. Correction is a gather: every
target pixel pulls from its distorted source position. The per-pixel displacement field is the flow-field matrix
(FFM); written as a row-sparse matrix it is a fully connected layer with at
most four non-zeros per row.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.optimize import least_squares

from .errors import FormatError, ModelError
from .frame import VGA_H, VGA_W

FIXED_POINT_ITERS = 20
FIXED_POINT_TOL = 1e-6  # pixels


@dataclass(frozen=True)
class RadialModel:
    cx: float = VGA_W / 2
    cy: float = VGA_H / 2
    k1: float = 0.0
    k2: float = 0.0
    radius: float = math.hypot(VGA_W / 2, VGA_H / 2)  # normalisation, 400 px for VGA
    rms: float = float("nan")  # fit residual, when the model came from fit_radial_model

    def scale(self, r2):
        """Radial gain 1 + k1 r^2 + k2 r^4 for normalised squared radius."""
        return 1.0 + self.k1 * r2 + self.k2 * r2 * r2

    def undistort_points(self, pts):
        """Captured-image (x, y) -> true-scene (x, y); the model's own direction."""
        pts = np.asarray(pts, np.float64)
        d = pts - (self.cx, self.cy)
        r2 = (d ** 2).sum(axis=-1, keepdims=True) / self.radius ** 2
        return (self.cx, self.cy) + d * self.scale(r2)

    def distort_points(self, pts):
        """True-scene (x, y) -> captured-image (x, y), by fixed-point iteration.

        Newton steps finish the job for strong distortion where the plain
        iteration has not met tolerance after FIXED_POINT_ITERS rounds.
        """
        pts = np.asarray(pts, np.float64)
        d = pts - (self.cx, self.cy)
        rt = np.sqrt((d ** 2).sum(axis=-1)) / self.radius
        r = rt.copy()
        tol = FIXED_POINT_TOL / self.radius
        for _ in range(FIXED_POINT_ITERS):
            nr = rt / self.scale(r * r)
            done = np.abs(nr - r).max(initial=0.0) < tol
            r = nr
            if done:
                break
        for _ in range(50):
            f = r * self.scale(r * r) - rt
            if np.abs(f).max(initial=0.0) < tol * 1e-3:
                break
            r = r - f / (1 + 3 * self.k1 * r * r + 5 * self.k2 * r ** 4)
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(rt > 0, r / rt, 1.0)
        return (self.cx, self.cy) + d * ratio[..., None]

    def max_radius(self, width=VGA_W, height=VGA_H):
        corners = np.array([[0, 0], [width - 1, 0], [0, height - 1], [width - 1, height - 1]], float)
        return float(np.sqrt(((corners - (self.cx, self.cy)) ** 2).sum(axis=1)).max() / self.radius)

    def check_monotonic(self, r_max=1.0):
        """Raise ModelError if r_d -> r_t folds over on [0, r_max]."""
        # d r_t / d r_d = 1 + 3 k1 u + 5 k2 u^2 with u = r^2; check its minimum
        u_max = r_max * r_max
        cand = [0.0, u_max]
        if self.k2 != 0:
            u = -3 * self.k1 / (10 * self.k2)
            if 0 < u < u_max:
                cand.append(u)
        slope = min(1 + 3 * self.k1 * u + 5 * self.k2 * u * u for u in cand)
        if slope <= 0:
            raise ModelError(f"radial model folds over inside r={r_max:.3f} "
                             f"(k1={self.k1}, k2={self.k2})")

    def to_text(self) -> str:
        keys = ("cx", "cy", "k1", "k2", "radius")
        return "".join(f"{k}={float(getattr(self, k))!r}\n" for k in keys)

    @classmethod
    def from_text(cls, text: str):
        kv = _parse_kv(text)
        try:
            return cls(**{k: float(v) for k, v in kv.items() if k in ("cx", "cy", "k1", "k2", "radius")})
        except ValueError as e:
            raise FormatError(f"bad radial model file: {e}") from None


def _parse_kv(text):
    kv = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        kv[k.strip()] = v.strip()
    return kv


def fit_radial_model(correspondences, width=VGA_W, height=VGA_H) -> RadialModel:
    """Least-squares (cx, cy, k1, k2) from rows of (x_d, y_d, x_t, y_t).

    Residuals are measured in the true-scene frame.
    """
    c = np.asarray(correspondences, np.float64)
    if c.ndim != 2 or c.shape[1] != 4:
        raise ValueError("correspondences must be an (N, 4) array of x_d, y_d, x_t, y_t")
    if len(c) < 6:
        raise ModelError(f"need at least 6 correspondences, got {len(c)}")
    dist, true = c[:, :2], c[:, 2:]
    if np.linalg.matrix_rank(true - true.mean(axis=0), tol=1e-6) < 2:
        raise ModelError("correspondences are collinear")
    radius = math.hypot(width / 2, height / 2)

    def resid(p):
        m = RadialModel(p[0], p[1], p[2], p[3], radius)
        return (m.undistort_points(dist) - true).ravel()

    x0 = np.array([width / 2, height / 2, 0.0, 0.0])
    sol = least_squares(resid, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                        x_scale=np.array([100.0, 100.0, 0.1, 0.1]))
    cx, cy, k1, k2 = sol.x
    rms = float(np.sqrt(np.mean(sol.fun.reshape(-1, 2) ** 2 * 2)))
    return RadialModel(float(cx), float(cy), float(k1), float(k2), radius, rms)


@dataclass(frozen=True)
class FlowFieldMatrix:
    flow: np.ndarray  # (H, W, 2): (dx, dy) from target pixel to its source
    valid: np.ndarray  # (H, W) bool

    MAGIC = b"TCAMFF1"

    @property
    def height(self):
        return self.flow.shape[0]

    @property
    def width(self):
        return self.flow.shape[1]

    def sources(self):
        yy, xx = np.mgrid[0:self.height, 0:self.width]
        return xx + self.flow[..., 0], yy + self.flow[..., 1]

    @classmethod
    def zeros(cls, width=VGA_W, height=VGA_H):
        return cls(np.zeros((height, width, 2)), np.ones((height, width), bool))

    def to_bytes(self) -> bytes:
        f = self.flow.astype("<f4").copy()
        f[~self.valid] = np.nan
        return self.MAGIC + struct.pack("<HH", self.width, self.height) + f.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes):
        if data[:7] != cls.MAGIC:
            raise FormatError("not a TCAMFF1 flow field")
        w, h = struct.unpack_from("<HH", data, 7)
        if len(data) != 11 + w * h * 8:
            raise FormatError("flow field size does not match its dimensions")
        f = np.frombuffer(data, "<f4", w * h * 2, 11).reshape(h, w, 2).astype(np.float64)
        valid = ~np.isnan(f).any(axis=2)
        return cls(np.nan_to_num(f), valid)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def build_ffm(model: RadialModel, width=VGA_W, height=VGA_H) -> FlowFieldMatrix:
    model.check_monotonic(model.max_radius(width, height))
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    pts = np.stack([xx, yy], axis=-1)
    src = model.distort_points(pts)
    flow = src - pts
    valid = ((src[..., 0] >= 0) & (src[..., 0] <= width - 1)
             & (src[..., 1] >= 0) & (src[..., 1] <= height - 1))
    return FlowFieldMatrix(flow, valid)


def _as_float_planes(frame):
    a = np.asarray(frame)
    squeeze = a.ndim == 2
    if squeeze:
        a = a[..., None]
    return a, squeeze


def _finish(out, src_dtype, squeeze):
    if squeeze:
        out = out[..., 0]
    if np.issubdtype(src_dtype, np.integer):
        return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    return out


def _bilinear_taps(sx, sy, width, height):
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx, fy = sx - x0, sy - y0
    x0 = np.clip(x0, 0, width - 1)
    y0 = np.clip(y0, 0, height - 1)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    return [(y0, x0, (1 - fx) * (1 - fy)), (y0, x1, fx * (1 - fy)),
            (y1, x0, (1 - fx) * fy), (y1, x1, fx * fy)]


def _nearest_idx(sx, sy, width, height):
    return (np.clip(np.floor(sy + 0.5).astype(np.int64), 0, height - 1),
            np.clip(np.floor(sx + 0.5).astype(np.int64), 0, width - 1))


def apply_ffm(frame, ffm: FlowFieldMatrix, interp="bilinear"):
    """Dense gather through the flow field; invalid sources become black.

    Integer frames come back rounded to uint8, float frames stay float.
    """
    a, squeeze = _as_float_planes(frame)
    if a.shape[:2] != (ffm.height, ffm.width):
        raise ValueError("frame and flow field differ in size")
    sx, sy = ffm.sources()
    src = a.astype(np.float64)
    if interp == "nearest":
        iy, ix = _nearest_idx(sx, sy, ffm.width, ffm.height)
        out = src[iy, ix]
    elif interp == "bilinear":
        out = np.zeros(a.shape, np.float64)
        for iy, ix, w in _bilinear_taps(sx, sy, ffm.width, ffm.height):
            out += w[..., None] * src[iy, ix]
    else:
        raise ValueError(f"unknown interpolation {interp!r}")
    out[~ffm.valid] = 0
    return _finish(out, a.dtype, squeeze)


@dataclass(frozen=True)
class SparseCorrector:
    matrix: sp.csr_matrix  # (H*W, H*W)
    width: int
    height: int

    @property
    def nnz(self) -> int:
        return int(self.matrix.nnz)

    def row_sums(self):
        return np.asarray(self.matrix.sum(axis=1)).ravel()


def ffm_to_sparse(ffm: FlowFieldMatrix, interp="bilinear") -> SparseCorrector:
    h, w = ffm.height, ffm.width
    n = h * w
    sx, sy = ffm.sources()
    rows = np.arange(n).reshape(h, w)
    valid = ffm.valid
    if interp == "nearest":
        iy, ix = _nearest_idx(sx, sy, w, h)
        taps = [(iy, ix, np.ones((h, w)))]
    elif interp == "bilinear":
        taps = _bilinear_taps(sx, sy, w, h)
    else:
        raise ValueError(f"unknown interpolation {interp!r}")
    r_all, c_all, v_all = [], [], []
    for iy, ix, wt in taps:
        keep = valid & (wt != 0)
        r_all.append(rows[keep])
        c_all.append((iy * w + ix)[keep])
        v_all.append(wt[keep])
    m = sp.csr_matrix((np.concatenate(v_all), (np.concatenate(r_all), np.concatenate(c_all))),
                      shape=(n, n))
    m.sum_duplicates()
    m.eliminate_zeros()
    return SparseCorrector(m, w, h)


def apply_sparse(frame, sc: SparseCorrector):
    a, squeeze = _as_float_planes(frame)
    if a.shape[:2] != (sc.height, sc.width):
        raise ValueError("frame and corrector differ in size")
    out = (sc.matrix @ a.reshape(sc.height * sc.width, -1).astype(np.float64)).reshape(a.shape)
    return _finish(out, a.dtype, squeeze)


def distort(frame, model: RadialModel):
    """Synthesise what the lens would capture from an ideal image.

    Sampling uses a cubic spline so the synthetic capture behaves like optics
    over a continuous scene rather than adding a second bilinear blur.
    """
    a, squeeze = _as_float_planes(frame)
    h, w = a.shape[:2]
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    src = model.undistort_points(np.stack([xx, yy], axis=-1))
    sx, sy = src[..., 0], src[..., 1]
    valid = (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
    out = np.stack([ndimage.map_coordinates(a[..., c].astype(np.float64), [sy, sx], order=3,
                                            mode="nearest") for c in range(a.shape[2])], axis=-1)
    out[~valid] = 0
    return _finish(out, a.dtype, squeeze)


@dataclass(frozen=True)
class ColorCorrectionMatrix:
    matrix: np.ndarray  # (3, 3); row vector [R, G, B] @ matrix
    condition: float = float("nan")
    rms: float = float("nan")

    @classmethod
    def identity(cls):
        return cls(np.eye(3))

    def to_text(self) -> str:
        return "".join(f"a{i}{j}={float(self.matrix[i, j])!r}\n" for i in range(3) for j in range(3))

    @classmethod
    def from_text(cls, text: str):
        kv = _parse_kv(text)
        try:
            m = np.array([[float(kv[f"a{i}{j}"]) for j in range(3)] for i in range(3)])
        except (KeyError, ValueError) as e:
            raise FormatError(f"bad CCM file: {e}") from None
        if not np.isfinite(m).all():
            raise FormatError("CCM entries must be finite")
        return cls(m)


def apply_ccm(frame, ccm):
    """Per-pixel [R, G, B] @ A, clamped to [0, 255] for integer frames."""
    a = np.asarray(frame)
    m = ccm.matrix if isinstance(ccm, ColorCorrectionMatrix) else np.asarray(ccm, np.float64)
    out = a.astype(np.float64) @ m
    if np.issubdtype(a.dtype, np.integer):
        return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    return out


color_distort = apply_ccm


def fit_ccm(observed, target) -> ColorCorrectionMatrix:
    """Least-squares A minimising sum ||observed @ A - target||^2."""
    obs = np.asarray(observed, np.float64).reshape(-1, 3)
    tgt = np.asarray(target, np.float64).reshape(-1, 3)
    if obs.shape != tgt.shape:
        raise ValueError("observed and target samples differ in count")
    if np.linalg.matrix_rank(obs) < 3:
        raise ModelError("colour samples are rank deficient; need 3 independent colours")
    a, *_ = np.linalg.lstsq(obs, tgt, rcond=None)
    rms = float(np.sqrt(np.mean((obs @ a - tgt) ** 2)))
    return ColorCorrectionMatrix(a, float(np.linalg.cond(obs)), rms)


# -------------------------------------------------------------------- files

def read_correspondences(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    try:
        return np.array([[float(r[k]) for k in ("x_d", "y_d", "x_t", "y_t")] for r in rows])
    except (KeyError, ValueError) as e:
        raise FormatError(f"{path}: bad correspondence row ({e})") from None


def write_correspondences(path, corr):
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["x_d", "y_d", "x_t", "y_t"])
        wr.writerows(np.asarray(corr).tolist())


def read_patches(path):
    keys = ("r_obs", "g_obs", "b_obs", "r_t", "g_t", "b_t")
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    try:
        a = np.array([[float(r[k]) for k in keys] for r in rows])
    except (KeyError, ValueError) as e:
        raise FormatError(f"{path}: bad patch row ({e})") from None
    return a[:, :3], a[:, 3:]


def load_model(path) -> RadialModel:
    with open(path) as f:
        return RadialModel.from_text(f.read())


def load_ccm(path) -> ColorCorrectionMatrix:
    with open(path) as f:
        return ColorCorrectionMatrix.from_text(f.read())
