"""DNN parameter compression: prune, codebook-quantize, entropy-code.

Conv layers are Huffman coded over codebook indices; fully connected layers
become (zero-run gap, index) records. Decompression gives back the pruned and
quantized tensor exactly (the float32 codebook values).
"""

from __future__ import annotations

import enum
import math
import struct
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .bitio import BitReader, BitWriter, canonical_codes, huffman_lengths
from .errors import DecodeError, DegenerateInputError, FormatError

MAX_LEVELS = 16
MAX_ITERS = 100
LEN_BITS = 4  # code-length field per codebook entry in a Huffman payload
GAP_BITS = 8
GAP_ESCAPE = 0xFF


class LayerKind(enum.IntEnum):
    CONV = 0
    FC = 1


class Encoding(enum.IntEnum):
    HUFFMAN = 0
    SPARSE_INDEX = 1


@dataclass(frozen=True)
class WeightTensor:
    kind: LayerKind
    shape: tuple
    values: np.ndarray  # flat float64

    def __post_init__(self):
        v = np.asarray(self.values, np.float64).ravel()
        if v.size != math.prod(self.shape):
            raise ValueError(f"{v.size} values do not fill shape {self.shape}")
        if not np.isfinite(v).all():
            raise ValueError("weights must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "shape", tuple(int(d) for d in self.shape))
        object.__setattr__(self, "kind", LayerKind(self.kind))

    @property
    def size(self):
        return self.values.size

    def replace(self, values):
        return WeightTensor(self.kind, self.shape, values)


def prune(t: WeightTensor, sparsity: float) -> WeightTensor:
    """Zero the ceil(sparsity*N) smallest-magnitude weights (lower index first on ties)."""
    if not 0 <= sparsity < 1:
        raise ValueError("sparsity must be in [0, 1)")
    n = math.ceil(sparsity * t.size - 1e-9)
    v = t.values.copy()
    v[np.argsort(np.abs(v), kind="stable")[:n]] = 0.0
    return t.replace(v)


def _assign(x, centroids):
    """Nearest centroid for sorted centroids; midpoint ties go to the lower one."""
    mids = (centroids[1:] + centroids[:-1]) / 2
    return np.searchsorted(mids, x, side="left")


def lloyd_1d(x, k):
    """Deterministic 1-D k-means. Returns (sorted centroids, assignment)."""
    x = np.asarray(x, np.float64)
    uniq = np.unique(x)
    if len(uniq) <= k:
        c = uniq.copy()
    else:
        c = np.quantile(x, (np.arange(k) + 0.5) / k)
        if len(np.unique(c)) < k:
            c = uniq[np.round(np.linspace(0, len(uniq) - 1, k)).astype(int)]
    a = _assign(x, c)
    for _ in range(MAX_ITERS):
        sums = np.bincount(a, weights=x, minlength=len(c))
        cnt = np.bincount(a, minlength=len(c))
        nc = np.where(cnt > 0, sums / np.maximum(cnt, 1), c)
        order = np.argsort(nc, kind="stable")
        nc = nc[order]
        na = _assign(x, nc)
        c = nc
        if np.array_equal(na, np.argsort(order)[a]):
            a = na
            break
        a = na
    return c, a


def quantize_nonuniform(t: WeightTensor, levels: int = MAX_LEVELS):
    """Codebook [0, c_1 < ... < c_m] (float32, m <= levels-1) and per-weight indices.

    Zero weights take index 0; non-zero weights take their k-means cluster.
    """
    if not 2 <= levels <= MAX_LEVELS:
        raise ValueError(f"levels must be in [2, {MAX_LEVELS}]")
    v = t.values
    nz = v != 0
    if not nz.any():
        raise DegenerateInputError("cannot quantize an all-zero tensor")
    cent, a = lloyd_1d(v[nz], levels - 1)
    codebook = np.concatenate([[0.0], cent]).astype(np.float32)
    idx = np.zeros(v.size, np.int64)
    idx[nz] = a + 1
    return codebook, idx


def dequantize(codebook, idx):
    return np.asarray(codebook, np.float32)[idx]


# ------------------------------------------------------------------ Huffman

def huffman_code_lengths(indices, nsym):
    counts = Counter(np.asarray(indices).tolist())
    lengths = huffman_lengths({s: counts.get(s, 0) for s in range(nsym)})
    return [lengths.get(s, 0) for s in range(nsym)]


def huffman_encode(indices, nsym: int) -> tuple[bytes, int]:
    """Payload = nsym 4-bit code lengths, then the canonical codes."""
    indices = np.asarray(indices, np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= nsym):
        raise ValueError("index out of codebook range")
    lengths = huffman_code_lengths(indices, nsym)
    if max(lengths, default=0) >= 1 << LEN_BITS:
        raise ValueError("Huffman code too long for the length field")
    w = BitWriter()
    for n in lengths:
        w.write(n, LEN_BITS)
    codes = canonical_codes(dict(enumerate(lengths)))
    table = [codes.get(s, "") for s in range(nsym)]
    w.write_bits("".join([table[i] for i in indices.tolist()]))
    return w.getvalue()


def huffman_decode(payload: bytes, nbits: int, nsym: int, count: int) -> np.ndarray:
    r = BitReader.from_bytes(payload, nbits)
    lengths = [r.read(LEN_BITS) for _ in range(nsym)]
    codes = canonical_codes(dict(enumerate(lengths)))
    if count == 0:
        if r.remaining():
            raise DecodeError("trailing bits after empty Huffman payload", r.pos)
        return np.zeros(0, np.int64)
    if not codes:
        raise DecodeError("Huffman payload has an empty code table", r.pos)
    m = max(lengths)
    # every m-bit window maps to (symbol, code length)
    lut: list = [None] * (1 << m)
    for s, c in codes.items():
        base = int(c, 2) << (m - len(c))
        for j in range(1 << (m - len(c))):
            lut[base + j] = (s, len(c))
    bits = r.bits + "0" * m
    p, end = r.pos, r.end
    out = [0] * count
    for i in range(count):
        e = lut[int(bits[p:p + m], 2)]
        if e is None:
            raise DecodeError("invalid Huffman code", p)
        out[i] = e[0]
        p += e[1]
        if p > end:
            raise DecodeError("Huffman payload truncated", end)
    if p != end:
        raise DecodeError(f"{end - p} trailing bits in Huffman payload", p)
    return np.array(out, np.int64)


def mean_code_length(indices, nsym):
    lengths = huffman_code_lengths(indices, nsym)
    counts = np.bincount(np.asarray(indices), minlength=nsym)
    return float((counts * np.array(lengths)).sum() / counts.sum())


def entropy_bits(indices) -> float:
    p = np.bincount(np.asarray(indices)) / len(indices)
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


# ------------------------------------------------------- sparse FC records

def index_bits(nsym: int) -> int:
    return max(1, math.ceil(math.log2(nsym)))


def sparse_fc_encode(indices, nsym: int) -> tuple[bytes, int]:
    """(gap, index) per non-zero weight; gaps >= 255 continue through 0xFF bytes."""
    ib = index_bits(nsym)
    w = BitWriter()
    idx = np.asarray(indices, np.int64)
    pos = np.flatnonzero(idx)
    prev = -1
    for p in pos.tolist():
        gap = p - prev - 1
        while gap >= GAP_ESCAPE:
            w.write(GAP_ESCAPE, GAP_BITS)
            gap -= GAP_ESCAPE
        w.write(gap, GAP_BITS)
        w.write(int(idx[p]), ib)
        prev = p
    return w.getvalue()


def sparse_fc_decode(payload: bytes, nbits: int, nsym: int, count: int) -> np.ndarray:
    ib = index_bits(nsym)
    r = BitReader.from_bytes(payload, nbits)
    out = np.zeros(count, np.int64)
    p = -1
    while r.remaining():
        gap = 0
        g = r.read(GAP_BITS)
        while g == GAP_ESCAPE:
            gap += g
            g = r.read(GAP_BITS)
        gap += g
        i = r.read(ib)
        p += gap + 1
        if p >= count:
            raise DecodeError("sparse record points past the end of the tensor", r.pos)
        if not 0 < i < nsym:
            raise DecodeError(f"sparse record index {i} outside codebook", r.pos)
        out[p] = i
    return out


# ---------------------------------------------------------------- network

@dataclass(frozen=True)
class CompressedLayer:
    kind: LayerKind
    shape: tuple
    codebook: np.ndarray  # float32
    encoding: Encoding
    payload: bytes
    payload_bits: int

    @property
    def size(self):
        return math.prod(self.shape)

    def decode_indices(self):
        n = len(self.codebook)
        if self.encoding is Encoding.HUFFMAN:
            if n == 1:  # all-zero layer carries no payload
                if self.payload_bits:
                    raise DecodeError("all-zero layer with a payload", 0)
                return np.zeros(self.size, np.int64)
            return huffman_decode(self.payload, self.payload_bits, n, self.size)
        return sparse_fc_decode(self.payload, self.payload_bits, n, self.size)

    def decompress(self) -> WeightTensor:
        vals = dequantize(self.codebook, self.decode_indices())
        return WeightTensor(self.kind, self.shape, vals)


@dataclass(frozen=True)
class CompressedNetwork:
    layers: list = field(default_factory=list)

    MAGIC = b"TCAMNN1"

    @property
    def weight_count(self) -> int:
        return sum(l.size for l in self.layers)

    @property
    def payload_bits(self) -> int:
        return sum(l.payload_bits for l in self.layers)

    @property
    def bits_per_weight(self) -> float:
        """Net: entropy-coded payloads (incl. per-layer code tables) per original weight."""
        return self.payload_bits / self.weight_count

    @property
    def gross_bits_per_weight(self) -> float:
        """Everything in the container, codebooks and headers included."""
        return len(self.to_bytes()) * 8 / self.weight_count

    def to_bytes(self) -> bytes:
        out = [self.MAGIC, struct.pack("<H", len(self.layers))]
        for l in self.layers:
            out.append(struct.pack("<BI", l.kind, len(l.shape)))
            out.append(struct.pack(f"<{len(l.shape)}I", *l.shape))
            out.append(struct.pack("<B", len(l.codebook)))
            out.append(np.asarray(l.codebook, "<f4").tobytes())
            out.append(struct.pack("<BI", l.encoding, l.payload_bits))
            out.append(l.payload)
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes):
        if data[:7] != cls.MAGIC:
            raise FormatError("not a TCAMNN1 container")
        try:
            (n,) = struct.unpack_from("<H", data, 7)
            off = 9
            layers = []
            for _ in range(n):
                kind, rank = struct.unpack_from("<BI", data, off)
                off += 5
                shape = struct.unpack_from(f"<{rank}I", data, off)
                off += 4 * rank
                (ncb,) = struct.unpack_from("<B", data, off)
                off += 1
                cb = np.frombuffer(data, "<f4", ncb, off).astype(np.float32)
                off += 4 * ncb
                enc, nbits = struct.unpack_from("<BI", data, off)
                off += 5
                nbytes = (nbits + 7) // 8
                if off + nbytes > len(data):
                    raise FormatError("container truncated inside a payload")
                layers.append(CompressedLayer(LayerKind(kind), tuple(shape), cb, Encoding(enc),
                                              data[off:off + nbytes], nbits))
                off += nbytes
        except (struct.error, ValueError) as e:
            raise FormatError(f"malformed TCAMNN1 container: {e}") from None
        if off != len(data):
            raise FormatError(f"{len(data) - off} trailing bytes after last layer")
        return cls(layers)

    def save(self, path):
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())


def compress_layer(t: WeightTensor, sparsity=0.5, levels=MAX_LEVELS) -> CompressedLayer:
    p = prune(t, sparsity)
    if not p.values.any():
        return CompressedLayer(t.kind, t.shape, np.zeros(1, np.float32), Encoding.HUFFMAN, b"", 0)
    cb, idx = quantize_nonuniform(p, levels)
    if t.kind is LayerKind.FC:
        payload, nbits = sparse_fc_encode(idx, len(cb))
        enc = Encoding.SPARSE_INDEX
    else:
        payload, nbits = huffman_encode(idx, len(cb))
        enc = Encoding.HUFFMAN
    return CompressedLayer(t.kind, t.shape, cb, enc, payload, nbits)


def compress_network(layers, sparsity=0.5, levels=MAX_LEVELS) -> CompressedNetwork:
    if not layers:
        raise ValueError("network has no layers")
    return CompressedNetwork([compress_layer(t, sparsity, levels) for t in layers])


def decompress_network(net: CompressedNetwork) -> list[WeightTensor]:
    return [l.decompress() for l in net.layers]


def reference_model(layers, sparsity=0.5, levels=MAX_LEVELS) -> list[WeightTensor]:
    """Pruned+quantized tensors without the entropy stage, for round-trip checks."""
    out = []
    for t in layers:
        p = prune(t, sparsity)
        if not p.values.any():
            out.append(p.replace(np.zeros(t.size, np.float32)))
            continue
        cb, idx = quantize_nonuniform(p, levels)
        out.append(p.replace(dequantize(cb, idx)))
    return out


# ------------------------------------------------------------- weight files

def kind_for_rank(rank: int) -> LayerKind:
    return LayerKind.FC if rank == 2 else LayerKind.CONV


def write_weights(path, layers):
    """Concatenated tensors: rank u32, dims u32..., f32 values, little-endian."""
    with open(path, "wb") as f:
        for t in layers:
            f.write(struct.pack(f"<I{len(t.shape)}I", len(t.shape), *t.shape))
            f.write(np.asarray(t.values, "<f4").tobytes())


def read_weights(path) -> list[WeightTensor]:
    with open(path, "rb") as f:
        data = f.read()
    layers, off = [], 0
    while off < len(data):
        try:
            (rank,) = struct.unpack_from("<I", data, off)
            if not 1 <= rank <= 8:
                raise FormatError(f"tensor rank {rank} at byte {off} is not plausible")
            dims = struct.unpack_from(f"<{rank}I", data, off + 4)
        except struct.error:
            raise FormatError(f"truncated tensor header at byte {off}") from None
        off += 4 + 4 * rank
        n = math.prod(dims)
        if off + 4 * n > len(data):
            raise FormatError(f"tensor of shape {dims} runs past end of file")
        vals = np.frombuffer(data, "<f4", n, off).astype(np.float64)
        off += 4 * n
        if not np.isfinite(vals).all():
            raise FormatError(f"tensor of shape {dims} has non-finite values")
        layers.append(WeightTensor(kind_for_rank(rank), dims, vals))
    if not layers:
        raise FormatError("weight file holds no tensors")
    return layers


def synthetic_network(rng, scale=1.0):
    """Small conv-heavy net with i.i.d. N(0, 1) float32-representable weights.

    scale multiplies every channel count; scale=1 gives ~76k weights.
    """
    c = lambda n: max(1, int(round(n * scale)))
    shapes = [(c(16), 3, 3, 3), (c(32), c(16), 3, 3), (c(64), c(32), 3, 3),
              (c(64), c(64), 3, 3), (c(10), c(64))]
    return [WeightTensor(kind_for_rank(len(s)), s,
                         rng.standard_normal(math.prod(s)).astype(np.float32))
            for s in shapes]
