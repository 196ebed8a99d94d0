"""MSB-first bit packing, exp-Golomb codes and canonical Huffman helpers.

Bits are staged as '0'/'1' text internally; int(s, 2) and str.find are far
faster in CPython than per-bit shifting.
"""

from __future__ import annotations

import heapq

from .errors import DecodeError


class BitWriter:
    def __init__(self):
        self._parts: list[str] = []
        self._len = 0

    def __len__(self):
        return self._len

    def write(self, value: int, nbits: int):
        if nbits <= 0:
            return
        if value < 0 or value >> nbits:
            raise ValueError(f"value {value} does not fit in {nbits} bits")
        self._parts.append(format(value, f"0{nbits}b"))
        self._len += nbits

    def write_bits(self, bits: str):
        """Append a pre-rendered '0'/'1' string (e.g. a Huffman code)."""
        self._parts.append(bits)
        self._len += len(bits)

    def write_ue(self, v: int):
        v += 1
        n = v.bit_length()
        self._parts.append("0" * (n - 1) + format(v, "b"))
        self._len += 2 * n - 1

    def write_se(self, v: int):
        self.write_ue(2 * v - 1 if v > 0 else -2 * v)

    def getbits(self) -> str:
        s = "".join(self._parts)
        self._parts = [s]
        return s

    def getvalue(self) -> tuple[bytes, int]:
        """Return (zero-padded bytes, exact bit length)."""
        return pack_bits(self.getbits()), self._len


def pack_bits(bits: str) -> bytes:
    n = len(bits)
    if n == 0:
        return b""
    pad = (-n) % 8
    return int(bits + "0" * pad, 2).to_bytes((n + pad) // 8, "big")


def unpack_bits(data: bytes, nbits: int | None = None) -> str:
    if not data:
        s = ""
    else:
        s = format(int.from_bytes(data, "big"), f"0{len(data) * 8}b")
    if nbits is not None:
        if nbits > len(s):
            raise DecodeError(f"payload declares {nbits} bits but holds {len(s)}", len(s))
        s = s[:nbits]
    return s


class BitReader:
    def __init__(self, bits: str, pos: int = 0):
        self.bits = bits
        self.pos = pos
        self.end = len(bits)

    @classmethod
    def from_bytes(cls, data: bytes, nbits: int | None = None):
        return cls(unpack_bits(data, nbits))

    def remaining(self) -> int:
        return self.end - self.pos

    def read(self, n: int) -> int:
        if n == 0:
            return 0
        p = self.pos
        if p + n > self.end:
            raise DecodeError("unexpected end of bitstream", p)
        self.pos = p + n
        return int(self.bits[p:p + n], 2)

    def read_ue(self) -> int:
        p = self.pos
        one = self.bits.find("1", p, self.end)
        if one < 0:
            raise DecodeError("unterminated exp-Golomb prefix", p)
        nz = one - p
        if one + nz + 1 > self.end:
            raise DecodeError("truncated exp-Golomb suffix", p)
        self.pos = one + nz + 1
        return int(self.bits[one:self.pos], 2) - 1

    def read_se(self) -> int:
        k = self.read_ue()
        return (k + 1) // 2 if k & 1 else -(k // 2)

    def read_huffman(self, table: dict[str, int], max_len: int = 16) -> int:
        p = self.pos
        bits = self.bits
        for n in range(1, max_len + 1):
            if p + n > self.end:
                break
            sym = table.get(bits[p:p + n])
            if sym is not None:
                self.pos = p + n
                return sym
        raise DecodeError("invalid Huffman code", p)


def canonical_codes(lengths: dict[int, int]) -> dict[int, str]:
    """Canonical code assignment: shorter codes first, ties by symbol value."""
    codes = {}
    code = 0
    prev = 0
    for sym, n in sorted(lengths.items(), key=lambda kv: (kv[1], kv[0])):
        if n == 0:
            continue
        code <<= n - prev
        codes[sym] = format(code, f"0{n}b")
        code += 1
        prev = n
    return codes


def codes_from_bits_vals(bits: list[int], vals: list[int]) -> dict[int, str]:
    """Expand a JPEG-style BITS/HUFFVAL table into symbol -> code."""
    # JPEG ordering is by HUFFVAL position, not symbol value
    codes = {}
    code = 0
    k = 0
    for n, count in enumerate(bits, start=1):
        for _ in range(count):
            codes[vals[k]] = format(code, f"0{n}b")
            code += 1
            k += 1
        code <<= 1
    return codes


def huffman_lengths(freqs: dict[int, int]) -> dict[int, int]:
    """Optimal prefix-code lengths for the given symbol frequencies.

    A single used symbol still gets a 1-bit code so the stream stays decodable.
    """
    used = [(f, s) for s, f in freqs.items() if f > 0]
    if not used:
        return {}
    if len(used) == 1:
        return {used[0][1]: 1}
    # (weight, tiebreak, symbols)
    heap = [(f, s, [s]) for f, s in used]
    heapq.heapify(heap)
    depth = {s: 0 for _, s in used}
    while len(heap) > 1:
        f1, t1, a = heapq.heappop(heap)
        f2, t2, b = heapq.heappop(heap)
        for s in a:
            depth[s] += 1
        for s in b:
            depth[s] += 1
        heapq.heappush(heap, (f1 + f2, min(t1, t2), a + b))
    return depth
