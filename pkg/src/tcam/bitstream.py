"""Tagged compressed-payload container shared by the image and DNN codecs.

On-disk layout (little-endian)::

    "TCAMBS1" | codec_tag u8 | header_len u16 | header | payload_bits u32 | payload
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

from .errors import FormatError
from .frame import VGA_RAW_BITS

MAGIC = b"TCAMBS1"


class CodecTag(enum.IntEnum):
    JPEG_MCB = 1
    INTRA_ROI = 2
    DNN_PARAMS = 3


# codec header: width u16, height u16, qf u8, chroma u8 (0 = 4:2:0, 1 = 4:4:4), has_map u8
_IMG_HDR = struct.Struct("<HHBBB")


@dataclass(frozen=True)
class ImageHeader:
    width: int
    height: int
    qf: int
    chroma: str = "420"
    has_map: bool = False

    def pack(self) -> bytes:
        return _IMG_HDR.pack(self.width, self.height, self.qf,
                             0 if self.chroma == "420" else 1, int(self.has_map))

    @classmethod
    def unpack(cls, data: bytes):
        if len(data) != _IMG_HDR.size:
            raise FormatError(f"image header must be {_IMG_HDR.size} bytes, got {len(data)}")
        w, h, qf, chroma, has_map = _IMG_HDR.unpack(data)
        if chroma not in (0, 1):
            raise FormatError(f"unknown chroma mode {chroma}")
        if not 1 <= qf <= 100:
            raise FormatError(f"quality factor {qf} out of range")
        return cls(w, h, qf, "420" if chroma == 0 else "444", bool(has_map))


@dataclass(frozen=True)
class Bitstream:
    codec_tag: CodecTag
    header: bytes
    payload: bytes
    bit_length: int

    def __post_init__(self):
        if self.bit_length > len(self.payload) * 8 or len(self.payload) != (self.bit_length + 7) // 8:
            raise FormatError(f"payload of {len(self.payload)} bytes cannot hold exactly {self.bit_length} bits")

    @property
    def total_bits(self) -> int:
        """Codec header plus payload bits (container framing excluded)."""
        return len(self.header) * 8 + self.bit_length

    def image_header(self) -> ImageHeader:
        return ImageHeader.unpack(self.header)

    def to_bytes(self) -> bytes:
        return (MAGIC + struct.pack("<BH", int(self.codec_tag), len(self.header)) + self.header
                + struct.pack("<I", self.bit_length) + self.payload)

    @classmethod
    def from_bytes(cls, data: bytes):
        if data[:7] != MAGIC:
            raise FormatError("not a TCAMBS1 bitstream")
        try:
            tag, hlen = struct.unpack_from("<BH", data, 7)
            header = data[10:10 + hlen]
            (nbits,) = struct.unpack_from("<I", data, 10 + hlen)
        except struct.error:
            raise FormatError("truncated bitstream container") from None
        try:
            tag = CodecTag(tag)
        except ValueError:
            raise FormatError(f"unknown codec tag {tag}") from None
        start = 14 + hlen
        payload = data[start:start + (nbits + 7) // 8]
        if len(header) != hlen or len(payload) != (nbits + 7) // 8:
            raise FormatError("truncated bitstream container")
        if len(data) != start + len(payload):
            raise FormatError("trailing bytes after bitstream payload")
        return cls(tag, bytes(header), bytes(payload), nbits)

    def save(self, path):
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())


def measure_ratio(bs: Bitstream, extra_bits: int = 0) -> float:
    """Compression ratio against a raw 12-bit VGA frame.

    ``extra_bits`` lets callers charge side information such as the change map.
    """
    if bs.codec_tag not in (CodecTag.JPEG_MCB, CodecTag.INTRA_ROI):
        raise ValueError("compression ratio only applies to image bitstreams")
    return VGA_RAW_BITS / (bs.total_bits + extra_bits)


def ratio_for_bits(bits: float) -> float:
    return VGA_RAW_BITS / bits
