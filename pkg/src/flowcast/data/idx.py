"""Reader and writer for the IDX image container (big-endian, magic 0x803).

The three-dimensional unsigned-byte layout is the one used to distribute
handwritten digit images: a 4-byte magic number, three big-endian uint32
dimensions (count, rows, cols), then count*rows*cols raw bytes.
"""

import struct
from dataclasses import dataclass

import numpy as np

IDX_MAGIC_UBYTE_3D = 0x00000803
_HEADER = struct.Struct(">IIII")


class IdxFormatError(ValueError):
    """Magic number does not identify a 3-d unsigned-byte tensor."""


class IdxLengthError(ValueError):
    """Payload size disagrees with the header dimensions."""


@dataclass
class ImageSet:
    """Stack of grayscale images with pixel values in [0, 1]."""

    pixels: np.ndarray  # (count, height, width) float32

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float32)
        if self.pixels.ndim != 3:
            raise ValueError(f"expected (count, h, w), got {self.pixels.shape}")

    @property
    def count(self):
        return self.pixels.shape[0]

    @property
    def height(self):
        return self.pixels.shape[1]

    @property
    def width(self):
        return self.pixels.shape[2]


def parse_idx(data):
    """Decode IDX bytes into an ImageSet (pixels scaled to [0, 1])."""
    if len(data) < _HEADER.size:
        raise IdxFormatError(f"header needs {_HEADER.size} bytes, got {len(data)}")
    magic, count, rows, cols = _HEADER.unpack_from(data, 0)
    if magic != IDX_MAGIC_UBYTE_3D:
        raise IdxFormatError(
            f"bad magic 0x{magic:08x}, expected 0x{IDX_MAGIC_UBYTE_3D:08x}"
        )
    expected = _HEADER.size + count * rows * cols
    if len(data) != expected:
        kind = "truncated" if len(data) < expected else "oversized"
        raise IdxLengthError(
            f"{kind} payload: {len(data)} bytes, header implies {expected}"
        )
    raw = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size)
    pixels = raw.reshape(count, rows, cols).astype(np.float32) / 255.0
    return ImageSet(pixels)


def serialize_idx(images):
    """Encode an ImageSet back to IDX bytes (values quantized to uint8)."""
    px = images.pixels
    if px.size and (px.min() < 0.0 or px.max() > 1.0):
        raise ValueError("pixel values must lie in [0, 1]")
    header = _HEADER.pack(IDX_MAGIC_UBYTE_3D, images.count, images.height, images.width)
    body = np.rint(px * 255.0).astype(np.uint8).tobytes()
    return header + body
