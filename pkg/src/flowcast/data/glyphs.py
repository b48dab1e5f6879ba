"""Procedural digit glyphs.

A deterministic stand-in for real handwritten digits: a 3x5 bitmap font
upscaled and box-blurred so the sprites have soft edges like downsampled
scans. No download, no files, identical on every machine.
"""

import numpy as np

from .idx import ImageSet

# 3x5 font, one string per digit, '#' marks ink
_FONT = {
    0: ["###", "#.#", "#.#", "#.#", "###"],
    1: [".#.", "##.", ".#.", ".#.", "###"],
    2: ["###", "..#", "###", "#..", "###"],
    3: ["###", "..#", "###", "..#", "###"],
    4: ["#.#", "#.#", "###", "..#", "..#"],
    5: ["###", "#..", "###", "..#", "###"],
    6: ["###", "#..", "###", "#.#", "###"],
    7: ["###", "..#", ".#.", ".#.", ".#."],
    8: ["###", "#.#", "###", "#.#", "###"],
    9: ["###", "#.#", "###", "..#", "###"],
}


def _box_blur(img):
    # 3x3 box blur with zero padding
    padded = np.pad(img, 1)
    out = np.zeros_like(img)
    for dr in range(3):
        for dc in range(3):
            out += padded[dr : dr + img.shape[0], dc : dc + img.shape[1]]
    return out / 9.0


def synthetic_digits(size=12):
    """Render the ten digits as size x size float sprites in [0, 1]."""
    if size < 8:
        raise ValueError(f"glyph size must be at least 8, got {size}")
    scale = max(1, (size - 2) // 5)
    glyphs = np.zeros((10, size, size), dtype=np.float32)
    for d in range(10):
        bitmap = np.array(
            [[1.0 if ch == "#" else 0.0 for ch in row] for row in _FONT[d]],
            dtype=np.float32,
        )
        big = np.kron(bitmap, np.ones((scale, scale), dtype=np.float32))
        canvas = np.zeros((size, size), dtype=np.float32)
        r0 = (size - big.shape[0]) // 2
        c0 = (size - big.shape[1]) // 2
        canvas[r0 : r0 + big.shape[0], c0 : c0 + big.shape[1]] = big
        soft = _box_blur(_box_blur(canvas))
        peak = soft.max()
        if peak > 0:
            soft = soft / peak
        glyphs[d] = soft
    return ImageSet(glyphs)
