"""Tile image batches into binary PPM rasters for human inspection."""

from __future__ import annotations

import numpy as np

from .data import ImageSet


def to_bytes(values: np.ndarray) -> np.ndarray:
    """Map [-1, 1] floats linearly onto [0, 255] u8."""
    return np.clip(np.rint((values + 1.0) * 127.5), 0, 255).astype(np.uint8)


def emit_montage(images, grid, path) -> str:
    """Tile images row-major into a (rows*h) x (cols*w) P6 PPM file.

    `grid` is (rows, cols) and must hold every image; unused cells stay
    black. Single-channel inputs are replicated to gray RGB.
    """
    pixels = images.pixels if isinstance(images, ImageSet) else np.asarray(images)
    if pixels.ndim != 4:
        raise ValueError(f"montage needs (n, c, h, w) images, got {pixels.shape}")
    n, c, h, w = pixels.shape
    if n == 0:
        raise ValueError("montage of an empty image list")
    rows, cols = int(grid[0]), int(grid[1])
    if rows * cols < n:
        raise ValueError(f"grid {rows}x{cols} cannot hold {n} images")
    if c == 1:
        pixels = np.repeat(pixels, 3, axis=1)
    elif c != 3:
        raise ValueError(f"montage supports 1 or 3 channels, got {c}")

    canvas = np.zeros((rows * h, cols * w, 3), dtype=np.uint8)
    for i in range(n):
        r, q = divmod(i, cols)
        tile = to_bytes(pixels[i]).transpose(1, 2, 0)
        canvas[r * h:(r + 1) * h, q * w:(q + 1) * w] = tile
    with open(path, "wb") as fh:
        fh.write(f"P6\n{cols * w} {rows * h}\n255\n".encode())
        fh.write(canvas.tobytes())
    return str(path)


def square_grid(n: int):
    cols = int(np.ceil(np.sqrt(n)))
    rows = int(np.ceil(n / cols))
    return rows, cols
