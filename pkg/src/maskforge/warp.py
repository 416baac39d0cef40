"""Backward-mapping warps with bilinear sampling.

Coordinates are (x, y) with x along columns and y along rows; pixel centers
sit at integer coordinates.
"""

from __future__ import annotations

import numpy as np


def bilinear_sample(field: np.ndarray, xs: np.ndarray, ys: np.ndarray, fill: float = 0.0) -> np.ndarray:
    """Sample a 2-D float field at fractional (x, y) positions.

    Positions outside the grid return `fill`.
    """
    h, w = field.shape
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0

    out = np.full(xs.shape, float(fill), dtype=np.float64)
    valid = (x0 >= -1) & (x0 <= w - 1) & (y0 >= -1) & (y0 <= h - 1)

    padded = np.full((h + 2, w + 2), float(fill), dtype=np.float64)
    padded[1:-1, 1:-1] = field
    xv = x0[valid] + 1
    yv = y0[valid] + 1
    fxv = fx[valid]
    fyv = fy[valid]
    top = padded[yv, xv] * (1.0 - fxv) + padded[yv, xv + 1] * fxv
    bot = padded[yv + 1, xv] * (1.0 - fxv) + padded[yv + 1, xv + 1] * fxv
    out[valid] = top * (1.0 - fyv) + bot * fyv
    return out


def pixel_grid(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Flattened (x, y) coordinates of every pixel center in an h x w grid."""
    ys, xs = np.mgrid[0:h, 0:w]
    return xs.ravel().astype(np.float64), ys.ravel().astype(np.float64)


def warp_by_homography(field: np.ndarray, hmat: np.ndarray, fill: float = 0.0) -> np.ndarray:
    """Backward-warp a float field by a 3x3 homography.

    `hmat` maps source (x, y, 1) to destination; each destination pixel is
    sampled from the source at hmat^-1 (x, y, 1).
    """
    h, w = field.shape
    inv = np.linalg.inv(hmat)
    xs, ys = pixel_grid(h, w)
    ones = np.ones_like(xs)
    pts = inv @ np.stack([xs, ys, ones])
    sx = pts[0] / pts[2]
    sy = pts[1] / pts[2]
    return bilinear_sample(field, sx, sy, fill=fill).reshape(h, w)


def warp_by_displacement(field: np.ndarray, dx: np.ndarray, dy: np.ndarray, fill: float = 0.0) -> np.ndarray:
    """Backward-warp a float field by a dense forward displacement field.

    A displacement of (+3, 0) everywhere moves content 3 pixels to the
    right: output(x, y) = input(x - dx, y - dy).
    """
    h, w = field.shape
    xs, ys = pixel_grid(h, w)
    sx = xs - dx.ravel()
    sy = ys - dy.ravel()
    return bilinear_sample(field, sx, sy, fill=fill).reshape(h, w)
