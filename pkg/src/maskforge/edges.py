"""Canny edge extraction for binary masks.

Pipeline: Gaussian blur, Sobel gradients, non-maximum suppression along the
quantized gradient direction, double-threshold hysteresis. Thresholds apply
to the gradient magnitude normalized by its maximum.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import MaskForgeError
from .masks import as_mask

# Offsets (ox, oy) for the 4 quantized gradient directions; the two NMS
# neighbors of a pixel sit at +(ox, oy) and -(ox, oy).
_DIR_OFFSETS = ((1, 0), (1, 1), (0, 1), (-1, 1))


def _shifted(arr: np.ndarray, ox: int, oy: int) -> np.ndarray:
    """arr sampled at (x + ox, y + oy), zero outside the frame."""
    out = np.zeros_like(arr)
    h, w = arr.shape
    ys0, ys1 = max(0, -oy), min(h, h - oy)
    xs0, xs1 = max(0, -ox), min(w, w - ox)
    out[ys0:ys1, xs0:xs1] = arr[ys0 + oy:ys1 + oy, xs0 + ox:xs1 + ox]
    return out


def canny(mask: np.ndarray, low: float = 0.1, high: float = 0.3, sigma: float = 1.0) -> np.ndarray:
    """Edge map of a binary mask as a {0,1} uint8 grid.

    `low` and `high` are hysteresis thresholds on the normalized gradient
    magnitude and must satisfy 0 <= low <= high.
    """
    mask = as_mask(mask)
    if low < 0 or low > high:
        raise MaskForgeError(f"need 0 <= low <= high, got low={low} high={high}")

    img = mask.astype(np.float64) * 255.0
    blurred = ndimage.gaussian_filter(img, sigma=sigma, mode="constant", cval=0.0)
    gx = ndimage.sobel(blurred, axis=1, mode="constant", cval=0.0)
    gy = ndimage.sobel(blurred, axis=0, mode="constant", cval=0.0)
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak == 0.0:
        return np.zeros_like(mask)
    # Rounding restores the exact magnitude ties of symmetric step edges
    # (float summation noise would otherwise break them inconsistently).
    mag = np.round(mag / peak, 9)

    theta = np.mod(np.arctan2(gy, gx), np.pi)
    sector = np.round(theta / (np.pi / 4)).astype(np.int64) % 4

    # Keep a pixel only if it is a maximum along its gradient direction; the
    # asymmetric >=/> pair keeps exactly one pixel of a two-pixel plateau.
    keep = np.zeros(mask.shape, dtype=bool)
    for d, (ox, oy) in enumerate(_DIR_OFFSETS):
        ahead = _shifted(mag, ox, oy)
        behind = _shifted(mag, -ox, -oy)
        keep |= (sector == d) & (mag >= ahead) & (mag > behind)
    thinned = np.where(keep, mag, 0.0)

    strong = thinned > high
    weak = thinned > low
    edges = ndimage.binary_dilation(strong, structure=np.ones((3, 3), dtype=bool),
                                    iterations=-1, mask=weak)
    # keep only interface pixels: every edge pixel must touch (8-neighborhood,
    # self included) both a foreground and a background pixel of the mask;
    # this also suppresses frame-border blur artifacts
    fg = mask.astype(bool)
    box = np.ones((3, 3), dtype=bool)
    near_fg = ndimage.binary_dilation(fg, structure=box)
    near_bg = ndimage.binary_dilation(~fg, structure=box)
    edges &= near_fg & near_bg
    return edges.astype(np.uint8)
