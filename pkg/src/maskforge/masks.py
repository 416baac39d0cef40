"""Binary mask representation, file I/O, and topology analysis.

Masks are 2-D uint8 arrays with values in {0, 1} (foreground = 1).
Probability maps are 2-D float64 arrays with values in [0, 1].
Connectivity convention: foreground components are 8-connected,
background (hole) components are 4-connected.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .errors import DimensionMismatchError, MaskForgeError

_STRUCT_8 = np.ones((3, 3), dtype=bool)
_STRUCT_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class TopologySignature:
    """Component / hole counts of a binary mask; euler = components - holes."""

    components: int
    holes: int

    @property
    def euler(self) -> int:
        return self.components - self.holes

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.components, self.holes, self.euler)


def as_mask(data) -> np.ndarray:
    """Validate and normalize an array-like to a {0,1} uint8 mask."""
    arr = np.asarray(data)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise MaskForgeError(f"mask must be a non-empty 2-D grid, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise MaskForgeError("mask values must be 0 or 1")
    return arr.astype(np.uint8, copy=False)


def as_probmap(data) -> np.ndarray:
    """Validate and normalize an array-like to a [0,1] float64 probability map."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise MaskForgeError(f"probability map must be a non-empty 2-D grid, got shape {arr.shape}")
    if not np.isfinite(arr).all() or arr.min() < 0.0 or arr.max() > 1.0:
        raise MaskForgeError("probability map values must lie in [0, 1]")
    return arr


def load_mask(path) -> np.ndarray:
    """Load an 8-bit grayscale image (PNG or PGM) as a binary mask.

    Pixels >= 128 map to foreground.
    """
    p = Path(path)
    if not p.is_file():
        raise MaskForgeError(f"mask file not found: {p}")
    try:
        with Image.open(p) as img:
            gray = img.convert("L")
            arr = np.asarray(gray, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise MaskForgeError(f"cannot decode image: {p}") from exc
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise MaskForgeError(f"image has a zero dimension: {p}")
    return (arr >= 128).astype(np.uint8)


def load_probmap(path) -> np.ndarray:
    """Load an 8-bit grayscale prediction map, scaled to [0, 1] by /255."""
    p = Path(path)
    if not p.is_file():
        raise MaskForgeError(f"prediction file not found: {p}")
    try:
        with Image.open(p) as img:
            arr = np.asarray(img.convert("L"), dtype=np.float64)
    except UnidentifiedImageError as exc:
        raise MaskForgeError(f"cannot decode image: {p}") from exc
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise MaskForgeError(f"image has a zero dimension: {p}")
    return arr / 255.0


def save_mask(mask: np.ndarray, path) -> None:
    """Write a mask as 8-bit grayscale PNG (1 -> 255, 0 -> 0).

    Round-trips bit-exactly through load_mask.
    """
    mask = as_mask(mask)
    p = Path(path)
    img = Image.fromarray(mask * np.uint8(255), mode="L")
    try:
        img.save(p, format="PNG")
    except OSError as exc:
        raise MaskForgeError(f"cannot write mask to {p}: {exc}") from exc


def invert(mask: np.ndarray) -> np.ndarray:
    """Swap foreground and background."""
    mask = as_mask(mask)
    return (1 - mask).astype(np.uint8)


def threshold(prob: np.ndarray, t: float) -> np.ndarray:
    """Binarize a probability map: output 1 where prob > t."""
    prob = as_probmap(prob)
    if not 0.0 <= t <= 1.0:
        raise MaskForgeError(f"threshold must lie in [0, 1], got {t}")
    return (prob > t).astype(np.uint8)


def topology(mask: np.ndarray) -> TopologySignature:
    """Count 8-connected foreground components and enclosed background holes.

    A hole is a 4-connected background component that does not touch the
    image border (the surrounding background is not a hole).
    """
    mask = as_mask(mask)
    fg = mask.astype(bool)
    _, n_components = ndimage.label(fg, structure=_STRUCT_8)
    bg_labels, n_bg = ndimage.label(~fg, structure=_STRUCT_4)
    border = np.zeros_like(fg)
    border[0, :] = border[-1, :] = True
    border[:, 0] = border[:, -1] = True
    open_labels = set(np.unique(bg_labels[border & ~fg]))
    open_labels.discard(0)
    holes = n_bg - len(open_labels)
    return TopologySignature(components=int(n_components), holes=int(holes))


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two masks; 1.0 when both are empty."""
    a = as_mask(a)
    b = as_mask(b)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"mask shapes differ: {a.shape} vs {b.shape}")
    inter = np.count_nonzero(a & b)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return inter / union
