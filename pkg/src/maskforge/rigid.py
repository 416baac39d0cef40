"""Rigid mask edits: invert, homography warp about the centroid, re-binarize.

The transform composes rotation, uniform scale, translation, and an optional
small perspective tilt into a 3x3 homography applied about the mask's
(rounded) foreground centroid. Resampling is bilinear on the continuous
{0,1} field followed by a 0.5 threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
from scipy import ndimage

from .errors import EmptyResultError, MaskForgeError
from .masks import as_mask, invert
from .warp import warp_by_homography

MAX_TILT = 0.001
SCALE_RANGE = (0.25, 4.0)


@dataclass(frozen=True)
class RigidTransform:
    """Rotation (radians), uniform scale, translation (pixels), tilt (per px)."""

    rotation: float = 0.0
    scale: float = 1.0
    translation: tuple[float, float] = (0.0, 0.0)
    perspective_tilt: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not SCALE_RANGE[0] <= self.scale <= SCALE_RANGE[1]:
            raise MaskForgeError(f"scale {self.scale} outside {SCALE_RANGE}")
        if abs(self.rotation) > np.pi:
            raise MaskForgeError(f"|rotation| must be <= pi, got {self.rotation}")
        if any(abs(v) > MAX_TILT for v in self.perspective_tilt):
            raise MaskForgeError(f"|tilt| must be <= {MAX_TILT}, got {self.perspective_tilt}")

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["translation"] = list(self.translation)
        d["perspective_tilt"] = list(self.perspective_tilt)
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "RigidTransform":
        return cls(
            rotation=float(d.get("rotation", 0.0)),
            scale=float(d.get("scale", 1.0)),
            translation=tuple(d.get("translation", (0.0, 0.0))),
            perspective_tilt=tuple(d.get("perspective_tilt", (0.0, 0.0))),
        )


@dataclass(frozen=True)
class RigidRanges:
    """Uniform sampling intervals for each transform component."""

    rotation: tuple[float, float] = (-np.pi / 3, np.pi / 3)
    scale: tuple[float, float] = (0.6, 1.6)
    translation_x: tuple[float, float] = (-4.0, 4.0)
    translation_y: tuple[float, float] = (-4.0, 4.0)
    tilt: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        for name in ("rotation", "scale", "translation_x", "translation_y", "tilt"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise MaskForgeError(f"empty range for {name}: ({lo}, {hi})")

    def to_json_dict(self) -> dict:
        return {k: list(v) for k, v in asdict(self).items()}

    @classmethod
    def from_json_dict(cls, d: dict) -> "RigidRanges":
        kwargs = {k: tuple(v) for k, v in d.items()}
        return cls(**kwargs)


def homography(t: RigidTransform, center: tuple[float, float]) -> np.ndarray:
    """3x3 matrix of the transform applied about `center` (x, y)."""
    cx, cy = center
    cos, sin = np.cos(t.rotation), np.sin(t.rotation)
    a = t.scale * np.array([[cos, -sin], [sin, cos]])
    if abs(np.linalg.det(a)) < 1e-12:
        raise MaskForgeError("transform is not invertible")
    px, py = t.perspective_tilt
    persp = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [px, py, 1.0]])
    to_origin = np.array([[1.0, 0.0, -cx], [0.0, 1.0, -cy], [0.0, 0.0, 1.0]])
    linear = np.eye(3)
    linear[:2, :2] = a
    dx, dy = t.translation
    back = np.array([[1.0, 0.0, cx + dx], [0.0, 1.0, cy + dy], [0.0, 0.0, 1.0]])
    return back @ persp @ linear @ to_origin


def centroid(mask: np.ndarray) -> tuple[float, float]:
    """(x, y) centroid of the foreground pixels."""
    mask = as_mask(mask)
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        raise MaskForgeError("centroid of an empty mask is undefined")
    return float(xs.mean()), float(ys.mean())


def _lattice_exact(t: RigidTransform) -> bool:
    """True if `t` maps the pixel lattice onto itself: unit scale, integer
    translation, and a rotation that is an exact multiple of 90 degrees."""
    if t.scale != 1.0 or t.perspective_tilt != (0.0, 0.0):
        return False
    if any(v != int(v) for v in t.translation):
        return False
    return any(abs(t.rotation - k * np.pi / 2) < 1e-12 for k in (-2, -1, 0, 1, 2))


def quarter_turn_center(mask: np.ndarray) -> tuple[float, float]:
    """Centroid snapped to the lattice about which quarter turns permute the
    pixel grid (both coordinates integer, or both half-integer)."""
    cx, cy = centroid(mask)
    u, v = round(cx + cy), round(cx - cy)
    return ((u + v) / 2.0, (u - v) / 2.0)


def rigid_edit(mask: np.ndarray, t: RigidTransform, presmooth: float = 0.7) -> np.ndarray:
    """Apply a rigid transform to a mask: invert, warp, threshold, invert back.

    The warp is applied about the foreground centroid. The binary field is
    Gaussian-prefiltered (`presmooth`) before bilinear sampling; this
    suppresses staircase aliasing that would otherwise dominate round-trip
    error. Lattice-exact transforms (identity, integer translations, exact
    quarter turns about a grid-compatible center) skip the prefilter and
    reduce to exact index permutations. Regions mapped in from outside the
    frame become background.
    """
    mask = as_mask(mask)
    if mask.min() == 1:
        raise MaskForgeError("mask has no background; inverted main component would be empty")
    exact = _lattice_exact(t)
    center = quarter_turn_center(mask) if exact else centroid(mask)
    h = homography(t, center)
    inv_field = invert(mask).astype(np.float64)
    if presmooth > 0 and not exact:
        inv_field = ndimage.gaussian_filter(inv_field, presmooth, mode="constant", cval=1.0)
    warped = warp_by_homography(inv_field, h, fill=1.0)
    out = invert((warped > 0.5).astype(np.uint8))
    if out.max() == 0:
        raise EmptyResultError("transform moved the entire foreground out of frame")
    return out


def invert_transform(t: RigidTransform) -> RigidTransform:
    """Transform undoing `t` under centroid-tracked application.

    rigid_edit applies transforms about the current mask's centroid, which
    `t` itself moves by `t.translation`; undoing therefore only needs the
    component-wise inverse. Only affine transforms (zero tilt) are supported.
    """
    if t.perspective_tilt != (0.0, 0.0):
        raise MaskForgeError("cannot invert a transform with perspective tilt")
    return RigidTransform(
        rotation=-t.rotation,
        scale=1.0 / t.scale,
        translation=(-t.translation[0], -t.translation[1]),
    )


def sample_rigid(rng_seed: int, ranges: RigidRanges = RigidRanges()) -> RigidTransform:
    """Draw a transform uniformly from `ranges`; deterministic per seed."""
    rng = np.random.default_rng(rng_seed)
    rot = rng.uniform(*ranges.rotation)
    scale = rng.uniform(*ranges.scale)
    dx = rng.uniform(*ranges.translation_x)
    dy = rng.uniform(*ranges.translation_y)
    px = rng.uniform(*ranges.tilt)
    py = rng.uniform(*ranges.tilt)
    return RigidTransform(rotation=rot, scale=scale, translation=(dx, dy),
                          perspective_tilt=(px, py))
