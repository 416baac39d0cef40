"""Bundled 10-mask sample set: deterministic 64x64 shapes with 0-3 holes.

Generated procedurally so the repository carries no binary fixtures. The
set doubles as pipeline demo input; run `python -m maskforge.samples OUT`
to materialize masks/ and prompts/ directories.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from .masks import save_mask

SIZE = 64


def _grid():
    return np.mgrid[0:SIZE, 0:SIZE]


def _disk(cx, cy, r, yy, xx):
    return np.hypot(xx - cx, yy - cy) <= r


def sample_masks() -> list[tuple[str, np.ndarray, str]]:
    """(name, mask, prompt) triples, in a fixed order."""
    yy, xx = _grid()
    shapes: list[tuple[str, np.ndarray, str]] = []

    disk = _disk(32, 32, 16, yy, xx)
    shapes.append(("disk", disk, "a plain round blob, bulge it outward a little"))

    annulus = _disk(32, 32, 17, yy, xx) & ~_disk(32, 32, 9, yy, xx)
    shapes.append(("annulus", annulus, "a ring, keep the hole but add a gentle wave"))

    rsq = (np.abs((xx - 32) / 17.0) ** 4 + np.abs((yy - 32) / 17.0) ** 4) <= 1
    shapes.append(("rounded_square", rsq, "a rounded square, make it rounder"))

    two_holes = np.zeros((SIZE, SIZE), bool)
    two_holes[16:48, 14:50] = True
    two_holes[26:38, 20:28] = False
    two_holes[26:38, 36:44] = False
    shapes.append(("plate_two_holes", two_holes, "a plate with two slots, stretch it"))

    three = _disk(32, 32, 19, yy, xx)
    three &= ~_disk(24, 26, 4, yy, xx)
    three &= ~_disk(40, 26, 4, yy, xx)
    three &= ~_disk(32, 41, 4, yy, xx)
    shapes.append(("wheel_three_holes", three, "a wheel with three openings, twist it"))

    ell = np.zeros((SIZE, SIZE), bool)
    ell[14:50, 18:30] = True
    ell[38:50, 18:46] = True
    shapes.append(("l_bracket", ell, "an L bracket, square edges"))

    pair = _disk(22, 26, 9, yy, xx) | _disk(42, 38, 9, yy, xx)
    shapes.append(("two_pebbles", pair, "two pebbles, pinch them slightly"))

    bar = np.zeros((SIZE, SIZE), bool)
    bar[27:37, 12:52] = True
    shapes.append(("bar", bar, "a horizontal bar, add a wave along it"))

    ellipse = (((xx - 32) / 19.0) ** 2 + ((yy - 32) / 13.0) ** 2) <= 1
    shapes.append(("ellipse", ellipse, "an ellipse, stretch it further"))

    cross = np.zeros((SIZE, SIZE), bool)
    cross[26:38, 14:50] = True
    cross[14:50, 26:38] = True
    shapes.append(("cross", cross, "a thick cross, bulge the arms"))

    return [(name, m.astype(np.uint8), prompt) for name, m, prompt in shapes]


def write_sample_set(out_dir) -> tuple[Path, Path]:
    """Write masks/ and prompts/ under `out_dir`; returns the two paths."""
    out = Path(out_dir)
    mask_dir = out / "masks"
    prompt_dir = out / "prompts"
    mask_dir.mkdir(parents=True, exist_ok=True)
    prompt_dir.mkdir(parents=True, exist_ok=True)
    for i, (name, mask, prompt) in enumerate(sample_masks()):
        stem = f"{i:02d}_{name}"
        save_mask(mask, mask_dir / f"{stem}.png")
        (prompt_dir / f"{stem}.txt").write_text(prompt + "\n", encoding="utf-8")
    return mask_dir, prompt_dir


if __name__ == "__main__":
    target = sys.argv[1] if len(sys.argv) > 1 else "samples"
    masks, prompts = write_sample_set(target)
    print(f"wrote {masks} and {prompts}")
