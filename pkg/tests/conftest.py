"""Shared shape factories and independent oracles."""

from collections import deque

import numpy as np
import pytest


def make_disk(r, cx=32.0, cy=32.0, size=64):
    yy, xx = np.mgrid[0:size, 0:size]
    return (np.hypot(xx - cx, yy - cy) <= r).astype(np.uint8)


def make_annulus(r_out, r_in, cx=32.0, cy=32.0, size=64):
    return (make_disk(r_out, cx, cy, size) & (1 - make_disk(r_in, cx, cy, size))).astype(np.uint8)


def make_square(side, cx=32, cy=32, size=64):
    m = np.zeros((size, size), np.uint8)
    m[cy - side // 2:cy + (side + 1) // 2, cx - side // 2:cx + (side + 1) // 2] = 1
    return m


def make_superellipse(a, b, p, cx=32.0, cy=32.0, size=64):
    yy, xx = np.mgrid[0:size, 0:size]
    return ((np.abs((xx - cx) / a) ** p + np.abs((yy - cy) / b) ** p) <= 1).astype(np.uint8)


def make_blob(seed, size=64, base_r=14, wobble=0.2):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size]
    cx = size / 2 + rng.uniform(-4, 4)
    cy = size / 2 + rng.uniform(-4, 4)
    ang = np.arctan2(yy - cy, xx - cx)
    r = base_r * (1 + wobble * np.sin(3 * ang + rng.uniform(0, 6))
                  + 0.5 * wobble * np.sin(5 * ang + rng.uniform(0, 6)))
    return (np.hypot(xx - cx, yy - cy) <= r).astype(np.uint8)


def flood_topology(mask):
    """Independent flood-fill count of (components, holes): BFS with
    8-connectivity on foreground and 4-connectivity on background, border-open
    background excluded from holes."""
    mask = np.asarray(mask)
    h, w = mask.shape
    seen = np.zeros((h, w), bool)

    def bfs(y0, x0, value, offsets):
        q = deque([(y0, x0)])
        seen[y0, x0] = True
        touches_border = False
        while q:
            y, x = q.popleft()
            if y in (0, h - 1) or x in (0, w - 1):
                touches_border = True
            for dy, dx in offsets:
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and not seen[ny, nx] and mask[ny, nx] == value:
                    seen[ny, nx] = True
                    q.append((ny, nx))
        return touches_border

    eight = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    four = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    components = holes = 0
    for y in range(h):
        for x in range(w):
            if seen[y, x]:
                continue
            if mask[y, x] == 1:
                bfs(y, x, 1, eight)
                components += 1
            else:
                if not bfs(y, x, 0, four):
                    holes += 1
    return components, holes


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
