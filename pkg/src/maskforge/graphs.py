"""Contour key points and structural graphs built from edge maps.

Each closed contour of an edge map is traced (Moore neighborhood),
simplified with Douglas-Peucker, and resampled to equal arc-length spacing.
Consecutive key points form a cycle whose edge weights are segment lengths
normalized by the contour's total length, making the graph invariant to
rigid motions and uniform scaling.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy import ndimage

from .errors import GraphShapeError, MaskForgeError, NoContoursError
from .masks import TopologySignature, as_mask

FEATURE_DIM = 35
_N_BINS = 16

# Clockwise neighbor offsets (dx, dy) with y pointing down: E, SE, S, SW, W, NW, N, NE.
_MOORE = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))


@dataclass(frozen=True)
class StructuralGraph:
    """Per-contour cycle graphs over key points.

    `contours[c]` is an (n_c, 2) array of (x, y) vertices; vertex 0 is the
    canonical start. `weights[c][k]` is the normalized length of the edge
    from vertex k to vertex (k+1) mod n_c; weights of one contour sum to 1.
    """

    contours: tuple[np.ndarray, ...]
    weights: tuple[np.ndarray, ...]
    perimeters: tuple[float, ...]

    @property
    def contour_count(self) -> int:
        return len(self.contours)

    @property
    def vertex_count(self) -> int:
        return sum(len(c) for c in self.contours)

    @property
    def total_perimeter(self) -> float:
        return float(sum(self.perimeters))

    def vertex_counts(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.contours)

    def edges(self) -> Iterator[tuple[int, int, float]]:
        """Global (i, j, weight) triples, contours indexed consecutively."""
        offset = 0
        for pts, ws in zip(self.contours, self.weights):
            n = len(pts)
            for k in range(n):
                yield offset + k, offset + (k + 1) % n, float(ws[k])
            offset += n

    def to_json_dict(self) -> dict:
        return {
            "contour_count": self.contour_count,
            "contours": [
                {
                    "vertices": [[float(x), float(y)] for x, y in pts],
                    "edges": [
                        {"i": k, "j": (k + 1) % len(pts), "weight": float(w)}
                        for k, w in enumerate(ws)
                    ],
                    "perimeter": float(p),
                }
                for pts, ws, p in zip(self.contours, self.weights, self.perimeters)
            ],
        }


def _trace_component(pixels: set[tuple[int, int]], start: tuple[int, int]) -> list[tuple[int, int]]:
    """Moore-neighbor boundary trace of one 8-connected pixel set.

    `start` must be the topmost-then-leftmost pixel, so all pixels above it
    and the one to its west are outside the set.
    """
    path = [start]
    if len(pixels) == 1:
        return path
    cur = start
    enter_dir = 0  # pretend we arrived moving east
    first_move = None
    limit = 4 * len(pixels) + 8
    for _ in range(limit):
        found = None
        scan = (enter_dir + 5) % 8
        for s in range(8):
            d = (scan + s) % 8
            nxt = (cur[0] + _MOORE[d][0], cur[1] + _MOORE[d][1])
            if nxt in pixels:
                found = (nxt, d)
                break
        if found is None:
            break
        nxt, d = found
        if first_move is None:
            first_move = (cur, d)
        elif (cur, d) == first_move:
            break
        path.append(nxt)
        cur, enter_dir = nxt, d
    if len(path) > 1 and path[-1] == start:
        path.pop()
    return path


def trace_contours(edges: np.ndarray, min_pixels: int = 8) -> list[np.ndarray]:
    """Ordered closed pixel chains for every edge component of `edges`.

    Components smaller than `min_pixels` are ignored. Each chain starts at
    the component's topmost-then-leftmost pixel.
    """
    edges = as_mask(edges)
    labels, n = ndimage.label(edges.astype(bool), structure=np.ones((3, 3), dtype=bool))
    chains = []
    for obj_index, slc in enumerate(ndimage.find_objects(labels), start=1):
        if slc is None:
            continue
        local = labels[slc] == obj_index
        if local.sum() < min_pixels:
            continue
        y0, x0 = slc[0].start, slc[1].start
        coords = np.argwhere(local)  # (y, x), row-major: first row is topmost-leftmost
        pixels = {(int(x) + x0, int(y) + y0) for y, x in coords}
        start = (int(coords[0][1]) + x0, int(coords[0][0]) + y0)
        chain = _trace_component(pixels, start)
        if len(chain) >= 3:
            chains.append(np.asarray(chain, dtype=np.float64))
    return chains


def _perimeter(points: np.ndarray) -> float:
    diffs = np.diff(np.vstack([points, points[:1]]), axis=0)
    return float(np.hypot(diffs[:, 0], diffs[:, 1]).sum())


def _dp_open(points: np.ndarray, tol: float) -> np.ndarray:
    """Indices kept by Douglas-Peucker on an open chain, endpoints included."""
    n = len(points)
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[n - 1] = True
    stack = [(0, n - 1)]
    while stack:
        a, b = stack.pop()
        if b - a < 2:
            continue
        seg = points[b] - points[a]
        norm = np.hypot(seg[0], seg[1])
        rel = points[a + 1:b] - points[a]
        if norm == 0.0:
            dist = np.hypot(rel[:, 0], rel[:, 1])
        else:
            dist = np.abs(rel[:, 0] * seg[1] - rel[:, 1] * seg[0]) / norm
        k = int(np.argmax(dist))
        if dist[k] > tol:
            idx = a + 1 + k
            keep[idx] = True
            stack.append((a, idx))
            stack.append((idx, b))
    return np.flatnonzero(keep)


def simplify_closed(points: np.ndarray, tol: float) -> np.ndarray:
    """Douglas-Peucker simplification of a closed chain, anchored at point 0
    and the point farthest from it."""
    if tol <= 0 or len(points) <= 3:
        return points
    d0 = np.hypot(points[:, 0] - points[0, 0], points[:, 1] - points[0, 1])
    far = int(np.argmax(d0))
    if far == 0:
        return points[:1]
    first = points[:far + 1]
    second = np.vstack([points[far:], points[:1]])
    keep1 = _dp_open(first, tol)
    keep2 = _dp_open(second, tol) + far
    idx = np.unique(np.concatenate([keep1, keep2]))
    idx = idx[idx < len(points)]
    return points[idx]


def resample_closed(points: np.ndarray, n: int) -> np.ndarray:
    """`n` equal arc-length samples of a closed polygon, starting at vertex 0."""
    closed = np.vstack([points, points[:1]])
    seg = np.diff(closed, axis=0)
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    total = lengths.sum()
    if total == 0.0:
        raise MaskForgeError("cannot resample a degenerate (zero-length) contour")
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    targets = np.arange(n, dtype=np.float64) * (total / n)
    seg_idx = np.minimum(np.searchsorted(cum, targets, side="right") - 1, len(lengths) - 1)
    local = (targets - cum[seg_idx]) / np.where(lengths[seg_idx] == 0, 1.0, lengths[seg_idx])
    return closed[seg_idx] + seg[seg_idx] * local[:, None]


def _snap_to_corners(samples: np.ndarray, polygon: np.ndarray, min_turn: float = np.pi / 6) -> np.ndarray:
    """Move equal-arc samples onto nearby high-curvature polygon vertices.

    A polygon vertex whose turning angle reaches `min_turn` claims the
    sample closest to it along the contour, provided that sample lies
    within half a sample spacing.
    """
    closed = np.vstack([polygon, polygon[:1]])
    seg = np.diff(closed, axis=0)
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    total = lengths.sum()
    cum = np.concatenate([[0.0], np.cumsum(lengths)])[:-1]
    incoming = polygon - np.roll(polygon, 1, axis=0)
    outgoing = np.roll(polygon, -1, axis=0) - polygon
    turn = np.abs(np.arctan2(incoming[:, 0] * outgoing[:, 1] - incoming[:, 1] * outgoing[:, 0],
                             (incoming * outgoing).sum(axis=1)))
    n = len(samples)
    spacing = total / n
    sample_pos = np.arange(n) * spacing
    out = samples.copy()
    taken: set[int] = set()
    for c in np.flatnonzero(turn >= min_turn):
        delta = np.abs(sample_pos - cum[c])
        delta = np.minimum(delta, total - delta)
        j = int(np.argmin(delta))
        if delta[j] <= spacing / 2 and j not in taken:
            out[j] = polygon[c]
            taken.add(j)
    return out


def allocate_vertices(perimeters: Sequence[float], n_v: int) -> list[int]:
    """Split `n_v` vertices across contours proportionally to perimeter,
    at least 3 per contour (largest-remainder rounding)."""
    c = len(perimeters)
    if c == 0:
        raise NoContoursError("no contours to allocate vertices to")
    if n_v < 3 * c:
        raise MaskForgeError(f"n_v={n_v} is too small for {c} contours (need >= {3 * c})")
    total = float(sum(perimeters))
    ideal = [n_v * p / total for p in perimeters]
    counts = [max(3, int(np.floor(x))) for x in ideal]
    remainders = [x - np.floor(x) for x in ideal]
    # Trim overshoot caused by the minimum-3 clamp, largest counts first.
    while sum(counts) > n_v:
        order = sorted(range(c), key=lambda i: (-counts[i], i))
        for i in order:
            if counts[i] > 3:
                counts[i] -= 1
                break
        else:
            break
    order = sorted(range(c), key=lambda i: (-remainders[i], i))
    k = 0
    while sum(counts) < n_v:
        counts[order[k % c]] += 1
        k += 1
    return counts


def extract_keypoints(
    edges: np.ndarray,
    n_v: int = 64,
    dp_tolerance: float = 1.0,
    corner_snap: bool = False,
    min_pixels: int = 8,
    allocation: Sequence[int] | None = None,
) -> list[np.ndarray]:
    """Per-contour key points of an edge map, in descending-perimeter order.

    Each contour is traced, simplified, and resampled to its allocated
    vertex count; the counts are proportional to perimeter and sum to
    `n_v` unless an explicit `allocation` is supplied (used to build
    comparable graphs for edited masks).
    """
    if n_v < 3:
        raise MaskForgeError(f"n_v must be >= 3, got {n_v}")
    chains = trace_contours(edges, min_pixels=min_pixels)
    usable = []
    for chain in chains:
        poly = simplify_closed(chain, dp_tolerance)
        if len(poly) < 3 or _perimeter(poly) == 0.0:
            warnings.warn("dropping degenerate contour (fewer than 3 simplified points)",
                          stacklevel=2)
            continue
        usable.append((poly, _perimeter(poly)))
    if not usable:
        raise NoContoursError("edge map contains no closed contour")
    usable.sort(key=lambda item: (-item[1], item[0][0, 1], item[0][0, 0]))
    perimeters = [p for _, p in usable]
    if allocation is not None:
        if len(allocation) != len(usable):
            raise GraphShapeError(
                f"allocation covers {len(allocation)} contours, edge map has {len(usable)}")
        counts = list(allocation)
    else:
        counts = allocate_vertices(perimeters, n_v)
    out = []
    for (poly, _), n in zip(usable, counts):
        samples = resample_closed(poly, n)
        if corner_snap:
            samples = _snap_to_corners(samples, poly)
        out.append(samples)
    return out


def build_graph(points_per_contour: Sequence[np.ndarray]) -> StructuralGraph:
    """Cycle graph over each contour's key points with normalized weights."""
    if not points_per_contour:
        raise NoContoursError("cannot build a graph from zero contours")
    contours = []
    weights = []
    perims = []
    for pts in points_per_contour:
        pts = np.asarray(pts, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
            raise MaskForgeError("each contour needs at least 3 two-dimensional points")
        closed = np.vstack([pts, pts[:1]])
        seg = np.diff(closed, axis=0)
        lengths = np.hypot(seg[:, 0], seg[:, 1])
        total = lengths.sum()
        if total == 0.0:
            raise MaskForgeError("degenerate contour: all points coincide")
        contours.append(pts)
        weights.append(lengths / total)
        perims.append(float(total))
    return StructuralGraph(tuple(contours), tuple(weights), tuple(perims))


def structure_loss(g: StructuralGraph, s: StructuralGraph) -> float:
    """L1 distance between corresponding edge weights of two graphs.

    Contours are paired in stored order (descending perimeter when both
    graphs come from extract_keypoints) and must have matching vertex counts.
    """
    if g.vertex_counts() != s.vertex_counts():
        raise GraphShapeError(
            f"incompatible graphs: vertex counts {g.vertex_counts()} vs {s.vertex_counts()}")
    return float(sum(np.abs(wg - ws).sum() for wg, ws in zip(g.weights, s.weights)))


def _turning_angles(points: np.ndarray) -> np.ndarray:
    incoming = points - np.roll(points, 1, axis=0)
    outgoing = np.roll(points, -1, axis=0) - points
    cross = incoming[:, 0] * outgoing[:, 1] - incoming[:, 1] * outgoing[:, 0]
    dot = (incoming * outgoing).sum(axis=1)
    ok = (np.hypot(incoming[:, 0], incoming[:, 1]) > 0) & (np.hypot(outgoing[:, 0], outgoing[:, 1]) > 0)
    return np.arctan2(cross[ok], dot[ok])


def graph_features(g: StructuralGraph, topo: TopologySignature) -> np.ndarray:
    """Fixed 35-dimensional feature vector for the discriminator.

    Layout: 16-bin histogram of per-contour-scaled edge weights, 16-bin
    histogram of turning angles, contour count, hole count, log perimeter.
    """
    scaled = np.concatenate([w * len(w) for w in g.weights]) if g.weights else np.zeros(0)
    hist_w, _ = np.histogram(np.clip(scaled, 0.0, 4.0), bins=_N_BINS, range=(0.0, 4.0))
    angles = np.concatenate([_turning_angles(c) for c in g.contours]) if g.contours else np.zeros(0)
    hist_a, _ = np.histogram(angles, bins=_N_BINS, range=(-np.pi, np.pi))
    hw = hist_w.astype(np.float64)
    ha = hist_a.astype(np.float64)
    if hw.sum() > 0:
        hw /= hw.sum()
    if ha.sum() > 0:
        ha /= ha.sum()
    perim = g.total_perimeter
    tail = np.array([g.contour_count, topo.holes, np.log(perim) if perim > 0 else 0.0])
    return np.concatenate([hw, ha, tail])
