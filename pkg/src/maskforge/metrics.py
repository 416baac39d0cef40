"""Reference DIS evaluation metrics: max F1, weighted F-beta, MAE,
structure measure, and enhanced-alignment measure.

Predictions are [0,1] probability maps, ground truths are binary masks.
All metrics return values in [0, 1]; a perfect prediction scores
(1, 1, 0, 1, 1) across (max_f1, weighted_fbeta, mae, s_measure, e_measure).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatchError, MaskForgeError
from .masks import as_mask, as_probmap

_EPS = 1e-12


@dataclass(frozen=True)
class MetricConfig:
    threshold_levels: int = 256
    beta_sq_weighted: float = 1.0
    s_alpha: float = 0.5
    gaussian_sigma: float = 5.0
    gaussian_kernel: int = 7

    def __post_init__(self):
        if self.threshold_levels < 2:
            raise MaskForgeError("threshold_levels must be >= 2")
        if not 0.0 <= self.s_alpha <= 1.0:
            raise MaskForgeError("s_alpha must lie in [0, 1]")


@dataclass(frozen=True)
class MetricReport:
    max_f1: float
    weighted_fbeta: float
    mae: float
    s_measure: float
    e_measure: float

    def as_dict(self) -> dict:
        return {
            "max_f1": self.max_f1,
            "weighted_fbeta": self.weighted_fbeta,
            "mae": self.mae,
            "s_measure": self.s_measure,
            "e_measure": self.e_measure,
        }


def _check_pair(pred: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = as_probmap(pred)
    gt = as_mask(gt)
    if pred.shape != gt.shape:
        raise DimensionMismatchError(f"pred {pred.shape} vs gt {gt.shape}")
    return pred, gt


def mae(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean absolute difference between prediction and ground truth."""
    pred, gt = _check_pair(pred, gt)
    return float(np.abs(pred - gt).mean())


def max_f1(pred: np.ndarray, gt: np.ndarray, cfg: MetricConfig = MetricConfig()) -> float:
    """Maximum F1 over a uniform threshold sweep (pred binarized by > t)."""
    pred, gt = _check_pair(pred, gt)
    npos = int(gt.sum())
    if npos == 0:
        raise MaskForgeError("max_f1 is undefined for an empty ground truth")
    levels = np.arange(cfg.threshold_levels) / (cfg.threshold_levels - 1)
    flat = np.sort(pred.ravel())
    fg = np.sort(pred[gt.astype(bool)])
    n = flat.size
    # count of values > t via sorted search; identical float semantics to
    # elementwise comparison
    pred_pos = n - np.searchsorted(flat, levels, side="right")
    tp = npos - np.searchsorted(fg, levels, side="right")
    best = 0.0
    for k in range(cfg.threshold_levels):
        p = tp[k] / pred_pos[k] if pred_pos[k] > 0 else 0.0
        r = tp[k] / npos
        f = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
        if f > best:
            best = f
    return float(best)


def _matlab_gaussian(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    ax = np.arange(size) - half
    gx, gy = np.meshgrid(ax, ax)
    k = np.exp(-(gx**2 + gy**2) / (2.0 * sigma**2))
    return k / k.sum()


def weighted_fbeta(pred: np.ndarray, gt: np.ndarray, cfg: MetricConfig = MetricConfig()) -> float:
    """Weighted F-beta: dependency-weighted errors in the foreground and
    distance-decayed importance in the background."""
    pred, gt = _check_pair(pred, gt)
    gtb = gt.astype(bool)
    if not gtb.any():
        raise MaskForgeError("weighted_fbeta is undefined for an empty ground truth")
    e = np.abs(pred - gtb)

    dist, idx = ndimage.distance_transform_edt(~gtb, return_indices=True)
    et = e.copy()
    et[~gtb] = e[idx[0][~gtb], idx[1][~gtb]]
    kernel = _matlab_gaussian(cfg.gaussian_kernel, cfg.gaussian_sigma)
    ea = ndimage.correlate(et, kernel, mode="constant", cval=0.0)
    min_e_ea = e.copy()
    sel = gtb & (ea < e)
    min_e_ea[sel] = ea[sel]

    b = np.ones_like(e)
    b[~gtb] = 2.0 - np.exp(np.log(0.5) / 5.0 * dist[~gtb])
    ew = min_e_ea * b

    tpw = gtb.sum() - ew[gtb].sum()
    fpw = ew[~gtb].sum()
    recall_w = 1.0 - ew[gtb].mean()
    precision_w = tpw / (tpw + fpw + _EPS)
    beta_sq = cfg.beta_sq_weighted
    q = ((1 + beta_sq) * precision_w * recall_w) / (beta_sq * precision_w + recall_w + _EPS)
    return float(np.clip(q, 0.0, 1.0))


def _object_score(x: np.ndarray) -> float:
    if x.size == 0:
        return 0.0
    mean = x.mean()
    std = x.std(ddof=1) if x.size > 1 else 0.0
    return 2.0 * mean / (mean * mean + 1.0 + std + _EPS)


def _ssim_like(p: np.ndarray, g: np.ndarray) -> float:
    n = p.size
    if n == 0:
        return 1.0
    xm, ym = p.mean(), g.mean()
    if n > 1:
        sx = ((p - xm) ** 2).sum() / (n - 1)
        sy = ((g - ym) ** 2).sum() / (n - 1)
        sxy = ((p - xm) * (g - ym)).sum() / (n - 1)
    else:
        sx = sy = sxy = 0.0
    alpha = 4.0 * xm * ym * sxy
    beta = (xm * xm + ym * ym) * (sx + sy)
    if alpha != 0.0:
        return float(alpha / (beta + _EPS))
    return 1.0 if beta == 0.0 else 0.0


def s_measure(pred: np.ndarray, gt: np.ndarray, cfg: MetricConfig = MetricConfig()) -> float:
    """Structure measure: alpha-blend of object-aware and region-aware terms."""
    pred, gt = _check_pair(pred, gt)
    gtb = gt.astype(bool)
    y = gtb.mean()
    if y == 0.0:
        return float(1.0 - pred.mean())
    if y == 1.0:
        return float(pred.mean())

    # object-aware: foreground on pred, background on its complement
    s_fg = _object_score(pred[gtb])
    s_bg = _object_score(1.0 - pred[~gtb])
    s_object = y * s_fg + (1.0 - y) * s_bg

    # region-aware: 4-way split at the foreground centroid
    h, w = gtb.shape
    ys, xs = np.nonzero(gtb)
    cy = int(np.round(ys.mean())) + 1
    cx = int(np.round(xs.mean())) + 1
    cy = min(max(cy, 1), h - 1) if h > 1 else 1
    cx = min(max(cx, 1), w - 1) if w > 1 else 1
    total = h * w
    score = 0.0
    for sy, sx_ in ((slice(0, cy), slice(0, cx)), (slice(0, cy), slice(cx, w)),
                    (slice(cy, h), slice(0, cx)), (slice(cy, h), slice(cx, w))):
        pq, gq = pred[sy, sx_], gtb[sy, sx_].astype(np.float64)
        weight = pq.size / total
        score += weight * _ssim_like(pq, gq)

    s = cfg.s_alpha * s_object + (1.0 - cfg.s_alpha) * score
    return float(np.clip(s, 0.0, 1.0))


def e_measure(pred: np.ndarray, gt: np.ndarray, cfg: MetricConfig = MetricConfig(),
              mode: str = "adaptive") -> float:
    """Enhanced-alignment measure between binarized prediction and ground truth.

    `mode` is "adaptive" (binarize at min(2*mean, 1), reported value) or
    "max" (best value over the uniform threshold sweep).
    """
    pred, gt = _check_pair(pred, gt)
    gtb = gt.astype(bool)
    if mode == "adaptive":
        th = min(2.0 * pred.mean(), 1.0)
        return _e_align(pred >= th, gtb)
    if mode == "max":
        levels = np.arange(cfg.threshold_levels) / (cfg.threshold_levels - 1)
        return max(_e_align(pred > t, gtb) for t in levels)
    raise MaskForgeError(f"unknown e_measure mode: {mode!r}")


def _e_align(fm: np.ndarray, gtb: np.ndarray) -> float:
    if np.array_equal(fm, gtb):
        return 1.0
    dfm = fm - fm.mean()
    dgt = gtb - gtb.mean()
    align = 2.0 * dfm * dgt / (dfm * dfm + dgt * dgt + _EPS)
    enhanced = (align + 1.0) ** 2 / 4.0
    return float(enhanced.mean())


def evaluate(pred: np.ndarray, gt: np.ndarray, cfg: MetricConfig = MetricConfig()) -> MetricReport:
    """All five metrics for one prediction / ground-truth pair."""
    return MetricReport(
        max_f1=max_f1(pred, gt, cfg),
        weighted_fbeta=weighted_fbeta(pred, gt, cfg),
        mae=mae(pred, gt),
        s_measure=s_measure(pred, gt, cfg),
        e_measure=e_measure(pred, gt, cfg),
    )


def mean_report(reports: list[MetricReport]) -> MetricReport:
    """Field-wise mean over per-image reports."""
    if not reports:
        raise MaskForgeError("cannot average zero reports")
    return MetricReport(
        max_f1=float(np.mean([r.max_f1 for r in reports])),
        weighted_fbeta=float(np.mean([r.weighted_fbeta for r in reports])),
        mae=float(np.mean([r.mae for r in reports])),
        s_measure=float(np.mean([r.s_measure for r in reports])),
        e_measure=float(np.mean([r.e_measure for r in reports])),
    )
