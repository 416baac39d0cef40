"""Forward-diffusion variance schedule and closed-form noising."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MaskForgeError


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear beta schedule with alpha and cumulative-alpha products.

    betas[t-1] is the step-t variance; alpha_bars[t-1] is the product of
    alphas up to and including step t (so alpha_bars[0] == alphas[0]).
    """

    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def steps(self) -> int:
        return len(self.betas)


def make_schedule(steps: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Linear interpolation of betas over `steps` diffusion steps."""
    if steps < 1:
        raise MaskForgeError("schedule needs at least one step")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise MaskForgeError(f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    betas = np.linspace(beta_start, beta_end, steps)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    return NoiseSchedule(betas=betas, alphas=alphas, alpha_bars=alpha_bars)


def forward_noise(x0: np.ndarray, t: int, schedule: NoiseSchedule, seed: int) -> np.ndarray:
    """Sample x_t ~ q(x_t | x_0) via the closed-form marginal:
    sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps."""
    if not 1 <= t <= schedule.steps:
        raise MaskForgeError(f"t={t} outside schedule of {schedule.steps} steps")
    x0 = np.asarray(x0, dtype=np.float64)
    ab = schedule.alpha_bars[t - 1]
    eps = np.random.default_rng(seed).standard_normal(x0.shape)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps
