"""Cosine noise schedule and its derived quantities.

alpha_bar(t) = f(t)/f(0) with f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2),
s = 0.008. Per-step betas are clipped at 0.999 and alpha_bar is rebuilt
from the clipped betas, so it is exactly consistent with the per-step
process. Posterior variances use the fixed beta-tilde form; the t = 1
step has zero variance, so sampling adds no noise on the final step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from flowdance.errors import ValidationError

COSINE_S = 0.008
BETA_CLIP = 0.999


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    alpha_bar: np.ndarray  # (T+1,), alpha_bar[0] = 1
    betas: np.ndarray  # (T,), beta for steps 1..T
    alphas: np.ndarray  # (T,), 1 - beta
    posterior_var: np.ndarray  # (T,), beta-tilde for steps 1..T

    def sqrt_alpha_bar(self, t) -> np.ndarray:
        return np.sqrt(self.alpha_bar[t])

    def sqrt_one_minus_alpha_bar(self, t) -> np.ndarray:
        return np.sqrt(1.0 - self.alpha_bar[t])


def cosine_schedule(T: int) -> NoiseSchedule:
    if T < 2:
        raise ValidationError("schedule needs T >= 2")
    t = np.arange(T + 1, dtype=np.float64)
    f = np.cos(((t / T + COSINE_S) / (1.0 + COSINE_S)) * np.pi / 2.0) ** 2
    raw_alpha_bar = f / f[0]
    betas = 1.0 - raw_alpha_bar[1:] / raw_alpha_bar[:-1]
    betas = np.clip(betas, 1e-8, BETA_CLIP)
    alphas = 1.0 - betas
    alpha_bar = np.concatenate([[1.0], np.cumprod(alphas)])
    prev = alpha_bar[:-1]
    posterior_var = betas * (1.0 - prev) / (1.0 - alpha_bar[1:])
    return NoiseSchedule(
        T=T,
        alpha_bar=alpha_bar,
        betas=betas,
        alphas=alphas,
        posterior_var=posterior_var,
    )
