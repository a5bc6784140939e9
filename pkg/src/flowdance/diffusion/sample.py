"""Ancestral sampling with dynamic thresholding and fixed variance.

Each reverse step predicts the noise, reconstructs x0-hat, clamps it with
dynamic thresholding (per-sample 90th-percentile of |x0-hat|: if that
exceeds 1, clamp to +/-s and divide by s, else clamp to [-1, 1]), then
takes the posterior mean with the fixed beta-tilde variance. No noise is
added on the final step. Sampling runs in the normalized volume space and
the result is de-normalized with the checkpoint statistics.
"""

from __future__ import annotations

import numpy as np

from flowdance.core.rng import RngStream
from flowdance.core.types import LatentMap
from flowdance.diffusion.schedule import NoiseSchedule
from flowdance.diffusion.unet import DenoiserParams, predict_noise_batch
from flowdance.diffusion.volume import FlowVolume
from flowdance.errors import NumericError, ValidationError
from flowdance.musicenc.encoder import MusicEmbedding
from flowdance.nn import autodiff as ad

DYNAMIC_PERCENTILE = 0.90


def dynamic_threshold(x0_hat: np.ndarray, percentile: float = DYNAMIC_PERCENTILE) -> np.ndarray:
    """Clamp-and-rescale x0 estimates; works per sample on (B, ...) or (...)."""
    if not (0.0 < percentile < 1.0):
        raise ValidationError("percentile must lie in (0, 1)")
    single = x0_hat.ndim == 4
    batch = x0_hat[None] if single else x0_hat
    out = np.empty_like(batch)
    for i in range(batch.shape[0]):
        s = float(np.quantile(np.abs(batch[i]), percentile))
        if s > 1.0:
            out[i] = np.clip(batch[i], -s, s) / s
        else:
            out[i] = np.clip(batch[i], -1.0, 1.0)
    return out[0] if single else out


def sample_flow_volumes(z0_batch: np.ndarray, e_batch: np.ndarray, n_steps: int,
                        sched: NoiseSchedule, params: DenoiserParams,
                        rng) -> np.ndarray:
    """Batched ancestral sampling; returns de-normalized volumes
    (B, n_steps, Hz, Wz, 3).

    rng is either one shared stream, or a list with one stream per batch
    item; per-item streams make each sample's bytes independent of how the
    batch was composed.
    """
    params.require_trained()
    if params.stats is None:
        raise ValidationError("checkpoint lacks normalization statistics")
    b = z0_batch.shape[0]
    hz, wz = z0_batch.shape[1], z0_batch.shape[2]
    streams = rng if isinstance(rng, (list, tuple)) else None
    if streams is not None and len(streams) != b:
        raise ValidationError(f"need one stream per batch item ({b}), got {len(streams)}")

    def draw(shape):
        if streams is None:
            return rng.normal(shape, dtype=np.float32)
        return np.stack([s.normal(shape[1:], dtype=np.float32) for s in streams])

    x = draw((b, n_steps, hz, wz, 3))
    with ad.no_grad():
        for t in range(sched.T, 0, -1):
            eps = predict_noise_batch(
                x, np.full(b, t), z0_batch, e_batch, params
            ).data
            sab = sched.sqrt_alpha_bar(t)
            somab = sched.sqrt_one_minus_alpha_bar(t)
            x0_hat = (x - somab * eps) / sab
            x0_hat = dynamic_threshold(x0_hat)
            abar_prev = sched.alpha_bar[t - 1]
            abar_t = sched.alpha_bar[t]
            beta_t = sched.betas[t - 1]
            alpha_t = sched.alphas[t - 1]
            mean = (
                np.sqrt(abar_prev) * beta_t * x0_hat
                + np.sqrt(alpha_t) * (1.0 - abar_prev) * x
            ) / (1.0 - abar_t)
            if t > 1:
                x = mean + np.sqrt(sched.posterior_var[t - 1]) * draw(x.shape)
            else:
                x = mean
            if not np.isfinite(x).all():
                raise NumericError(f"non-finite values during sampling at step {t}")
    return params.stats.denormalize(x).astype(np.float32)


def sample_flow_volume(z0: LatentMap, e: MusicEmbedding, n_steps: int,
                       sched: NoiseSchedule, params: DenoiserParams,
                       rng: RngStream) -> FlowVolume:
    """Single-volume ancestral sampling, deterministic given the stream."""
    out = sample_flow_volumes(
        z0.values[None], e.e[None], n_steps, sched, params, rng
    )
    return FlowVolume(values=out[0])
