"""Backward warping of latent maps by normalized flow, gated by occlusion.

Flow lives in normalized coordinates: the grid spans [-1, 1] in each axis
(align-corners convention, so one latent cell is 2/(size-1) units), and
channel 0 is horizontal displacement, channel 1 vertical. Output location
p samples the source at p + f(p); the occlusion map multiplies the result
pointwise, with 1 leaving cells untouched and 0 erasing them for the
decoder to inpaint. Out-of-range samples clamp to the border.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from flowdance.core.types import LatentMap
from flowdance.errors import ValidationError
from flowdance.nn import autodiff as ad
from flowdance.nn.autodiff import Tensor

FLOW_MAX = 2.0


@dataclass(frozen=True)
class FlowField:
    """Normalized backward flow, Hz x Wz x 2."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 3 or v.shape[2] != 2:
            raise ValidationError(f"flow must be Hz x Wz x 2, got {v.shape}")
        if not np.isfinite(v).all():
            raise ValidationError("flow contains NaN or Inf")
        if np.abs(v).max() > FLOW_MAX:
            raise ValidationError(f"|flow| must not exceed {FLOW_MAX}")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class OcclusionMap:
    """Visibility multiplier, Hz x Wz x 1 in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 3 or v.shape[2] != 1:
            raise ValidationError(f"occlusion must be Hz x Wz x 1, got {v.shape}")
        if not np.isfinite(v).all():
            raise ValidationError("occlusion contains NaN or Inf")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValidationError("occlusion values must lie in [0, 1]")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def base_pixel_grid(h: int, w: int, dtype=np.float32) -> np.ndarray:
    ys, xs = np.meshgrid(np.arange(h, dtype=dtype), np.arange(w, dtype=dtype), indexing="ij")
    return np.stack([xs, ys], axis=-1)  # (H, W, 2), channel 0 = x


def warp_tensors(z: Tensor, flow: Tensor, occlusion: Tensor) -> Tensor:
    """Differentiable warp on (B, C, H, W) / (B, 2, H, W) / (B, 1, H, W)."""
    b, c, h, w = z.shape
    if flow.shape != (b, 2, h, w) or occlusion.shape != (b, 1, h, w):
        raise ValidationError(
            f"warp shape mismatch: z {z.shape}, flow {flow.shape}, occlusion {occlusion.shape}"
        )
    dtype = z.dtype
    base = Tensor(base_pixel_grid(h, w, dtype=dtype)[None])  # (1, H, W, 2)
    # normalized displacement -> pixels (align-corners: cell = 2/(size-1))
    px_scale = Tensor(np.asarray([(w - 1) / 2.0, (h - 1) / 2.0], dtype=dtype))
    flow_hw2 = ad.transpose(flow, (0, 2, 3, 1))
    coords = ad.add(base, ad.mul(flow_hw2, px_scale))
    sampled = ad.grid_sample(z, coords)
    return ad.mul(sampled, occlusion)


def warp_latent(z: LatentMap, flow: FlowField, occlusion: OcclusionMap) -> LatentMap:
    """Eq-level API on core types: z, flow and occlusion share Hz x Wz."""
    hz, wz, cz = z.values.shape
    if flow.values.shape[:2] != (hz, wz) or occlusion.values.shape[:2] != (hz, wz):
        raise ValidationError(
            f"spatial dims disagree: z {z.values.shape}, flow {flow.values.shape}, "
            f"occlusion {occlusion.values.shape}"
        )
    z_t = Tensor(z.values.transpose(2, 0, 1)[None])
    f_t = Tensor(flow.values.transpose(2, 0, 1)[None])
    m_t = Tensor(occlusion.values.transpose(2, 0, 1)[None])
    with ad.no_grad():
        out = warp_tensors(z_t, f_t, m_t)
    return LatentMap(values=out.data[0].transpose(1, 2, 0))
