"""Flow volumes: the diffusion model's data space.

A volume stacks per-frame latent flow (2 channels) and the occlusion
channel for frames 1..N, all measured against frame 0. Occlusion is kept
in logit form here (clamped to +/-OCC_LOGIT_CLAMP) so all three channels
are unbounded like flow; it is squashed to [0, 1] only when the volume is
consumed by warping. For diffusion the channels are standardized to zero
mean and unit variance with statistics from the training set; a std floor
guards the nearly-constant occlusion channel against blowing up.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from flowdance.core.types import LatentMap, VideoTensor
from flowdance.errors import ValidationError
from flowdance.flowae.model import AutoencoderParams
from flowdance.nn import autodiff as ad
from flowdance.nn.autodiff import Tensor

OCC_LOGIT_CLAMP = 6.0
STD_FLOOR = 0.05


@dataclass(frozen=True)
class FlowVolume:
    """(N, Hz, Wz, 3): flow-x, flow-y, occlusion logit."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 4 or v.shape[3] != 3:
            raise ValidationError(f"flow volume must be N x Hz x Wz x 3, got {v.shape}")
        if not np.isfinite(v).all():
            raise ValidationError("flow volume contains NaN or Inf")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    def flows(self) -> np.ndarray:
        return self.values[..., :2]

    def occlusions(self) -> np.ndarray:
        """Occlusion squashed back to [0, 1]."""
        return 1.0 / (1.0 + np.exp(-self.values[..., 2:3]))


@dataclass(frozen=True)
class VolumeStats:
    mean: np.ndarray  # (3,)
    std: np.ndarray  # (3,), floored

    @classmethod
    def from_volumes(cls, volumes: list) -> "VolumeStats":
        stacked = np.concatenate([v.values.reshape(-1, 3) for v in volumes])
        return cls(
            mean=stacked.mean(axis=0).astype(np.float32),
            std=np.maximum(stacked.std(axis=0), STD_FLOOR).astype(np.float32),
        )

    def normalize(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std

    def denormalize(self, values: np.ndarray) -> np.ndarray:
        return values * self.std + self.mean


def build_target_volume(video: VideoTensor, ae: AutoencoderParams):
    """(FlowVolume over frames 1..N, z0 of frame 0) from a trained stage 1."""
    ae.require_trained()
    if video.n_frames < 2:
        raise ValidationError("need at least 2 frames to build a flow volume")
    from flowdance.flowae.model import encode_image

    frames = video.frames
    x0 = frames[0]
    n = video.n_frames - 1
    refs = np.repeat(x0.transpose(2, 0, 1)[None], n, axis=0)
    dris = frames[1:].transpose(0, 3, 1, 2)
    with ad.no_grad():
        flow, occ_logits = ae.model.flow(Tensor(refs), Tensor(dris))
    vol = np.concatenate(
        [flow.data, np.clip(occ_logits.data, -OCC_LOGIT_CLAMP, OCC_LOGIT_CLAMP)], axis=1
    ).transpose(0, 2, 3, 1)
    return FlowVolume(values=vol), encode_image(x0, ae)


def diffuse_forward(a0: np.ndarray, t: int, eps: np.ndarray, sched) -> np.ndarray:
    """Closed-form marginal a_t = sqrt(abar_t) a0 + sqrt(1 - abar_t) eps."""
    if not (1 <= t <= sched.T):
        raise ValidationError(f"step {t} outside [1, {sched.T}]")
    if a0.shape != eps.shape:
        raise ValidationError(f"noise shape {eps.shape} must match data {a0.shape}")
    return sched.sqrt_alpha_bar(t) * a0 + sched.sqrt_one_minus_alpha_bar(t) * eps
