"""Stage-1 model: image encoder, image decoder, dense flow predictor.

The encoder downsamples by 4 (two stride-2 convs) into a Cz-channel
latent; the decoder mirrors it with nearest upsampling. The flow predictor
sees the reference and driving frames stacked channel-wise and emits a
flow field (tanh-bounded to +/-2 in normalized units) and an occlusion
logit map at latent resolution. Flow and occlusion heads start at zero
weights with a positive occlusion bias, so an untrained model performs an
identity warp with near-full visibility.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from flowdance.core.checkpoint import load_checkpoint, save_checkpoint
from flowdance.core.rng import RngStream, seeded_rng
from flowdance.core.types import LatentMap
from flowdance.errors import MissingArtifactError, ValidationError
from flowdance.flowae.warp import FLOW_MAX, FlowField, OcclusionMap
from flowdance.nn import autodiff as ad
from flowdance.nn.autodiff import Tensor
from flowdance.nn.layers import Conv2d, GroupNorm, Identity, Module, Relu, Sequential

OCC_INIT_BIAS = 2.0


def _norm(channels: int, enabled: bool):
    return GroupNorm(channels) if enabled else Identity()


class ImageEncoder(Module):
    def __init__(self, rng: RngStream, cz: int, width: int = 64, norm: bool = True):
        self.net = Sequential(
            Conv2d(rng, 3, width // 2, k=3, stride=1), _norm(width // 2, norm), Relu(),
            Conv2d(rng, width // 2, width, k=3, stride=2), _norm(width, norm), Relu(),
            Conv2d(rng, width, width, k=3, stride=1), _norm(width, norm), Relu(),
            Conv2d(rng, width, cz, k=3, stride=2),
        )

    def forward(self, x: Tensor) -> Tensor:
        return self.net(ad.sub(ad.mul(x, 2.0), 1.0))


class ImageDecoder(Module):
    def __init__(self, rng: RngStream, cz: int, width: int = 64, norm: bool = True):
        self.head = Sequential(Conv2d(rng, cz, width, k=3), _norm(width, norm), Relu())
        self.mid = Sequential(Conv2d(rng, width, width, k=3), _norm(width, norm), Relu())
        self.out = Sequential(Conv2d(rng, width, width // 2, k=3),
                              _norm(width // 2, norm), Relu(),
                              Conv2d(rng, width // 2, 3, k=3))

    def forward(self, z: Tensor) -> Tensor:
        h = self.head(z)
        h = self.mid(ad.upsample_nearest2d(h))
        h = self.out(ad.upsample_nearest2d(h))
        return ad.sigmoid(h)


# correlation search radius in latent cells; descriptors are 2x2 color
# blocks of the 2x-latent-resolution pooled frame
CORR_RADIUS = 4
CORR_CHANNELS = (2 * CORR_RADIUS + 1) ** 2


def _box_blur(img: np.ndarray, k: int = 5) -> np.ndarray:
    """Box blur along the last two axes with edge padding."""
    pad = k // 2
    padded = np.pad(img, [(0, 0)] * (img.ndim - 2) + [(pad, pad), (pad, pad)], mode="edge")
    cs = padded.cumsum(axis=-2).cumsum(axis=-1)
    cs = np.pad(cs, [(0, 0)] * (img.ndim - 2) + [(1, 0), (1, 0)])
    h, w = img.shape[-2], img.shape[-1]
    out = (cs[..., k : k + h, k : k + w]
           - cs[..., k : k + h, 0:w]
           - cs[..., 0:h, k : k + w]
           + cs[..., 0:h, 0:w])
    return out / (k * k)


def _cell_descriptors(frames: np.ndarray) -> np.ndarray:
    """(B, 3, H, W) -> softly normalized high-pass descriptors
    (B, 12, H/4, W/4).

    High-passing removes the smooth shading that correlates at every
    offset; soft normalization keeps flat cells near zero (uninformative)
    instead of amplifying their noise to unit length.
    """
    b, c, h, w = frames.shape
    hz, wz = h // 4, w // 4
    pooled = frames.reshape(b, c, 2 * hz, h // (2 * hz), 2 * wz, w // (2 * wz)).mean(axis=(3, 5))
    high = pooled - _box_blur(pooled, 5)
    desc = high.reshape(b, c, hz, 2, wz, 2).transpose(0, 1, 3, 5, 2, 4).reshape(b, 4 * c, hz, wz)
    norm = np.sqrt((desc**2).sum(axis=1, keepdims=True))
    return (desc / (norm + 0.02)).astype(np.float32)


def compute_correlation_features(refs: np.ndarray, dris: np.ndarray) -> np.ndarray:
    """Cosine correlation of each driving cell against reference cells at
    offsets within CORR_RADIUS; (B, CORR_CHANNELS, Hz, Wz), out-of-bounds 0.

    A constant input feature (no gradient flows through it): it makes the
    displacement linearly readable, which the raw stacked frames do not.
    """
    d_dri = _cell_descriptors(dris)
    d_ref = _cell_descriptors(refs)
    b, c, hz, wz = d_dri.shape
    r = CORR_RADIUS
    padded = np.zeros((b, c, hz + 2 * r, wz + 2 * r), dtype=np.float32)
    padded[:, :, r : r + hz, r : r + wz] = d_ref
    out = np.empty((b, CORR_CHANNELS, hz, wz), dtype=np.float32)
    idx = 0
    for oy in range(-r, r + 1):
        for ox in range(-r, r + 1):
            shifted = padded[:, :, r + oy : r + oy + hz, r + ox : r + ox + wz]
            out[:, idx] = (d_dri * shifted).sum(axis=1)
            idx += 1
    return out


class FlowPredictor(Module):
    def __init__(self, rng: RngStream, width: int = 64, norm: bool = True):
        self.trunk = Sequential(
            Conv2d(rng, 6, width // 2, k=3, stride=2), _norm(width // 2, norm), Relu(),
            Conv2d(rng, width // 2, width, k=3, stride=2), _norm(width, norm), Relu(),
        )
        self.fuse = Sequential(
            Conv2d(rng, width + CORR_CHANNELS, width, k=3), _norm(width, norm), Relu(),
        )
        # heads read the correlation channels directly alongside the fused
        # features: the displacement is then a linear soft-argmax readout,
        # and the flow head starts AT that readout (center taps weight each
        # correlation channel by its offset), so training only calibrates it
        self.flow_head = Conv2d(rng, width + CORR_CHANNELS, 2, k=3, init_scale=0.0)
        self.occ_head = Conv2d(rng, width + CORR_CHANNELS, 1, k=3, init_scale=0.0)
        self.occ_head.bias.data = self.occ_head.bias.data + OCC_INIT_BIAS
        gain = 0.17  # 2*tanh(gain * corr * cells) ~ one cell for corr ~ 0.4
        wdata = self.flow_head.weight.data
        for oy in range(-CORR_RADIUS, CORR_RADIUS + 1):
            for ox in range(-CORR_RADIUS, CORR_RADIUS + 1):
                idx = width + (oy + CORR_RADIUS) * (2 * CORR_RADIUS + 1) + (ox + CORR_RADIUS)
                wdata[0, idx, 1, 1] = gain * ox
                wdata[1, idx, 1, 1] = gain * oy

    def forward(self, x_ref: Tensor, x_dri: Tensor):
        corr = Tensor(compute_correlation_features(x_ref.data, x_dri.data))
        pair = ad.concat([ad.sub(ad.mul(x_ref, 2.0), 1.0),
                          ad.sub(ad.mul(x_dri, 2.0), 1.0)], axis=1)
        h = self.fuse(ad.concat([self.trunk(pair), corr], axis=1))
        h = ad.concat([h, corr], axis=1)
        flow = ad.mul(ad.tanh(self.flow_head(h)), FLOW_MAX)
        occ_logits = self.occ_head(h)
        return flow, occ_logits


class AutoencoderModel(Module):
    def __init__(self, rng: RngStream, cz: int = 32, width: int = 64, norm: bool = True):
        self.encoder = ImageEncoder(rng.substream("encoder"), cz, width, norm)
        self.decoder = ImageDecoder(rng.substream("decoder"), cz, width, norm)
        self.flow = FlowPredictor(rng.substream("flow"), width, norm)


@dataclass
class AutoencoderParams:
    model: AutoencoderModel
    cz: int
    width: int
    frame_size: int
    norm: bool = True
    trained: bool = False
    content_hash: str = ""

    @classmethod
    def initialize(cls, rng: RngStream, cz: int = 32, width: int = 64,
                   frame_size: int = 64, norm: bool = True) -> "AutoencoderParams":
        return cls(model=AutoencoderModel(rng, cz, width, norm), cz=cz, width=width,
                   frame_size=frame_size, norm=norm)

    @property
    def latent_size(self) -> int:
        return self.frame_size // 4

    def require_trained(self, what: str = "stage-1 autoencoder"):
        if not self.trained:
            raise ValidationError(f"{what} is untrained; run train-ae first")

    def save(self, path, extra_meta: dict = None) -> str:
        meta = {
            "cz": self.cz,
            "width": self.width,
            "frame_size": self.frame_size,
            "norm": self.norm,
            "trained": self.trained,
        }
        if extra_meta:
            meta.update(extra_meta)
        self.content_hash = save_checkpoint(
            path, "flow_autoencoder", self.model.state_dict(), meta=meta
        )
        return self.content_hash

    @classmethod
    def load(cls, path) -> "AutoencoderParams":
        path = Path(path)
        if not path.is_file():
            raise MissingArtifactError(f"autoencoder checkpoint not found: {path}")
        header, arrays = load_checkpoint(path, expect_kind="flow_autoencoder")
        meta = header["meta"]
        params = cls.initialize(
            seeded_rng(0), cz=meta["cz"], width=meta["width"],
            frame_size=meta["frame_size"], norm=meta.get("norm", True),
        )
        params.model.load_state_dict(arrays)
        params.trained = bool(meta["trained"])
        from flowdance.core.checkpoint import content_hash

        params.content_hash = content_hash(path)
        return params


def _to_bchw(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float32)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ValidationError(f"frame must be H x W x 3, got {frame.shape}")
    return frame.transpose(2, 0, 1)[None]


def encode_image(frame: np.ndarray, params: AutoencoderParams) -> LatentMap:
    """Frame (H, W, 3) in [0, 1] -> LatentMap (H/4, W/4, Cz)."""
    x = _to_bchw(frame)
    if x.shape[2] != params.frame_size or x.shape[3] != params.frame_size:
        raise ValidationError(
            f"frame is {x.shape[2]}x{x.shape[3]}, model expects {params.frame_size}"
        )
    with ad.no_grad():
        z = params.model.encoder(Tensor(x))
    return LatentMap(values=z.data[0].transpose(1, 2, 0))


def decode_latent(z: LatentMap, params: AutoencoderParams) -> np.ndarray:
    """LatentMap -> frame (H, W, 3) in [0, 1]."""
    hz, wz, cz = z.values.shape
    if cz != params.cz or hz != params.latent_size or wz != params.latent_size:
        raise ValidationError(
            f"latent {z.values.shape} incompatible with model (Cz={params.cz}, "
            f"Hz=Wz={params.latent_size})"
        )
    with ad.no_grad():
        x = params.model.decoder(Tensor(z.values.transpose(2, 0, 1)[None]))
    return x.data[0].transpose(1, 2, 0)


def predict_flow_raw(x_ref: np.ndarray, x_dri: np.ndarray, params: AutoencoderParams):
    """(flow (Hz, Wz, 2), occlusion logits (Hz, Wz, 1)) as raw arrays."""
    if x_ref.shape != x_dri.shape:
        raise ValidationError(f"frame shapes differ: {x_ref.shape} vs {x_dri.shape}")
    with ad.no_grad():
        flow, occ_logits = params.model.flow(Tensor(_to_bchw(x_ref)), Tensor(_to_bchw(x_dri)))
    return (
        flow.data[0].transpose(1, 2, 0),
        occ_logits.data[0].transpose(1, 2, 0),
    )


def predict_flow(x_ref: np.ndarray, x_dri: np.ndarray, params: AutoencoderParams):
    """(FlowField, OcclusionMap) between two frames of equal shape."""
    flow, occ_logits = predict_flow_raw(x_ref, x_dri, params)
    occ = 1.0 / (1.0 + np.exp(-occ_logits))
    return FlowField(values=flow), OcclusionMap(values=occ)
