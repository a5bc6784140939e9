"""Conditional 3D U-Net noise predictor.

The volume keeps its temporal length end to end: down/up blocks stride
only the two spatial axes (kernels are 3x3x3, so time still mixes), which
lets one checkpoint serve any clip length. Conditioning: z0 is tiled along
time and concatenated channel-wise, the music embedding runs through a
two-layer projection and is added to the sinusoidal step embedding, and
that combined vector modulates every block as a per-channel bias.
Two fixed channels encode absolute temporal position, giving the
otherwise translation-equivariant convolutions a notion of where in the
clip each slice sits (without them, frame-aligned beat conditioning would
be unlearnable).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from flowdance.core.checkpoint import load_checkpoint, save_checkpoint
from flowdance.core.rng import RngStream, seeded_rng
from flowdance.core.types import LatentMap
from flowdance.diffusion.volume import VolumeStats
from flowdance.errors import MissingArtifactError, ValidationError
from flowdance.musicenc.encoder import MusicEmbedding
from flowdance.nn import autodiff as ad
from flowdance.nn.autodiff import Tensor
from flowdance.nn.layers import Conv3d, GroupNorm, Linear, Module, Silu, Sequential

TIME_EMBED_DIM = 64
POS_CHANNELS = 2
# four down/up levels; thin channels keep 1000-step CPU sampling affordable
DEFAULT_CHANNELS = (16, 24, 32, 48)
MID_CHANNELS = 64


def sinusoidal_embedding(t: np.ndarray, dim: int = TIME_EMBED_DIM) -> np.ndarray:
    """Standard sinusoidal position embedding of diffusion step t, (B, dim)."""
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    angles = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1).astype(np.float32)


def temporal_position_channels(n: int, hz: int, wz: int) -> np.ndarray:
    """(POS_CHANNELS, N, Hz, Wz) fixed channels marking the slice index."""
    idx = np.arange(n, dtype=np.float32) / max(n - 1, 1)
    ramp = (2.0 * idx - 1.0)[:, None, None] * np.ones((n, hz, wz), dtype=np.float32)
    wave = np.sin(np.pi * idx)[:, None, None] * np.ones((n, hz, wz), dtype=np.float32)
    return np.stack([ramp, wave])


class ResBlock3d(Module):
    def __init__(self, rng: RngStream, channels: int, emb_dim: int):
        self.conv1 = Conv3d(rng, channels, channels, k=3)
        self.norm1 = GroupNorm(channels)
        self.emb_proj = Linear(rng, emb_dim, channels)
        self.conv2 = Conv3d(rng, channels, channels, k=3)
        self.norm2 = GroupNorm(channels)

    def forward(self, x: Tensor, emb: Tensor) -> Tensor:
        h = ad.silu(self.norm1(self.conv1(x)))
        bias = self.emb_proj(emb)
        b, c = bias.shape
        h = ad.add(h, ad.reshape(bias, (b, c, 1, 1, 1)))
        h = ad.silu(self.norm2(self.conv2(h)))
        return ad.add(h, x)


class UNet3d(Module):
    def __init__(self, rng: RngStream, in_channels: int, cond_dim: int,
                 channels: tuple = DEFAULT_CHANNELS, mid_channels: int = MID_CHANNELS):
        emb = TIME_EMBED_DIM
        self.time_mlp = Sequential(
            Linear(rng.substream("time1"), TIME_EMBED_DIM, emb), Silu(),
            Linear(rng.substream("time2"), emb, emb),
        )
        self.cond_mlp = Sequential(
            Linear(rng.substream("cond1"), cond_dim, 128), Silu(),
            Linear(rng.substream("cond2"), 128, emb),
        )
        self.in_conv = Conv3d(rng.substream("in"), in_channels, channels[0], k=3)
        self.down_blocks = [
            ResBlock3d(rng.substream(f"down{i}"), c, emb) for i, c in enumerate(channels)
        ]
        self.down_convs = [
            Conv3d(rng.substream(f"downc{i}"),
                   channels[i], channels[i + 1] if i + 1 < len(channels) else mid_channels,
                   k=3, stride=(1, 2, 2))
            for i in range(len(channels))
        ]
        self.mid_block = ResBlock3d(rng.substream("mid"), mid_channels, emb)
        self.up_convs = []
        self.up_blocks = []
        prev = mid_channels
        for i, c in enumerate(reversed(channels)):
            self.up_convs.append(Conv3d(rng.substream(f"upc{i}"), prev + c, c, k=3))
            self.up_blocks.append(ResBlock3d(rng.substream(f"up{i}"), c, emb))
            prev = c
        self.out_norm = GroupNorm(channels[0])
        self.out_conv = Conv3d(rng.substream("out"), channels[0], 3, k=3, init_scale=0.01)

    def forward(self, x: Tensor, t_embed: Tensor, cond: Tensor) -> Tensor:
        emb = ad.add(self.time_mlp(t_embed), self.cond_mlp(cond))
        h = self.in_conv(x)
        skips = []
        for block, down in zip(self.down_blocks, self.down_convs):
            h = block(h, emb)
            skips.append(h)
            h = down(h)
        h = self.mid_block(h, emb)
        for up_conv, up_block, skip in zip(self.up_convs, self.up_blocks, reversed(skips)):
            h = ad.upsample_nearest3d_spatial(h)
            h = up_conv(ad.concat([h, skip], axis=1))
            h = up_block(h, emb)
        return self.out_conv(ad.silu(self.out_norm(h)))


@dataclass
class DenoiserParams:
    model: UNet3d
    cz: int
    cond_dim: int
    n_frames: int  # video frames the conditioning embedding was built for
    T: int
    schedule: str = "cosine"
    stats: VolumeStats = None
    channels: tuple = DEFAULT_CHANNELS
    mid_channels: int = MID_CHANNELS
    trained: bool = False
    content_hash: str = ""

    @classmethod
    def initialize(cls, rng: RngStream, cz: int, cond_dim: int, n_frames: int,
                   T: int = 1000, channels: tuple = DEFAULT_CHANNELS,
                   mid_channels: int = MID_CHANNELS) -> "DenoiserParams":
        in_channels = 3 + cz + POS_CHANNELS
        model = UNet3d(rng, in_channels, cond_dim, channels=channels,
                       mid_channels=mid_channels)
        return cls(model=model, cz=cz, cond_dim=cond_dim, n_frames=n_frames, T=T,
                   channels=channels, mid_channels=mid_channels)

    def require_trained(self):
        if not self.trained:
            raise ValidationError("flow denoiser is untrained; run train-diffusion first")

    def save(self, path, extra_meta: dict = None) -> str:
        meta = {
            "cz": self.cz,
            "cond_dim": self.cond_dim,
            "n_frames": self.n_frames,
            "T": self.T,
            "schedule": self.schedule,
            "channels": list(self.channels),
            "mid_channels": self.mid_channels,
            "trained": self.trained,
            "stats_mean": self.stats.mean.tolist() if self.stats else None,
            "stats_std": self.stats.std.tolist() if self.stats else None,
        }
        if extra_meta:
            meta.update(extra_meta)
        self.content_hash = save_checkpoint(
            path, "flow_denoiser", self.model.state_dict(), meta=meta
        )
        return self.content_hash

    @classmethod
    def load(cls, path) -> "DenoiserParams":
        path = Path(path)
        if not path.is_file():
            raise MissingArtifactError(f"denoiser checkpoint not found: {path}")
        header, arrays = load_checkpoint(path, expect_kind="flow_denoiser")
        meta = header["meta"]
        params = cls.initialize(
            seeded_rng(0), cz=meta["cz"], cond_dim=meta["cond_dim"],
            n_frames=meta["n_frames"], T=meta["T"],
            channels=tuple(meta["channels"]), mid_channels=meta["mid_channels"],
        )
        params.model.load_state_dict(arrays)
        params.trained = bool(meta["trained"])
        if meta["stats_mean"] is not None:
            params.stats = VolumeStats(
                mean=np.asarray(meta["stats_mean"], dtype=np.float32),
                std=np.asarray(meta["stats_std"], dtype=np.float32),
            )
        from flowdance.core.checkpoint import content_hash

        params.content_hash = content_hash(path)
        return params


def assemble_input(a_t: np.ndarray, z0: np.ndarray) -> np.ndarray:
    """(B, N, Hz, Wz, 3) + (B, Hz, Wz, Cz) -> (B, 3+Cz+POS, N, Hz, Wz)."""
    b, n, hz, wz, _ = a_t.shape
    vol = a_t.transpose(0, 4, 1, 2, 3)
    z = np.repeat(z0.transpose(0, 3, 1, 2)[:, :, None], n, axis=2)
    pos = np.broadcast_to(temporal_position_channels(n, hz, wz)[None], (b, POS_CHANNELS, n, hz, wz))
    return np.concatenate([vol, z, pos], axis=1).astype(np.float32)


def predict_noise_batch(a_t: np.ndarray, t: np.ndarray, z0: np.ndarray,
                        e: np.ndarray, params: DenoiserParams,
                        train: bool = False) -> Tensor:
    """Batched noise prediction; returns a Tensor shaped like a_t."""
    if e.shape[-1] != params.cond_dim:
        raise ValidationError(
            f"conditioning dim {e.shape[-1]} does not match checkpoint ({params.cond_dim})"
        )
    if z0.shape[-1] != params.cz:
        raise ValidationError(f"z0 has Cz={z0.shape[-1]}, checkpoint expects {params.cz}")
    x = Tensor(assemble_input(a_t, z0))
    t_embed = Tensor(sinusoidal_embedding(t))
    cond = Tensor(np.asarray(e, dtype=np.float32))
    out = params.model(x, t_embed, cond)
    return ad.transpose(out, (0, 2, 3, 4, 1))


def predict_noise(a_t, t: int, z0: LatentMap, e: MusicEmbedding,
                  params: DenoiserParams) -> np.ndarray:
    """Single-volume API: a_t (N, Hz, Wz, 3) -> predicted noise, same shape."""
    values = a_t.values if hasattr(a_t, "values") else np.asarray(a_t, dtype=np.float32)
    with ad.no_grad():
        out = predict_noise_batch(
            values[None], np.asarray([t]), z0.values[None], e.e[None], params
        )
    return out.data[0]
