"""Shared audio backbone: four stride-2 conv blocks over the log-mel image,
global average pooling, then a linear projection to the embedding width.

Variable-length clips are fine: pooling absorbs the time axis. The adapter
that sits on top everywhere is the two-layer MLP with hidden width 512.
"""

from __future__ import annotations

import numpy as np

from flowdance.audio.features import log_mel
from flowdance.core.rng import RngStream
from flowdance.core.types import AudioClip
from flowdance.nn import autodiff as ad
from flowdance.nn.autodiff import Tensor
from flowdance.nn.layers import Conv2d, Linear, Module, Relu, Sequential

EMBED_DIM = 64
ADAPTER_HIDDEN = 512


class AudioBackbone(Module):
    def __init__(self, rng: RngStream, width: int = 32, embed_dim: int = EMBED_DIM):
        self.blocks = Sequential(
            Conv2d(rng, 1, width, k=3, stride=2), Relu(),
            Conv2d(rng, width, width, k=3, stride=2), Relu(),
            Conv2d(rng, width, 2 * width, k=3, stride=2), Relu(),
            Conv2d(rng, 2 * width, 2 * width, k=3, stride=2), Relu(),
        )
        self.proj = Linear(rng, 2 * width, embed_dim)

    def forward(self, mel_batch: Tensor) -> Tensor:
        h = self.blocks(mel_batch)  # (B, C, T', M')
        pooled = h.mean(axis=(2, 3))
        return self.proj(pooled)


class Adapter(Module):
    """Two fully connected layers, hidden width 512.

    The output layer starts at zero weights with a constant unit bias, so
    untrained embeddings are identical across inputs: contrastive logits
    begin exactly uniform and the first-step gradients stay bounded.
    """

    def __init__(self, rng: RngStream, dim: int = EMBED_DIM):
        self.fc1 = Linear(rng, dim, ADAPTER_HIDDEN)
        self.fc2 = Linear(rng, ADAPTER_HIDDEN, dim, init_scale=0.0)
        self.fc2.bias.data[0] = 1.0

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(ad.relu(self.fc1(x)))


def l2_normalize(x: Tensor, eps: float = 1e-12) -> Tensor:
    norm = ad.sqrt(ad.add(ad.reduce_sum(ad.mul(x, x), axis=-1, keepdims=True), eps))
    return ad.div(x, norm)


def mel_input(clip: AudioClip) -> np.ndarray:
    """Log-mel image as a (1, 1, T, M) conv input."""
    mel = log_mel(clip)
    return mel.values.astype(np.float32)[None, None]


def mel_batch(clips: list) -> np.ndarray:
    """Stack equal-length clips into one (B, 1, T, M) batch."""
    mats = [mel_input(c)[0] for c in clips]
    return np.stack(mats)
