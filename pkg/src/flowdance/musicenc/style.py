"""Style arm: a classifier backbone, frozen, plus a trainable adapter.

Stage A trains the backbone and a linear head with cross-entropy on style
ids. Stage B freezes the backbone (it runs under no_grad, so its
parameters receive no gradient at all) and trains the adapter and a fresh
head on the same objective. The embedding is the L2-normalized adapter
output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from flowdance.core.checkpoint import load_checkpoint, save_checkpoint
from flowdance.core.rng import RngStream, seeded_rng
from flowdance.core.types import AudioClip
from flowdance.errors import MissingArtifactError, ValidationError
from flowdance.musicenc.backbone import (
    Adapter,
    AudioBackbone,
    EMBED_DIM,
    l2_normalize,
    mel_batch,
    mel_input,
)
from flowdance.nn import autodiff as ad
from flowdance.nn.autodiff import Tensor
from flowdance.nn.layers import Linear, Module
from flowdance.nn.optim import Adam


class StyleNet(Module):
    def __init__(self, rng: RngStream, n_styles: int, embed_dim: int = EMBED_DIM):
        self.backbone = AudioBackbone(rng.substream("backbone"), embed_dim=embed_dim)
        self.adapter = Adapter(rng.substream("adapter"), dim=embed_dim)
        self.head_backbone = Linear(rng.substream("headA"), embed_dim, n_styles)
        self.head_adapter = Linear(rng.substream("headB"), embed_dim, n_styles)


@dataclass
class StyleEmbedderParams:
    net: StyleNet
    n_styles: int
    embed_dim: int = EMBED_DIM
    trained: bool = False
    held_out_accuracy: float = 0.0
    log: list = field(default_factory=list)

    def require_trained(self):
        if not self.trained:
            raise ValidationError("style embedder is untrained; run train-music first")


def embed_style(clip: AudioClip, params: StyleEmbedderParams) -> np.ndarray:
    """Unit-norm style embedding e_c."""
    params.require_trained()
    with ad.no_grad():
        emb = params.net.backbone(Tensor(mel_input(clip)))
        out = l2_normalize(params.net.adapter(emb))
    return out.data[0].copy()


def _epoch_batches(n: int, batch_size: int, rng: RngStream):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _accuracy(net: StyleNet, mels: np.ndarray, labels: np.ndarray) -> float:
    with ad.no_grad():
        emb = net.backbone(Tensor(mels))
        logits = net.head_adapter(net.adapter(emb))
    return float((np.argmax(logits.data, axis=1) == labels).mean())


def train_style_embedder(clips: list, labels: np.ndarray, n_styles: int,
                         rng: RngStream, epochs: int = 100, batch_size: int = 16,
                         lr: float = 1e-3, holdout: tuple = None,
                         stage_a_epochs: int = None) -> StyleEmbedderParams:
    """Two-stage training on (clip, style id) pairs.

    holdout: optional (clips, labels) for the reported held-out accuracy.
    Half the epoch budget pretrains the backbone, half tunes the adapter,
    unless stage_a_epochs overrides the split.
    """
    labels = np.asarray(labels)
    if len(set(labels.tolist())) < 2:
        raise ValidationError("style training needs at least two distinct styles")
    net = StyleNet(rng.substream("init"), n_styles)
    mels = mel_batch(clips)
    n = len(clips)
    log = []

    # stage A: backbone + linear head
    if stage_a_epochs is None:
        stage_a_epochs = max(1, epochs // 2)
    opt = Adam(net.backbone.parameters() + net.head_backbone.parameters(), lr=lr)
    arng = rng.substream("stageA")
    for epoch in range(stage_a_epochs):
        losses = []
        for idx in _epoch_batches(n, batch_size, arng.substream(f"e{epoch}")):
            logits = net.head_backbone(net.backbone(Tensor(mels[idx])))
            loss = ad.cross_entropy(logits, labels[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.data))
        log.append({"stage": "A", "epoch": epoch + 1, "loss": float(np.mean(losses)), "lr": lr})

    # stage B: frozen backbone, adapter + fresh head
    with ad.no_grad():
        all_emb = net.backbone(Tensor(mels)).data.copy()
    opt = Adam(net.adapter.parameters() + net.head_adapter.parameters(), lr=lr)
    brng = rng.substream("stageB")
    for epoch in range(max(1, epochs - stage_a_epochs)):
        losses = []
        for idx in _epoch_batches(n, batch_size, brng.substream(f"e{epoch}")):
            logits = net.head_adapter(net.adapter(Tensor(all_emb[idx])))
            loss = ad.cross_entropy(logits, labels[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.data))
        log.append({"stage": "B", "epoch": epoch + 1, "loss": float(np.mean(losses)), "lr": lr})

    params = StyleEmbedderParams(net=net, n_styles=n_styles, trained=True, log=log)
    if holdout is not None:
        h_clips, h_labels = holdout
        params.held_out_accuracy = _accuracy(net, mel_batch(h_clips), np.asarray(h_labels))
    return params
