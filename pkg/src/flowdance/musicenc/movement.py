"""Movement arm: symmetric contrastive training of audio embeddings against
per-video motion statistics.

The motion side of each pair is cheap and fixed-form: mean and standard
deviation over time of the frame-difference magnitude on a coarse spatial
grid, projected by a small MLP. Audio and motion embeddings are pulled
together with an InfoNCE loss at temperature 0.07, in both directions.
Stage A trains backbone + both projectors; stage B freezes everything but
the adapter, as in the style arm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from flowdance.core.rng import RngStream
from flowdance.core.types import AudioClip, VideoTensor
from flowdance.errors import ValidationError
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
from flowdance.nn.layers import Linear, Module, Relu, Sequential
from flowdance.nn.optim import Adam

TEMPERATURE = 0.07
MOTION_GRID = 4  # 4x4 cells


def motion_statistics(video: VideoTensor) -> np.ndarray:
    """Mean/std over time of |frame difference| pooled on a coarse grid."""
    if video.n_frames < 2:
        raise ValidationError("motion statistics need at least two frames")
    diffs = np.abs(np.diff(video.frames.astype(np.float64), axis=0)).mean(axis=3)
    n, h, w = diffs.shape
    ch, cw = h // MOTION_GRID, w // MOTION_GRID
    cells = diffs[:, : ch * MOTION_GRID, : cw * MOTION_GRID]
    cells = cells.reshape(n, MOTION_GRID, ch, MOTION_GRID, cw).mean(axis=(2, 4))
    per_cell = cells.reshape(n, -1)
    stats = np.concatenate([per_cell.mean(axis=0), per_cell.std(axis=0)])
    return stats.astype(np.float32)


class MotionProjector(Module):
    def __init__(self, rng: RngStream, embed_dim: int = EMBED_DIM):
        out = Linear(rng, 128, embed_dim, init_scale=0.0)
        out.bias.data[0] = 1.0  # uniform logits at init, like the adapter
        self.net = Sequential(
            Linear(rng, 2 * MOTION_GRID * MOTION_GRID, 128), Relu(), out,
        )

    def forward(self, x: Tensor) -> Tensor:
        return self.net(x)


class MovementNet(Module):
    def __init__(self, rng: RngStream, embed_dim: int = EMBED_DIM):
        self.backbone = AudioBackbone(rng.substream("backbone"), embed_dim=embed_dim)
        self.adapter = Adapter(rng.substream("adapter"), dim=embed_dim)
        self.motion_proj = MotionProjector(rng.substream("motion"), embed_dim=embed_dim)


@dataclass
class MovementEmbedderParams:
    net: MovementNet
    embed_dim: int = EMBED_DIM
    temperature: float = TEMPERATURE
    trained: bool = False
    top3_retrieval: float = 0.0
    log: list = field(default_factory=list)

    def require_trained(self):
        if not self.trained:
            raise ValidationError("movement embedder is untrained; run train-music first")


def embed_movement(clip: AudioClip, params: MovementEmbedderParams) -> np.ndarray:
    """Unit-norm movement embedding e_w."""
    params.require_trained()
    with ad.no_grad():
        emb = params.net.backbone(Tensor(mel_input(clip)))
        out = l2_normalize(params.net.adapter(emb))
    return out.data[0].copy()


def embed_motion_stats(stats: np.ndarray, params: MovementEmbedderParams) -> np.ndarray:
    with ad.no_grad():
        out = l2_normalize(params.net.motion_proj(Tensor(stats[None])))
    return out.data[0].copy()


def contrastive_loss(audio_emb: Tensor, motion_emb: Tensor,
                     temperature: float = TEMPERATURE) -> Tensor:
    """Symmetric InfoNCE over a batch of paired embeddings."""
    if temperature <= 0:
        raise ValidationError("temperature must be positive")
    a = l2_normalize(audio_emb)
    m = l2_normalize(motion_emb)
    logits = ad.mul(ad.matmul(a, ad.transpose(m)), 1.0 / temperature)
    targets = np.arange(a.shape[0])
    loss_a = ad.cross_entropy(logits, targets)
    loss_m = ad.cross_entropy(ad.transpose(logits), targets)
    return ad.mul(ad.add(loss_a, loss_m), 0.5)


def _audio_side(net: MovementNet, mels: Tensor, use_adapter: bool) -> Tensor:
    emb = net.backbone(mels)
    return net.adapter(emb) if use_adapter else emb


def train_movement_embedder(clips: list, videos: list, rng: RngStream,
                            epochs: int = 100, batch_size: int = 16,
                            lr: float = 1e-3, holdout: tuple = None,
                            stage_a_epochs: int = None) -> MovementEmbedderParams:
    """Contrastive training on paired (clip, video) data.

    holdout: optional (clips, videos) used for the reported top-3
    retrieval rate among all holdout candidates.
    """
    if len(clips) != len(videos):
        raise ValidationError("clips and videos must pair up")
    if len(clips) < 4:
        raise ValidationError("need at least 4 pairs for contrastive batches")
    net = MovementNet(rng.substream("init"))
    mels = mel_batch(clips)
    stats = np.stack([motion_statistics(v) for v in videos])
    n = len(clips)
    log = []

    if stage_a_epochs is None:
        stage_a_epochs = max(1, epochs // 2)
    opt = Adam(
        net.backbone.parameters() + net.motion_proj.parameters(), lr=lr
    )
    arng = rng.substream("stageA")
    for epoch in range(stage_a_epochs):
        losses = []
        order = arng.substream(f"e{epoch}").permutation(n)
        for start in range(0, n - 1, batch_size):
            idx = order[start : start + batch_size]
            if idx.size < 2:
                continue
            loss = contrastive_loss(
                _audio_side(net, Tensor(mels[idx]), use_adapter=False),
                net.motion_proj(Tensor(stats[idx])),
            )
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.data))
        log.append({"stage": "A", "epoch": epoch + 1, "loss": float(np.mean(losses)), "lr": lr})

    with ad.no_grad():
        frozen_emb = net.backbone(Tensor(mels)).data.copy()
        frozen_motion = net.motion_proj(Tensor(stats)).data.copy()
    opt = Adam(net.adapter.parameters(), lr=lr)
    brng = rng.substream("stageB")
    for epoch in range(max(1, epochs - stage_a_epochs)):
        losses = []
        order = brng.substream(f"e{epoch}").permutation(n)
        for start in range(0, n - 1, batch_size):
            idx = order[start : start + batch_size]
            if idx.size < 2:
                continue
            loss = contrastive_loss(
                net.adapter(Tensor(frozen_emb[idx])), Tensor(frozen_motion[idx])
            )
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.data))
        log.append({"stage": "B", "epoch": epoch + 1, "loss": float(np.mean(losses)), "lr": lr})

    params = MovementEmbedderParams(net=net, trained=True, log=log)
    if holdout is not None:
        params.top3_retrieval = retrieval_top_k(params, holdout[0], holdout[1], k=3)
    return params


def retrieval_top_k(params: MovementEmbedderParams, query_clips: list,
                    candidate_videos: list, true_indices=None, k: int = 3) -> float:
    """Fraction of query clips whose paired video ranks in the top k by cosine.

    true_indices[i] is the position of clip i's own video among the
    candidates; identity pairing by default.
    """
    if true_indices is None:
        true_indices = list(range(len(query_clips)))
    a = np.stack([embed_movement(c, params) for c in query_clips])
    m = np.stack([
        embed_motion_stats(motion_statistics(v), params) for v in candidate_videos
    ])
    sims = a @ m.T
    ranks = (-sims).argsort(axis=1)
    hits = sum(1 for i in range(len(query_clips)) if true_indices[i] in ranks[i, :k])
    return hits / len(query_clips)
