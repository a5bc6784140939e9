"""Stage-2 training: noise-prediction MSE over corpus flow volumes.

All targets come from the frozen stage-1 model: per training video, the
flow volume from frame 0 to frames 1..N and the latent z0, paired with its
music embedding. Volumes are standardized per channel with training-set
statistics (stored in the checkpoint and inverted at sampling). The desk
schedule is the published one scaled by 0.4 (100 epochs, decays at
40/60/80).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from flowdance.core.rng import RngStream
from flowdance.corpus.dataset import iter_samples
from flowdance.diffusion.schedule import NoiseSchedule, cosine_schedule
from flowdance.diffusion.unet import DenoiserParams, predict_noise_batch
from flowdance.diffusion.volume import FlowVolume, VolumeStats, build_target_volume, diffuse_forward
from flowdance.errors import ValidationError
from flowdance.flowae.model import AutoencoderParams
from flowdance.musicenc.encoder import MusicEncoderParams, encode_music
from flowdance.nn import autodiff as ad
from flowdance.nn.autodiff import Tensor
from flowdance.nn.optim import Adam, MilestoneLR


@dataclass(frozen=True)
class Stage2Config:
    epochs: int = 100
    batch_size: int = 8
    lr: float = 2e-4
    milestones: tuple = (40, 60, 80)
    T: int = 1000
    use_beat_info: bool = True


def training_loss(a0_batch: np.ndarray, z0_batch: np.ndarray, e_batch: np.ndarray,
                  sched: NoiseSchedule, params: DenoiserParams, rng: RngStream,
                  train: bool = True):
    """Eq-style noise-prediction MSE with uniform t and standard normal eps.

    Returns (loss Tensor, steps drawn). a0_batch must already be normalized.
    """
    b = a0_batch.shape[0]
    t = np.asarray(rng.integers(1, sched.T + 1, (b,)))
    eps = rng.normal(a0_batch.shape, dtype=np.float32)
    a_t = np.empty_like(a0_batch)
    for i in range(b):
        a_t[i] = diffuse_forward(a0_batch[i], int(t[i]), eps[i], sched)
    pred = predict_noise_batch(a_t, t, z0_batch, e_batch, params, train=train)
    diff = ad.sub(pred, Tensor(eps))
    return ad.reduce_mean(ad.mul(diff, diff)), t


def prepare_training_set(corpus_root, ae: AutoencoderParams,
                         music: MusicEncoderParams, split: str,
                         use_beat_info: bool = True):
    """(volumes (S, N, Hz, Wz, 3) raw, z0s, embeddings) for a corpus split."""
    ae.require_trained()
    music.require_trained()
    volumes, z0s, embeds = [], [], []
    for s in iter_samples(corpus_root, split=split):
        vol, z0 = build_target_volume(s.video, ae)
        emb = encode_music(
            s.audio, s.video.n_frames, s.video.fps, music, use_beat_info=use_beat_info
        )
        volumes.append(vol.values)
        z0s.append(z0.values)
        embeds.append(emb.e)
    if not volumes:
        raise ValidationError(f"no '{split}' samples found in {corpus_root}")
    return np.stack(volumes), np.stack(z0s), np.stack(embeds)


def train_stage2(corpus_root, ae: AutoencoderParams, music: MusicEncoderParams,
                 config: Stage2Config, rng: RngStream, progress=None):
    """Returns (DenoiserParams, training log rows)."""
    vols, z0s, embs = prepare_training_set(
        corpus_root, ae, music, "train", use_beat_info=config.use_beat_info
    )
    val_vols, val_z0s, val_embs = prepare_training_set(
        corpus_root, ae, music, "test", use_beat_info=config.use_beat_info
    )
    stats = VolumeStats.from_volumes([FlowVolume(values=v) for v in vols])
    vols_n = stats.normalize(vols).astype(np.float32)
    val_n = stats.normalize(val_vols).astype(np.float32)

    n_frames = vols.shape[1] + 1
    sched = cosine_schedule(config.T)
    params = DenoiserParams.initialize(
        rng.substream("init"), cz=z0s.shape[-1], cond_dim=embs.shape[-1],
        n_frames=n_frames, T=config.T,
    )
    params.stats = stats
    opt = Adam(params.model.parameters(), lr=config.lr)
    lr_sched = MilestoneLR(opt, base_lr=config.lr, milestones=config.milestones)

    def val_loss() -> float:
        vrng = rng.substream("val-noise")  # fresh identical stream every call
        with ad.no_grad():
            loss, _ = training_loss(val_n, val_z0s, val_embs, sched, params, vrng,
                                    train=False)
        return float(loss.data)

    log = [{"epoch": 0, "loss": None, "lr": config.lr, "val_loss": val_loss()}]
    n = vols_n.shape[0]
    erng = rng.substream("epochs")
    for epoch in range(1, config.epochs + 1):
        lr = lr_sched.set_epoch(epoch)
        epoch_rng = erng.substream(f"e{epoch}")
        order = epoch_rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, _ = training_loss(
                vols_n[idx], z0s[idx], embs[idx], sched, params,
                epoch_rng.substream(f"b{start}"),
            )
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.data))
        row = {"epoch": epoch, "loss": float(np.mean(losses)), "lr": lr,
               "val_loss": val_loss()}
        log.append(row)
        if progress is not None:
            progress(row)
    params.trained = True
    return params, log
