"""Stage-1 training: random same-video frame pairs, perceptual loss, Adam.

Unsupervised: the model only ever sees (reference, driving) frame pairs
drawn from one video and learns to warp the reference toward the driving
frame. The desk schedule is the published one scaled by 0.4 (60 epochs,
decays at 24/36/48); the full schedule is available as the "paper" preset.

Three training aids make the dense flow predictor actually learnable at
this scale (bilinear warping only propagates useful gradients within about
one cell, and the reconstruction loss alone is dominated by the static
background):

- a temporal curriculum that starts with adjacent frames (sub-cell motion)
  and widens to fully random pairs,
- a photometric term that warps the reference frame at pixel resolution by
  the same flow field (image edges give informative gradients from step 0),
- synthetic pure-shift pairs (the driving frame is the reference globally
  translated) whose exact uniform flow is known and supervised directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from flowdance.core.rng import RngStream
from flowdance.corpus.dataset import iter_samples
from flowdance.errors import ValidationError
from flowdance.flowae.model import AutoencoderParams
from flowdance.flowae.perceptual import reconstruction_loss
from flowdance.flowae.warp import warp_tensors
from flowdance.metrics.image import psnr
from flowdance.nn import autodiff as ad
from flowdance.nn.autodiff import Tensor
from flowdance.nn.optim import Adam, MilestoneLR


@dataclass(frozen=True)
class Stage1Config:
    epochs: int = 60
    batch_size: int = 16
    lr: float = 2e-4
    milestones: tuple = (24, 36, 48)
    pairs_per_video: int = 8
    cz: int = 32
    width: int = 64
    # fraction of picks replaced by pure-shift pairs (driving frame =
    # reference translated by a known offset, supervised flow)
    shift_prob: float = 0.3
    shift_max: int = 8
    # small prior pulling visibility toward 1 so occlusion only drops
    # where warping genuinely fails
    occlusion_prior: float = 0.4
    # pixel-space photometric warp loss weight
    photometric_weight: float = 3.0
    # direct flow supervision weight on pure-shift pairs
    flow_supervision_weight: float = 50.0
    # fraction of the run over which pair gap and shift magnitude ramp up
    curriculum_fraction: float = 0.5
    # leading fraction spent training the flow branch alone (photometric +
    # shift supervision, decoder untouched): joint training from scratch
    # collapses into the flow=0 basin because the decoder co-adapts to
    # unwarped latents faster than the flow can become useful
    warmup_fraction: float = 0.25
    # warmup epochs skip the encoder/decoder/pyramid entirely, so they are
    # cheap: run them hot and shift-heavy with extra pair draws
    warmup_lr: float = 5e-3
    warmup_shift_prob: float = 0.7
    warmup_pairs_per_video: int = 8
    norm: bool = False


def load_split_frames(corpus_root, split: str) -> list:
    """Per-video frame stacks (N, H, W, 3) float32."""
    videos = [s.video.frames for s in iter_samples(corpus_root, split=split)]
    if not videos:
        raise ValidationError(f"corpus at {corpus_root} has no '{split}' videos")
    return videos


def shift_frame(frame: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Translate (H, W, 3) by whole pixels with edge-clamp padding."""
    h, w, _ = frame.shape
    ys = np.clip(np.arange(h) - dy, 0, h - 1)
    xs = np.clip(np.arange(w) - dx, 0, w - 1)
    return frame[np.ix_(ys, xs)]


def _pair_batch(videos: list, picks: list) -> tuple:
    """(x_ref, x_dri, flow_target (B, 2) normalized, supervision mask)."""
    refs = np.stack([videos[v][i] for v, i, _, _, _, _ in picks]).transpose(0, 3, 1, 2)
    dris = np.stack(
        [shift_frame(videos[v][j], dx, dy) for v, _, j, dx, dy, _ in picks]
    ).transpose(0, 3, 1, 2)
    latent_w = videos[0].shape[1] // 4
    targets = np.zeros((len(picks), 2), dtype=np.float32)
    mask = np.zeros(len(picks), dtype=np.float32)
    for row, (v, i, j, dx, dy, supervised) in enumerate(picks):
        if supervised:
            # a dx-pixel shift is dx/4 latent cells; normalized units are
            # 2/(latent_w - 1) per cell, and backward flow opposes the shift
            targets[row, 0] = -(dx / 4.0) * 2.0 / (latent_w - 1)
            targets[row, 1] = -(dy / 4.0) * 2.0 / (latent_w - 1)
            mask[row] = 1.0
    return Tensor(refs), Tensor(dris), targets, mask


def forward_full(model, x_ref: Tensor, x_dri: Tensor):
    """(x_hat, flow, occlusion) with gradients, for training and probes."""
    z = model.encoder(x_ref)
    flow, occ_logits = model.flow(x_ref, x_dri)
    occ = ad.sigmoid(occ_logits)
    z_warp = warp_tensors(z, flow, occ)
    return model.decoder(z_warp), flow, occ


def forward_reconstruction(model, x_ref: Tensor, x_dri: Tensor) -> Tensor:
    """encode -> predicted warp -> decode, differentiable end to end."""
    return forward_full(model, x_ref, x_dri)[0]


def photometric_error(x_ref: Tensor, x_dri: Tensor, flow: Tensor, occ: Tensor) -> Tensor:
    """Occlusion-weighted L1 between the flow-warped reference frame and the
    driving frame, evaluated at pixel resolution (normalized flow is
    resolution independent)."""
    b, _, h, w = x_ref.shape
    f_up = ad.upsample_nearest2d(ad.upsample_nearest2d(flow))
    m_up = ad.upsample_nearest2d(ad.upsample_nearest2d(occ))
    ones = Tensor(np.ones((b, 1, h, w), dtype=x_ref.data.dtype))
    warped = warp_tensors(x_ref, f_up, ones)
    return ad.reduce_mean(ad.mul(m_up, ad.abs_(ad.sub(warped, x_dri))))


def _draw_pairs(n_videos: int, n_frames: int, pairs_per_video: int, rng: RngStream,
                shift_prob: float = 0.0, shift_max: int = 4,
                max_gap: int = None) -> list:
    """Random (ref, dri) picks; max_gap bounds |i - j| (curriculum).

    With probability shift_prob a pick becomes a pure-shift pair: the
    driving frame is the reference frame globally translated, so the true
    flow is a known constant.
    """
    if max_gap is None:
        max_gap = n_frames - 1
    picks = []
    for v in range(n_videos):
        for _ in range(pairs_per_video):
            i = int(rng.integers(0, n_frames))
            lo = max(0, i - max_gap)
            hi = min(n_frames - 1, i + max_gap)
            j = int(rng.integers(lo, hi + 1))
            dx = dy = 0
            supervised = False
            if shift_prob > 0 and shift_max > 0 and float(rng.uniform(0.0, 1.0)) < shift_prob:
                # whole-latent-cell shifts only (multiples of 4 px): a
                # stride-4 encoder is exactly equivariant to them, so the
                # warped latent matches encode(shifted frame) and the
                # reconstruction loss agrees with the flow target instead
                # of fighting it (sub-cell shifts interpolate between
                # latent codes, which unconstrained codes cannot survive).
                # (0, 0) draws stay in: supervised identity pairs anchor
                # the no-motion response at exactly zero flow.
                j = i
                supervised = True
                if float(rng.uniform(0.0, 1.0)) < 0.4:
                    dx = dy = 0  # supervised identity pair
                else:
                    cells = max(1, shift_max // 4)
                    dx = 4 * int(rng.integers(-cells, cells + 1))
                    dy = 4 * int(rng.integers(-max(1, cells // 2), max(1, cells // 2) + 1))
            picks.append((v, i, j, dx, dy, supervised))
    order = rng.permutation(len(picks))
    return [picks[k] for k in order]


def train_stage1(corpus_root, config: Stage1Config, rng: RngStream,
                 progress=None) -> tuple:
    """Returns (AutoencoderParams, training log rows)."""
    videos = load_split_frames(corpus_root, "train")
    val_videos = load_split_frames(corpus_root, "test")
    n_frames = videos[0].shape[0]
    frame_size = videos[0].shape[1]
    if len(videos) * config.pairs_per_video < config.batch_size:
        raise ValidationError(
            f"{len(videos)} training videos cannot fill a batch of {config.batch_size}"
        )

    params = AutoencoderParams.initialize(
        rng.substream("init"), cz=config.cz, width=config.width,
        frame_size=frame_size, norm=config.norm,
    )
    model = params.model
    opt = Adam(model.parameters(), lr=config.lr)
    sched = MilestoneLR(opt, base_lr=config.lr, milestones=config.milestones)

    val_rng = rng.substream("val-pairs")
    val_picks = _draw_pairs(len(val_videos), n_frames, 1, val_rng)[: config.batch_size]
    val_ref, val_dri, _, _ = _pair_batch(val_videos, val_picks)

    def val_loss() -> float:
        with ad.no_grad():
            return float(reconstruction_loss(
                forward_reconstruction(model, val_ref, val_dri), val_dri).data)

    log = [{"epoch": 0, "loss": None, "lr": config.lr, "val_loss": val_loss()}]
    epoch_rng = rng.substream("epochs")
    ramp_epochs = max(1, int(round(config.curriculum_fraction * config.epochs)))
    warmup_epochs = int(round(config.warmup_fraction * config.epochs))
    flow_opt = Adam(model.flow.parameters(), lr=config.warmup_lr)

    def flow_losses(x_ref, x_dri, flow, occ, flow_targets, shift_mask, loss):
        if config.photometric_weight > 0:
            loss = ad.add(loss, ad.mul(
                photometric_error(x_ref, x_dri, flow, occ),
                config.photometric_weight))
        if config.occlusion_prior > 0:
            loss = ad.add(loss, ad.mul(
                ad.reduce_mean(ad.sub(1.0, occ)), config.occlusion_prior))
        if config.flow_supervision_weight > 0 and shift_mask.any():
            target = Tensor(flow_targets[:, :, None, None])
            err = ad.mul(ad.pow_scalar(ad.sub(flow, target), 2.0),
                         Tensor(shift_mask[:, None, None, None]))
            sup = ad.mul(ad.reduce_sum(err),
                         1.0 / (float(shift_mask.sum()) * 2 * flow.shape[2] * flow.shape[3]))
            loss = ad.add(loss, ad.mul(sup, config.flow_supervision_weight))
        return loss

    for epoch in range(1, config.epochs + 1):
        lr = sched.set_epoch(epoch)
        warmup = epoch <= warmup_epochs
        frac = min(1.0, epoch / ramp_epochs)
        max_gap = max(1, int(round(frac * (n_frames - 1))))
        shift_mx = max(4, int(round(frac * config.shift_max)))
        picks = _draw_pairs(len(videos), n_frames,
                            config.warmup_pairs_per_video if warmup
                            else config.pairs_per_video,
                            epoch_rng.substream(f"e{epoch}"),
                            shift_prob=config.warmup_shift_prob if warmup
                            else config.shift_prob,
                            shift_max=shift_mx, max_gap=max_gap)
        losses = []
        for start in range(0, len(picks), config.batch_size):
            chunk = picks[start : start + config.batch_size]
            x_ref, x_dri, flow_targets, shift_mask = _pair_batch(videos, chunk)
            if warmup:
                flow, occ_logits = model.flow(x_ref, x_dri)
                occ = ad.sigmoid(occ_logits)
                loss = flow_losses(x_ref, x_dri, flow, occ, flow_targets,
                                   shift_mask, Tensor(np.zeros(())))
                flow_opt.zero_grad()
                loss.backward()
                flow_opt.step()
            else:
                x_hat, flow, occ = forward_full(model, x_ref, x_dri)
                loss = flow_losses(x_ref, x_dri, flow, occ, flow_targets,
                                   shift_mask, reconstruction_loss(x_hat, x_dri))
                opt.zero_grad()
                loss.backward()
                opt.step()
            losses.append(float(loss.data))
        row = {"epoch": epoch, "loss": float(np.mean(losses)), "lr": lr,
               "val_loss": val_loss(), "phase": "warmup" if warmup else "joint"}
        log.append(row)
        if progress is not None:
            progress(row)
    params.trained = True
    return params, log


def reconstruction_psnr(params: AutoencoderParams, corpus_root, split: str = "test",
                        pairs_per_video: int = 2, seed: int = 424242) -> float:
    """Mean held-out PSNR of the full encode->warp->decode path."""
    from flowdance.core.rng import seeded_rng

    videos = load_split_frames(corpus_root, split)
    picks = _draw_pairs(len(videos), videos[0].shape[0], pairs_per_video, seeded_rng(seed))
    x_ref, x_dri, _, _ = _pair_batch(videos, picks)
    with ad.no_grad():
        x_hat = forward_reconstruction(params.model, x_ref, x_dri)
    values = [
        psnr(x_hat.data[i].transpose(1, 2, 0), x_dri.data[i].transpose(1, 2, 0))
        for i in range(x_hat.shape[0])
    ]
    finite = [v for v in values if np.isfinite(v)]
    return float(np.mean(finite)) if finite else float("inf")


def autoencode_psnr(params: AutoencoderParams, corpus_root, split: str = "test") -> float:
    """Mean PSNR of plain decode(encode(x)) on held-out first frames."""
    videos = load_split_frames(corpus_root, split)
    frames = np.stack([v[0] for v in videos]).transpose(0, 3, 1, 2)
    with ad.no_grad():
        z = params.model.encoder(Tensor(frames))
        x_hat = params.model.decoder(z)
    values = [
        psnr(x_hat.data[i].transpose(1, 2, 0), frames[i].transpose(1, 2, 0))
        for i in range(frames.shape[0])
    ]
    finite = [v for v in values if np.isfinite(v)]
    return float(np.mean(finite)) if finite else float("inf")
