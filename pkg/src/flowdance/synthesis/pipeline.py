"""End-to-end generation: image + music -> dance video.

The conditioning image is encoded once; the diffusion model samples a flow
volume from its music embedding; each slice warps z0 and is decoded into a
frame. Frame 0 of the output is the conditioning image itself (flows are
defined from it), so the first frame is exact by construction.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from flowdance.core.io import save_audio, save_video_frames, write_json
from flowdance.core.rng import RngStream
from flowdance.core.types import AudioClip, VideoTensor
from flowdance.diffusion.sample import sample_flow_volumes
from flowdance.diffusion.schedule import cosine_schedule
from flowdance.diffusion.unet import DenoiserParams
from flowdance.errors import ValidationError
from flowdance.flowae.model import AutoencoderParams, encode_image
from flowdance.musicenc.encoder import MusicEncoderParams, encode_music
from flowdance.nn import autodiff as ad
from flowdance.nn.autodiff import Tensor
from flowdance.flowae.warp import warp_tensors


def composite_subject(subject: np.ndarray, mask: np.ndarray,
                      background: np.ndarray) -> np.ndarray:
    """Alpha-blend a segmented subject over a background frame.

    Masks are inputs here: any detector/segmenter output (or hand-drawn
    matte) in [0, 1] works.
    """
    subject = np.asarray(subject, dtype=np.float32)
    background = np.asarray(background, dtype=np.float32)
    mask = np.asarray(mask, dtype=np.float32)
    if subject.shape != background.shape:
        raise ValidationError(
            f"subject {subject.shape} and background {background.shape} differ"
        )
    if mask.shape != subject.shape[:2]:
        raise ValidationError(f"mask {mask.shape} must be H x W {subject.shape[:2]}")
    if mask.min() < 0.0 or mask.max() > 1.0:
        raise ValidationError("mask values must lie in [0, 1]")
    m = mask[..., None]
    return m * subject + (1.0 - m) * background


def decode_volume_to_frames(volume: np.ndarray, z0_values: np.ndarray,
                            ae: AutoencoderParams) -> np.ndarray:
    """Warp z0 by each volume slice and decode; returns (N, H, W, 3)."""
    n = volume.shape[0]
    flows = volume[..., :2].transpose(0, 3, 1, 2)
    occ = 1.0 / (1.0 + np.exp(-volume[..., 2:3].transpose(0, 3, 1, 2)))
    z0 = np.repeat(z0_values.transpose(2, 0, 1)[None], n, axis=0)
    with ad.no_grad():
        z_warp = warp_tensors(Tensor(z0), Tensor(flows.astype(np.float32)),
                              Tensor(occ.astype(np.float32)))
        frames = ae.model.decoder(z_warp)
    return frames.data.transpose(0, 2, 3, 1)


def generate_dance_video(x0: np.ndarray, music: AudioClip, n_frames: int, fps: float,
                         ae: AutoencoderParams, music_enc: MusicEncoderParams,
                         denoiser: DenoiserParams, rng: RngStream,
                         use_beat_info: bool = True) -> VideoTensor:
    """Animate x0 to music; returns n_frames frames with frame 0 == x0.

    n_frames counts the output frames: the diffusion model generates
    n_frames - 1 flow slices and x0 is prepended unchanged.
    """
    ae.require_trained("stage-1 autoencoder")
    music_enc.require_trained()
    denoiser.require_trained()
    if n_frames < 2:
        raise ValidationError("need n_frames >= 2")
    if music.duration + 1e-9 < n_frames / fps:
        raise ValidationError(
            f"music lasts {music.duration:.2f}s, need at least {n_frames / fps:.2f}s"
        )

    z0 = encode_image(x0, ae)
    emb = encode_music(music, n_frames, fps, music_enc, use_beat_info=use_beat_info)
    sched = cosine_schedule(denoiser.T)
    volume = sample_flow_volumes(
        z0.values[None], emb.e[None], n_frames - 1, sched, denoiser, rng
    )[0]
    frames = decode_volume_to_frames(volume, z0.values, ae)
    out = np.concatenate([np.asarray(x0, dtype=np.float32)[None], frames])
    return VideoTensor(frames=np.clip(out, 0.0, 1.0), fps=fps)


def generate_batch(x0s: list, musics: list, n_frames: int, fps: float,
                   ae: AutoencoderParams, music_enc: MusicEncoderParams,
                   denoiser: DenoiserParams, rng,
                   use_beat_info: bool = True) -> list:
    """Batched generation: one diffusion pass for many (image, music) pairs.

    rng may be a single stream (shared batch noise) or one stream per
    pair, which makes each video's bytes independent of batching.
    """
    ae.require_trained("stage-1 autoencoder")
    music_enc.require_trained()
    denoiser.require_trained()
    z0s = np.stack([encode_image(x, ae).values for x in x0s])
    embs = np.stack([
        encode_music(m, n_frames, fps, music_enc, use_beat_info=use_beat_info).e
        for m in musics
    ])
    sched = cosine_schedule(denoiser.T)
    volumes = sample_flow_volumes(z0s, embs, n_frames - 1, sched, denoiser, rng)
    videos = []
    for x0, vol in zip(x0s, volumes):
        frames = decode_volume_to_frames(vol, encode_image(x0, ae).values, ae)
        out = np.concatenate([np.asarray(x0, dtype=np.float32)[None], frames])
        videos.append(VideoTensor(frames=np.clip(out, 0.0, 1.0), fps=fps))
    return videos


def export_result(video: VideoTensor, music: AudioClip, out_dir, seed: int,
                  model_hashes: dict = None) -> Path:
    """Write frames/, audio.wav trimmed to the video length, and meta.json."""
    out = Path(out_dir)
    save_video_frames(video, out / "frames")
    n_samples = int(round(video.n_frames / video.fps * music.sample_rate))
    trimmed = music.samples[: max(1, min(n_samples, music.samples.size))]
    save_audio(AudioClip(samples=trimmed, sample_rate=music.sample_rate),
               out / "audio.wav")
    write_json(out / "meta.json", {
        "fps": video.fps,
        "n_frames": video.n_frames,
        "seed": seed,
        "model_hashes": model_hashes or {},
    })
    return out
