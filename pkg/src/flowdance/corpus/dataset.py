"""Corpus generation and loading.

Layout: root/style_{s}/track_{t:03d}/video_{v:03d}/ with frames/, audio.wav
and meta.json. One music track is shared by all videos under it, and the
train/test split is by track: no track id appears in both splits. Every
sample derives its random stream by key, so regeneration with the same
seed is byte-identical and generation order does not matter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from flowdance.core.io import (
    load_audio,
    load_video_frames,
    read_json,
    save_audio,
    save_video_frames,
    write_json,
)
from flowdance.core.rng import RngStream
from flowdance.core.types import AudioClip, BeatGrid, VideoTensor
from flowdance.corpus.dance import synth_dance
from flowdance.corpus.music import synth_music
from flowdance.corpus.styles import DanceStyle, default_styles
from flowdance.errors import ValidationError


@dataclass(frozen=True)
class CorpusConfig:
    n_styles: int = 4
    tracks_per_style: int = 5
    videos_per_track: int = 3
    n_frames: int = 16
    fps: float = 20.0
    frame_size: int = 64
    sample_rate: int = 22050
    test_fraction: float = 0.2

    def to_dict(self) -> dict:
        return {
            "n_styles": self.n_styles,
            "tracks_per_style": self.tracks_per_style,
            "videos_per_track": self.videos_per_track,
            "n_frames": self.n_frames,
            "fps": self.fps,
            "frame_size": self.frame_size,
            "sample_rate": self.sample_rate,
            "test_fraction": self.test_fraction,
        }


@dataclass
class CorpusSample:
    video: VideoTensor
    audio: AudioClip
    beats: BeatGrid
    joints: np.ndarray  # (N, J, 2)
    style_id: int
    track_id: int
    split: str
    path: Path = field(default=None)


def _n_train_tracks(config: CorpusConfig) -> int:
    n_test = max(1, int(round(config.tracks_per_style * config.test_fraction)))
    return config.tracks_per_style - n_test


def generate_corpus(config: CorpusConfig, rng: RngStream, out_root,
                    overwrite: bool = False) -> Path:
    """Write the full dataset tree; returns the root path."""
    root = Path(out_root)
    if root.exists() and any(root.iterdir()):
        if not overwrite:
            raise ValidationError(
                f"output directory {root} is not empty (pass overwrite to replace)"
            )
        import shutil

        shutil.rmtree(root)
    root.mkdir(parents=True, exist_ok=True)

    styles = default_styles(config.n_styles)
    duration = config.n_frames / config.fps
    corpus_rng = rng.substream("corpus")
    n_train = _n_train_tracks(config)

    for style in styles:
        for t in range(config.tracks_per_style):
            track_rng = corpus_rng.substream(f"s{style.style_id}.t{t}")
            lo, hi = style.tempo_range
            tempo = float(track_rng.uniform(lo, hi))
            audio, beats = synth_music(
                style, tempo, duration, track_rng.substream("music"),
                sample_rate=config.sample_rate,
            )
            track_id = style.style_id * config.tracks_per_style + t
            split = "train" if t < n_train else "test"
            for v in range(config.videos_per_track):
                video_rng = track_rng.substream(f"v{v}")
                video, joints = synth_dance(
                    style, beats, config.n_frames, config.fps, video_rng,
                    size=config.frame_size,
                )
                vdir = (
                    root
                    / f"style_{style.style_id}"
                    / f"track_{t:03d}"
                    / f"video_{v:03d}"
                )
                save_video_frames(video, vdir / "frames")
                save_audio(audio, vdir / "audio.wav")
                write_json(
                    vdir / "meta.json",
                    {
                        "style_id": style.style_id,
                        "track_id": track_id,
                        "fps": config.fps,
                        "n_frames": config.n_frames,
                        "beat_times": [float(b) for b in beats.beat_times],
                        "tempo_bpm": tempo,
                        "joints": joints.tolist(),
                        "split": split,
                    },
                )
    write_json(root / "corpus.json", {"config": config.to_dict()})
    return root


def load_sample(video_dir) -> CorpusSample:
    vdir = Path(video_dir)
    meta = read_json(vdir / "meta.json")
    video = load_video_frames(vdir / "frames", fps=meta["fps"])
    audio = load_audio(vdir / "audio.wav")
    beats = BeatGrid(
        beat_times=np.asarray(meta["beat_times"]), tempo_bpm=meta["tempo_bpm"]
    )
    return CorpusSample(
        video=video,
        audio=audio,
        beats=beats,
        joints=np.asarray(meta["joints"]),
        style_id=meta["style_id"],
        track_id=meta["track_id"],
        split=meta["split"],
        path=vdir,
    )


def sample_dirs(root, split: str | None = None) -> list:
    """Sorted video directories, optionally filtered by split."""
    root = Path(root)
    if not root.is_dir():
        raise ValidationError(f"corpus root {root} does not exist")
    out = []
    for meta_path in sorted(root.glob("style_*/track_*/video_*/meta.json")):
        if split is not None and read_json(meta_path)["split"] != split:
            continue
        out.append(meta_path.parent)
    return out


def iter_samples(root, split: str | None = None):
    for vdir in sample_dirs(root, split):
        yield load_sample(vdir)
