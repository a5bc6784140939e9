"""The full music representation: e = [e_c | e_w | e_b].

e_c comes from the style arm, e_w from the movement arm, e_b from the
beat tracker (indicator per frame + normalized tempo). The layout is fixed
and versioned: slicing e at offsets (0, D_c, D_c + D_w) recovers the arms.
Clips shorter than two 60 BPM periods cannot use autocorrelation tempo
estimation, so encode_music falls back to the median inter-peak gap of
the onset envelope (exact for click-like corpus audio).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from flowdance.audio.beats import estimate_tempo, track_beats
from flowdance.audio.features import OnsetEnvelope, log_mel, onset_envelope
from flowdance.core.checkpoint import load_checkpoint, save_checkpoint
from flowdance.core.rng import seeded_rng
from flowdance.core.types import AudioClip, BeatGrid
from flowdance.errors import MissingArtifactError, ValidationError
from flowdance.metrics.beats import pick_peaks
from flowdance.musicenc.backbone import EMBED_DIM
from flowdance.musicenc.features import beat_features
from flowdance.musicenc.movement import (
    MovementEmbedderParams,
    MovementNet,
    embed_movement,
)
from flowdance.musicenc.style import StyleEmbedderParams, StyleNet, embed_style

LAYOUT_VERSION = 1


@dataclass(frozen=True)
class MusicEmbedding:
    e_c: np.ndarray
    e_w: np.ndarray
    e_b: np.ndarray

    def __post_init__(self):
        for name, arm in (("e_c", self.e_c), ("e_w", self.e_w)):
            arm = np.asarray(arm, dtype=np.float32)
            norm = float(np.linalg.norm(arm))
            if arm.any() and abs(norm - 1.0) > 1e-5:
                raise ValidationError(f"{name} must be unit-normalized, |{name}| = {norm}")
            object.__setattr__(self, name, arm)
        e_b = np.asarray(self.e_b, dtype=np.float32)
        indicator = e_b[:-1]
        if not np.isin(indicator, (0.0, 1.0)).all():
            raise ValidationError("beat indicator entries must be 0 or 1")
        if not (0.0 <= e_b[-1] <= 1.0):
            raise ValidationError("tempo entry must lie in [0, 1]")
        object.__setattr__(self, "e_b", e_b)

    @property
    def e(self) -> np.ndarray:
        return np.concatenate([self.e_c, self.e_w, self.e_b])

    @property
    def dims(self) -> tuple:
        return (self.e_c.size, self.e_w.size, self.e_b.size)


def embedding_dim(n_frames: int, embed_dim: int = EMBED_DIM) -> int:
    return 2 * embed_dim + n_frames + 1


def split_embedding(e: np.ndarray, n_frames: int, embed_dim: int = EMBED_DIM):
    """Recover (e_c, e_w, e_b) from the fixed concatenation layout."""
    d_c, d_w = embed_dim, embed_dim
    if e.size != embedding_dim(n_frames, embed_dim):
        raise ValidationError(
            f"embedding has dim {e.size}, expected {embedding_dim(n_frames, embed_dim)}"
        )
    return e[:d_c], e[d_c : d_c + d_w], e[d_c + d_w :]


def robust_tempo_bpm(env: OnsetEnvelope) -> float:
    """Autocorrelation tempo when the clip is long enough, else the median
    inter-peak gap of the envelope, else 120."""
    if env.duration >= 2.0 * 60.0 / 60.0:
        return estimate_tempo(env).bpm
    peaks = pick_peaks(env.values)
    if len(peaks) >= 2:
        gaps = np.diff(np.asarray(peaks, dtype=np.float64)) / env.frame_rate
        period = float(np.median(gaps))
        # envelope peaks include off-beat notes: gaps may be half-periods;
        # fold into the supported range by octave steps
        bpm = 60.0 / period
        while bpm > 180.0:
            bpm /= 2.0
        while bpm < 60.0:
            bpm *= 2.0
        return float(np.clip(bpm, 60.0, 180.0))
    return 120.0


def detect_beats(clip: AudioClip) -> BeatGrid:
    env = onset_envelope(log_mel(clip))
    return track_beats(env, robust_tempo_bpm(env))


@dataclass
class MusicEncoderParams:
    style: StyleEmbedderParams
    movement: MovementEmbedderParams
    embed_dim: int = EMBED_DIM
    content_hash: str = ""

    def require_trained(self):
        self.style.require_trained()
        self.movement.require_trained()

    def save(self, path, extra_meta: dict = None) -> str:
        arrays = {}
        for name, p in self.style.net.named_parameters():
            arrays[f"style.{name}"] = p.data
        for name, p in self.movement.net.named_parameters():
            arrays[f"movement.{name}"] = p.data
        meta = {
            "embed_dim": self.embed_dim,
            "n_styles": self.style.n_styles,
            "layout_version": LAYOUT_VERSION,
            "trained": self.style.trained and self.movement.trained,
            "held_out_accuracy": self.style.held_out_accuracy,
            "top3_retrieval": self.movement.top3_retrieval,
        }
        if extra_meta:
            meta.update(extra_meta)
        self.content_hash = save_checkpoint(path, "music_encoder", arrays, meta=meta)
        return self.content_hash

    @classmethod
    def load(cls, path) -> "MusicEncoderParams":
        path = Path(path)
        if not path.is_file():
            raise MissingArtifactError(f"music encoder checkpoint not found: {path}")
        header, arrays = load_checkpoint(path, expect_kind="music_encoder")
        meta = header["meta"]
        style_net = StyleNet(seeded_rng(0), n_styles=meta["n_styles"])
        style_net.load_state_dict(
            {k[len("style."):]: v for k, v in arrays.items() if k.startswith("style.")}
        )
        movement_net = MovementNet(seeded_rng(0))
        movement_net.load_state_dict(
            {k[len("movement."):]: v for k, v in arrays.items() if k.startswith("movement.")}
        )
        trained = bool(meta["trained"])
        params = cls(
            style=StyleEmbedderParams(
                net=style_net, n_styles=meta["n_styles"], trained=trained,
                held_out_accuracy=meta.get("held_out_accuracy", 0.0),
            ),
            movement=MovementEmbedderParams(
                net=movement_net, trained=trained,
                top3_retrieval=meta.get("top3_retrieval", 0.0),
            ),
            embed_dim=meta["embed_dim"],
        )
        from flowdance.core.checkpoint import content_hash

        params.content_hash = content_hash(path)
        return params


def encode_music(clip: AudioClip, n_frames: int, fps: float,
                 params: MusicEncoderParams, use_beat_info: bool = True) -> MusicEmbedding:
    """Full embedding; with use_beat_info=False, e_b is zeroed (same shape)."""
    params.require_trained()
    e_c = embed_style(clip, params.style)
    e_w = embed_movement(clip, params.movement)
    if use_beat_info:
        e_b = beat_features(detect_beats(clip), n_frames, fps)
    else:
        e_b = np.zeros(n_frames + 1, dtype=np.float32)
    return MusicEmbedding(e_c=e_c, e_w=e_w, e_b=e_b)
