"""Core numeric data model: videos, audio clips, latent maps, beat grids.

All types validate on construction and freeze their arrays, so anything
built from them can assume finite values in range. Pixel values live in
[0, 1] everywhere outside the model internals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from flowdance.errors import ValidationError


def _require_finite(arr: np.ndarray, what: str) -> None:
    if not np.isfinite(arr).all():
        raise ValidationError(f"{what} contains NaN or Inf")


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class VideoTensor:
    """Stack of N frames, H x W x 3, values in [0, 1], plus a frame rate."""

    frames: np.ndarray
    fps: float

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float32)
        if frames.ndim != 4 or frames.shape[3] != 3:
            raise ValidationError(f"frames must be N x H x W x 3, got {frames.shape}")
        n, h, w, _ = frames.shape
        if n < 1:
            raise ValidationError("video needs at least one frame")
        for dim, name in ((h, "H"), (w, "W")):
            if not (_is_pow2(dim) and 16 <= dim <= 256):
                raise ValidationError(f"{name}={dim} must be a power of two in [16, 256]")
        _require_finite(frames, "frames")
        if frames.min() < 0.0 or frames.max() > 1.0:
            raise ValidationError("frame values must lie in [0, 1]")
        if self.fps <= 0:
            raise ValidationError("fps must be positive")
        object.__setattr__(self, "frames", _freeze(frames))

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    @property
    def duration(self) -> float:
        return self.n_frames / self.fps


@dataclass(frozen=True)
class AudioClip:
    """Mono waveform, values in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = 22050

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float32).reshape(-1)
        if samples.size < 1:
            raise ValidationError("audio clip needs at least one sample")
        _require_finite(samples, "samples")
        if np.abs(samples).max() > 1.0 + 1e-6:
            raise ValidationError("sample values must lie in [-1, 1]")
        if self.sample_rate <= 0:
            raise ValidationError("sample_rate must be positive")
        object.__setattr__(self, "samples", _freeze(np.clip(samples, -1.0, 1.0)))

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class LatentMap:
    """Latent image representation, Hz x Wz x Cz."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 3:
            raise ValidationError(f"latent map must be Hz x Wz x Cz, got {values.shape}")
        _require_finite(values, "latent values")
        object.__setattr__(self, "values", _freeze(values))

    @property
    def shape(self) -> tuple:
        return self.values.shape


# Gap tolerance between consecutive beats, as a fraction of the beat period.
BEAT_GAP_TOLERANCE = 0.20


@dataclass(frozen=True)
class BeatGrid:
    """Ordered beat timestamps in seconds plus the underlying tempo."""

    beat_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tempo_bpm: float = 0.0

    def __post_init__(self):
        times = np.asarray(self.beat_times, dtype=np.float64).reshape(-1)
        _require_finite(times, "beat times")
        if times.size and (np.diff(times) <= 0).any():
            raise ValidationError("beat times must be strictly ascending")
        if times.size >= 2:
            if self.tempo_bpm <= 0:
                raise ValidationError("tempo required when beats are present")
            period = 60.0 / self.tempo_bpm
            gaps = np.diff(times)
            if (np.abs(gaps - period) > BEAT_GAP_TOLERANCE * period + 1e-9).any():
                raise ValidationError(
                    f"beat gaps deviate more than {BEAT_GAP_TOLERANCE:.0%} from the "
                    f"{period:.3f}s period"
                )
        object.__setattr__(self, "beat_times", _freeze(times))

    def __len__(self) -> int:
        return self.beat_times.size

    @property
    def is_empty(self) -> bool:
        return self.beat_times.size == 0
