"""Motion-music and audio-video alignment scores.

mm_align_2d scores each kinematic beat by its Gaussian-kernel proximity to
the nearest music beat (both in frame units). av_align matches audio onset
peaks against visual motion peaks within a +/-1 frame window using greedy
in-order one-to-one matching, and reports matches over the union; for
trains this small, greedy matching is optimal (verified exhaustively in
the tests).
"""

from __future__ import annotations

import numpy as np

from flowdance.audio.features import log_mel, onset_envelope
from flowdance.core.types import AudioClip, VideoTensor
from flowdance.errors import ValidationError
from flowdance.metrics.beats import BeatSequence, pick_peaks

DEFAULT_SIGMA_FRAMES = 3.0
MATCH_WINDOW_FRAMES = 1


def mm_align_2d(fx: BeatSequence, fy: BeatSequence, sigma: float = DEFAULT_SIGMA_FRAMES) -> float:
    """Mean over kinematic beats of exp(-d^2 / (2 sigma^2)) to nearest music beat."""
    if len(fx) == 0 or len(fy) == 0:
        raise ValidationError("alignment undefined for empty beat sequences")
    dists = np.abs(fx.times[:, None] - fy.times[None, :]).min(axis=1)
    return float(np.mean(np.exp(-(dists**2) / (2.0 * sigma**2))))


def video_motion_series(video: VideoTensor) -> np.ndarray:
    """Per-step mean absolute frame difference; length n_frames - 1."""
    if video.n_frames < 2:
        raise ValidationError("motion series needs at least two frames")
    return np.abs(np.diff(video.frames.astype(np.float64), axis=0)).mean(axis=(1, 2, 3))


def greedy_match(a: np.ndarray, b: np.ndarray, window: int = MATCH_WINDOW_FRAMES) -> int:
    """In-order one-to-one matches between sorted peak trains within +/-window."""
    i = j = matches = 0
    while i < a.size and j < b.size:
        if abs(a[i] - b[j]) <= window:
            matches += 1
            i += 1
            j += 1
        elif a[i] < b[j]:
            i += 1
        else:
            j += 1
    return matches


def align_score_from_peaks(audio_peaks, visual_peaks, window: int = MATCH_WINDOW_FRAMES) -> float:
    """Intersection-over-union of two peak trains under windowed matching."""
    a = np.asarray(audio_peaks, dtype=np.float64)
    v = np.asarray(visual_peaks, dtype=np.float64)
    if a.size == 0 and v.size == 0:
        raise ValidationError("alignment undefined: no peaks on either side")
    matches = greedy_match(a, v, window)
    union = a.size + v.size - matches
    return matches / union if union else 1.0


def audio_peak_frames(audio: AudioClip, fps: float) -> np.ndarray:
    """Onset-envelope peaks mapped to video frame indices."""
    env = onset_envelope(log_mel(audio))
    peaks = pick_peaks(env.values)
    times = env.times()[peaks] if peaks else np.zeros(0)
    return np.unique(np.floor(times * fps + 0.5).astype(np.int64))


def visual_peak_frames(video: VideoTensor) -> np.ndarray:
    series = video_motion_series(video)
    peaks = pick_peaks(series)
    # step i spans frames [i, i+1]
    return np.unique(np.floor(np.asarray(peaks, dtype=np.float64) + 0.5 + 0.5).astype(np.int64))


def av_align(video: VideoTensor, audio: AudioClip) -> float:
    """Audio-onset vs visual-motion peak agreement within a three-frame window."""
    if video.n_frames < 3:
        raise ValidationError("av_align needs at least three frames")
    if audio.duration + 1e-9 < video.duration:
        raise ValidationError(
            f"audio covers {audio.duration:.3f}s but video lasts {video.duration:.3f}s"
        )
    return align_score_from_peaks(audio_peak_frames(audio, video.fps), visual_peak_frames(video))
