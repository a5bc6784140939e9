"""Beat features: per-frame beat indicator plus normalized tempo.

The indicator has one slot per video frame; a beat at time t lights the
slot round(t * fps) with ties rounding up (half-up, so a beat exactly on
the boundary 0.5/fps belongs to frame 1). The final entry is
(tempo - 60) / 120 clamped to [0, 1]. An empty grid gives all zeros.
"""

from __future__ import annotations

import numpy as np

from flowdance.core.types import BeatGrid
from flowdance.errors import ValidationError


def beat_features(beats: BeatGrid, n_frames: int, fps: float) -> np.ndarray:
    if n_frames < 1:
        raise ValidationError("n_frames must be >= 1")
    out = np.zeros(n_frames + 1, dtype=np.float32)
    if not beats.is_empty:
        frames = np.floor(beats.beat_times * fps + 0.5).astype(np.int64)
        frames = frames[(frames >= 0) & (frames < n_frames)]
        out[frames] = 1.0
        out[n_frames] = float(np.clip((beats.tempo_bpm - 60.0) / 120.0, 0.0, 1.0))
    return out
