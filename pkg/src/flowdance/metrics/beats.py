"""Kinematic beat extraction: local minima of a motion-speed series.

A kinematic beat is a pose extreme: the dancer decelerates into a pose and
accelerates out of it, so body speed reaches a local minimum. Minima are
kept only when prominent against the series range (threshold 0.1), which
suppresses jitter minima on nearly flat stretches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from flowdance.errors import ValidationError

PROMINENCE_FRACTION = 0.1


@dataclass(frozen=True)
class BeatSequence:
    """Ascending beat positions in frame units (fractional frames allowed)."""

    times: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64).reshape(-1)
        if times.size and (np.diff(times) <= 0).any():
            raise ValidationError("beat sequence must be strictly ascending")
        if times.size and times.min() < 0:
            raise ValidationError("beat positions must be non-negative")
        times = times.copy()
        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    def __len__(self) -> int:
        return self.times.size


def _valley_prominence(series: np.ndarray, i: int) -> float:
    """Depth of the local minimum at i below its lower enclosing maximum."""
    v = series[i]
    left_max = v
    for j in range(i - 1, -1, -1):
        if series[j] < v:
            break
        left_max = max(left_max, series[j])
    right_max = v
    for j in range(i + 1, series.size):
        if series[j] < v:
            break
        right_max = max(right_max, series[j])
    return min(left_max, right_max) - v


def find_prominent_minima(series: np.ndarray, prominence: float) -> list:
    """Interior local minima (plateaus collapse to their first index)."""
    out = []
    n = series.size
    i = 1
    while i < n - 1:
        if series[i] > series[i - 1]:
            i += 1
            continue
        if series[i] == series[i - 1]:
            i += 1
            continue
        # strict descent into i; find plateau end
        j = i
        while j + 1 < n and series[j + 1] == series[i]:
            j += 1
        if j + 1 < n and series[j + 1] > series[i]:
            if _valley_prominence(series, i) >= prominence:
                out.append(i)
        i = j + 1
    return out


def pick_peaks(series: np.ndarray, prominence_fraction: float = PROMINENCE_FRACTION) -> list:
    """Prominent local maxima (used for onset and motion peak picking)."""
    series = np.asarray(series, dtype=np.float64)
    rng = series.max() - series.min()
    if rng <= 0:
        return []
    minima = find_prominent_minima(-series, prominence_fraction * rng)
    return minima


def kinematic_beats(motion) -> BeatSequence:
    """Kinematic beats from a speed series or a joint track.

    motion: either a 1-D per-frame motion-magnitude series, or a joint
    track of positions (N, J, 2) from which mean joint displacement per
    frame step is used. Series indices are reported as-is; joint-track
    beats land at i + 0.5 because step i spans frames [i, i+1].
    """
    arr = np.asarray(motion, dtype=np.float64)
    offset = 0.0
    if arr.ndim == 3:
        if arr.shape[0] < 2:
            raise ValidationError("joint track needs at least two frames")
        speed = np.linalg.norm(np.diff(arr, axis=0), axis=2).mean(axis=1)
        offset = 0.5
    elif arr.ndim == 1:
        speed = arr
    else:
        raise ValidationError(f"expected 1-D series or (N, J, 2) track, got {arr.shape}")
    if speed.size < 3:
        raise ValidationError("series too short for minima detection")
    rng = speed.max() - speed.min()
    if rng <= 0:
        return BeatSequence(times=np.zeros(0))
    idx = find_prominent_minima(speed, PROMINENCE_FRACTION * rng)
    return BeatSequence(times=np.asarray(idx, dtype=np.float64) + offset)
