"""Procedural music: a style-timbred eighth-note pattern plus beat clicks.

Each beat carries a bright 3 kHz click; between beats the style's waveform
plays an arpeggio at eighth-note spacing, so the onset envelope has peaks
at every eighth with the strongest ones on beats. The first beat lands at
0.1 s, and the last beat keeps a small margin from the clip end so every
click renders completely and remains detectable.
"""

from __future__ import annotations

import numpy as np

from flowdance.core.rng import RngStream
from flowdance.core.types import AudioClip, BeatGrid
from flowdance.corpus.styles import DanceStyle
from flowdance.errors import ValidationError

FIRST_BEAT_TIME = 0.1
END_MARGIN = 0.1
CLICK_FREQ = 3000.0
CLICK_DUR = 0.008
CLICK_AMP = 0.65
TONE_AMP = 0.28
MIN_DURATION = 0.2


def _waveform(name: str, phase: np.ndarray) -> np.ndarray:
    frac = phase - np.floor(phase)
    if name == "sine":
        return np.sin(2 * np.pi * phase)
    if name == "square":
        return np.where(frac < 0.5, 1.0, -1.0)
    if name == "saw":
        return 2.0 * frac - 1.0
    if name == "triangle":
        return 2.0 * np.abs(2.0 * frac - 1.0) - 1.0
    raise ValidationError(f"unknown waveform {name}")


def synth_click_track(tempo_bpm: float, duration: float,
                      sample_rate: int = 22050):
    """Pure metronome: clicks only, no tone bed. Returns (AudioClip, BeatGrid).

    The beat-tracker accuracy suite uses these; the style-timbred tracks
    from synth_music add an arpeggio whose metrical structure is a harder
    (and not ground-truth-resolvable) tempo disambiguation problem.
    """
    if not (60.0 <= tempo_bpm <= 180.0):
        raise ValidationError(f"tempo {tempo_bpm} outside [60, 180]")
    if duration < MIN_DURATION:
        raise ValidationError(f"duration {duration}s too short (min {MIN_DURATION}s)")
    period = 60.0 / tempo_bpm
    n = int(round(duration * sample_rate))
    out = np.zeros(n)
    click_n = int(CLICK_DUR * sample_rate)
    burst = CLICK_AMP * np.sin(2 * np.pi * CLICK_FREQ * np.arange(click_n) / sample_rate)
    burst *= np.hanning(click_n)
    beats = []
    b = FIRST_BEAT_TIME
    while b <= duration - END_MARGIN + 1e-9:
        s0 = int(round(b * sample_rate))
        out[s0 : min(n, s0 + click_n)] += burst[: max(0, min(click_n, n - s0))]
        beats.append(round(b, 9))
        b += period
    clip = AudioClip(samples=np.clip(out, -0.98, 0.98), sample_rate=sample_rate)
    return clip, BeatGrid(beat_times=np.asarray(beats), tempo_bpm=tempo_bpm)


def synth_music(style: DanceStyle, tempo_bpm: float, duration: float,
                rng: RngStream, sample_rate: int = 22050):
    """Render (AudioClip, BeatGrid) for a style at the given tempo.

    The returned grid lists the exact click times: FIRST_BEAT_TIME + k * period
    for every beat that fits before duration - END_MARGIN.
    """
    lo, hi = style.tempo_range
    if not (lo <= tempo_bpm <= hi):
        raise ValidationError(
            f"tempo {tempo_bpm} outside style '{style.name}' range [{lo}, {hi}]"
        )
    if duration < MIN_DURATION:
        raise ValidationError(f"duration {duration}s too short (min {MIN_DURATION}s)")
    period = 60.0 / tempo_bpm
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    beats = []
    b = FIRST_BEAT_TIME
    while b <= duration - END_MARGIN + 1e-9:
        beats.append(round(b, 9))
        b += period
    out = np.zeros(n)

    # eighth-note arpeggio in the style's timbre, slightly detuned per track
    detune = float(1.0 + 0.02 * (rng.uniform(-1.0, 1.0)))
    note_len = period / 2.0
    k = 0
    start = FIRST_BEAT_TIME
    while start < duration - END_MARGIN:
        semitones = style.timbre.intervals[k % len(style.timbre.intervals)]
        freq = style.timbre.base_freq * detune * 2.0 ** (semitones / 12.0)
        s0 = int(round(start * sample_rate))
        s1 = min(n, int(round((start + note_len) * sample_rate)))
        seg_t = t[s0:s1] - start
        env = np.minimum(seg_t / 0.005, 1.0) * np.exp(-seg_t / (note_len * 0.7))
        out[s0:s1] += TONE_AMP * env * _waveform(style.timbre.waveform, freq * seg_t)
        start += note_len
        k += 1

    # beat clicks
    click_n = int(CLICK_DUR * sample_rate)
    burst = CLICK_AMP * np.sin(2 * np.pi * CLICK_FREQ * np.arange(click_n) / sample_rate)
    burst *= np.hanning(click_n)
    for b in beats:
        s0 = int(round(b * sample_rate))
        s1 = min(n, s0 + click_n)
        out[s0:s1] += burst[: s1 - s0]

    clip = AudioClip(samples=np.clip(out, -0.98, 0.98), sample_rate=sample_rate)
    return clip, BeatGrid(beat_times=np.asarray(beats), tempo_bpm=tempo_bpm)
