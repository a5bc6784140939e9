"""Dance style definitions: choreography keyposes plus a music timbre.

A keypose is a pose vector [root_dx, root_dy, torso_tilt, head_tilt,
l_arm, r_arm, l_leg, r_leg]: root offsets in pixels (relative to frame
scale 64; scaled for other sizes), angles in radians. Styles differ in
both choreography and timbre so that style classification and music-motion
retrieval have real signal to learn.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from flowdance.errors import ValidationError

POSE_DIM = 8
WAVEFORMS = ("sine", "square", "saw", "triangle")


@dataclass(frozen=True)
class Timbre:
    waveform: str
    base_freq: float
    intervals: tuple  # semitone offsets for the eighth-note arpeggio


@dataclass(frozen=True)
class DanceStyle:
    style_id: int
    name: str
    tempo_range: tuple  # (bpm_lo, bpm_hi)
    keyposes: np.ndarray  # (K, POSE_DIM)
    timbre: Timbre
    motion_scale: float = 1.0  # complexity knob: scales pose deviations

    def __post_init__(self):
        kp = np.asarray(self.keyposes, dtype=np.float64)
        if kp.ndim != 2 or kp.shape[1] != POSE_DIM or kp.shape[0] < 2:
            raise ValidationError(
                f"style {self.name}: need >= 2 keyposes of dim {POSE_DIM}, got {kp.shape}"
            )
        lo, hi = self.tempo_range
        if not (60.0 <= lo < hi <= 180.0):
            raise ValidationError(f"style {self.name}: tempo range {self.tempo_range} outside [60, 180]")
        if self.timbre.waveform not in WAVEFORMS:
            raise ValidationError(f"style {self.name}: unknown waveform {self.timbre.waveform}")
        kp = kp.copy()
        kp.setflags(write=False)
        object.__setattr__(self, "keyposes", kp)


def _poses(rows) -> np.ndarray:
    return np.asarray(rows, dtype=np.float64)


_BASE_STYLES = [
    dict(
        name="pulse",
        tempo_range=(100.0, 140.0),
        # big alternating arm swings with a horizontal sway
        keyposes=_poses([
            [-7.0, 0.0, 0.00, 0.0, -2.4, -0.7, 1.9, 1.2],
            [7.0, 0.0, 0.00, 0.0, -0.7, -2.4, 1.2, 1.9],
        ]),
        timbre=Timbre("sine", 220.0, (0, 3, 7, 3)),
    ),
    dict(
        name="wave",
        tempo_range=(120.0, 160.0),
        # arms wave in opposition, body bounces vertically
        keyposes=_poses([
            [0.0, -3.5, 0.15, 0.3, -2.8, -0.4, 1.7, 1.4],
            [0.0, 2.5, -0.15, -0.3, -0.4, -2.8, 1.4, 1.7],
            [0.0, -1.0, 0.00, 0.0, -1.6, -1.6, 1.8, 1.3],
        ]),
        timbre=Timbre("square", 330.0, (0, 5, 7, 12)),
    ),
    dict(
        name="step",
        tempo_range=(140.0, 180.0),
        # side steps: legs scissor while the root slides
        keyposes=_poses([
            [-9.0, 0.0, 0.05, 0.0, -1.9, -1.2, 2.2, 1.0],
            [9.0, 0.0, -0.05, 0.0, -1.2, -1.9, 1.0, 2.2],
        ]),
        timbre=Timbre("saw", 165.0, (0, 4, 9, 4)),
    ),
    dict(
        name="tilt",
        tempo_range=(110.0, 150.0),
        # torso leans with arms held wide, slight circular root path
        keyposes=_poses([
            [-4.0, -2.0, 0.45, -0.2, -2.1, -1.0, 1.8, 1.1],
            [4.0, -2.0, -0.45, 0.2, -1.0, -2.1, 1.1, 1.8],
            [0.0, 3.0, 0.00, 0.0, -1.55, -1.55, 1.6, 1.6],
        ]),
        timbre=Timbre("triangle", 262.0, (0, 7, 12, 7)),
    ),
]


def default_styles(n_styles: int = 4) -> list:
    """The hand-designed styles, extended procedurally beyond four."""
    if n_styles < 2:
        raise ValidationError("need at least two styles")
    styles = []
    for sid in range(n_styles):
        base = _BASE_STYLES[sid % len(_BASE_STYLES)]
        variant = sid // len(_BASE_STYLES)
        keyposes = np.asarray(base["keyposes"], dtype=np.float64).copy()
        timbre = base["timbre"]
        tempo = base["tempo_range"]
        name = base["name"]
        if variant:
            # derive a distinct sibling: shifted pitch, rolled arpeggio,
            # mirrored and rescaled choreography
            keyposes = np.roll(keyposes, variant, axis=0) * (1.0 + 0.18 * variant)
            keyposes[:, 0] *= -1.0
            iv = tuple(np.roll(np.asarray(timbre.intervals) + 2 * variant, variant))
            wf = WAVEFORMS[(WAVEFORMS.index(timbre.waveform) + variant) % len(WAVEFORMS)]
            timbre = Timbre(wf, timbre.base_freq * (1.25**variant), tuple(int(x) for x in iv))
            name = f"{name}{variant + 1}"
        styles.append(
            DanceStyle(
                style_id=sid,
                name=name,
                tempo_range=tempo,
                keyposes=keyposes,
                timbre=timbre,
            )
        )
    _check_pairwise_distinct(styles)
    return styles


def _check_pairwise_distinct(styles: list) -> None:
    for i, a in enumerate(styles):
        for b in styles[i + 1 :]:
            same_timbre = (
                a.timbre.waveform == b.timbre.waveform
                and abs(a.timbre.base_freq - b.timbre.base_freq) < 1.0
            )
            same_poses = a.keyposes.shape == b.keyposes.shape and np.allclose(
                a.keyposes, b.keyposes
            )
            if same_timbre or same_poses:
                raise ValidationError(f"styles {a.name} and {b.name} are not distinct")
