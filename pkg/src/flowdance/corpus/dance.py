"""Procedural dancer: pose interpolation locked to beats, rendered frames.

The figure eases between style keyposes with a cosine profile, reaching a
pose exactly on each beat, so joint speed has a local minimum on every
beat frame: the motion-beat coupling the alignment metrics measure is true
by construction. Before the first beat and after the last one the figure
keeps moving along virtual beat-period segments, which avoids spurious
speed minima at the clip boundaries.
"""

from __future__ import annotations

import numpy as np

from flowdance.core.rng import RngStream
from flowdance.core.types import BeatGrid, VideoTensor
from flowdance.corpus.styles import DanceStyle
from flowdance.errors import ValidationError

N_JOINTS = 10
JOINT_NAMES = (
    "head", "torso",
    "l_shoulder", "r_shoulder", "l_elbow", "r_elbow",
    "l_hip", "r_hip", "l_knee", "r_knee",
)

# bone connections drawn as segments (indices into JOINT_NAMES)
BONES = (
    (0, 1),  # head-torso
    (2, 3),  # collar
    (2, 4), (3, 5),  # upper arms
    (6, 7),  # pelvis bar
    (6, 8), (7, 9),  # thighs
)

# proportions at frame scale 64 (pixels)
TORSO_LEN = 11.0
HEAD_LEN = 5.0
SHOULDER_OFF = 5.5
HIP_OFF = 3.5
ARM_LEN = 8.5
LEG_LEN = 9.5
HEAD_RADIUS = 2.9
LINE_HALF_WIDTH = 1.7

# bump when rendering output changes (cache invalidation in tests)
RENDER_VERSION = 2


def forward_kinematics(pose: np.ndarray, center: np.ndarray, scale: float) -> np.ndarray:
    """Joint positions (N_JOINTS, 2) for one pose vector; rigid bone lengths."""
    root_dx, root_dy, torso_tilt, head_tilt, l_arm, r_arm, l_leg, r_leg = pose
    pelvis = center + scale * np.array([root_dx, root_dy])

    def polar(angle, length):
        # angle 0 points right, pi/2 points down (image coordinates)
        return scale * length * np.array([np.cos(angle), np.sin(angle)])

    up = -np.pi / 2 + torso_tilt
    torso = pelvis + polar(up, TORSO_LEN)
    head = torso + polar(up + head_tilt, HEAD_LEN)
    side = up + np.pi / 2
    l_sho = torso + polar(side, SHOULDER_OFF)
    r_sho = torso - polar(side, SHOULDER_OFF)
    l_hip = pelvis + polar(side, HIP_OFF)
    r_hip = pelvis - polar(side, HIP_OFF)
    l_elb = l_sho + polar(l_arm, ARM_LEN)
    r_elb = r_sho + polar(np.pi - r_arm, ARM_LEN)
    l_kne = l_hip + polar(l_leg, LEG_LEN)
    r_kne = r_hip + polar(np.pi - r_leg, LEG_LEN)
    return np.stack([head, torso, l_sho, r_sho, l_elb, r_elb, l_hip, r_hip, l_kne, r_kne])


def _pose_at(time: float, beats: np.ndarray, period: float, keyposes: np.ndarray) -> np.ndarray:
    """Cosine-eased interpolation hitting keypose k on beat k."""
    n_poses = keyposes.shape[0]
    if beats.size == 0:
        return keyposes[0]
    if time < beats[0]:
        seg_start, seg_end = beats[0] - period, beats[0]
        idx = -1
    else:
        idx = int(np.searchsorted(beats, time, side="right")) - 1
        seg_start = beats[idx]
        seg_end = beats[idx + 1] if idx + 1 < beats.size else beats[idx] + period
    u = np.clip((time - seg_start) / (seg_end - seg_start), 0.0, 1.0)
    s = 0.5 * (1.0 - np.cos(np.pi * u))
    a = keyposes[idx % n_poses]
    b = keyposes[(idx + 1) % n_poses]
    return (1.0 - s) * a + s * b


def _background(size: int, rng: RngStream) -> np.ndarray:
    """Smooth gradient plus soft blobs; low-frequency so it reconstructs well."""
    ys, xs = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    u = xs / (size - 1)
    v = ys / (size - 1)
    c0 = rng.uniform(0.25, 0.75, (3,), dtype=np.float64)
    c1 = rng.uniform(0.25, 0.75, (3,), dtype=np.float64)
    direction = rng.uniform(0.0, 2 * np.pi)
    ramp = 0.5 + 0.5 * (np.cos(direction) * (u - 0.5) + np.sin(direction) * (v - 0.5)) * 2.0
    bg = ramp[..., None] * c1 + (1.0 - ramp[..., None]) * c0
    for _ in range(2):
        cx = rng.uniform(0.2, 0.8) * size
        cy = rng.uniform(0.2, 0.8) * size
        sig = rng.uniform(0.15, 0.3) * size
        tint = rng.uniform(-0.18, 0.18, (3,), dtype=np.float64)
        blob = np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2 * sig**2))
        bg = bg + blob[..., None] * tint
    return np.clip(bg, 0.08, 0.92)


def _segment_coverage(xs, ys, p, q, half_width):
    """Anti-aliased coverage of segment p-q over the pixel grid."""
    d = q - p
    L2 = float(d @ d)
    if L2 < 1e-12:
        dist = np.hypot(xs - p[0], ys - p[1])
    else:
        tproj = ((xs - p[0]) * d[0] + (ys - p[1]) * d[1]) / L2
        tproj = np.clip(tproj, 0.0, 1.0)
        dist = np.hypot(xs - (p[0] + tproj * d[0]), ys - (p[1] + tproj * d[1]))
    return np.clip(half_width + 0.5 - dist, 0.0, 1.0)


def render_figure(joints: np.ndarray, background: np.ndarray, color: np.ndarray,
                  scale: float) -> np.ndarray:
    size = background.shape[0]
    ys, xs = np.meshgrid(np.arange(size, dtype=np.float64),
                         np.arange(size, dtype=np.float64), indexing="ij")
    alpha = np.zeros((size, size))
    hw = LINE_HALF_WIDTH * scale
    for a, b in BONES:
        alpha = np.maximum(alpha, _segment_coverage(xs, ys, joints[a], joints[b], hw))
    # spine from pelvis midpoint to torso
    pelvis_mid = 0.5 * (joints[6] + joints[7])
    alpha = np.maximum(alpha, _segment_coverage(xs, ys, pelvis_mid, joints[1], hw))
    # head disc
    head_d = np.hypot(xs - joints[0][0], ys - joints[0][1])
    alpha = np.maximum(alpha, np.clip(HEAD_RADIUS * scale + 0.5 - head_d, 0.0, 1.0))
    return background * (1.0 - alpha[..., None]) + color[None, None, :] * alpha[..., None]


def synth_dance(style: DanceStyle, beats: BeatGrid, n_frames: int, fps: float,
                rng: RngStream, size: int = 64):
    """Render (VideoTensor, joint track (N, 10, 2)) for a beat grid."""
    if n_frames < 2:
        raise ValidationError("need at least two frames")
    if not beats.is_empty and n_frames / fps + 1e-9 < beats.beat_times[-1]:
        raise ValidationError(
            f"video of {n_frames / fps:.2f}s cannot cover last beat at {beats.beat_times[-1]:.2f}s"
        )
    scale = size / 64.0
    period = 60.0 / beats.tempo_bpm if beats.tempo_bpm > 0 else 0.5

    amp = float(rng.uniform(0.85, 1.15))
    rotation = int(rng.integers(0, style.keyposes.shape[0]))
    keyposes = np.roll(style.keyposes, -rotation, axis=0) * amp * style.motion_scale
    color = rng.uniform(0.02, 0.2, (3,), dtype=np.float64)
    background = _background(size, rng.substream("background"))
    center = np.array([size / 2.0, size * 0.58])

    frames = np.empty((n_frames, size, size, 3), dtype=np.float32)
    joints = np.empty((n_frames, N_JOINTS, 2))
    for i in range(n_frames):
        pose = _pose_at(i / fps, beats.beat_times, period, keyposes)
        j = forward_kinematics(pose, center, scale)
        joints[i] = j
        frames[i] = render_figure(j, background, color, scale).astype(np.float32)
    video = VideoTensor(frames=np.clip(frames, 0.0, 1.0), fps=fps)
    return video, joints
