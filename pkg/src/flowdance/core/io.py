"""Lossless persistence: PNG frame directories, 16-bit WAV, JSON sidecars.

Frame directories hold frame_00000.png ... frame_NNNNN.png at 8-bit depth;
audio is PCM 16-bit mono WAV. Round-trips are exact at those quantization
depths. JSON is written with sorted keys and fixed separators so identical
data always produces identical bytes.
"""

from __future__ import annotations

import json
import re
import wave
from pathlib import Path

import numpy as np
from PIL import Image

from flowdance.core.types import AudioClip, VideoTensor
from flowdance.errors import ValidationError

_FRAME_RE = re.compile(r"^frame_(\d{5})\.png$")


def quantize8(frames: np.ndarray) -> np.ndarray:
    """Round [0,1] floats to the nearest 8-bit level and back."""
    return np.rint(np.clip(frames, 0.0, 1.0) * 255.0).astype(np.float32) / 255.0


def quantize16(samples: np.ndarray) -> np.ndarray:
    """Round [-1,1] floats to the nearest 16-bit level and back."""
    return np.rint(np.clip(samples, -1.0, 1.0) * 32767.0).astype(np.float32) / 32767.0


def save_video_frames(video: VideoTensor, dir_path) -> None:
    out = Path(dir_path)
    out.mkdir(parents=True, exist_ok=True)
    data = np.rint(video.frames * 255.0).astype(np.uint8)
    for i in range(video.n_frames):
        Image.fromarray(data[i], mode="RGB").save(out / f"frame_{i:05d}.png")


def load_video_frames(dir_path, fps: float) -> VideoTensor:
    out = Path(dir_path)
    if not out.is_dir():
        raise ValidationError(f"not a directory: {out}")
    indices = {}
    for p in out.iterdir():
        m = _FRAME_RE.match(p.name)
        if m:
            indices[int(m.group(1))] = p
    if not indices:
        raise ValidationError(f"no frame_%05d.png files in {out}")
    n = max(indices) + 1
    missing = sorted(set(range(n)) - set(indices))
    if missing:
        raise ValidationError(f"frame sequence has gaps at indices {missing[:8]}")
    frames = []
    shape = None
    for i in range(n):
        arr = np.asarray(Image.open(indices[i]).convert("RGB"), dtype=np.uint8)
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise ValidationError(
                f"frame {i} has size {arr.shape[:2]}, expected {shape[:2]}"
            )
        frames.append(arr)
    stack = np.stack(frames).astype(np.float32) / 255.0
    return VideoTensor(frames=stack, fps=fps)


def save_audio(clip: AudioClip, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pcm = np.rint(np.clip(clip.samples, -1.0, 1.0) * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(clip.sample_rate)
        w.writeframes(pcm.tobytes())


def load_audio(path) -> AudioClip:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"no such audio file: {path}")
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1:
            raise ValidationError(f"{path.name}: expected mono, got {w.getnchannels()} channels")
        if w.getsampwidth() != 2:
            raise ValidationError(f"{path.name}: expected 16-bit PCM, got {8 * w.getsampwidth()}-bit")
        rate = w.getframerate()
        raw = w.readframes(w.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32767.0
    return AudioClip(samples=samples, sample_rate=rate)


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))
