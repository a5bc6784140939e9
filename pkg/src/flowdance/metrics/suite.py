"""Batch evaluation: per-sample metrics plus per-style and overall means.

The report schema reserves fvd/lpips/clip_score keys as null: those need
large pretrained networks and are intentionally not computed here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from flowdance.core.types import AudioClip, BeatGrid, VideoTensor
from flowdance.errors import ValidationError
from flowdance.metrics.align import av_align, mm_align_2d, DEFAULT_SIGMA_FRAMES, MATCH_WINDOW_FRAMES, video_motion_series
from flowdance.metrics.beats import BeatSequence, kinematic_beats
from flowdance.metrics.image import encode_psnr, psnr, ssim


@dataclass
class EvalSample:
    """One video to score, with its music context and optional GT pairing."""

    sample_id: str
    style_id: int
    video: VideoTensor
    music_beats: BeatGrid
    audio: AudioClip | None = None
    reference: VideoTensor | None = None


@dataclass
class MetricReport:
    config: dict
    per_sample: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        rows = []
        for row in self.per_sample:
            row = dict(row)
            if row.get("psnr") is not None:
                row["psnr"] = encode_psnr(row["psnr"])
            rows.append(row)
        aggs = {}
        for scope, values in self.aggregates.items():
            aggs[scope] = {
                k: (encode_psnr(v) if k == "psnr" and v is not None else v)
                for k, v in values.items()
            }
        return {
            "config": self.config,
            "per_sample": rows,
            "aggregates": aggs,
            "fvd": None,
            "lpips": None,
            "clip_score": None,
        }


def _video_kinematic_beats(video: VideoTensor) -> BeatSequence:
    series = video_motion_series(video)
    beats = kinematic_beats(series)
    # step i spans frames [i, i+1]: center the beat between them
    return BeatSequence(times=beats.times + 0.5)


def _pair_video_metrics(video: VideoTensor, reference: VideoTensor):
    n = min(video.n_frames, reference.n_frames)
    ssim_vals = [ssim(video.frames[i], reference.frames[i]) for i in range(n)]
    mse = float(np.mean((video.frames[:n].astype(np.float64)
                         - reference.frames[:n].astype(np.float64)) ** 2))
    psnr_val = math.inf if mse == 0.0 else 10.0 * math.log10(1.0 / mse)
    return float(np.mean(ssim_vals)), psnr_val


def _mean(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    if any(math.isinf(v) for v in vals):
        return math.inf
    return float(np.mean(vals))


def evaluate_suite(samples: list, sigma: float = DEFAULT_SIGMA_FRAMES) -> MetricReport:
    """Score a set of videos; aggregates are plain means of per-sample values."""
    ids = [s.sample_id for s in samples]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValidationError(f"duplicate sample ids: {dupes}")
    if not samples:
        raise ValidationError("no samples to evaluate")

    rows = []
    for s in samples:
        row = {"id": s.sample_id, "style_id": s.style_id,
               "ssim": None, "psnr": None, "mm_align_2d": None, "av_align": None}
        if s.reference is not None:
            row["ssim"], row["psnr"] = _pair_video_metrics(s.video, s.reference)
        if not s.music_beats.is_empty:
            music = BeatSequence(times=s.music_beats.beat_times * s.video.fps)
            try:
                kin = _video_kinematic_beats(s.video)
                row["mm_align_2d"] = mm_align_2d(kin, music, sigma=sigma)
            except ValidationError:
                row["mm_align_2d"] = None
        if s.audio is not None:
            try:
                row["av_align"] = av_align(s.video, s.audio)
            except ValidationError:
                row["av_align"] = None
        rows.append(row)

    metric_keys = ("ssim", "psnr", "mm_align_2d", "av_align")
    aggregates = {"overall": {k: _mean(r[k] for r in rows) for k in metric_keys}}
    aggregates["overall"]["count"] = len(rows)
    for style in sorted({r["style_id"] for r in rows}):
        group = [r for r in rows if r["style_id"] == style]
        agg = {k: _mean(r[k] for r in group) for k in metric_keys}
        agg["count"] = len(group)
        aggregates[f"style_{style}"] = agg

    return MetricReport(
        config={"sigma_frames": sigma, "match_window_frames": MATCH_WINDOW_FRAMES},
        per_sample=rows,
        aggregates=aggregates,
    )
