from flowdance.metrics.align import (
    align_score_from_peaks,
    av_align,
    mm_align_2d,
    video_motion_series,
)
from flowdance.metrics.beats import BeatSequence, kinematic_beats, pick_peaks
from flowdance.metrics.image import PSNR_EXACT, psnr, ssim
from flowdance.metrics.suite import MetricReport, evaluate_suite

__all__ = [
    "BeatSequence",
    "MetricReport",
    "PSNR_EXACT",
    "align_score_from_peaks",
    "av_align",
    "evaluate_suite",
    "kinematic_beats",
    "mm_align_2d",
    "pick_peaks",
    "psnr",
    "ssim",
    "video_motion_series",
]
