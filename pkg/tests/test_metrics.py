"""Metric oracles: closed-form alignment cases, SSIM/PSNR identities,
greedy-vs-exhaustive matching, kinematic beat extraction."""

import math

import numpy as np
import pytest

from flowdance.core import AudioClip, VideoTensor, seeded_rng
from flowdance.errors import ValidationError
from flowdance.metrics import (
    PSNR_EXACT,
    align_score_from_peaks,
    av_align,
    kinematic_beats,
    mm_align_2d,
    psnr,
    ssim,
    video_motion_series,
)
from flowdance.metrics.align import greedy_match
from flowdance.metrics.beats import BeatSequence
from flowdance.metrics.image import ssim_window_map


def seq(*times):
    return BeatSequence(times=np.asarray(times, dtype=np.float64))


class TestMmAlign:
    def test_identical_sequences_exact_one(self):
        assert mm_align_2d(seq(3, 9, 15), seq(3, 9, 15)) == 1.0

    def test_two_beat_case_to_4dp(self):
        # independent evaluation: beat 10 -> d=0, beat 20 -> d=2,
        # mean of exp(0) and exp(-4/18)
        expected = (1.0 + math.exp(-4.0 / 18.0)) / 2.0
        got = mm_align_2d(seq(10, 20), seq(10, 22), sigma=3)
        assert got == pytest.approx(expected, abs=1e-12)
        assert abs(got - 0.9003) < 1e-4

    def test_sigma_offset_case(self):
        got = mm_align_2d(seq(13), seq(10), sigma=3)
        assert got == pytest.approx(math.exp(-0.5), abs=1e-12)

    def test_empty_is_error(self):
        with pytest.raises(ValidationError):
            mm_align_2d(seq(), seq(1))
        with pytest.raises(ValidationError):
            mm_align_2d(seq(1), seq())

    def test_duplication_invariance(self):
        # BeatSequence enforces ascending order, so duplicates are modeled
        # as epsilon-separated entries; min-distance semantics are unchanged.
        fx = seq(2, 7, 11)
        fy1 = seq(3, 8, 12)
        fy2 = seq(3, 3.0000001, 8, 12, 12.0000001)
        assert mm_align_2d(fx, fy1) == pytest.approx(mm_align_2d(fx, fy2), abs=1e-6)

    def test_monotone_as_beat_moves_away(self):
        fy = seq(10)
        scores = [mm_align_2d(seq(10 + d), fy) for d in (0.0, 1.0, 2.0, 4.0, 8.0)]
        assert all(a >= b for a, b in zip(scores, scores[1:]))
        assert scores[0] == 1.0

    def test_range(self):
        rng = seeded_rng(0)
        for _ in range(20):
            fx = np.sort(rng.uniform(0, 40, (5,), dtype=np.float64))
            fy = np.sort(rng.uniform(0, 40, (4,), dtype=np.float64))
            fx += np.arange(5) * 1e-6
            fy += np.arange(4) * 1e-6
            s = mm_align_2d(BeatSequence(times=fx), BeatSequence(times=fy))
            assert 0.0 < s <= 1.0


class TestKinematicBeats:
    def test_abs_sine_minima(self):
        t = np.arange(21, dtype=np.float64)
        series = np.abs(np.sin(2 * np.pi * t / 10.0))
        got = kinematic_beats(series).times
        assert set(got) == {5.0, 10.0, 15.0}  # interior zeros of |sin|

    def test_monotone_series_empty(self):
        assert len(kinematic_beats(np.linspace(0, 1, 30))) == 0

    def test_constant_series_empty(self):
        assert len(kinematic_beats(np.ones(30))) == 0

    def test_joint_track_offset(self):
        # figure moving, pausing at frame 5, moving again
        pos = np.zeros((11, 2, 2))
        x = np.array([0, 1.0, 2.0, 2.8, 3.0, 3.05, 3.1, 3.4, 4.2, 5.2, 6.2])
        pos[:, 0, 0] = x
        pos[:, 1, 0] = x
        beats = kinematic_beats(pos).times
        assert len(beats) == 1
        assert abs(beats[0] - 5.0) <= 1.0

    def test_prominence_suppresses_noise(self):
        base = np.abs(np.sin(2 * np.pi * np.arange(41) / 20.0)) + 1.0
        noisy = base.copy()
        noisy[7] -= 0.005  # tiny dip, prominence below 10% of range
        assert set(kinematic_beats(noisy).times) == set(kinematic_beats(base).times)


class TestMotionSeries:
    def test_static_zeroes(self):
        v = VideoTensor(frames=np.full((5, 16, 16, 3), 0.5), fps=10)
        assert np.allclose(video_motion_series(v), 0.0)

    def test_alternating_max(self):
        frames = np.zeros((6, 16, 16, 3), dtype=np.float32)
        frames[1::2] = 1.0
        v = VideoTensor(frames=frames, fps=10)
        assert np.allclose(video_motion_series(v), 1.0)

    def test_single_frame_error(self):
        v = VideoTensor(frames=np.zeros((1, 16, 16, 3)), fps=10)
        with pytest.raises(ValidationError):
            video_motion_series(v)


def exhaustive_max_matches(a, b, window=1):
    """Optimal one-to-one matching size by brute-force recursion."""
    a = list(a)
    b = list(b)

    def rec(i, used):
        if i == len(a):
            return 0
        best = rec(i + 1, used)
        for j in range(len(b)):
            if j not in used and abs(a[i] - b[j]) <= window:
                best = max(best, 1 + rec(i + 1, used | {j}))
        return best

    return rec(0, frozenset())


class TestAvAlign:
    def test_identical_trains(self):
        assert align_score_from_peaks([2, 9, 17], [2, 9, 17]) == 1.0

    def test_disjoint_trains(self):
        assert align_score_from_peaks([2, 10], [5, 14]) == 0.0

    def test_spec_case_half(self):
        assert align_score_from_peaks([2, 10, 18], [2, 13, 18]) == 0.5

    def test_symmetry(self):
        rng = seeded_rng(1)
        for _ in range(20):
            a = np.unique(rng.integers(0, 25, (5,)))
            b = np.unique(rng.integers(0, 25, (4,)))
            if a.size == 0 or b.size == 0:
                continue
            assert align_score_from_peaks(a, b) == align_score_from_peaks(b, a)

    def test_greedy_equals_exhaustive(self):
        rng = seeded_rng(2)
        for _ in range(200):
            na = int(rng.integers(0, 7))
            nb = int(rng.integers(0, 7))
            a = np.unique(rng.integers(0, 20, (na,)))
            b = np.unique(rng.integers(0, 20, (nb,)))
            if a.size == 0 and b.size == 0:
                continue
            assert greedy_match(a.astype(float), b.astype(float)) == exhaustive_max_matches(a, b)

    def test_both_empty_error(self):
        with pytest.raises(ValidationError):
            align_score_from_peaks([], [])

    def test_av_align_end_to_end_shapes(self):
        rng = seeded_rng(3)
        frames = np.clip(rng.uniform(0, 1, (8, 16, 16, 3)), 0, 1)
        video = VideoTensor(frames=frames, fps=8)
        audio = AudioClip(samples=rng.uniform(-0.8, 0.8, (22050,), dtype=np.float64))
        score = av_align(video, audio)
        assert 0.0 <= score <= 1.0

    def test_av_align_audio_too_short(self):
        video = VideoTensor(frames=np.zeros((8, 16, 16, 3)), fps=4)  # 2s
        audio = AudioClip(samples=np.zeros(22050))  # 1s
        with pytest.raises(ValidationError):
            av_align(video, audio)


class TestSsimPsnr:
    def img(self, seed, size=32):
        return seeded_rng(seed).uniform(0, 1, (size, size, 3), dtype=np.float64)

    def test_ssim_self_is_one(self):
        x = self.img(0)
        assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_ssim_symmetric(self):
        x, y = self.img(1), self.img(2)
        assert ssim(x, y) == pytest.approx(ssim(y, x), abs=1e-12)

    def test_ssim_range(self):
        x, y = self.img(3), self.img(4)
        assert -1.0 <= ssim(x, y) <= 1.0

    def test_ssim_translation_invariance_interior(self):
        x, y = self.img(5, 40)[..., 0], self.img(6, 40)[..., 0]
        full = ssim_window_map(x, y).reshape(9, 9)
        shifted = ssim_window_map(x[4:, :], y[4:, :]).reshape(8, 9)
        assert np.allclose(full[1:, :], shifted, atol=1e-12)

    def test_ssim_shape_mismatch(self):
        with pytest.raises(ValidationError):
            ssim(np.zeros((16, 16)), np.zeros((16, 8)))

    def test_psnr_exact_sentinel(self):
        x = self.img(7)
        assert psnr(x, x) is PSNR_EXACT

    def test_psnr_quarter_mse(self):
        x = np.zeros((16, 16))
        y = np.full((16, 16), 0.5)
        assert psnr(x, y) == pytest.approx(6.0206, abs=1e-4)

    def test_psnr_shape_mismatch(self):
        with pytest.raises(ValidationError):
            psnr(np.zeros((4, 4)), np.zeros((5, 4)))
