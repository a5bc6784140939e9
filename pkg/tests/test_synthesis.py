"""Compositing, export round-trips, and generation-gate error contracts."""

import numpy as np
import pytest

from flowdance.core import AudioClip, VideoTensor, seeded_rng
from flowdance.core.io import load_audio, load_video_frames, quantize8, read_json
from flowdance.diffusion.unet import DenoiserParams
from flowdance.diffusion.volume import VolumeStats
from flowdance.errors import ValidationError
from flowdance.flowae.model import AutoencoderParams
from flowdance.musicenc.encoder import MusicEncoderParams
from flowdance.musicenc.movement import MovementEmbedderParams, MovementNet
from flowdance.musicenc.style import StyleEmbedderParams, StyleNet
from flowdance.synthesis import composite_subject, export_result, generate_dance_video

RNG = seeded_rng(31)


def frame(seed=0, size=16):
    return seeded_rng(seed).uniform(0, 1, (size, size, 3), dtype=np.float64).astype(np.float32)


class TestCompositeSubject:
    def test_full_mask_is_subject(self):
        s, b = frame(1), frame(2)
        out = composite_subject(s, np.ones(s.shape[:2]), b)
        assert np.allclose(out, s)

    def test_zero_mask_is_background(self):
        s, b = frame(3), frame(4)
        out = composite_subject(s, np.zeros(s.shape[:2]), b)
        assert np.allclose(out, b)

    def test_half_mask_averages(self):
        s, b = frame(5), frame(6)
        out = composite_subject(s, np.full(s.shape[:2], 0.5), b)
        assert np.allclose(out, 0.5 * (s + b), atol=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            composite_subject(frame(7), np.ones((16, 16)), frame(8, size=32))

    def test_mask_range(self):
        s = frame(9)
        with pytest.raises(ValidationError):
            composite_subject(s, np.full(s.shape[:2], 1.5), s)


class TestExportResult:
    def test_round_trip_and_meta(self, tmp_path):
        frames = quantize8(RNG.uniform(0, 1, (5, 16, 16, 3)))
        video = VideoTensor(frames=frames, fps=10.0)
        music = AudioClip(samples=RNG.uniform(-0.5, 0.5, (22050,), dtype=np.float64))
        out = export_result(video, music, tmp_path / "exp", seed=77,
                            model_hashes={"denoiser": "abc"})
        back = load_video_frames(out / "frames", fps=10.0)
        assert np.array_equal(back.frames, video.frames)
        meta = read_json(out / "meta.json")
        assert meta["seed"] == 77
        assert meta["model_hashes"]["denoiser"] == "abc"
        # audio trimmed to video duration (0.5 s) within one sample
        clip = load_audio(out / "audio.wav")
        assert abs(clip.duration - 0.5) <= 1.0 / 22050


def untrained_stack():
    ae = AutoencoderParams.initialize(seeded_rng(1), cz=4, width=8, frame_size=16)
    style = StyleEmbedderParams(net=StyleNet(seeded_rng(2), 2), n_styles=2)
    movement = MovementEmbedderParams(net=MovementNet(seeded_rng(3)))
    music = MusicEncoderParams(style=style, movement=movement)
    denoiser = DenoiserParams.initialize(seeded_rng(4), cz=4, cond_dim=145,
                                         n_frames=9, T=32, channels=(8, 8),
                                         mid_channels=8)
    return ae, music, denoiser


class TestGenerationGates:
    def test_untrained_autoencoder_named(self):
        ae, music, denoiser = untrained_stack()
        clip = AudioClip(samples=np.zeros(22050))
        with pytest.raises(ValidationError, match="stage-1"):
            generate_dance_video(frame(), clip, 8, 20.0, ae, music, denoiser, seeded_rng(0))

    def test_untrained_music_named(self):
        ae, music, denoiser = untrained_stack()
        ae.trained = True
        clip = AudioClip(samples=np.zeros(22050))
        with pytest.raises(ValidationError, match="style embedder"):
            generate_dance_video(frame(), clip, 8, 20.0, ae, music, denoiser, seeded_rng(0))

    def test_untrained_denoiser_named(self):
        ae, music, denoiser = untrained_stack()
        ae.trained = True
        music.style.trained = True
        music.movement.trained = True
        clip = AudioClip(samples=np.zeros(22050))
        with pytest.raises(ValidationError, match="denoiser"):
            generate_dance_video(frame(), clip, 8, 20.0, ae, music, denoiser, seeded_rng(0))

    def test_music_too_short(self):
        ae, music, denoiser = untrained_stack()
        ae.trained = True
        music.style.trained = True
        music.movement.trained = True
        denoiser.trained = True
        denoiser.stats = VolumeStats(mean=np.zeros(3, dtype=np.float32),
                                     std=np.ones(3, dtype=np.float32))
        clip = AudioClip(samples=np.zeros(2205))  # 0.1 s
        with pytest.raises(ValidationError, match="music lasts"):
            generate_dance_video(frame(), clip, 16, 20.0, ae, music, denoiser, seeded_rng(0))

    def test_too_few_frames(self):
        ae, music, denoiser = untrained_stack()
        ae.trained = True
        music.style.trained = True
        music.movement.trained = True
        denoiser.trained = True
        clip = AudioClip(samples=np.zeros(22050))
        with pytest.raises(ValidationError, match="n_frames"):
            generate_dance_video(frame(), clip, 1, 20.0, ae, music, denoiser, seeded_rng(0))
