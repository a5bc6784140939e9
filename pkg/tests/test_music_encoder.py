"""Music encoder: beat features, embedding layout, two-stage training,
freeze contract, contrastive properties, retrieval."""

import math

import numpy as np
import pytest

from flowdance.core import AudioClip, BeatGrid, seeded_rng
from flowdance.corpus import iter_samples
from flowdance.errors import ValidationError
from flowdance.musicenc import (
    MusicEmbedding,
    MusicEncoderParams,
    beat_features,
    embed_movement,
    embed_style,
    embedding_dim,
    encode_music,
)
from flowdance.musicenc.backbone import mel_input
from flowdance.musicenc.encoder import robust_tempo_bpm, split_embedding
from flowdance.musicenc.movement import (
    MovementNet,
    contrastive_loss,
    motion_statistics,
    retrieval_top_k,
    train_movement_embedder,
)
from flowdance.musicenc.style import train_style_embedder
from flowdance.audio.features import log_mel, onset_envelope
from flowdance.nn.autodiff import Tensor


class TestBeatFeatures:
    def test_spec_case(self):
        grid = BeatGrid(beat_times=np.array([0.1, 0.6]), tempo_bpm=120)
        e_b = beat_features(grid, 16, 20.0)
        assert e_b.shape == (17,)
        assert e_b[2] == 1.0 and e_b[12] == 1.0
        assert e_b[:16].sum() == 2.0
        assert e_b[16] == pytest.approx(0.5)

    def test_empty_grid(self):
        e_b = beat_features(BeatGrid(), 16, 20.0)
        assert np.array_equal(e_b, np.zeros(17, dtype=np.float32))

    def test_boundary_rounds_half_up(self):
        grid = BeatGrid(beat_times=np.array([0.5 / 20.0]), tempo_bpm=120)
        e_b = beat_features(grid, 8, 20.0)
        assert e_b[1] == 1.0 and e_b[0] == 0.0

    def test_beats_beyond_video_ignored(self):
        grid = BeatGrid(beat_times=np.array([0.1, 0.6, 1.1]), tempo_bpm=120)
        e_b = beat_features(grid, 8, 20.0)  # frame 22 outside
        assert e_b[:8].sum() == 1.0

    def test_tempo_clamp(self):
        grid = BeatGrid(beat_times=np.array([0.1]), tempo_bpm=300.0)
        assert beat_features(grid, 4, 20.0)[-1] == 1.0


class TestEmbeddingLayout:
    def test_dim_arithmetic(self):
        assert embedding_dim(16) == 64 + 64 + 16 + 1 == 145

    def test_split_recovers_arms(self):
        rng = seeded_rng(0)
        e_c = rng.normal((64,), dtype=np.float64)
        e_c /= np.linalg.norm(e_c)
        e_w = rng.normal((64,), dtype=np.float64)
        e_w /= np.linalg.norm(e_w)
        e_b = np.zeros(17)
        e_b[3] = 1.0
        e_b[-1] = 0.25
        emb = MusicEmbedding(e_c=e_c, e_w=e_w, e_b=e_b)
        c, w, b = split_embedding(emb.e, n_frames=16)
        assert np.allclose(c, emb.e_c) and np.allclose(w, emb.e_w) and np.allclose(b, emb.e_b)

    def test_norm_validation(self):
        bad = np.ones(64)
        with pytest.raises(ValidationError):
            MusicEmbedding(e_c=bad, e_w=bad / np.linalg.norm(bad), e_b=np.zeros(17))

    def test_indicator_validation(self):
        unit = np.zeros(64)
        unit[0] = 1.0
        e_b = np.zeros(17)
        e_b[2] = 0.5
        with pytest.raises(ValidationError):
            MusicEmbedding(e_c=unit, e_w=unit, e_b=e_b)


@pytest.fixture(scope="module")
def mini_samples(mini_corpus):
    train = list(iter_samples(mini_corpus, split="train"))
    test = list(iter_samples(mini_corpus, split="test"))
    return train, test


@pytest.fixture(scope="module")
def mini_style(mini_samples):
    train, test = mini_samples
    return train_style_embedder(
        [s.audio for s in train], np.array([s.style_id for s in train]), 2,
        seeded_rng(21), epochs=30, batch_size=8,
        holdout=([s.audio for s in test], np.array([s.style_id for s in test])),
    )


@pytest.fixture(scope="module")
def mini_movement(mini_samples):
    train, test = mini_samples
    return train_movement_embedder(
        [s.audio for s in train], [s.video for s in train], seeded_rng(22),
        epochs=30, batch_size=8,
        holdout=([s.audio for s in test], [s.video for s in test]),
    )


@pytest.fixture(scope="module")
def mini_encoder(mini_style, mini_movement):
    return MusicEncoderParams(style=mini_style, movement=mini_movement)


class TestStyleEmbedder:
    def test_held_out_accuracy(self, mini_style):
        assert mini_style.held_out_accuracy >= 0.9

    def test_unit_norm_and_determinism(self, mini_style, mini_samples):
        clip = mini_samples[1][0].audio
        a = embed_style(clip, mini_style)
        b = embed_style(clip, mini_style)
        assert np.array_equal(a, b)
        assert abs(np.linalg.norm(a) - 1.0) < 1e-6

    def test_untrained_raises(self, mini_samples):
        from flowdance.musicenc.style import StyleEmbedderParams, StyleNet

        params = StyleEmbedderParams(net=StyleNet(seeded_rng(0), 2), n_styles=2)
        with pytest.raises(ValidationError, match="untrained"):
            embed_style(mini_samples[0][0].audio, params)

    def test_single_style_rejected(self, mini_samples):
        train, _ = mini_samples
        with pytest.raises(ValidationError):
            train_style_embedder(
                [s.audio for s in train], np.zeros(len(train), dtype=int), 2, seeded_rng(1)
            )

    def test_freeze_contract(self, mini_samples):
        train, _ = mini_samples
        clips = [s.audio for s in train]
        labels = np.array([s.style_id for s in train])
        a = train_style_embedder(clips, labels, 2, seeded_rng(5), epochs=4,
                                 batch_size=8, stage_a_epochs=2)
        b = train_style_embedder(clips, labels, 2, seeded_rng(5), epochs=8,
                                 batch_size=8, stage_a_epochs=2)
        sa = {k: v for k, v in a.net.state_dict().items() if k.startswith("backbone")}
        sb = {k: v for k, v in b.net.state_dict().items() if k.startswith("backbone")}
        for k in sa:
            assert np.array_equal(sa[k], sb[k]), f"backbone drift in {k}"
        adapters_differ = any(
            not np.array_equal(a.net.state_dict()[k], b.net.state_dict()[k])
            for k in a.net.state_dict()
            if k.startswith("adapter")
        )
        assert adapters_differ

    def test_loss_curve_decreases(self, mini_style):
        stage_b = [row["loss"] for row in mini_style.log if row["stage"] == "B"]
        assert stage_b[-1] < stage_b[0]

    def test_intra_style_cosine_margin(self, mini_style, mini_samples):
        _, test = mini_samples
        embs = {}
        for s in test:
            embs.setdefault(s.style_id, []).append(embed_style(s.audio, mini_style))
        intra, inter = [], []
        styles = sorted(embs)
        for sid in styles:
            group = embs[sid]
            for i in range(len(group)):
                for j in range(i + 1, len(group)):
                    intra.append(group[i] @ group[j])
                for other in styles:
                    if other != sid:
                        for e2 in embs[other]:
                            inter.append(group[i] @ e2)
        assert np.mean(intra) > np.mean(inter) + 0.1


class TestMovementEmbedder:
    def test_temperature_positive(self):
        with pytest.raises(ValidationError):
            contrastive_loss(Tensor(np.zeros((4, 8))), Tensor(np.zeros((4, 8))),
                             temperature=0.0)

    def test_uniform_logits_loss_is_log_batch(self):
        emb = np.tile(np.eye(1, 64, dtype=np.float64), (8, 1))
        loss = contrastive_loss(Tensor(emb), Tensor(emb.copy()))
        assert float(loss.data) == pytest.approx(math.log(8), rel=1e-6)

    def test_init_loss_near_log_batch(self, mini_samples):
        train, _ = mini_samples
        net = MovementNet(seeded_rng(77))
        from flowdance.musicenc.backbone import mel_batch

        mels = mel_batch([s.audio for s in train])
        stats = np.stack([motion_statistics(s.video) for s in train])
        from flowdance.nn import autodiff as ad

        with ad.no_grad():
            loss = contrastive_loss(net.adapter(net.backbone(Tensor(mels))),
                                    net.motion_proj(Tensor(stats)))
        assert abs(float(loss.data) - math.log(len(train))) <= 0.1 * math.log(len(train))

    def test_retrieval_top3(self, mini_movement):
        assert mini_movement.top3_retrieval >= 0.6

    def test_embed_unit_norm_deterministic(self, mini_movement, mini_samples):
        clip = mini_samples[1][0].audio
        a = embed_movement(clip, mini_movement)
        assert np.array_equal(a, embed_movement(clip, mini_movement))
        assert abs(np.linalg.norm(a) - 1.0) < 1e-6


class TestEncodeMusic:
    def test_dims_and_determinism(self, mini_encoder, mini_samples):
        clip = mini_samples[1][0].audio
        emb = encode_music(clip, 16, 20.0, mini_encoder)
        assert emb.e.shape == (145,)
        emb2 = encode_music(clip, 16, 20.0, mini_encoder)
        assert np.array_equal(emb.e, emb2.e)

    def test_beat_ablation_zeroes_e_b(self, mini_encoder, mini_samples):
        clip = mini_samples[1][0].audio
        emb = encode_music(clip, 16, 20.0, mini_encoder, use_beat_info=False)
        assert np.array_equal(emb.e_b, np.zeros(17, dtype=np.float32))
        assert emb.e.shape == (145,)
        assert np.linalg.norm(emb.e_c) > 0.99

    def test_detected_beats_near_truth(self, mini_encoder, mini_samples):
        _, test = mini_samples
        s = test[0]
        emb = encode_music(s.audio, 16, 20.0, mini_encoder)
        truth = beat_features(s.beats, 16, 20.0)
        det = np.where(emb.e_b[:16] == 1.0)[0]
        tru = np.where(truth[:16] == 1.0)[0]
        assert det.size >= 1
        for d in det:
            assert np.abs(tru - d).min() <= 1

    def test_robust_tempo_on_short_clip(self, mini_samples):
        _, test = mini_samples
        s = test[0]
        env = onset_envelope(log_mel(s.audio))
        bpm = robust_tempo_bpm(env)
        true = s.beats.tempo_bpm
        folded = min(abs(bpm - true), abs(bpm - 2 * true), abs(2 * bpm - true))
        assert folded <= 6.0

    def test_checkpoint_round_trip(self, mini_encoder, mini_samples, tmp_path):
        clip = mini_samples[1][0].audio
        before = encode_music(clip, 16, 20.0, mini_encoder)
        mini_encoder.save(tmp_path / "music.fdck")
        loaded = MusicEncoderParams.load(tmp_path / "music.fdck")
        after = encode_music(clip, 16, 20.0, loaded)
        assert np.array_equal(before.e, after.e)

    def test_retrieval_pool_indices(self, mini_movement, mini_samples):
        train, test = mini_samples
        pool = test + train[: max(0, 6 - len(test))]
        rate = retrieval_top_k(
            mini_movement, [s.audio for s in test], [s.video for s in pool],
            true_indices=list(range(len(test))),
        )
        assert 0.0 <= rate <= 1.0
