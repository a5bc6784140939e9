"""Diffusion math: schedule boundaries, marginal consistency against the
iterated per-step process, dynamic thresholding, denoiser contracts,
parameter gradients, sampler determinism and NaN safety."""

import numpy as np
import pytest

from flowdance.core import LatentMap, seeded_rng
from flowdance.diffusion import (
    DenoiserParams,
    FlowVolume,
    VolumeStats,
    cosine_schedule,
    diffuse_forward,
    dynamic_threshold,
    sample_flow_volume,
)
from flowdance.diffusion.sample import sample_flow_volumes
from flowdance.diffusion.schedule import NoiseSchedule
from flowdance.diffusion.train import training_loss
from flowdance.diffusion.unet import predict_noise_batch, sinusoidal_embedding
from flowdance.errors import ValidationError
from flowdance.musicenc.encoder import MusicEmbedding
from flowdance.nn import autodiff as ad


def tiny_params(cz=4, cond_dim=21, T=1000, seed=0):
    params = DenoiserParams.initialize(
        seeded_rng(seed), cz=cz, cond_dim=cond_dim, n_frames=9, T=T,
        channels=(8, 8), mid_channels=8,
    )
    params.stats = VolumeStats(mean=np.zeros(3, dtype=np.float32),
                               std=np.ones(3, dtype=np.float32))
    return params


class TestCosineSchedule:
    def test_boundary_values(self):
        sched = cosine_schedule(1000)
        assert sched.alpha_bar[0] == 1.0
        assert sched.alpha_bar[-1] < 1e-3

    def test_strictly_decreasing(self):
        sched = cosine_schedule(1000)
        assert (np.diff(sched.alpha_bar) < 0).all()

    def test_betas_clipped(self):
        sched = cosine_schedule(1000)
        assert sched.betas.max() <= 0.999
        assert sched.betas.min() > 0

    def test_small_T_rejected(self):
        with pytest.raises(ValidationError):
            cosine_schedule(1)

    def test_posterior_variance_zero_at_first_step(self):
        sched = cosine_schedule(64)
        assert sched.posterior_var[0] == 0.0
        assert (sched.posterior_var[1:] > 0).all()


class TestDiffuseForward:
    def test_quarter_alpha_bar_arithmetic(self):
        # hand-built schedule row with alpha_bar = 0.25 at t = 1
        sched = NoiseSchedule(
            T=1,
            alpha_bar=np.array([1.0, 0.25]),
            betas=np.array([0.75]),
            alphas=np.array([0.25]),
            posterior_var=np.array([0.0]),
        )
        rng = seeded_rng(0)
        a0 = rng.normal((3, 4, 4, 3), dtype=np.float64)
        eps = rng.normal((3, 4, 4, 3), dtype=np.float64)
        out = diffuse_forward(a0, 1, eps, sched)
        assert np.allclose(out, 0.5 * a0 + np.sqrt(0.75) * eps)

    def test_near_zero_t_limit(self):
        sched = cosine_schedule(1000)
        rng = seeded_rng(1)
        a0 = rng.normal((2, 4, 4, 3), dtype=np.float64)
        out = diffuse_forward(a0, 1, np.zeros_like(a0), sched)
        assert np.allclose(out, np.sqrt(sched.alpha_bar[1]) * a0)
        assert np.abs(out - a0).max() < 1e-2  # alpha_bar[1] ~ 1

    def test_t_out_of_range(self):
        sched = cosine_schedule(32)
        a = np.zeros((1, 2, 2, 3))
        with pytest.raises(ValidationError):
            diffuse_forward(a, 0, a, sched)
        with pytest.raises(ValidationError):
            diffuse_forward(a, 33, a, sched)

    def test_marginal_matches_iterated_process(self):
        # Oracle: iterate x_t = sqrt(alpha_t) x_{t-1} + sqrt(1-alpha_t) eps_t,
        # then combine the per-step noises into the effective epsilon.
        T = 32
        sched = cosine_schedule(T)
        rng = seeded_rng(2)
        a0 = rng.normal((2, 3, 3, 3), dtype=np.float64)
        noises = [rng.normal(a0.shape, dtype=np.float64) for _ in range(T)]
        x = a0.copy()
        for k in range(1, T + 1):
            alpha_k = sched.alphas[k - 1]
            x = np.sqrt(alpha_k) * x + np.sqrt(1.0 - alpha_k) * noises[k - 1]
        for t in (8, 20, 32):
            x_iter = a0.copy()
            eff = np.zeros_like(a0)
            for k in range(1, t + 1):
                alpha_k = sched.alphas[k - 1]
                x_iter = np.sqrt(alpha_k) * x_iter + np.sqrt(1.0 - alpha_k) * noises[k - 1]
                eff += np.sqrt(sched.alpha_bar[t] / sched.alpha_bar[k]) * np.sqrt(
                    1.0 - alpha_k
                ) * noises[k - 1]
            eps_eff = eff / np.sqrt(1.0 - sched.alpha_bar[t])
            closed = diffuse_forward(a0, t, eps_eff, sched)
            assert np.abs(closed - x_iter).max() < 1e-4

    def test_variance_preservation_at_T(self):
        sched = cosine_schedule(1000)
        rng = seeded_rng(3)
        a0 = rng.normal((10000,), dtype=np.float64).reshape(10, 10, 10, 10)[..., :3]
        a0 = rng.normal((12, 10, 10, 3), dtype=np.float64)
        eps = rng.normal(a0.shape, dtype=np.float64)
        a_T = diffuse_forward(a0, 1000, eps, sched)
        assert abs(a_T.var() - 1.0) < 0.05


class TestDynamicThreshold:
    def test_in_range_untouched(self):
        rng = seeded_rng(4)
        x = rng.uniform(-0.9, 0.9, (2, 3, 3, 3), dtype=np.float64)
        assert np.allclose(dynamic_threshold(x), x)

    def test_constant_four(self):
        x = np.full((1, 2, 2, 3), 4.0)
        assert np.allclose(dynamic_threshold(x), 1.0)

    def test_postcondition_bounded(self):
        rng = seeded_rng(5)
        for _ in range(10):
            x = rng.normal((2, 4, 4, 3), dtype=np.float64) * rng.uniform(0.1, 10.0)
            out = dynamic_threshold(x)
            assert np.abs(out).max() <= 1.0 + 1e-12

    def test_per_sample_quantiles(self):
        a = np.full((2, 4, 4, 3), 4.0)
        b = np.full((2, 4, 4, 3), 0.5)
        out = dynamic_threshold(np.stack([a, b]))
        assert np.allclose(out[0], 1.0)
        assert np.allclose(out[1], 0.5)

    def test_percentile_validation(self):
        with pytest.raises(ValidationError):
            dynamic_threshold(np.zeros((1, 2, 2, 3)), percentile=1.5)


class TestDenoiserContracts:
    @pytest.mark.parametrize("n", [8, 16, 40])
    def test_output_shape(self, n):
        params = tiny_params()
        rng = seeded_rng(6)
        a_t = rng.normal((1, n, 8, 8, 3))
        z0 = rng.normal((1, 8, 8, 4))
        e = rng.normal((1, 21))
        with ad.no_grad():
            out = predict_noise_batch(a_t, np.array([5]), z0, e, params)
        assert out.shape == (1, n, 8, 8, 3)

    def test_conditioning_is_wired(self):
        params = tiny_params(seed=7)
        rng = seeded_rng(8)
        a_t = rng.normal((1, 6, 8, 8, 3))
        z0 = rng.normal((1, 8, 8, 4))
        e1 = rng.normal((1, 21))
        e2 = rng.normal((1, 21))
        with ad.no_grad():
            o1 = predict_noise_batch(a_t, np.array([3]), z0, e1, params).data
            o2 = predict_noise_batch(a_t, np.array([3]), z0, e2, params).data
        assert np.abs(o1 - o2).max() > 0.0

    def test_embedding_dim_mismatch(self):
        params = tiny_params()
        rng = seeded_rng(9)
        with pytest.raises(ValidationError, match="conditioning dim"):
            predict_noise_batch(
                rng.normal((1, 4, 8, 8, 3)), np.array([1]),
                rng.normal((1, 8, 8, 4)), rng.normal((1, 7)), params,
            )

    def test_z0_channel_mismatch(self):
        params = tiny_params()
        rng = seeded_rng(10)
        with pytest.raises(ValidationError, match="Cz"):
            predict_noise_batch(
                rng.normal((1, 4, 8, 8, 3)), np.array([1]),
                rng.normal((1, 8, 8, 9)), rng.normal((1, 21)), params,
            )

    def test_sinusoidal_embedding_shape(self):
        emb = sinusoidal_embedding(np.array([1, 500, 1000]))
        assert emb.shape == (3, 64)
        assert np.isfinite(emb).all()


class TestParameterGradients:
    def test_grad_matches_finite_differences(self):
        params = tiny_params(cz=2, cond_dim=5, seed=11)
        params.model.astype(np.float64)
        rng = seeded_rng(12)
        a_t = rng.normal((1, 3, 8, 8, 3), dtype=np.float64)
        z0 = rng.normal((1, 8, 8, 2), dtype=np.float64)
        e = rng.normal((1, 5), dtype=np.float64)
        t = np.array([7])

        def loss_value() -> float:
            with ad.no_grad():
                out = predict_noise_batch(a_t, t, z0, e, params)
            return float((out.data ** 2).mean())

        out = predict_noise_batch(a_t, t, z0, e, params)
        loss = ad.reduce_mean(ad.mul(out, out))
        loss.backward()

        named = [(n, p) for n, p in params.model.named_parameters() if p.grad is not None]
        check_rng = np.random.default_rng(13)
        picks = check_rng.choice(len(named), size=10, replace=False)
        eps = 1e-6
        for pi in picks:
            name, p = named[pi]
            flat = int(check_rng.integers(0, p.data.size))
            idx = np.unravel_index(flat, p.data.shape)
            orig = p.data[idx]
            p.data[idx] = orig + eps
            up = loss_value()
            p.data[idx] = orig - eps
            down = loss_value()
            p.data[idx] = orig
            numeric = (up - down) / (2 * eps)
            analytic = float(p.grad[idx])
            denom = max(abs(numeric), abs(analytic), 1e-8)
            assert abs(numeric - analytic) / denom < 1e-3, (
                f"{name}{idx}: analytic {analytic:.3g} vs numeric {numeric:.3g}"
            )


class TestTrainingLoss:
    def test_nonnegative(self):
        params = tiny_params(seed=14)
        sched = cosine_schedule(64)
        rng = seeded_rng(15)
        loss, _ = training_loss(
            rng.normal((2, 4, 8, 8, 3)), rng.normal((2, 8, 8, 4)),
            rng.normal((2, 21)), sched, params, rng.substream("n"),
        )
        assert float(loss.data) >= 0.0

    def test_zero_stub_loss_is_unit(self):
        params = tiny_params(seed=16)
        # zero the output head: the model becomes the eps == 0 stub
        params.model.out_conv.weight.data[:] = 0.0
        params.model.out_conv.bias.data[:] = 0.0
        sched = cosine_schedule(64)
        rng = seeded_rng(17)
        loss, _ = training_loss(
            rng.normal((8, 6, 8, 8, 3)), rng.normal((8, 8, 8, 4)),
            rng.normal((8, 21)), sched, params, rng.substream("n"),
        )
        assert float(loss.data) == pytest.approx(1.0, abs=0.05)


class TestSampler:
    def make_inputs(self, params, seed=18):
        rng = seeded_rng(seed)
        z0 = LatentMap(values=rng.normal((8, 8, 4)))
        unit = np.zeros(64, dtype=np.float32)
        unit[0] = 1.0
        e_b = np.zeros(10, dtype=np.float32)
        e_b[2] = 1.0
        e_b[-1] = 0.5
        e = MusicEmbedding(e_c=unit, e_w=unit, e_b=e_b)
        return z0, e

    def test_shape_determinism_and_finite(self):
        params = tiny_params(cond_dim=64 + 64 + 10, T=1000, seed=19)
        params.trained = True
        z0, e = self.make_inputs(params)
        sched = cosine_schedule(1000)
        v1 = sample_flow_volume(z0, e, 9, sched, params, seeded_rng(42))
        v2 = sample_flow_volume(z0, e, 9, sched, params, seeded_rng(42))
        assert v1.values.shape == (9, 8, 8, 3)
        assert np.array_equal(v1.values, v2.values)
        assert np.isfinite(v1.values).all()

    def test_untrained_rejected(self):
        params = tiny_params(cond_dim=138, T=64)
        z0, e = self.make_inputs(params)
        with pytest.raises(ValidationError, match="untrained"):
            sample_flow_volume(z0, e, 4, cosine_schedule(64), params, seeded_rng(0))

    def test_batched_matches_shapes(self):
        params = tiny_params(cond_dim=16, T=32, seed=20)
        params.trained = True
        rng = seeded_rng(21)
        out = sample_flow_volumes(
            rng.normal((3, 8, 8, 4)), rng.normal((3, 16)), 5,
            cosine_schedule(32), params, seeded_rng(1),
        )
        assert out.shape == (3, 5, 8, 8, 3)


class TestCheckpoint:
    def test_round_trip_with_stats(self, tmp_path):
        params = tiny_params(seed=22)
        params.trained = True
        params.stats = VolumeStats(
            mean=np.array([0.1, -0.2, 3.0], dtype=np.float32),
            std=np.array([0.5, 0.7, 2.0], dtype=np.float32),
        )
        params.save(tmp_path / "d.fdck")
        back = DenoiserParams.load(tmp_path / "d.fdck")
        assert back.T == params.T and back.cond_dim == params.cond_dim
        assert np.array_equal(back.stats.mean, params.stats.mean)
        for (na, a), (nb, b) in zip(
            params.model.named_parameters(), back.model.named_parameters()
        ):
            assert na == nb and np.array_equal(a.data, b.data)
