"""CLI surface: config resolution, exit codes, stage ordering, idempotence."""

import json

import numpy as np
import pytest

from flowdance.cli.config import config_hash, load_config
from flowdance.cli.main import main, sign_test_p
from flowdance.core import AudioClip
from flowdance.core.io import save_audio
from flowdance.errors import ValidationError

MICRO_TOML = """
n_styles = 2
tracks_per_style = 2
videos_per_track = 1
n_frames = 16
ae_epochs = 1
music_epochs = 2
diff_epochs = 1
T = 16
n_generations = 2
"""


@pytest.fixture()
def micro_config(tmp_path):
    path = tmp_path / "micro.toml"
    path.write_text(MICRO_TOML)
    return path


class TestConfig:
    def test_preset_defaults(self):
        cfg = load_config()
        assert cfg["preset"] == "desk"
        assert cfg["T"] == 1000
        assert cfg["ae_milestones"] == [24, 36, 48]

    def test_paper_preset_schedule(self):
        cfg = load_config(preset="paper")
        assert cfg["ae_epochs"] == 150
        assert cfg["ae_milestones"] == [60, 90, 120]
        assert cfg["diff_epochs"] == 250
        assert cfg["diff_milestones"] == [100, 150, 200]
        assert cfg["ae_batch"] == 100
        assert cfg["frame_size"] == 128

    def test_file_overrides(self, micro_config):
        cfg = load_config(micro_config)
        assert cfg["n_styles"] == 2
        assert cfg["fps"] == 20.0  # untouched default

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text("nonsense = 3\n")
        with pytest.raises(ValidationError, match="unknown config keys"):
            load_config(p)

    def test_override_precedence(self, micro_config):
        cfg = load_config(micro_config, overrides={"seed": 9})
        assert cfg["seed"] == 9

    def test_hash_stability(self, micro_config):
        a = config_hash(load_config(micro_config))
        b = config_hash(load_config(micro_config))
        assert a == b
        c = config_hash(load_config(micro_config, overrides={"seed": 1}))
        assert a != c


class TestSignTest:
    def test_exact_binomial_tail(self):
        # 15 of 20 wins: p = sum_{k>=15} C(20,k) / 2^20
        assert sign_test_p(15, 20) == pytest.approx(0.02069473, abs=1e-8)
        assert sign_test_p(14, 20) > 0.05
        assert sign_test_p(0, 0) == 1.0
        assert sign_test_p(20, 20) == pytest.approx(2.0**-20)


class TestCliPlumbing:
    def test_corpus_and_idempotence(self, micro_config, tmp_path, capsys):
        run = tmp_path / "run"
        rc = main(["corpus", "--config", str(micro_config), "--run", str(run)])
        assert rc == 0
        metas = list((run / "corpus").glob("style_*/track_*/video_*/meta.json"))
        assert len(metas) == 4
        capsys.readouterr()
        rc = main(["corpus", "--config", str(micro_config), "--run", str(run)])
        assert rc == 0
        assert "nothing to do" in capsys.readouterr().out

    def test_corpus_refuses_nonempty(self, micro_config, tmp_path):
        run = tmp_path / "run"
        (run / "corpus").mkdir(parents=True)
        (run / "corpus" / "junk.txt").write_text("x")
        rc = main(["corpus", "--config", str(micro_config), "--run", str(run)])
        assert rc == 1

    def test_train_ae_needs_corpus(self, micro_config, tmp_path):
        rc = main(["train-ae", "--config", str(micro_config), "--run", str(tmp_path / "r")])
        assert rc == 2

    def test_train_diffusion_needs_checkpoints(self, micro_config, tmp_path):
        run = tmp_path / "run"
        assert main(["corpus", "--config", str(micro_config), "--run", str(run)]) == 0
        rc = main(["train-diffusion", "--config", str(micro_config), "--run", str(run)])
        assert rc == 2

    def test_generate_needs_checkpoints(self, micro_config, tmp_path):
        run = tmp_path / "run"
        rc = main(["generate", "--config", str(micro_config), "--run", str(run),
                   "--test-set"])
        assert rc == 2

    def test_evaluate_needs_generated(self, micro_config, tmp_path):
        run = tmp_path / "run"
        assert main(["corpus", "--config", str(micro_config), "--run", str(run)]) == 0
        rc = main(["evaluate", "--config", str(micro_config), "--run", str(run)])
        assert rc == 2

    def test_beats_subcommand(self, tmp_path, capsys):
        sr = 22050
        x = np.zeros(3 * sr)
        n = int(0.008 * sr)
        burst = 0.8 * np.sin(2 * np.pi * 3000 * np.arange(n) / sr) * np.hanning(n)
        truth = []
        b = 0.1
        while b < 2.8:
            s = int(b * sr)
            x[s : s + n] += burst
            truth.append(b)
            b += 0.5
        wav = tmp_path / "clicks.wav"
        save_audio(AudioClip(samples=np.clip(x, -1, 1)), wav)
        assert main(["beats", str(wav)]) == 0
        out = json.loads(capsys.readouterr().out)
        assert abs(out["tempo_bpm"] - 120.0) <= 2.0
        assert not out["low_confidence"]
        got = np.asarray(out["beat_times"])
        matched = sum(1 for t in truth if np.abs(got - t).min() <= 0.03)
        assert matched / len(truth) >= 0.95
