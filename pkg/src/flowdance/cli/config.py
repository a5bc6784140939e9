"""Experiment configuration: flat TOML key-value files over named presets.

The "desk" preset is the CPU-scale schedule (epoch counts are the
published regimen scaled by 0.4); "paper" stores the full published
schedule for hardware that can afford it. A config file selects a preset
and overrides individual keys; the resolved mapping is hashed and the hash
is embedded in every artifact the pipeline writes, so outputs are
traceable to the exact configuration.
"""

from __future__ import annotations

import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from flowdance.core.checkpoint import dict_hash
from flowdance.errors import ValidationError

PRESETS = {
    "desk": {
        "n_styles": 4,
        "tracks_per_style": 5,
        "videos_per_track": 3,
        "n_frames": 16,
        "fps": 20.0,
        "frame_size": 64,
        "sample_rate": 22050,
        "test_fraction": 0.2,
        "cz": 32,
        "ae_width": 64,
        "embed_dim": 64,
        "T": 1000,
        "threshold_percentile": 0.9,
        "ae_epochs": 60,
        "ae_batch": 16,
        "ae_lr": 2e-4,
        "ae_milestones": [24, 36, 48],
        "music_epochs": 100,
        "music_batch": 16,
        "music_lr": 1e-3,
        "diff_epochs": 100,
        "diff_batch": 8,
        "diff_lr": 2e-4,
        "diff_milestones": [40, 60, 80],
        "n_generations": 20,
        "sigma_frames": 3.0,
        "use_beat_info": True,
        "seed": 0,
    },
    "paper": {
        # published regimen: 128x128 frames, 150/250-epoch stages,
        # batch 100, decays at 60/90/120 and 100/150/200
        "n_styles": 10,
        "tracks_per_style": 6,
        "videos_per_track": 20,
        "n_frames": 40,
        "fps": 20.0,
        "frame_size": 128,
        "sample_rate": 22050,
        "test_fraction": 0.17,
        "cz": 32,
        "ae_width": 64,
        "embed_dim": 64,
        "T": 1000,
        "threshold_percentile": 0.9,
        "ae_epochs": 150,
        "ae_batch": 100,
        "ae_lr": 2e-4,
        "ae_milestones": [60, 90, 120],
        "music_epochs": 100,
        "music_batch": 16,
        "music_lr": 1e-3,
        "diff_epochs": 250,
        "diff_batch": 100,
        "diff_lr": 2e-4,
        "diff_milestones": [100, 150, 200],
        "n_generations": 20,
        "sigma_frames": 3.0,
        "use_beat_info": True,
        "seed": 0,
    },
}


def load_config(path=None, preset: str = None, overrides: dict = None) -> dict:
    """Resolve preset <- file <- overrides into one flat mapping."""
    file_values = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ValidationError(f"config file not found: {p}")
        file_values = tomllib.loads(p.read_text())
    preset_name = preset or file_values.pop("preset", "desk")
    if preset_name not in PRESETS:
        raise ValidationError(f"unknown preset {preset_name!r}; have {sorted(PRESETS)}")
    config = dict(PRESETS[preset_name])
    unknown = set(file_values) - set(config)
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    config.update(file_values)
    if overrides:
        bad = set(overrides) - set(config)
        if bad:
            raise ValidationError(f"unknown override keys: {sorted(bad)}")
        config.update({k: v for k, v in overrides.items() if v is not None})
    config["preset"] = preset_name
    return config


def config_hash(config: dict) -> str:
    return dict_hash(config)


def corpus_config_from(config: dict):
    from flowdance.corpus.dataset import CorpusConfig

    return CorpusConfig(
        n_styles=config["n_styles"],
        tracks_per_style=config["tracks_per_style"],
        videos_per_track=config["videos_per_track"],
        n_frames=config["n_frames"],
        fps=config["fps"],
        frame_size=config["frame_size"],
        sample_rate=config["sample_rate"],
        test_fraction=config["test_fraction"],
    )


def stage1_config_from(config: dict):
    from flowdance.flowae.train import Stage1Config

    return Stage1Config(
        epochs=config["ae_epochs"],
        batch_size=config["ae_batch"],
        lr=config["ae_lr"],
        milestones=tuple(config["ae_milestones"]),
        cz=config["cz"],
        width=config["ae_width"],
    )


def stage2_config_from(config: dict, use_beat_info: bool = None):
    from flowdance.diffusion.train import Stage2Config

    return Stage2Config(
        epochs=config["diff_epochs"],
        batch_size=config["diff_batch"],
        lr=config["diff_lr"],
        milestones=tuple(config["diff_milestones"]),
        T=config["T"],
        use_beat_info=config["use_beat_info"] if use_beat_info is None else use_beat_info,
    )
