"""Shared fixtures: corpora and (later in the session) trained pipelines.

Heavy artifacts are cached under .test_cache/ keyed by config hash, so a
clean run trains everything once and later runs reuse the bytes. Delete
.test_cache/ to force a full retrain.
"""

from __future__ import annotations

import os
from pathlib import Path

import pytest

from flowdance.core import seeded_rng
from flowdance.core.checkpoint import dict_hash
from flowdance.corpus import CorpusConfig, generate_corpus

CACHE_ROOT = Path(os.environ.get("FLOWDANCE_TEST_CACHE", Path(__file__).parent.parent / ".test_cache"))


def cached_corpus(config: CorpusConfig, seed: int) -> Path:
    from flowdance.corpus.dance import RENDER_VERSION

    key = dict_hash({"corpus": config.to_dict(), "seed": seed,
                     "render": RENDER_VERSION})[:16]
    root = CACHE_ROOT / f"corpus_{key}"
    if not (root / "corpus.json").exists():
        generate_corpus(config, seeded_rng(seed), root, overwrite=True)
    return root


@pytest.fixture(scope="session")
def mini_corpus_config() -> CorpusConfig:
    return CorpusConfig(n_styles=2, tracks_per_style=2, videos_per_track=2, n_frames=16)


@pytest.fixture(scope="session")
def mini_corpus(mini_corpus_config) -> Path:
    return cached_corpus(mini_corpus_config, seed=123)


@pytest.fixture(scope="session")
def desk_corpus_config() -> CorpusConfig:
    return CorpusConfig(n_styles=4, tracks_per_style=5, videos_per_track=3, n_frames=16)


@pytest.fixture(scope="session")
def desk_corpus(desk_corpus_config) -> Path:
    return cached_corpus(desk_corpus_config, seed=7)


@pytest.fixture(scope="session")
def desk_run() -> Path:
    """The full desk-scale pipeline, driven through the CLI.

    Every stage is idempotent against its config hash, so a warm cache
    makes this instant while a cold cache trains everything (the
    documented reproduction path). Wall time of every stage that actually
    executes is recorded in pipeline_timings.json. Returns the run
    directory containing corpus/, checkpoints/, logs/, ablation_beat/ and
    report.json.
    """
    import json
    import time

    from flowdance.cli.main import main

    run = CACHE_ROOT / "run_desk"
    steps = [
        ("corpus", ["corpus", "--run", str(run)]),
        ("train-ae", ["train-ae", "--run", str(run)]),
        ("train-music", ["train-music", "--run", str(run)]),
        ("train-diffusion", ["train-diffusion", "--run", str(run)]),
        ("train-diffusion-nobeat", ["train-diffusion", "--run", str(run), "--no-beat"]),
        ("ablate-beat", ["ablate", "--run", str(run), "--axis", "beat",
                         "--seeds-per-sample", "2"]),
        ("evaluate", ["evaluate", "--run", str(run),
                      "--generated", str(run / "ablation_beat" / "with")]),
    ]
    timings_path = run / "pipeline_timings.json"
    timings = json.loads(timings_path.read_text()) if timings_path.is_file() else {}
    for name, argv in steps:
        t0 = time.monotonic()
        rc = main(argv)
        elapsed = time.monotonic() - t0
        assert rc == 0, f"pipeline step failed ({rc}): {argv}"
        # keep the cold-run timing; warm no-op re-runs take under a second
        timings[name] = max(timings.get(name, 0.0), elapsed)
    timings_path.write_text(json.dumps(timings, sort_keys=True, indent=1))
    return run
