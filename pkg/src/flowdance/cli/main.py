"""Command-line entry point: one orchestrator for the whole pipeline.

Stage order: corpus -> {train-ae, train-music} -> train-diffusion ->
generate -> evaluate / ablate. Every artifact embeds the resolved config
hash and the content hashes of the checkpoints it consumed, re-running a
completed stage with an unchanged config is a no-op, and exit codes are
stable: 0 ok, 1 invalid input, 2 missing artifact, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from flowdance.cli.config import (
    config_hash,
    corpus_config_from,
    load_config,
    stage1_config_from,
    stage2_config_from,
)
from flowdance.core.io import load_audio, load_video_frames, read_json, write_json
from flowdance.core.rng import seeded_rng
from flowdance.core.types import BeatGrid
from flowdance.errors import (
    FlowDanceError,
    MissingArtifactError,
    NumericError,
    ValidationError,
)

DEFAULT_RUN_DIR = "flowdance_run"


def run_dir_from(args) -> Path:
    if args.run:
        return Path(args.run)
    return Path(os.environ.get("FLOWDANCE_OUT_ROOT", DEFAULT_RUN_DIR))


def _write_jsonl(path: Path, header: dict, rows: list) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")


def _checkpoint_is_current(path: Path, expected_hash: str) -> bool:
    if not path.is_file():
        return False
    from flowdance.core.checkpoint import load_checkpoint

    try:
        header, _ = load_checkpoint(path)
    except FlowDanceError:
        return False
    return header["meta"].get("config_hash") == expected_hash


def _require(path: Path, what: str, hint: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(f"{what} not found at {path}; run `{hint}` first")
    return path


# -- commands -----------------------------------------------------------


def cmd_corpus(args) -> int:
    config = load_config(args.config, overrides={"seed": args.seed})
    run = run_dir_from(args)
    chash = config_hash(config)
    root = run / "corpus"
    marker = root / "corpus.json"
    if marker.is_file() and read_json(marker).get("config_hash") == chash:
        print(f"corpus at {root} already matches config {chash[:12]}; nothing to do")
        return 0
    from flowdance.corpus.dataset import generate_corpus

    generate_corpus(corpus_config_from(config), seeded_rng(config["seed"]).substream("corpus-stage"),
                    root, overwrite=args.overwrite)
    write_json(marker, {"config": corpus_config_from(config).to_dict(),
                        "config_hash": chash, "seed": config["seed"]})
    n = len(list(root.glob("style_*/track_*/video_*/meta.json")))
    print(f"corpus: {n} samples under {root} (config {chash[:12]})")
    return 0


def cmd_train_ae(args) -> int:
    config = load_config(args.config, overrides={"seed": args.seed})
    run = run_dir_from(args)
    chash = config_hash(config)
    corpus = _require(run / "corpus" / "corpus.json", "corpus", "flowdance corpus").parent
    out = run / "checkpoints" / "autoencoder.fdck"
    if _checkpoint_is_current(out, chash):
        print(f"autoencoder checkpoint already matches config {chash[:12]}; nothing to do")
        return 0
    from flowdance.flowae.train import train_stage1

    params, log = train_stage1(
        corpus, stage1_config_from(config), seeded_rng(config["seed"]).substream("stage1"),
        progress=lambda r: print(f"  ae epoch {r['epoch']}: loss {r['loss']:.4f} lr {r['lr']:.2e}"),
    )
    params.save(out, extra_meta={"config_hash": chash})
    _write_jsonl(run / "logs" / "train_ae.jsonl",
                 {"stage": "train-ae", "config_hash": chash}, log)
    print(f"autoencoder -> {out}")
    return 0


def cmd_train_music(args) -> int:
    config = load_config(args.config, overrides={"seed": args.seed})
    run = run_dir_from(args)
    chash = config_hash(config)
    corpus = _require(run / "corpus" / "corpus.json", "corpus", "flowdance corpus").parent
    out = run / "checkpoints" / "music.fdck"
    if _checkpoint_is_current(out, chash):
        print(f"music encoder checkpoint already matches config {chash[:12]}; nothing to do")
        return 0
    from flowdance.corpus.dataset import iter_samples
    from flowdance.musicenc.encoder import MusicEncoderParams
    from flowdance.musicenc.movement import train_movement_embedder
    from flowdance.musicenc.style import train_style_embedder

    train = list(iter_samples(corpus, split="train"))
    test = list(iter_samples(corpus, split="test"))
    rng = seeded_rng(config["seed"]).substream("music")
    style = train_style_embedder(
        [s.audio for s in train], np.array([s.style_id for s in train]),
        config["n_styles"], rng.substream("style"),
        epochs=config["music_epochs"], batch_size=config["music_batch"],
        lr=config["music_lr"],
        holdout=([s.audio for s in test], np.array([s.style_id for s in test])),
    )
    movement = train_movement_embedder(
        [s.audio for s in train], [s.video for s in train], rng.substream("movement"),
        epochs=config["music_epochs"], batch_size=config["music_batch"],
        lr=config["music_lr"],
        holdout=([s.audio for s in test], [s.video for s in test]),
    )
    params = MusicEncoderParams(style=style, movement=movement,
                                embed_dim=config["embed_dim"])
    params.save(out, extra_meta={"config_hash": chash})
    _write_jsonl(run / "logs" / "train_music.jsonl",
                 {"stage": "train-music", "config_hash": chash},
                 style.log + movement.log)
    print(f"music encoder -> {out} (style acc {style.held_out_accuracy:.2f}, "
          f"top-3 retrieval {movement.top3_retrieval:.2f})")
    return 0


def _load_stage_checkpoints(run: Path, need_denoiser: bool = True, nobeat: bool = False):
    from flowdance.diffusion.unet import DenoiserParams
    from flowdance.flowae.model import AutoencoderParams
    from flowdance.musicenc.encoder import MusicEncoderParams

    ae = AutoencoderParams.load(
        _require(run / "checkpoints" / "autoencoder.fdck", "autoencoder checkpoint",
                 "flowdance train-ae"))
    music = MusicEncoderParams.load(
        _require(run / "checkpoints" / "music.fdck", "music encoder checkpoint",
                 "flowdance train-music"))
    denoiser = None
    if need_denoiser:
        name = "denoiser_nobeat.fdck" if nobeat else "denoiser.fdck"
        denoiser = DenoiserParams.load(
            _require(run / "checkpoints" / name, f"denoiser checkpoint ({name})",
                     "flowdance train-diffusion"))
    return ae, music, denoiser


def cmd_train_diffusion(args) -> int:
    config = load_config(args.config, overrides={"seed": args.seed})
    run = run_dir_from(args)
    chash = config_hash(config)
    corpus = _require(run / "corpus" / "corpus.json", "corpus", "flowdance corpus").parent
    use_beat = not args.no_beat
    name = "denoiser.fdck" if use_beat else "denoiser_nobeat.fdck"
    out = run / "checkpoints" / name
    if _checkpoint_is_current(out, chash):
        print(f"{name} already matches config {chash[:12]}; nothing to do")
        return 0
    ae, music, _ = _load_stage_checkpoints(run, need_denoiser=False)
    from flowdance.diffusion.train import train_stage2

    params, log = train_stage2(
        corpus, ae, music, stage2_config_from(config, use_beat_info=use_beat),
        seeded_rng(config["seed"]).substream("stage2"),
        progress=lambda r: print(f"  diff epoch {r['epoch']}: loss {r['loss']:.4f} "
                                 f"val {r['val_loss']:.4f} lr {r['lr']:.2e}"),
    )
    params.save(out, extra_meta={
        "config_hash": chash,
        "inputs": {"autoencoder": ae.content_hash, "music": music.content_hash},
        "use_beat_info": use_beat,
    })
    log_name = "train_diffusion.jsonl" if use_beat else "train_diffusion_nobeat.jsonl"
    _write_jsonl(run / "logs" / log_name,
                 {"stage": "train-diffusion", "config_hash": chash,
                  "use_beat_info": use_beat}, log)
    print(f"denoiser -> {out} (final val loss {log[-1]['val_loss']:.4f})")
    return 0


def _sample_slug(vdir: Path) -> str:
    return "__".join(vdir.parts[-3:])


def _generate_for_samples(run: Path, config: dict, sample_dirs: list, seeds: list,
                          nobeat: bool = False, out_name: str = "generated") -> list:
    """Batched generation for (corpus sample, seed) pairs; returns export dirs."""
    from flowdance.corpus.dataset import load_sample
    from flowdance.synthesis.pipeline import export_result, generate_batch

    ae, music, denoiser = _load_stage_checkpoints(run, nobeat=nobeat)
    hashes = {"autoencoder": ae.content_hash, "music": music.content_hash,
              "denoiser": denoiser.content_hash, "config": config_hash(config)}
    jobs = []
    for vdir in sample_dirs:
        sample = load_sample(vdir)
        for seed in seeds:
            jobs.append((sample, seed, _sample_slug(Path(vdir)) + f"__seed{seed}"))
    out_dirs = []
    pending = []
    for sample, seed, slug in jobs:
        out = run / out_name / slug
        meta = out / "meta.json"
        if meta.is_file() and read_json(meta).get("model_hashes") == hashes:
            out_dirs.append(out)
        else:
            pending.append((sample, seed, slug))
    jobs = pending
    chunk = 12  # bound sampler memory
    use_beat = config["use_beat_info"] and not nobeat
    base_rng = seeded_rng(config["seed"])
    for start in range(0, len(jobs), chunk):
        part = jobs[start : start + chunk]
        # per-job noise streams keyed by slug: bytes do not depend on how
        # jobs are batched, so partial re-runs reproduce full runs exactly
        videos = generate_batch(
            [s.video.frames[0] for s, _, _ in part],
            [s.audio for s, _, _ in part],
            config["n_frames"], config["fps"], ae, music, denoiser,
            [base_rng.substream(f"generate:{slug}") for _, _, slug in part],
            use_beat_info=use_beat,
        )
        for (sample, seed, slug), video in zip(part, videos):
            out = run / out_name / slug
            export_result(video, sample.audio, out, seed=seed, model_hashes=hashes)
            out_dirs.append(out)
    return out_dirs


def cmd_generate(args) -> int:
    config = load_config(args.config, overrides={"seed": args.seed})
    run = run_dir_from(args)
    if args.test_set:
        from flowdance.corpus.dataset import sample_dirs

        corpus = _require(run / "corpus" / "corpus.json", "corpus", "flowdance corpus").parent
        dirs = sample_dirs(corpus, split="test")
        seeds = list(range(args.seeds_per_sample))
        outs = _generate_for_samples(run, config, dirs, seeds, nobeat=args.no_beat)
        print(f"generated {len(outs)} videos under {run / 'generated'}")
        return 0
    if not args.image or not args.wav:
        raise ValidationError("generate needs --image and --wav (or --test-set)")
    from flowdance.synthesis.pipeline import export_result, generate_dance_video
    from PIL import Image

    ae, music_enc, denoiser = _load_stage_checkpoints(run, nobeat=args.no_beat)
    img = np.asarray(Image.open(args.image).convert("RGB"), dtype=np.float32) / 255.0
    clip = load_audio(args.wav)
    video = generate_dance_video(
        img, clip, config["n_frames"], config["fps"], ae, music_enc, denoiser,
        seeded_rng(args.seed if args.seed is not None else config["seed"]),
        use_beat_info=config["use_beat_info"] and not args.no_beat,
    )
    out = Path(args.out) if args.out else run / "generated" / Path(args.image).stem
    export_result(video, clip, out,
                  seed=args.seed if args.seed is not None else config["seed"],
                  model_hashes={"autoencoder": ae.content_hash,
                                "music": music_enc.content_hash,
                                "denoiser": denoiser.content_hash,
                                "config": config_hash(config)})
    print(f"video -> {out}")
    return 0


def _evaluate_generated(run: Path, config: dict, generated_root: Path,
                        corpus_root: Path):
    from flowdance.corpus.dataset import load_sample
    from flowdance.metrics.suite import EvalSample, evaluate_suite

    if not generated_root.is_dir():
        raise MissingArtifactError(f"no generated videos under {generated_root}")
    gen_dirs = sorted(d for d in generated_root.iterdir() if (d / "meta.json").is_file())
    if not gen_dirs:
        raise MissingArtifactError(f"no generated videos under {generated_root}")
    records = []
    missing = []
    for d in gen_dirs:
        parts = d.name.split("__")
        if len(parts) < 3:
            missing.append(d.name)
            continue
        corpus_dir = corpus_root / parts[0] / parts[1] / parts[2]
        if not (corpus_dir / "meta.json").is_file():
            missing.append(d.name)
            continue
        sample = load_sample(corpus_dir)
        meta = read_json(d / "meta.json")
        video = load_video_frames(d / "frames", fps=meta["fps"])
        records.append(EvalSample(
            sample_id=d.name,
            style_id=sample.style_id,
            video=video,
            music_beats=sample.beats,
            audio=sample.audio,
            reference=sample.video,
        ))
    if missing:
        raise ValidationError(f"generated dirs without corpus counterparts: {missing}")
    return evaluate_suite(records, sigma=config["sigma_frames"])


def cmd_evaluate(args) -> int:
    config = load_config(args.config)
    run = run_dir_from(args)
    corpus = Path(args.corpus) if args.corpus else _require(
        run / "corpus" / "corpus.json", "corpus", "flowdance corpus").parent
    generated = Path(args.generated) if args.generated else run / "generated"
    report = _evaluate_generated(run, config, generated, corpus)
    payload = report.to_json_dict()
    payload["config"]["config_hash"] = config_hash(config)
    out = Path(args.out) if args.out else run / "report.json"
    write_json(out, payload)
    overall = payload["aggregates"]["overall"]
    print(f"report -> {out}")
    print("  " + json.dumps(overall, sort_keys=True))
    return 0


def sign_test_p(wins: int, n: int) -> float:
    """One-sided sign test: P(X >= wins) for X ~ Binomial(n, 1/2)."""
    if n == 0:
        return 1.0
    return sum(math.comb(n, k) for k in range(wins, n + 1)) / 2.0**n


def cmd_ablate(args) -> int:
    config = load_config(args.config, overrides={"seed": args.seed})
    run = run_dir_from(args)
    if args.axis == "beat":
        return _ablate_beat(run, config, args)
    return _ablate_length(run, config, args)


def _ablate_beat(run: Path, config: dict, args) -> int:
    from flowdance.corpus.dataset import sample_dirs

    report_path = run / "ablation_beat" / "report.json"
    if report_path.is_file() and read_json(report_path).get("config_hash") == config_hash(config):
        print(f"ablation report already matches config; nothing to do ({report_path})")
        return 0
    corpus = _require(run / "corpus" / "corpus.json", "corpus", "flowdance corpus").parent
    for nobeat in (False, True):
        name = "denoiser_nobeat.fdck" if nobeat else "denoiser.fdck"
        if not (run / "checkpoints" / name).is_file():
            raise MissingArtifactError(
                f"{name} missing; run `flowdance train-diffusion"
                + (" --no-beat`" if nobeat else "`"))
    dirs = sample_dirs(corpus, split="test")
    seeds = list(range(args.seeds_per_sample))
    if len(dirs) * len(seeds) < 20:
        raise ValidationError(
            f"{len(dirs)} test samples x {len(seeds)} seeds < 20 paired generations; "
            "raise --seeds-per-sample")
    gen_with = _generate_for_samples(run, config, dirs, seeds, nobeat=False,
                                     out_name="ablation_beat/with")
    gen_without = _generate_for_samples(run, config, dirs, seeds, nobeat=True,
                                        out_name="ablation_beat/without")
    rep_with = _evaluate_generated(run, config, run / "ablation_beat" / "with", corpus)
    rep_without = _evaluate_generated(run, config, run / "ablation_beat" / "without", corpus)

    pairs = []
    rows_without = {r["id"]: r for r in rep_without.per_sample}
    mm_wins = mm_n = av_wins = av_n = 0
    for row in rep_with.per_sample:
        other = rows_without[row["id"]]
        pair = {"id": row["id"], "mm_with": row["mm_align_2d"],
                "mm_without": other["mm_align_2d"],
                "av_with": row["av_align"], "av_without": other["av_align"]}
        pairs.append(pair)
        if pair["mm_with"] is not None and pair["mm_without"] is not None \
                and pair["mm_with"] != pair["mm_without"]:
            mm_n += 1
            mm_wins += pair["mm_with"] > pair["mm_without"]
        if pair["av_with"] is not None and pair["av_without"] is not None \
                and pair["av_with"] != pair["av_without"]:
            av_n += 1
            av_wins += pair["av_with"] > pair["av_without"]
    report = {
        "axis": "beat",
        "config_hash": config_hash(config),
        "with": rep_with.to_json_dict()["aggregates"]["overall"],
        "without": rep_without.to_json_dict()["aggregates"]["overall"],
        "pairs": pairs,
        "sign_test": {
            "mm_align_2d": {"wins": mm_wins, "n": mm_n, "p": sign_test_p(mm_wins, mm_n)},
            "av_align": {"wins": av_wins, "n": av_n, "p": sign_test_p(av_wins, av_n)},
        },
    }
    out = run / "ablation_beat" / "report.json"
    write_json(out, report)
    print(f"ablation report -> {out}")
    print("  " + json.dumps(report["sign_test"], sort_keys=True))
    return 0


def _ablate_length(run: Path, config: dict, args) -> int:
    # second arm: same corpus recipe at doubled clip length, sharing the
    # stage-1 and music checkpoints (both are length-agnostic)
    from flowdance.corpus.dataset import generate_corpus, sample_dirs
    from flowdance.diffusion.train import train_stage2
    from flowdance.diffusion.unet import DenoiserParams

    long_frames = config["n_frames"] * 2
    long_config = dict(config)
    long_config["n_frames"] = long_frames
    chash = config_hash(long_config)
    corpus = _require(run / "corpus" / "corpus.json", "corpus", "flowdance corpus").parent
    corpus_long = run / "corpus_long"
    marker = corpus_long / "corpus.json"
    if not (marker.is_file() and read_json(marker).get("config_hash") == chash):
        generate_corpus(corpus_config_from(long_config),
                        seeded_rng(config["seed"]).substream("corpus-stage"),
                        corpus_long, overwrite=True)
        write_json(marker, {"config": corpus_config_from(long_config).to_dict(),
                            "config_hash": chash, "seed": config["seed"]})
    ae, music, short_denoiser = _load_stage_checkpoints(run)
    long_ckpt = run / "checkpoints" / "denoiser_long.fdck"
    if not _checkpoint_is_current(long_ckpt, chash):
        params, log = train_stage2(
            corpus_long, ae, music, stage2_config_from(long_config),
            seeded_rng(config["seed"]).substream("stage2"),
        )
        params.save(long_ckpt, extra_meta={"config_hash": chash,
                                           "inputs": {"autoencoder": ae.content_hash,
                                                      "music": music.content_hash}})
        _write_jsonl(run / "logs" / "train_diffusion_long.jsonl",
                     {"stage": "train-diffusion", "config_hash": chash,
                      "n_frames": long_frames}, log)

    seeds = list(range(args.seeds_per_sample))
    _generate_for_samples(run, config, sample_dirs(corpus, split="test"), seeds,
                          out_name="ablation_length/short")
    # long arm: route through a temporary run layout that points at the
    # long corpus and checkpoint
    long_run = run / "ablation_length" / "long_run"
    (long_run / "checkpoints").mkdir(parents=True, exist_ok=True)
    for src, dst in (("autoencoder.fdck", "autoencoder.fdck"),
                     ("music.fdck", "music.fdck"),
                     ("denoiser_long.fdck", "denoiser.fdck")):
        data = (run / "checkpoints" / src).read_bytes()
        (long_run / "checkpoints" / dst).write_bytes(data)
    _generate_for_samples(long_run, long_config, sample_dirs(corpus_long, split="test"),
                          seeds, out_name="../short_vs_long")
    rep_short = _evaluate_generated(run, config, run / "ablation_length" / "short", corpus)
    rep_long = _evaluate_generated(run, long_config,
                                   run / "ablation_length" / "short_vs_long", corpus_long)
    s = rep_short.to_json_dict()["aggregates"]["overall"]
    l = rep_long.to_json_dict()["aggregates"]["overall"]
    report = {
        "axis": "length",
        "config_hash": config_hash(config),
        "short_frames": config["n_frames"],
        "long_frames": long_frames,
        "short": s,
        "long": l,
        "directional_pass": bool(
            l["mm_align_2d"] is not None and s["mm_align_2d"] is not None
            and l["mm_align_2d"] >= s["mm_align_2d"] - 1e-9
        ),
    }
    out = run / "ablation_length" / "report.json"
    write_json(out, report)
    print(f"ablation report -> {out}")
    return 0


def cmd_beats(args) -> int:
    from flowdance.audio.beats import estimate_tempo, track_beats
    from flowdance.audio.features import log_mel, onset_envelope
    from flowdance.musicenc.encoder import robust_tempo_bpm

    clip = load_audio(args.wav)
    env = onset_envelope(log_mel(clip))
    try:
        est = estimate_tempo(env)
        tempo, low_conf = est.bpm, est.low_confidence
    except ValidationError:
        tempo, low_conf = robust_tempo_bpm(env), True
    grid = track_beats(env, tempo)
    print(json.dumps({
        "tempo_bpm": tempo,
        "low_confidence": low_conf,
        "beat_times": [round(float(t), 6) for t in grid.beat_times],
    }, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowdance",
        description="dance video generation from music via latent flow diffusion",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML config file (flat keys over a preset)")
        p.add_argument("--run", help="run directory (or FLOWDANCE_OUT_ROOT)")
        p.add_argument("--seed", type=int, default=None, help="override config seed")

    p = sub.add_parser("corpus", help="generate the procedural corpus")
    common(p)
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_corpus)

    p = sub.add_parser("train-ae", help="train the latent flow autoencoder")
    common(p)
    p.set_defaults(func=cmd_train_ae)

    p = sub.add_parser("train-music", help="train style and movement embedders")
    common(p)
    p.set_defaults(func=cmd_train_music)

    p = sub.add_parser("train-diffusion", help="train the flow denoiser")
    common(p)
    p.add_argument("--no-beat", action="store_true",
                   help="train the beat-ablated arm (e_b zeroed)")
    p.set_defaults(func=cmd_train_diffusion)

    p = sub.add_parser("generate", help="generate dance videos")
    common(p)
    p.add_argument("--image", help="conditioning image (PNG)")
    p.add_argument("--wav", help="music file (PCM16 mono WAV)")
    p.add_argument("--out", help="export directory")
    p.add_argument("--test-set", action="store_true",
                   help="generate for every test-corpus sample")
    p.add_argument("--seeds-per-sample", type=int, default=2)
    p.add_argument("--no-beat", action="store_true", help="use the ablated denoiser")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score generated videos against the corpus")
    common(p)
    p.add_argument("--generated", help="directory of generated videos")
    p.add_argument("--corpus", help="corpus root")
    p.add_argument("--out", help="report path (default <run>/report.json)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="run a paired ablation")
    common(p)
    p.add_argument("--axis", choices=("beat", "length"), required=True)
    p.add_argument("--seeds-per-sample", type=int, default=2)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("beats", help="print beat times of a WAV as JSON")
    p.add_argument("wav")
    p.set_defaults(func=cmd_beats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except MissingArtifactError as e:
        print(f"missing artifact: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
