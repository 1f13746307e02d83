"""Command-line entry point for batch experiments.

Exit-code discipline: 0 on success; on failure a single stderr line
`error[<category>]: <message>` and a nonzero exit.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .audio_io import decode_wav, encode_wav_pcm16
from .augment import augment_pipeline
from .config import ExperimentConfig, load_config
from .dataset import (
    EMOTIONS,
    CREMA_EXPECTED_CLIPS,
    build_manifest,
    speaker_independent_split,
    synthesize_toy_dataset,
    write_manifest,
)
from .errors import ConfigError, SerForgeError
from .experiment import (
    ModelBundle,
    evaluate_checkpoint,
    featurize_split,
    featurize_waveform,
    load_dataset,
    run_experiment,
    run_head_ablation,
)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--workers", type=int, default=1, help="data-pipeline parallelism")
    p.add_argument("--deterministic", action="store_true", help="force single-threaded acceptance mode")


def _workers(args) -> int:
    return 1 if args.deterministic else max(1, args.workers)


def cmd_prepare(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    if args.toy:
        rng = np.random.default_rng(args.seed)
        samples = synthesize_toy_dataset(args.toy, rng)
        metas = [s.meta for s in samples]
    else:
        if not args.data_dir:
            raise ConfigError("either --data-dir or --toy is required")
        metas, bad = build_manifest(args.data_dir)
        for name in bad:
            print(f"unparseable: {name}", file=sys.stderr)
        if not metas:
            raise ConfigError(f"no parseable WAV files in {args.data_dir}")
        if len(metas) != CREMA_EXPECTED_CLIPS:
            print(
                f"warning: manifest has {len(metas)} rows, full CREMA-D has {CREMA_EXPECTED_CLIPS}",
                file=sys.stderr,
            )
    split = speaker_independent_split(metas, seed=args.seed)
    write_manifest(metas, os.path.join(args.out, "manifest.csv"))
    with open(os.path.join(args.out, "split.json"), "w") as f:
        f.write(split.to_json())

    print(f"{len(metas)} samples, {len({m.actor_id for m in metas})} actors")
    header = "split  " + "".join(f"{e:>9}" for e in EMOTIONS) + "    total"
    print(header)
    for name, rows in (("train", split.train), ("val", split.val), ("test", split.test)):
        counts = {e: 0 for e in EMOTIONS}
        for m in rows:
            counts[m.emotion] += 1
        print(f"{name:<6} " + "".join(f"{counts[e]:>9}" for e in EMOTIONS) + f" {len(rows):>8}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    out_dir = args.out or cfg.output_dir
    if args.dry_run:
        data = load_dataset(cfg)
        x, y = featurize_split(data.train[: cfg.train.batch_size], cfg, 1)
        bundle = ModelBundle(cfg, x.shape[1:])
        from .nn import cross_entropy

        rng = np.random.default_rng(cfg.seed)
        bundle.params.zero_grad()
        loss = cross_entropy(bundle.forward(bundle.params, x, True, rng), y, mode=cfg.train.loss_mode)
        loss.backward()
        print(f"dry run ok: {bundle.params.n_scalars()} parameters, loss {float(loss.data):.4f}")
        return 0
    # deterministic mode excludes wall-clock latency so report JSON is reproducible
    run_experiment(cfg, out_dir, workers=_workers(args), measure_latency=not args.deterministic)
    print(f"run directory: {out_dir}")
    return 0


def cmd_ablate(args) -> int:
    cfg = load_config(args.config)
    out_dir = args.out or cfg.output_dir
    reports = run_head_ablation(cfg, out_dir, workers=_workers(args))
    print(f"{'head':<16}{'accuracy':>10}{'macro_f1':>10}{'params':>10}")
    for r in reports:
        print(f"{r.extra['head_kind']:<16}{r.accuracy:>10.4f}{r.macro_f1:>10.4f}{r.n_parameters:>10}")
    print(f"run directory: {out_dir}")
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    report = evaluate_checkpoint(cfg, args.checkpoint, args.split, workers=_workers(args))
    print(report.to_json())
    return 0


def cmd_featurize(args) -> int:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    with open(args.infile, "rb") as f:
        w = decode_wav(f.read())
    from .audio_io import canonicalize

    feats = featurize_waveform(canonicalize(w), cfg)
    feats.astype("<f4").tofile(args.out)
    sidecar = {
        "shape": list(feats.shape),
        "dtype": "float32-le",
        "model_family": cfg.model_family,
        "config_hash": cfg.config_hash(),
    }
    with open(args.out + ".json", "w") as f:
        json.dump(sidecar, f, indent=2)
    print(f"wrote {args.out} {feats.shape}")
    return 0


def cmd_augment_preview(args) -> int:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    with open(args.infile, "rb") as f:
        w = decode_wav(f.read())
    from dataclasses import replace

    aug_cfg = replace(cfg.augment, seed=args.seed)
    out = augment_pipeline(w, aug_cfg, sample_index=0, epoch=0)
    with open(args.out, "wb") as f:
        f.write(encode_wav_pcm16(out))
    print(f"wrote {args.out} ({len(out.samples)} samples @ {out.sample_rate} Hz)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ser-forge", description="Speech emotion recognition experiment toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build manifest and speaker-independent split")
    p.add_argument("--data-dir", help="directory of CREMA-D WAV files")
    p.add_argument("--toy", type=int, default=0, metavar="N", help="use the synthetic corpus, N samples per class")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)
    p.set_defaults(fn=cmd_prepare)

    p = sub.add_parser("train", help="train per config and evaluate on the test split")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="run directory (default: config output_dir)")
    p.add_argument("--dry-run", action="store_true", help="validate config and run one forward/backward")
    _add_common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("ablate", help="train all three heads under identical settings")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("eval", help="evaluate an existing checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    _add_common(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("featurize", help="dump features for one WAV (float32 binary + JSON sidecar)")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    _add_common(p)
    p.set_defaults(fn=cmd_featurize)

    p = sub.add_parser("augment-preview", help="write an augmented copy of a WAV for audition")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    _add_common(p)
    p.set_defaults(fn=cmd_augment_preview)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except SerForgeError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
