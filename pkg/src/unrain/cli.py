"""Command-line surface: toy-data generation, training, inference, evaluation.

Commands: ``gen-toy``, ``train``, ``derain``, ``evaluate``. Training is
driven by a YAML config document (unknown keys rejected); the effective
config with all defaults materialized is echoed into the output directory,
and reproduces the run when fed back in.
"""

import argparse
import dataclasses
import sys
from pathlib import Path

import yaml

from .data import (IMAGE_EXTENSIONS, load_image, load_manifest, save_image,
                   write_toy_corpus)
from .metrics import evaluate_dataset, input_baseline, write_csv, write_report
from .trainer import (CheckpointError, TrainConfig, load_derainer, train)


class ConfigError(ValueError):
    pass


ABLATION_FLAGS = {
    "no-perceptual": "use_perceptual",
    "no-tv": "use_tv",
    "no-paired-disc": "use_paired_disc",
    "no-unsupervised": "use_unsupervised",
}

RUN_CONFIG_KEYS = ("train", "data", "out_dir")


def load_run_config(path) -> dict:
    """Parse and validate the run config document."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        raise ConfigError(f"config '{path}': parse error{where}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config '{path}': top level must be a mapping")
    unknown = sorted(set(raw) - set(RUN_CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"config '{path}': unknown key '{unknown[0]}'")
    try:
        train_cfg = TrainConfig.from_dict(raw.get("train", {}) or {})
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"config '{path}': {exc}") from exc
    data = raw.get("data", {}) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"config '{path}': 'data' must be a mapping")
    unknown = sorted(set(data) - {"paired_root", "unpaired_root", "seed"})
    if unknown:
        raise ConfigError(f"config '{path}': data: unknown key '{unknown[0]}'")
    return {"train": train_cfg, "data": data, "out_dir": raw.get("out_dir")}


def effective_config(cfg: TrainConfig, paired_root, unpaired_root, out_dir) -> dict:
    return {"train": cfg.to_dict(),
            "data": {"paired_root": str(paired_root),
                     "unpaired_root": None if unpaired_root is None else str(unpaired_root)},
            "out_dir": str(out_dir)}


def cmd_gen_toy(args) -> int:
    try:
        info = write_toy_corpus(args.out, count=args.count, size=args.size,
                                seed=args.seed, domain_gap=args.domain_gap,
                                real_count=args.real_count)
    except OSError as exc:
        print(f"gen-toy: cannot write '{args.out}': {exc}", file=sys.stderr)
        return 1
    print(f"wrote {info['config']['count']} pairs "
          f"(+{info['config']['real_count']} pseudo-real) under {args.out}")
    return 0


def cmd_train(args) -> int:
    try:
        if args.config:
            run = load_run_config(args.config)
        else:
            run = {"train": TrainConfig(), "data": {}, "out_dir": None}
        cfg = run["train"]

        for flag in args.ablation or []:
            if flag not in ABLATION_FLAGS:
                raise ConfigError(f"unknown ablation '{flag}'; "
                                  f"choose from {sorted(ABLATION_FLAGS)}")
            abl = dataclasses.replace(cfg.ablations, **{ABLATION_FLAGS[flag]: False})
            cfg = dataclasses.replace(cfg, ablations=abl)

        data = dict(run["data"])
        if args.manifest:
            manifest = load_manifest(args.manifest)
            data.setdefault("paired_root", manifest["paired_root"])
            if manifest.get("unpaired_root"):
                data.setdefault("unpaired_root", manifest["unpaired_root"])
            if "seed" in manifest:
                cfg = dataclasses.replace(cfg, seed=int(manifest["seed"]))
        paired_root = args.paired_root or data.get("paired_root")
        unpaired_root = args.unpaired_root or data.get("unpaired_root")
        out_dir = args.out or run["out_dir"]
        if paired_root is None:
            raise ConfigError("missing required key 'paired_root' "
                              "(set data.paired_root or pass --paired-root)")
        if out_dir is None:
            raise ConfigError("missing required key 'out_dir' (or pass --out)")

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "effective_config.yaml", "w") as fh:
            yaml.safe_dump(effective_config(cfg, paired_root, unpaired_root, out_dir),
                           fh, sort_keys=False)
        final = train(cfg, paired_root, unpaired_root, out_dir)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"train: {exc}", file=sys.stderr)
        return 1
    print(f"final checkpoint: {final}")
    return 0


def cmd_derain(args) -> int:
    try:
        derainer = load_derainer(args.checkpoint, generator=args.generator)
    except (CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"derain: {exc}", file=sys.stderr)
        return 1
    in_dir = Path(args.input)
    files = sorted(p for p in in_dir.iterdir()
                   if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS) \
        if in_dir.is_dir() else []
    if not files:
        print(f"derain: no images found under '{args.input}'", file=sys.stderr)
        return 1
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    failures = 0
    for f in files:
        try:
            image = load_image(f)
        except ValueError as exc:
            print(f"derain: skipping '{f.name}': {exc}", file=sys.stderr)
            failures += 1
            continue
        save_image(out_dir / f.name, derainer(image))
    print(f"derained {len(files) - failures}/{len(files)} images into {out_dir}")
    return 1 if failures else 0


def cmd_evaluate(args) -> int:
    try:
        derainer = load_derainer(args.checkpoint, generator=args.generator)
        report = evaluate_dataset(derainer, args.test_root,
                                  dataset_id=str(args.test_root),
                                  checkpoint_id=str(args.checkpoint))
        write_report(report, args.report)
        if args.csv:
            write_csv(report, args.csv)
        baseline = input_baseline(args.test_root, dataset_id=str(args.test_root)) \
            if args.with_baseline else None
    except (CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"evaluate: {exc}", file=sys.stderr)
        return 1
    print(f"{'':<8}{'PSNR':>8} {'SSIM':>7}")
    print(f"{'model':<8}{report.mean_psnr_db:>8.2f} {report.mean_ssim:>7.3f}")
    if baseline is not None:
        print(f"{'input':<8}{baseline.mean_psnr_db:>8.2f} {baseline.mean_ssim:>7.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unrain",
        description="semi-supervised single-image deraining toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-toy", help="write a desk-scale toy rain corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=8, help="number of paired images")
    p.add_argument("--size", type=int, default=64, help="image side in pixels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--domain-gap", action="store_true",
                   help="also write a pseudo-real set with shifted streak angles")
    p.add_argument("--real-count", type=int, default=None,
                   help="pseudo-real image count (default: count // 2)")
    p.set_defaults(func=cmd_gen_toy)

    p = sub.add_parser("train", help="run the two-process training")
    p.add_argument("--config", help="YAML run config")
    p.add_argument("--manifest", help="JSON dataset manifest "
                                      "(paired_root/unpaired_root/seed)")
    p.add_argument("--paired-root", help="paired dataset root (rain/ + clean/)")
    p.add_argument("--unpaired-root", help="flat directory of real rainy images")
    p.add_argument("--out", help="output directory")
    p.add_argument("--ablation", action="append", metavar="NAME",
                   help=f"disable a component: {sorted(ABLATION_FLAGS)}")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("derain", help="derain a directory of images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="directory of rainy images")
    p.add_argument("--output", required=True, help="directory for derained PNGs")
    p.add_argument("--generator", choices=("syn", "real"), default="syn")
    p.set_defaults(func=cmd_derain)

    p = sub.add_parser("evaluate", help="score a checkpoint on a paired test set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test-root", required=True, help="paired test root")
    p.add_argument("--report", required=True, help="JSON report path")
    p.add_argument("--csv", help="also write a per-image CSV")
    p.add_argument("--with-baseline", action="store_true",
                   help="also print the rainy-input baseline row")
    p.add_argument("--generator", choices=("syn", "real"), default="syn")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
