"""Command-line entry point: ``generate``, ``train``, ``evaluate``, ``baseline``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical abort.
Set ``VITPOS_LOG`` (e.g. ``INFO``, ``DEBUG``) for log output on stderr.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import pipeline
from .channel import ConfigError, DomainError, ScenarioConfig
from .checkpoint import CheckpointError, save_checkpoint
from .datafile import DataError, read_dataset
from .metrics import write_report
from .tensor import ContractError
from .training import TrainConfig, TrainingDiverged, load_train_config, write_history_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("vitpos")


class UsageError(Exception):
    pass


def _train_config(path: str | None, seed: int | None) -> tuple[TrainConfig, dict]:
    cfg, model = load_train_config(path) if path else (TrainConfig(), {})
    if seed is not None:
        cfg = TrainConfig.from_dict({**cfg.to_dict(), "seed": seed})
    return cfg, model


def _load_data(path: str):
    if not Path(path).is_file():
        raise FileNotFoundError(f"dataset not found: {path}")
    return read_dataset(path)


def cmd_generate(args) -> int:
    if args.n_samples < 1:
        raise UsageError(f"--n-samples must be >= 1, got {args.n_samples}")
    if args.config:
        config = ScenarioConfig.load(args.config)
    else:
        config = ScenarioConfig.preset(args.preset)
    seed = config.seed if args.seed is None else args.seed
    digest = pipeline.generate_file(config, args.n_samples, seed, args.out)
    print(f"samples {args.n_samples}")
    print(f"sha256 {digest}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg, model_overrides = _train_config(args.config, args.seed)
    ds = _load_data(args.data)
    history_path = args.history or f"{args.out}.history.csv"
    try:
        model, result, _ = pipeline.train_vit(ds, cfg, model_overrides)
    except TrainingDiverged as exc:
        write_history_csv(exc.history, history_path)
        save_checkpoint(args.out, "vit-partial", {}, exc.last_good, {"error": str(exc)})
        print(f"numerical abort: {exc}; last good parameters written to {args.out}",
              file=sys.stderr)
        return EXIT_NUMERIC
    pipeline.save_vit(args.out, model, result, cfg)
    write_history_csv(result.history, history_path)
    best = result.history[result.best_epoch - 1]
    print(f"best_epoch {result.best_epoch}")
    print(f"best_val_rmse_m {best.val_rmse_m:.4f}")
    return EXIT_OK


def _print_report(report, thresholds) -> None:
    print(f"rmse_m {report.rmse_m:.4f}")
    for t in thresholds:
        print(f"p_error_gt_{t:g}m {report.exceedance(t):.4f}")


def cmd_evaluate(args) -> int:
    ds = _load_data(args.data)
    report = pipeline.evaluate_checkpoint(ds, args.checkpoint, args.split)
    write_report(report, args.out, args.thresholds, {"split": args.split, "model": "vit"})
    _print_report(report, args.thresholds)
    return EXIT_OK


def cmd_baseline(args) -> int:
    cfg, _ = _train_config(args.config, args.seed)
    ds = _load_data(args.data)
    if args.kind == "centroid":
        report = pipeline.centroid_report(ds, cfg)
    else:
        try:
            report, _ = pipeline.mlp_report(ds, cfg)
        except TrainingDiverged as exc:
            print(f"numerical abort: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
    write_report(report, args.out, args.thresholds, {"split": "test", "model": args.kind})
    _print_report(report, args.thresholds)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vitpos", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize a CSI dataset")
    g.add_argument("--config", help="scenario JSON (fields of ScenarioConfig)")
    g.add_argument("--preset", default="default",
                   choices=["default", "outdoor", "indoor", "viwi"])
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.add_argument("--n-samples", type=int, required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train the ViT regressor")
    t.add_argument("--data", required=True)
    t.add_argument("--config", help="training JSON; optional 'model' object for ViT fields")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--history", help="history CSV path (default: <out>.history.csv)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score a checkpoint on a dataset split")
    e.add_argument("--data", required=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--config", help="unused; accepted for symmetry")
    e.add_argument("--seed", type=int, help="unused; the split seed comes from the checkpoint")
    e.add_argument("--out", required=True, help="report directory")
    e.add_argument("--split", default="test", choices=pipeline.SPLITS)
    e.add_argument("--thresholds", type=float, nargs="*", default=[5.0, 20.0])
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("baseline", help="score a reference predictor")
    b.add_argument("--data", required=True)
    b.add_argument("--kind", choices=["centroid", "mlp"], default="centroid")
    b.add_argument("--config", help="training JSON")
    b.add_argument("--seed", type=int)
    b.add_argument("--out", required=True, help="report directory")
    b.add_argument("--thresholds", type=float, nargs="*", default=[5.0, 20.0])
    b.set_defaults(func=cmd_baseline)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("VITPOS_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, ContractError, DomainError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
