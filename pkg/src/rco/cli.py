"""Batch command-line front end.

Subcommands: synth, train, eval, sweep, inspect-perm, timing.  stdout
carries one-line summaries only; all data goes to files under --out.
Exit codes: 0 success, 1 runtime failure (one-line diagnostic on stderr),
2 usage errors.  RCO_LOG_LEVEL controls logging verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import cube, dataflow, losses, trainer
from .errors import RcoError


def _setup_logging() -> None:
    level = os.environ.get("RCO_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _out_dir(path: str, force: bool) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    if not force and any(out.iterdir()):
        raise RcoError(
            f"output directory {out} is not empty; pass --force to overwrite"
        )
    return out


def _load_config(args) -> trainer.TrainConfig:
    raw = {}
    if args.config:
        raw = json.loads(Path(args.config).read_text())
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "gamma", None) is not None:
        overrides["gamma"] = args.gamma
    if getattr(args, "lambda_", None) is not None:
        overrides["lambda"] = args.lambda_
    if getattr(args, "epochs", None) is not None:
        overrides["epochs"] = args.epochs
    if getattr(args, "rco", None) is not None:
        overrides["rco_enabled"] = args.rco
    # --set reaches any remaining TrainConfig field.
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise RcoError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            overrides[key] = json.loads(value)
        except json.JSONDecodeError:
            overrides[key] = value
    return trainer.TrainConfig.from_dict({**raw, **overrides})


def _load_dataset(args, config: trainer.TrainConfig) -> dataflow.WindowedDataset:
    table = dataflow.ingest_csv(args.data)
    return dataflow.make_windows(
        table,
        config.t,
        config.s,
        config.target_turbine,
        config.target_attribute,
        splits=config.splits,
        normalize=config.normalize,
    )


def _cmd_synth(args) -> int:
    out = _out_dir(args.out, args.force)
    spec = dataflow.SyntheticTaskSpec(
        turbines=args.turbines,
        attributes=args.attrs,
        n_steps=args.steps,
        corr_length=args.corr_length,
        noise=args.noise,
        seed=args.seed if args.seed is not None else 0,
    )
    table, truth = dataflow.synthesize(spec)
    dataflow.write_csv(table, out / "series.csv")
    dataflow.write_truth_json(truth, out / "truth.json")
    print(f"synth: wrote {out / 'series.csv'} ({table.n_steps} steps, "
          f"{table.n_turbines} turbines, {table.n_attributes} attributes)")
    return 0


def _cmd_train(args) -> int:
    out = _out_dir(args.out, args.force)
    config = _load_config(args)
    dataset = _load_dataset(args, config)
    trained = trainer.train(config, dataset)
    losses.write_metrics_csv(out / "metrics.csv", trained.metrics)
    trainer.save_checkpoint(out / "checkpoint.json", trained)
    if trained.rco is not None:
        cube.export_json(trained.rco, out / "permutations.json")
        cube.export_csv(trained.rco, out)
    final = trained.metrics[-1]
    print(f"train: {config.epochs} epochs, final {final.split} rmse={final.rmse:.6f}; "
          f"wrote {out / 'metrics.csv'}")
    return 0


def _cmd_eval(args) -> int:
    out = _out_dir(args.out, args.force)
    trained = trainer.load_checkpoint(args.checkpoint)
    dataset = _load_dataset(args, trained.config)
    score, preds = trainer.evaluate(trained, dataset, args.split, hard=args.hard_eval)
    _, y = dataset.split(args.split)
    lines = ["window," + ",".join(f"pred_{i}" for i in range(preds.shape[1]))
             + "," + ",".join(f"label_{i}" for i in range(y.shape[1]))]
    for i in range(len(preds)):
        lines.append(
            f"{i}," + ",".join(repr(v) for v in preds[i]) + ","
            + ",".join(repr(v) for v in y[i])
        )
    (out / "predictions.csv").write_text("\n".join(lines) + "\n")
    (out / "eval.json").write_text(json.dumps(
        {"split": args.split, "hard": args.hard_eval, "rmse": score}) + "\n")
    print(f"eval: {args.split} rmse={score:.6f} ({'hard' if args.hard_eval else 'soft'})")
    return 0


def _cmd_sweep(args) -> int:
    out = _out_dir(args.out, args.force)
    config = _load_config(args)
    dataset = _load_dataset(args, config)
    gammas = [float(g) for g in args.gammas.split(",")]
    result = trainer.sweep_gamma(
        config, dataset, gammas, n_seeds=args.seeds, split=args.split,
        hard=args.hard_eval,
    )
    result.to_csv(out / "sweep.csv")
    result.to_runs_csv(out / "sweep_runs.csv")
    best = min(range(len(result.labels)), key=lambda i: result.mean[i])
    print(f"sweep: best column {result.labels[best]} "
          f"(rmse {result.mean[best]:.6f}); wrote {out / 'sweep.csv'}")
    return 0


def _cmd_inspect_perm(args) -> int:
    out = _out_dir(args.out, args.force)
    trained = trainer.load_checkpoint(args.checkpoint)
    if trained.rco is None:
        raise RcoError("checkpoint has no permutation state (trained with --no-rco)")
    cube.export_json(trained.rco, out / "permutations.json")
    cube.export_csv(trained.rco, out)
    print(f"inspect-perm: wrote soft/hard matrices for "
          f"{len(trained.rco.W)} axes to {out}")
    return 0


def _cmd_timing(args) -> int:
    out = _out_dir(args.out, args.force)
    config = _load_config(args)
    dataset = _load_dataset(args, config)
    report = trainer.timing_report(config, dataset, epochs=args.epochs or 4)
    (out / "timing.json").write_text(json.dumps(report, indent=2) + "\n")
    print(f"timing: train ratio {report['train_ratio']:.3f}, "
          f"infer ratio {report['infer_ratio']:.3f}")
    return 0


def _add_common(p: argparse.ArgumentParser, config: bool = True) -> None:
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.add_argument("--seed", type=int, default=None)
    if config:
        p.add_argument("-c", "--config", default=None, help="JSON config file")
        p.add_argument("--gamma", type=float, default=None)
        p.add_argument("--lambda", dest="lambda_", type=float, default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config field (repeatable)")
        rco = p.add_mutually_exclusive_group()
        rco.add_argument("--rco", dest="rco", action="store_true", default=None)
        rco.add_argument("--no-rco", dest="rco", action="store_false")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rco",
        description="Learnable axis permutations for tensor forecasting: "
                    "synthesize data, train, evaluate, sweep gamma, export heatmap data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a planted-permutation dataset")
    _add_common(p, config=False)
    p.add_argument("--turbines", type=int, default=6)
    p.add_argument("--attrs", type=int, default=4)
    p.add_argument("--steps", type=int, default=240)
    p.add_argument("--corr-length", type=float, default=8.0)
    p.add_argument("--noise", type=float, default=0.1)
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("train", help="train on a CSV dataset")
    _add_common(p)
    p.add_argument("--data", required=True, help="input series CSV")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_common(p, config=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--hard-eval", action="store_true")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("sweep", help="gamma sweep with a baseline column")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--gammas", default="0,0.2,0.4,0.6,0.8,1")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--hard-eval", action="store_true")
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("inspect-perm", help="export learned matrices for heatmaps")
    _add_common(p, config=False)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(fn=_cmd_inspect_perm)

    p = sub.add_parser("timing", help="per-epoch and per-sample overhead ratios")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.set_defaults(fn=_cmd_timing)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (RcoError, OSError, json.JSONDecodeError) as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
