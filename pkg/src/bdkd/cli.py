"""Command-line front end for training runs and experiment sweeps.

Usage:
    bdkd train          --config cfg.json [--seed N ...] [--out DIR] [--loss.tau=3 ...]
    bdkd ablate-kl      --config cfg.json [--seed N ...] [--out DIR]
    bdkd capacity-sweep --config cfg.json --widths 16,64,256 [--seed N ...] [--out DIR]
    bdkd temp-sweep     --config cfg.json [--taus 1,2,3,4] [--seed N ...] [--out DIR]
    bdkd calibrate      --logits dump.csv [--labels labels.csv] [--bins 10] --out DIR

Any scalar config field can be overridden with a flag named by its
dotted path, e.g. ``--optim.epochs=5`` or ``--loss.tau 3``. Seeds given
on the command line replace the config's seed list. The environment
variable BDKD_THREADS caps the sweep worker pool (default 1).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .calibration import bin_predictions, report_csv_text, report_json_dict
from .experiments import (
    ExperimentConfig,
    atomic_write_text,
    read_logits_csv,
    run_ablation_grid,
    run_capacity_sweep,
    run_temp_sweep,
    run_train,
    set_by_path,
    write_run_artifacts,
)
from .training import TrainingDiverged


def main(argv=None) -> int:
    parser = _build_parser()
    args, leftover = parser.parse_known_args(argv)
    if args.command is None:
        parser.print_help()
        return 2
    try:
        overrides = _parse_overrides(leftover, parser)
        return args.handler(args, overrides)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bdkd", description=__doc__.splitlines()[0])
    parser.set_defaults(command=None)
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, action="append", default=None,
                       help="run seed; repeat for several (replaces config seeds)")
        p.add_argument("--out", default="runs", help="output directory")

    p_train = sub.add_parser("train", help="run one training mode for each seed")
    common(p_train)
    p_train.set_defaults(handler=_cmd_train)

    p_ablate = sub.add_parser("ablate-kl", help="3x3 KL-direction grid")
    common(p_ablate)
    p_ablate.set_defaults(handler=_cmd_ablate)

    p_cap = sub.add_parser("capacity-sweep", help="teacher-width sweep for dml and bd-kd")
    common(p_cap)
    p_cap.add_argument("--widths", required=True, help="comma-separated teacher hidden widths")
    p_cap.set_defaults(handler=_cmd_capacity)

    p_temp = sub.add_parser("temp-sweep", help="temperature sweep for bd-kd")
    common(p_temp)
    p_temp.add_argument("--taus", default="1,2,3,4", help="comma-separated temperatures")
    p_temp.set_defaults(handler=_cmd_temp)

    p_cal = sub.add_parser("calibrate", help="recompute calibration from a logits dump")
    p_cal.add_argument("--logits", required=True, help="logits CSV (c logit columns plus label)")
    p_cal.add_argument("--labels", default=None,
                       help="optional labels CSV/text overriding the dump's label column")
    p_cal.add_argument("--bins", type=int, default=10)
    p_cal.add_argument("--out", default="runs")
    p_cal.set_defaults(handler=_cmd_calibrate)
    return parser


def _parse_overrides(leftover: list[str], parser: argparse.ArgumentParser) -> list[tuple[str, str]]:
    """Turn residual --dotted.path[=| ]value tokens into override pairs."""
    overrides = []
    i = 0
    while i < len(leftover):
        token = leftover[i]
        if not token.startswith("--"):
            parser.error(f"unrecognized argument {token!r}")
        body = token[2:]
        if "=" in body:
            key, value = body.split("=", 1)
            i += 1
        else:
            key = body
            if i + 1 >= len(leftover):
                parser.error(f"override {token!r} is missing a value")
            value = leftover[i + 1]
            i += 2
        overrides.append((key, value))
    return overrides


def _load_config(args, overrides) -> ExperimentConfig:
    raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    for key, value in overrides:
        set_by_path(raw, key, value)
    config = ExperimentConfig.from_dict(raw)
    if args.seed:
        config.seeds = tuple(args.seed)
    return config


def _cmd_train(args, overrides) -> int:
    config = _load_config(args, overrides)
    out = Path(args.out)
    for seed in config.seeds:
        result = run_train(config, seed)
        run_dir = write_run_artifacts(result, out, config, seed)
        accs = result.final_val_accuracy
        summary = " ".join(f"{name}={acc:.4f}" for name, acc in sorted(accs.items()))
        print(f"{config.mode} seed={seed} -> {run_dir} val_acc: {summary} "
              f"ece={result.calibration.ece:.4f}")
    return 0


def _cmd_ablate(args, overrides) -> int:
    config = _load_config(args, overrides)
    cells = run_ablation_grid(config, config.seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "seeds": list(config.seeds),
        "cells": [
            {"student_kl": sk, "teacher_kl": tk, **vals}
            for (sk, tk), vals in sorted(cells.items())
        ],
    }
    atomic_write_text(out / "ablation.json", json.dumps(payload, indent=2, sort_keys=True) + "\n")
    for net in ("student", "teacher"):
        lines = ["student_kl,teacher_kl,accuracy"]
        for (sk, tk), vals in sorted(cells.items()):
            lines.append(f"{sk},{tk},{vals[f'{net}_accuracy']!r}")
        atomic_write_text(out / f"ablation_{net}.csv", "\n".join(lines) + "\n")
    print(f"ablation grid written to {out} ({len(cells)} cells x {len(config.seeds)} seeds)")
    return 0


def _cmd_capacity(args, overrides) -> int:
    config = _load_config(args, overrides)
    widths = _parse_int_list(args.widths, "--widths")
    rows = run_capacity_sweep(config, widths, config.seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["method,teacher_width,teacher_param_count,student_accuracy,teacher_accuracy"]
    for row in rows:
        lines.append(
            f"{row['method']},{row['teacher_width']},{row['teacher_param_count']}"
            f",{row['student_accuracy']!r},{row['teacher_accuracy']!r}"
        )
    atomic_write_text(out / "capacity_sweep.csv", "\n".join(lines) + "\n")
    print(f"capacity sweep written to {out / 'capacity_sweep.csv'}")
    return 0


def _cmd_temp(args, overrides) -> int:
    config = _load_config(args, overrides)
    taus = _parse_float_list(args.taus, "--taus")
    rows = run_temp_sweep(config, taus, config.seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["tau,student_accuracy,teacher_accuracy"]
    for row in rows:
        lines.append(f"{row['tau']!r},{row['student_accuracy']!r},{row['teacher_accuracy']!r}")
    atomic_write_text(out / "temp_sweep.csv", "\n".join(lines) + "\n")
    print(f"temperature sweep written to {out / 'temp_sweep.csv'}")
    return 0


def _cmd_calibrate(args, overrides) -> int:
    if overrides:
        raise ValueError(f"calibrate takes no config overrides, got {overrides}")
    logits, labels = read_logits_csv(args.logits)
    if args.labels is not None:
        labels = np.loadtxt(args.labels, dtype=np.int64, ndmin=1)
        if len(labels) != len(logits):
            raise ValueError(
                f"labels file has {len(labels)} entries but logits dump has {len(logits)} rows"
            )
    report = bin_predictions(logits, labels, args.bins)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "calibration.csv", report_csv_text(report))
    atomic_write_text(out / "calibration.json",
                      json.dumps(report_json_dict(report), indent=2, sort_keys=True) + "\n")
    print(f"ece={report.ece!r} ({report.n} samples, {args.bins} bins) -> {out}")
    return 0


def _parse_int_list(text: str, flag: str) -> tuple[int, ...]:
    try:
        values = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ValueError(f"{flag} expects comma-separated integers, got {text!r}") from None
    return values


def _parse_float_list(text: str, flag: str) -> tuple[float, ...]:
    try:
        values = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ValueError(f"{flag} expects comma-separated numbers, got {text!r}") from None
    return values


if __name__ == "__main__":
    sys.exit(main())
