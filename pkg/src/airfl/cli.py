"""Batch experiment runner writing CSV rows and a JSON summary."""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import ConfigError, SystemConfig, validate_config
from .flsim import SCHEMES, SWEEP_AXES, run_regression_fl, sweep_experiment

COLUMNS = ("experiment", "scheme", "seed", "round", "objective_U", "mse", "num_selected",
           "min_channel_gain", "beta", "training_loss", "test_error", "wall_ms")
OUT_ENV = "AIRFL_OUT_DIR"
EXPERIMENTS = ("scenario", "paper-scenario", "sweep", "validate")


def _fmt(x):
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.12g}"
    return str(x)


def parse_args(argv=None):
    p = argparse.ArgumentParser(prog="airfl", description=__doc__)
    p.add_argument("--experiment", choices=EXPERIMENTS, default="scenario")
    p.add_argument("--config", help="YAML config file (defaults are used if omitted)")
    p.add_argument("--seed", type=int, help="seed (overrides the config)")
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    p.add_argument("--axis", choices=SWEEP_AXES, help="sweep parameter")
    p.add_argument("--values", help="comma-separated sweep values")
    p.add_argument("--rounds", type=int, default=50)
    p.add_argument("--out", help=f"output directory (env {OUT_ENV}, default results/)")
    p.add_argument("--scheme", action="append", choices=SCHEMES,
                   help="scheme to run (repeatable; default all, multi-RIS for sweeps)")
    p.add_argument("--max-iters", type=int, default=20, help="alternating-optimization iterations")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timing", action="store_true",
                   help="record wall-clock times (output is then not byte-reproducible)")
    args = p.parse_args(argv)
    if args.rounds < 1 or args.seeds < 1 or args.max_iters < 1 or args.workers < 1:
        p.error("--rounds, --seeds, --max-iters and --workers must be positive")
    if args.experiment == "sweep":
        if not args.axis or not args.values:
            p.error("sweep needs --axis and --values")
        try:
            args.values = [float(v) if args.axis == "lambda_c" else int(v)
                           for v in args.values.split(",") if v.strip()]
        except ValueError:
            p.error(f"--values must be a comma-separated list of numbers: {args.values!r}")
    return args


def _trace_rows(experiment, tr, timing):
    wall = tr.wall_ms if timing else 0.0
    return [{"experiment": experiment, "scheme": tr.scheme, "seed": tr.seed, "round": r["round"],
             "objective_U": float(tr.objective_U), "mse": float(r["mse"]),
             "num_selected": r["num_selected"], "min_channel_gain": float(tr.min_channel_gain),
             "beta": float(tr.beta), "training_loss": r["training_loss"],
             "test_error": r["test_error"], "wall_ms": float(wall)} for r in tr.rounds]


def _failure_row(experiment, scheme, seed):
    row = {c: float("nan") for c in COLUMNS}
    row.update(experiment=f"{experiment}:failed", scheme=scheme, seed=seed, round=-1, num_selected=0)
    return row


def _run_one(job):
    cfg, scheme, rounds, max_iters = job
    try:
        return run_regression_fl(cfg, scheme, rounds, max_iters), None
    except Exception as exc:   # reported as a flagged row
        return None, f"{type(exc).__name__}: {exc}"


def _run_sweep_cell(job):
    cfg, axis, val, scheme, rounds, max_iters = job
    try:
        rows, _ = sweep_experiment(cfg, axis, [val], [cfg.seed], rounds, (scheme,), max_iters)
        return rows[0], None
    except Exception as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _map(fn, jobs, workers):
    if workers == 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(workers) as ex:
        return list(ex.map(fn, jobs))


def scenario(config, args):
    schemes = args.scheme or list(SCHEMES)
    seeds = [config.seed + i for i in range(args.seeds)]
    jobs = [(config.replace(seed=s), sc, args.rounds, args.max_iters) for s in seeds for sc in schemes]
    rows, failures, finals = [], [], []
    for (cfg, sc, _, _), (tr, err) in zip(jobs, _map(_run_one, jobs, args.workers)):
        if err:
            rows.append(_failure_row("scenario", sc, cfg.seed))
            failures.append({"scheme": sc, "seed": cfg.seed, "error": err})
            continue
        rows += _trace_rows("scenario", tr, args.timing)
        finals.append({"scheme": sc, "seed": cfg.seed, "selected": list(tr.selected),
                       "objective_U": tr.objective_U, "mse": tr.mse,
                       "final_test_error": tr.final_test_error,
                       "model": [float(x) for x in tr.model], "fallback": tr.fallback})
    return rows, {"runs": finals, "failures": failures}


def sweep(config, args):
    schemes = args.scheme or ["multi-RIS"]
    seeds = [config.seed + i for i in range(args.seeds)]
    jobs = [(config.replace(seed=s), args.axis, v, sc, args.rounds, args.max_iters)
            for v in args.values for sc in schemes for s in seeds]
    rows, failures, cells = [], [], []
    for job, (cell, err) in zip(jobs, _map(_run_sweep_cell, jobs, args.workers)):
        cfg, axis, val, sc = job[:4]
        exp = f"sweep:{axis}={val}"
        if err:
            rows.append(_failure_row(exp, sc, cfg.seed))
            failures.append({"value": val, "scheme": sc, "seed": cfg.seed, "error": err})
            continue
        rows += _trace_rows(exp, cell["trace"], args.timing)[-1:]
        cells.append({k: cell[k] for k in cell if k != "trace"})
    table = []
    for v in args.values:
        for sc in schemes:
            sub = [c for c in cells if c["value"] == v and c["scheme"] == sc]
            if not sub:
                continue
            entry = {"value": v, "scheme": sc, "seeds": len(sub)}
            for key in ("test_error", "num_selected", "rounds_to_target", "lifetime"):
                if key in sub[0]:
                    entry[key] = sum(c[key] for c in sub) / len(sub)
            table.append(entry)
    return rows, {"axis": args.axis, "table": table, "cells": cells, "failures": failures}


def write_outputs(out, rows, summary):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "results.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in COLUMNS])
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=float) + "\n")


def main(argv=None):
    args = parse_args(argv)
    try:
        config = validate_config(args.config) if args.config else SystemConfig()
        if args.seed is not None:
            config = config.replace(seed=args.seed)
    except ConfigError as exc:
        print(f"airfl: {exc}", file=sys.stderr)
        return 2
    if args.experiment == "validate":
        print(json.dumps(config.to_nested(), indent=2))
        return 0
    out = Path(args.out or os.environ.get(OUT_ENV) or "results")
    if args.experiment == "sweep":
        rows, summary = sweep(config, args)
    else:
        rows, summary = scenario(config, args)
    summary = {"experiment": args.experiment, "config": config.to_nested(),
               "rounds": args.rounds, **summary}
    write_outputs(out, rows, summary)
    if summary["failures"]:
        for f in summary["failures"]:
            print(f"airfl: run failed: {f}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
