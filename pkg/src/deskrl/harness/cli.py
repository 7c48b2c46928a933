"""Command-line entry points: train / evaluate / sweep / plots."""

from __future__ import annotations

import argparse
import glob
import os
import sys

import numpy as np

from deskrl.errors import EXIT_CONFIG, EXIT_OK, EXIT_TRAINING, ConfigError, TrainingFault
from deskrl.harness.config import load_config
from deskrl.harness.evaluate import summarize_runs, write_summary_csv
from deskrl.harness.plots import emit_plots
from deskrl.harness.records import read_run_jsonl
from deskrl.harness.run import run


def _parse_seed_range(spec: str):
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(spec)]


def _load_records(runs_dir: str):
    paths = sorted(glob.glob(os.path.join(runs_dir, "**", "run.jsonl"), recursive=True))
    if not paths:
        raise ConfigError(f"no run.jsonl found under {runs_dir}")
    return [read_run_jsonl(p) for p in paths]


def _progress_printer(epoch, overall):
    print(
        f"epoch {epoch:5d}  sr {overall['sr']:.3f}  reward {overall['reward']:10.3f}  "
        f"progress {overall['progress']:.3f}  episodes {overall['episodes']}",
        flush=True,
    )


def cmd_train(args) -> int:
    overrides = {"seed": args.seed} if args.seed is not None else None
    cfg = load_config(args.config, overrides)
    record = run(cfg, out_dir=args.out, progress_cb=_progress_printer if args.verbose else None)
    if record.epochs:
        last = record.epochs[-1]
        print(f"done: {last['epoch'] + 1} epochs, final sr {last['sr']:.3f}")
    else:
        print("done: 0 epochs")
    return EXIT_OK


def cmd_sweep(args) -> int:
    seeds = _parse_seed_range(args.seeds)
    for seed in seeds:
        cfg = load_config(args.config, {"seed": seed})
        out = os.path.join(args.out, f"run_seed{seed}")
        run(cfg, out_dir=out)
        print(f"seed {seed}: wrote {out}/run.jsonl")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    records = _load_records(args.runs)
    os.makedirs(args.out, exist_ok=True)
    summaries = summarize_runs(records, np.random.default_rng(args.bootstrap_seed))
    path = os.path.join(args.out, "summary.csv")
    write_summary_csv(path, summaries)
    for s in summaries:
        print(f"{s.suite} {s.method} {s.metric}: {s.point:.4f} [{s.lo:.4f}, {s.hi:.4f}] "
              f"(n={s.n_seeds})")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_plots(args) -> int:
    records = _load_records(args.runs)
    out = args.out or args.runs
    paths = emit_plots(records, out, seed=args.bootstrap_seed)
    for name, p in paths.items():
        print(f"{name}: {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deskrl",
        description="Desk-scale massively-parallel multi-task RL harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one run from a config file")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--out", default="runs/latest")
    p_train.add_argument("--verbose", action="store_true")
    p_train.set_defaults(func=cmd_train)

    p_sweep = sub.add_parser("sweep", help="train one run per seed in a range")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--seeds", required=True, help="a..b inclusive range or single seed")
    p_sweep.add_argument("--out", default="runs/sweep")
    p_sweep.set_defaults(func=cmd_sweep)

    p_eval = sub.add_parser("evaluate", help="summarize finished runs with bootstrap CIs")
    p_eval.add_argument("--runs", required=True)
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--bootstrap-seed", type=int, default=0)
    p_eval.set_defaults(func=cmd_evaluate)

    p_plots = sub.add_parser("plots", help="emit curve/cosine/task CSVs and PNG figures")
    p_plots.add_argument("--runs", required=True)
    p_plots.add_argument("--out", default=None)
    p_plots.add_argument("--bootstrap-seed", type=int, default=0)
    p_plots.set_defaults(func=cmd_plots)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingFault as exc:
        print(f"training fault: {exc}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
