"""``rkdo`` command line.

Usage::

    rkdo theorem   [--config FILE] [--out DIR]
    rkdo compare   [--config FILE] [--out DIR] [--seeds 42,123] [--jobs 4]
    rkdo train     --method rkdo|icon [--config FILE] [--out DIR]
    rkdo gradcheck [--config FILE] [--out DIR]
    rkdo metrics   --embeddings E.txt --dataset D.csv [--out DIR] [--seeds S]

Without ``--out`` results go to ``$RKDO_OUT/<command>`` (default
``./rkdo-out/<command>``).  ``metrics`` seeds k-means and the probe split
with the first configured seed.  Exit status is 1 when a check fails.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from ..textio import load_matrix
from .config import ConfigError, ExperimentConfig, load_config
from .runs import (
    load_dataset,
    run_compare,
    run_gradcheck,
    run_metrics,
    run_theorem,
    run_train,
)

OUT_ENV = "RKDO_OUT"


def _seed_list(text):
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="rkdo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="key = value config file")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--seeds", type=_seed_list, help="comma-separated seeds")
        p.add_argument("--jobs", type=int, help="worker processes")
        return p

    common(sub.add_parser("theorem", help="verify the convergence bounds"))
    common(sub.add_parser("compare", help="RKDO vs I-Con over datasets, budgets, seeds"))
    train = common(sub.add_parser("train", help="single-method runs with checkpoints"))
    train.add_argument("--method", choices=("rkdo", "icon"), required=True)
    common(sub.add_parser("gradcheck", help="analytic vs finite-difference gradients"))
    metrics = common(sub.add_parser("metrics", help="evaluate saved embeddings"))
    metrics.add_argument("--embeddings", type=Path, required=True)
    metrics.add_argument("--dataset", type=Path, required=True)
    return parser


def _resolve(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seeds:
        overrides["seeds"] = args.seeds
    if args.jobs:
        overrides["jobs"] = args.jobs
    if overrides:
        cfg = cfg.replace(**overrides)
    out = args.out or Path(os.environ.get(OUT_ENV, "rkdo-out")) / args.command
    return cfg, out


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg, out = _resolve(args)
    except (ConfigError, OSError) as exc:
        print(f"rkdo: {exc}", file=sys.stderr)
        return 2

    if args.command == "theorem":
        res = run_theorem(cfg, out)
        for check in res["checks"]:
            print(f"{check['check']:<28} {'PASS' if check['passed'] else 'FAIL'}")
        failed = res["failed_reports"]
        for path in failed[:5]:
            print(f"violation: {path}", file=sys.stderr)
        if len(failed) > 5:
            print(f"... and {len(failed) - 5} more", file=sys.stderr)
    elif args.command == "compare":
        res = run_compare(cfg, out)
        for row in res["aggregate"]:
            print(
                f"{row['dataset']:<6} steps={row['steps']:<5} "
                f"rkdo={row['rkdo_loss_mean']:.4f} icon={row['icon_loss_mean']:.4f} "
                f"improvement={100 * row['improvement']:.2f}%"
            )
    elif args.command == "train":
        res = run_train(cfg, out, args.method)
    elif args.command == "gradcheck":
        res = run_gradcheck(cfg, out)
        print(f"max relative error {res['max_rel_err']:.3e}")
    else:
        ds = load_dataset(args.dataset)
        E = load_matrix(args.embeddings)
        row = run_metrics(E, ds, out / "metrics.csv", seed=cfg.seeds[0], neighbors=cfg.neighbors)
        print(", ".join(f"{k}={v}" for k, v in row.items()))
        res = {"passed": True}

    print(f"results in {out}")
    return 0 if res["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
