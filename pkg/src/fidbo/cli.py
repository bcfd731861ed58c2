"""Command line front end for running and aggregating benchmark experiments."""

from __future__ import annotations

import argparse
import json
import sys

from .bench import aggregate, run_experiment, run_sampler_validation
from .config import load_config
from .errors import FidboError


def _build_parser():
    p = argparse.ArgumentParser(
        prog="fidbo",
        description="Cost-aware Bayesian optimization benchmarks.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment (R seeded repetitions)")
    run.add_argument("--config", required=True, help="flat key=value config file")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, default=None, help="base seed (overrides config)")
    run.add_argument("--runs", type=int, default=None, help="repetitions (overrides config)")
    run.add_argument("--jobs", type=int, default=1, help="accepted for symmetry; runs execute sequentially")

    val = sub.add_parser("validate-sampler", help="score all minimizer samplers on one campaign")
    val.add_argument("--config", required=True)
    val.add_argument("--out", required=True)
    val.add_argument("--seed", type=int, default=None)

    agg = sub.add_parser("aggregate", help="(re)build aggregates.csv from traces in a directory")
    agg.add_argument("--out", required=True, help="directory containing trace_seed*.csv")
    return p


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            flat = load_config(args.config)
            run_experiment(flat, args.out, base_seed=args.seed, runs=args.runs)
            print(f"wrote traces and aggregates.csv under {args.out}")
        elif args.command == "validate-sampler":
            flat = load_config(args.config)
            path, rows = run_sampler_validation(flat, args.out, seed=args.seed)
            print(f"wrote {path} ({len(rows)} rows)")
        elif args.command == "aggregate":
            path = aggregate(args.out)
            print(f"wrote {path}")
        return 0
    except FidboError as exc:
        line = json.dumps({"error": type(exc).__name__, "message": str(exc)})
        print(line, file=sys.stderr)
        return 2
    except OSError as exc:
        line = json.dumps({"error": type(exc).__name__, "message": str(exc)})
        print(line, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
