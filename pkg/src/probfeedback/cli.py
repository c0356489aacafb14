"""Command-line entry point: ``probfeedback {run,preset,lower-bound,estimate-paths}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .bounds import BoundError, lower_bound_cascade, lower_bound_one_step
from .env import CASCADE, ModelError
from .graph import GraphError, estimate_connection_matrix, exact_connection_matrix
from .lp import LPError
from .policies import PolicyError

EXPECTED_ERRORS = (harness.ConfigError, harness.ExperimentError, BoundError, GraphError,
                   ModelError, LPError, PolicyError, OSError)


def _override(config, args):
    changes = {k: getattr(args, k) for k in ("seed", "horizon", "runs") if getattr(args, k, None) is not None}
    return config.replace(**changes) if changes else config


def _run_and_write(config, out, workers) -> int:
    trace = harness.run_experiment(config, workers=workers)
    paths = harness.write_outputs(config, trace, out)
    print(f"final_regret_mean={trace.final_mean:.6f}")
    for key, path in paths.items():
        print(f"{key}={path}")
    return 0


def cmd_run(args) -> int:
    config = _override(harness.load_config(args.config), args)
    out = args.out or config.output or "results"
    return _run_and_write(config, out, args.workers)


def cmd_preset(args) -> int:
    options = {"delta": args.delta} if args.delta is not None else {}
    if args.best is not None:
        options["best"] = args.best
    config = harness.preset(args.name, **options)
    config = _override(config, args)
    return _run_and_write(config, args.out, args.workers)


def cmd_lower_bound(args) -> int:
    config = harness.load_config(args.config)
    if config.mode == CASCADE:
        if args.samples is not None:
            rng = np.random.default_rng(config.seed)
            connection = estimate_connection_matrix(config.graph, args.samples, rng)
            source = f"monte-carlo({args.samples})"
        else:
            connection = exact_connection_matrix(config.graph)
            source = "exact"
        report = lower_bound_cascade(connection, config.reward, config.gap_floor, source=source)
    else:
        report = lower_bound_one_step(config.graph, config.reward, config.gap_floor)
    print("\n".join(report.lines()))
    return 0


def cmd_estimate_paths(args) -> int:
    config = harness.load_config(args.config)
    if args.samples < 1:
        raise harness.ConfigError(f"samples must be >= 1, got {args.samples}")
    rng = np.random.default_rng(config.seed)
    matrix = estimate_connection_matrix(config.graph, args.samples, rng)
    for row in matrix:
        print(",".join(harness.format_sig6(x) for x in row))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="probfeedback",
                                     description="Bandits with probabilistically triggered graph feedback.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_overrides(p):
        p.add_argument("--seed", type=int, help="base seed (run r uses seed + r)")
        p.add_argument("--horizon", type=int, help="rounds per run")
        p.add_argument("--runs", type=int, help="number of replications")
        p.add_argument("--workers", type=int, default=1, help="parallel worker processes")

    p = sub.add_parser("run", help="run an experiment from a JSON config")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", type=Path, help="output directory (default: config 'output' or ./results)")
    add_overrides(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("preset", help="materialize and run a built-in 6-node experiment")
    p.add_argument("name", choices=("cycle6", "random6"))
    group = p.add_mutually_exclusive_group()
    group.add_argument("--delta", type=float, help="cycle6 gap of arm A")
    group.add_argument("--best", help="random6 best arm, a letter A-F")
    p.add_argument("--out", required=True, type=Path)
    add_overrides(p)
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("lower-bound", help="print the log T regret coefficient")
    p.add_argument("--config", required=True, type=Path)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--exact", action="store_true", help="enumerate edge subsets (default)")
    group.add_argument("--samples", type=int, help="Monte-Carlo path estimate instead")
    p.set_defaults(func=cmd_lower_bound)

    p = sub.add_parser("estimate-paths", help="print a Monte-Carlo connection matrix as CSV")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--samples", required=True, type=int)
    p.set_defaults(func=cmd_estimate_paths)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EXPECTED_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
