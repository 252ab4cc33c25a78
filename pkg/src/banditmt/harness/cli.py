"""Command-line entry point.

Subcommands:
  run                    experiment config -> metrics table + trial CSV
  graph                  clique-environment experiment (same pipeline)
  validity               Monte Carlo oracle suite, prints one line per check
  oracle-selfconsistent  cross-check step-up outputs against brute force
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from .. import mt
from .config import load_config
from .experiments import graph_experiment, run_experiment
from .validity import run_validity_suite


def _add_common(parser):
    parser.add_argument("--reps", type=int, default=None, help="override replications")
    parser.add_argument("--seed", type=int, default=None, help="override base seed")
    parser.add_argument("--out", type=str, default=None, help="output directory")
    parser.add_argument("--workers", type=int, default=1, help="worker processes")
    parser.add_argument("--stride", type=int, default=None, help="evidence snapshot stride")


def _load_with_overrides(args):
    config = load_config(args.config)
    if args.reps is not None:
        config = replace(config, replications=args.reps)
    if args.seed is not None:
        config = replace(config, base_seed=args.seed)
    if args.out is not None:
        config = replace(config, out_dir=args.out)
    if args.stride is not None:
        config = replace(config, snapshot_stride=args.stride)
    return config


def _cmd_run(args) -> int:
    config = _load_with_overrides(args)
    table, _ = run_experiment(config, workers=args.workers)
    print(f"config hash: {config.config_hash}")
    print(table.format())
    return 0


def _cmd_graph(args) -> int:
    config = _load_with_overrides(args)
    table, _ = graph_experiment(config, workers=args.workers)
    print(f"config hash: {config.config_hash}")
    print(table.format())
    return 0


def _cmd_validity(args) -> int:
    # report-only: failed checks are report entries, never process errors
    results = run_validity_suite(
        reps=args.reps or 400,
        t_max=args.t_max,
        seed=args.seed or 7001,
        workers=args.workers,
        fdr_reps=args.fdr_reps,
    )
    failures = 0
    for r in results:
        print(r.format())
        failures += 0 if r.passed else 1
    print(f"{len(results) - failures}/{len(results)} checks passed")
    return 0


def _cmd_oracle(args) -> int:
    rng = np.random.default_rng(args.seed or 99)
    mismatches = 0
    for _ in range(args.reps or 200):
        k = int(rng.integers(1, args.kmax + 1))
        alpha = float(rng.uniform(0.01, 0.3))
        if rng.integers(2):
            values = np.exp(rng.uniform(-1.0, 7.0, size=k))
            fast = mt.ebh(values, alpha)
            slow = mt.brute_force_largest_self_consistent(values, alpha, mt.Mode.E)
        else:
            values = np.minimum(1.0, np.exp(-rng.uniform(0.0, 9.0, size=k)))
            fast = mt.bh(values, alpha)
            slow = mt.brute_force_largest_self_consistent(values, alpha, mt.Mode.P)
        if fast.ids != slow.ids:
            mismatches += 1
            print(f"MISMATCH: values={values}, alpha={alpha}: {fast.ids} vs {slow.ids}")
    total = args.reps or 200
    print(f"{total - mismatches}/{total} random inputs matched brute force")
    return 0 if mismatches == 0 else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="banditmt",
        description="Bandit multiple testing simulator with anytime FDR control.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("--config", required=True)
    _add_common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_graph = sub.add_parser("graph", help="run a clique-environment experiment")
    p_graph.add_argument("--config", required=True)
    _add_common(p_graph)
    p_graph.set_defaults(func=_cmd_graph)

    p_val = sub.add_parser("validity", help="run the Monte Carlo oracle suite")
    _add_common(p_val)
    p_val.add_argument("--t-max", type=int, default=4000)
    p_val.add_argument("--fdr-reps", type=int, default=None)
    p_val.set_defaults(func=_cmd_validity)

    p_or = sub.add_parser(
        "oracle-selfconsistent", help="cross-check step-up against brute force"
    )
    p_or.add_argument("--reps", type=int, default=200)
    p_or.add_argument("--seed", type=int, default=99)
    p_or.add_argument("--kmax", type=int, default=10)
    p_or.set_defaults(func=_cmd_oracle)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
