"""Monte Carlo replication, metrics aggregation and result emission.

``run_experiment`` runs every configured method over seeds base+1..base+R,
computes per-trial time-to-target and FDP/TPP, aggregates them into a
metrics table (with ratios against the configured baseline method), and
writes a trial-level CSV plus a JSON manifest carrying the config hash.
Replications are independent units: they can be fanned out over a process
pool and are reduced in canonical seed order, so output bytes never depend
on scheduling.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from .. import engine
from .config import SCHEMA_VERSION, ExperimentConfig, MethodSpec

__all__ = [
    "TrialRecord",
    "MethodMetrics",
    "MetricsTable",
    "run_trial_record",
    "run_experiment",
    "graph_experiment",
    "time_to_target",
    "CSV_COLUMNS",
]

CSV_COLUMNS = (
    "config_hash",
    "seed",
    "method",
    "k",
    "h1_size",
    "t_star",
    "fdp_at_stop",
    "tpp_at_stop",
    "stop_round",
    "rejections",
)


@dataclass(frozen=True)
class TrialRecord:
    config_hash: str
    seed: int
    method: str
    k: int
    h1_size: int
    t_star: float  # inf when the horizon was exhausted before the target
    fdp_at_stop: float
    tpp_at_stop: float
    stop_round: int
    rejections: str  # ';'-joined sorted hypothesis ids

    def as_row(self) -> list:
        return [
            self.config_hash,
            repr(self.seed),
            self.method,
            repr(self.k),
            repr(self.h1_size),
            repr(self.t_star),
            repr(self.fdp_at_stop),
            repr(self.tpp_at_stop),
            repr(self.stop_round),
            self.rejections,
        ]


def time_to_target(result: engine.TrialResult, h1, delta: float) -> float:
    """First round with TPP >= 1 - delta that still holds at the stop round.

    Rejection trajectories are monotone (evidence freezes on rejection), so
    the two-point check reduces to the first crossing provided the target
    still holds at the horizon; inf-coded otherwise.
    """
    if not h1:
        return math.inf
    if result.tpp_at(result.stop_round, h1) < 1.0 - delta:
        return math.inf
    target = 1.0 - delta
    rounds = sorted(r for h, r in result.rejection_round if h in set(h1))
    for idx, r in enumerate(rounds, start=1):
        if idx / len(h1) >= target:
            return float(r)
    return math.inf


def run_trial_record(config: ExperimentConfig, method: MethodSpec, seed: int) -> TrialRecord:
    """One (method, seed) replication; top-level so process pools can pickle it."""
    env, hyps = config.environment.build()
    result = engine.run_trial(
        env,
        hyps,
        method.policy_spec(config.delta),
        method.evidence_spec(config.delta),
        method.mt_config(config.delta),
        config.stopping.build(),
        seed,
        snapshot_stride=config.snapshot_stride,
        single_sample_discard=method.single_sample,
    )
    t_star = time_to_target(result, hyps.h1, config.delta)
    return TrialRecord(
        config_hash=config.config_hash,
        seed=seed,
        method=method.name,
        k=hyps.k,
        h1_size=len(hyps.h1),
        t_star=t_star,
        fdp_at_stop=result.fdp,
        tpp_at_stop=result.tpp,
        stop_round=result.stop_round,
        rejections=";".join(str(h) for h in result.rejected),
    )


@dataclass(frozen=True)
class MethodMetrics:
    method: str
    n: int
    fdr: float
    fdr_se: float
    tpr: float
    tpr_se: float
    t_star_mean: float
    t_star_median: float
    time_ratio_vs_baseline: float


@dataclass(frozen=True)
class MetricsTable:
    baseline: str
    rows: tuple

    def row(self, method: str) -> MethodMetrics:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)

    def format(self) -> str:
        header = (
            f"{'method':<20} {'FDR':>8} {'±SE':>8} {'TPR':>8} {'±SE':>8} "
            f"{'T* mean':>10} {'T* med':>8} {'ratio':>7}"
        )
        lines = [header]
        for r in self.rows:
            lines.append(
                f"{r.method:<20} {r.fdr:>8.4f} {r.fdr_se:>8.4f} {r.tpr:>8.4f} "
                f"{r.tpr_se:>8.4f} {r.t_star_mean:>10.1f} {r.t_star_median:>8.1f} "
                f"{r.time_ratio_vs_baseline:>7.3f}"
            )
        return "\n".join(lines)


def _se(values: np.ndarray) -> float:
    if values.size < 2:
        return 0.0
    return float(np.std(values, ddof=1) / math.sqrt(values.size))


def _aggregate(config: ExperimentConfig, records: List[TrialRecord]) -> MetricsTable:
    by_method: Dict[str, List[TrialRecord]] = {m.name: [] for m in config.methods}
    for r in records:
        by_method[r.method].append(r)
    base_records = by_method[config.baseline_method]
    base_mean = float(np.mean([r.t_star for r in base_records]))
    rows = []
    for m in config.methods:
        rs = by_method[m.name]
        fdp = np.array([r.fdp_at_stop for r in rs])
        tpp = np.array([r.tpp_at_stop for r in rs])
        tstars = np.array([r.t_star for r in rs])
        mean = float(np.mean(tstars))
        ratio = mean / base_mean if base_mean not in (0.0, math.inf) else math.inf
        rows.append(
            MethodMetrics(
                method=m.name,
                n=len(rs),
                fdr=float(np.mean(fdp)),
                fdr_se=_se(fdp),
                tpr=float(np.mean(tpp)),
                tpr_se=_se(tpp),
                t_star_mean=mean,
                t_star_median=float(np.median(tstars)),
                time_ratio_vs_baseline=ratio,
            )
        )
    return MetricsTable(config.baseline_method, tuple(rows))


def _worker(args) -> TrialRecord:
    config_dict, method_name, seed = args
    config = ExperimentConfig.from_dict(config_dict)
    method = next(m for m in config.methods if m.name == method_name)
    return run_trial_record(config, method, seed)


def run_experiment(config: ExperimentConfig, workers: int = 1):
    """Run all methods x replications; returns (MetricsTable, records).

    Writes <out_dir>/<name>_trials.csv and a manifest when the config names
    an output directory.  Record order is canonicalized by (method, seed)
    before aggregation and writing.
    """
    seeds = [config.base_seed + r for r in range(1, config.replications + 1)]
    tasks = [(m, s) for m in config.methods for s in seeds]
    if workers > 1:
        cfg_dict = config.to_dict()
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(
                pool.map(
                    _worker,
                    [(cfg_dict, m.name, s) for m, s in tasks],
                    chunksize=max(1, len(tasks) // (workers * 8)),
                )
            )
    else:
        records = [run_trial_record(config, m, s) for m, s in tasks]
    records.sort(key=lambda r: (r.method, r.seed))
    table = _aggregate(config, records)
    if config.out_dir is not None:
        write_outputs(config, records)
    return table, records


def write_outputs(config: ExperimentConfig, records: List[TrialRecord]) -> str:
    os.makedirs(config.out_dir, exist_ok=True)
    csv_path = os.path.join(config.out_dir, f"{config.name}_trials.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow(r.as_row())
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "config_hash": config.config_hash,
        "software_version": _package_version(),
        "csv_columns": list(CSV_COLUMNS),
        "config": config.to_dict(),
    }
    with open(os.path.join(config.out_dir, f"{config.name}_manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return csv_path


def _package_version() -> str:
    from .. import __version__

    return __version__


def graph_experiment(config: ExperimentConfig, workers: int = 1):
    """Clique-environment comparison; same pipeline with extra validation."""
    if config.environment.kind != "clique":
        raise ValueError("graph_experiment requires a clique environment")
    return run_experiment(config, workers)
