"""Validity oracle suite: Monte Carlo checks of the statistical guarantees.

Each check produces a :class:`CheckResult` with the estimate, the bound it
must respect, the standard error, and a verdict at the estimate <= bound +
3*SE band.  Failures are report entries, never exceptions, so the suite can
be run end to end and inspected.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .. import engine, mt
from ..evidence import (
    Boundary,
    LambdaStrategy,
    make_pm_process,
    pmh_step,
    pmh_update,
)
from ..exploration import PolicyKind, PolicySpec
from ..multiagent import AgentPool
from . import oracles

__all__ = [
    "CheckResult",
    "superuniformity_checks",
    "ville_checks",
    "drifting_checks",
    "adversarial_schedule_log_e",
    "adversarial_checks",
    "empirical_fdr",
    "fdr_table_checks",
    "multiagent_crossing_check",
    "run_validity_suite",
]


@dataclass(frozen=True)
class CheckResult:
    name: str
    estimate: float
    bound: float
    se: float
    n: int
    passed: bool

    def format(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (
            f"[{verdict}] {self.name}: estimate={self.estimate:.6g} "
            f"bound={self.bound:.6g} se={self.se:.3g} n={self.n}"
        )


def _band_check(name, rate, bound, se, n) -> CheckResult:
    return CheckResult(name, rate, bound, se, n, rate <= bound + 3.0 * se)


def superuniformity_checks(
    reps: int = 2000,
    t_max: int = 10000,
    alphas=(0.01, 0.05, 0.1),
    seed: int = 7101,
) -> List[CheckResult]:
    """P(running inf of the p-process <= alpha) <= alpha for null streams.

    The running infimum drops below alpha exactly when the sample mean ever
    leaves the alpha-level boundary, so the oracle tests the crossing event
    directly.
    """
    out = []
    for boundary in (Boundary.TIGHT, Boundary.STITCHED):
        for i, alpha in enumerate(alphas):
            rate, se = oracles.boundary_crossing_rate(
                boundary, alpha, t_max, reps, seed + 13 * i
            )
            out.append(
                _band_check(
                    f"superuniformity {boundary.value} alpha={alpha}", rate, alpha, se, reps
                )
            )
    return out


def ville_checks(
    reps: int = 2000,
    t_max: int = 10000,
    alpha: float = 0.05,
    seed: int = 7201,
) -> List[CheckResult]:
    """P(sup E_t >= 1/alpha) <= alpha for each e-process family on a null arm."""
    out = []
    threshold = 1.0 / alpha
    for i, kind in enumerate(("dm", "pm-decaying", "pm-half-mean")):
        rate, se = oracles.ville_rate(
            kind, threshold, t_max, reps, seed + 17 * i, stream="null", alpha=alpha
        )
        out.append(_band_check(f"ville {kind}", rate, alpha, se, reps))
    return out


def drifting_checks(
    reps: int = 2000,
    t_max: int = 10000,
    alpha: float = 0.05,
    seed: int = 7301,
) -> List[CheckResult]:
    """The discrete mixture stays valid when only the average conditional mean
    is controlled (alternating -1, +1 conditional means)."""
    rate, se = oracles.ville_rate(
        "dm", 1.0 / alpha, t_max, reps, seed, stream="drifting", alpha=alpha
    )
    return [_band_check("ville dm drifting-null", rate, alpha, se, reps)]


def adversarial_schedule_log_e(t: int, mu0: float = 0.0) -> float:
    """Wealth after t rounds of the adversarial deterministic schedule.

    Rewards alternate -1, +1 (odd rounds negative, so running average means
    stay <= 0); bets are 0 on odd rounds and 1 on even rounds.  Every even
    round multiplies the wealth by exp(1*1 - 1/2) = e^{1/2}, so the process
    is deterministic and grows without bound: no e-process can do that.
    """
    state = make_pm_process(mu0, LambdaStrategy.fixed(0.0))
    log_w = state.log_wealth
    for j in range(1, t + 1):
        x = -1.0 if j % 2 == 1 else 1.0
        lam = 0.0 if j % 2 == 1 else 1.0
        log_w = pmh_step(log_w, lam, x, mu0)
    return log_w


def adversarial_checks(t: int = 10) -> List[CheckResult]:
    """Deterministic wealth growth of the betting process under the drifting
    null: the realized value and the claimed exp(ceil(t/2)) target.

    The realized per-even-round factor is exp(1 - 1/2), which makes the
    wealth exp(floor(t/2)/2); the exp(ceil(t/2)) target would need a factor of
    exp(1) per bet, unattainable with unit rewards.  Both entries are reported
    so the discrepancy stays visible.
    """
    log_e = adversarial_schedule_log_e(t)
    realized = math.exp(log_e)
    expected_growth = math.exp(0.5 * (t // 2))
    claimed = math.exp(math.ceil(t / 2))
    grows = CheckResult(
        "adversarial schedule deterministic growth",
        realized,
        expected_growth,
        0.0,
        1,
        math.isclose(realized, expected_growth, rel_tol=1e-12),
    )
    target = CheckResult(
        f"adversarial schedule claimed value exp(ceil(t/2)) at t={t}",
        realized,
        claimed,
        0.0,
        1,
        math.isclose(realized, claimed, rel_tol=1e-12),
    )
    return [grows, target]


# ---------------------------------------------------------------------------
# empirical FDR of the full loop, one correction-table cell at a time
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FdrCell:
    """One empirical-FDR configuration over the full engine loop."""

    name: str
    adaptivity: mt.Adaptivity
    dependence: mt.Dependence
    mode: mt.Mode
    k: int = 20
    h1_size: int = 2
    delta: float = 0.05
    t_max: int = 1500

    def build(self):
        means = tuple(0.5 if i < self.h1_size else 0.0 for i in range(self.k))
        if self.dependence is mt.Dependence.ARBITRARY:
            env = engine.clique_graph(means, coupling=engine.RewardCoupling.SHARED_NOISE)
            adaptive_policy = PolicyKind.BEST_EVIDENCE
        else:
            env = engine.standard_gaussian(means)
            adaptive_policy = PolicyKind.UCB
        hyps = engine.HypothesisConfig.identity(self.k, 0.0, tuple(range(self.h1_size)))
        if self.adaptivity is mt.Adaptivity.ADAPTIVE:
            policy = PolicySpec(adaptive_policy, delta=self.delta)
        else:
            policy = PolicySpec(PolicyKind.UNIFORM, delta=self.delta)
        if self.mode is mt.Mode.E:
            evidence = engine.EvidenceSpec(engine.EvidenceKind.DISCRETE_MIXTURE)
        else:
            evidence = engine.EvidenceSpec(engine.EvidenceKind.P_TIGHT)
        setting = mt.DependenceSetting(self.adaptivity, self.dependence, mt.OutputKind.STEP_UP)
        mt_config = engine.MtConfig(self.delta, setting)
        stop = engine.StoppingRule.fixed_horizon(self.t_max)
        return env, hyps, policy, evidence, mt_config, stop


def _fdr_trial(args):
    cell, seed = args
    env, hyps, policy, evidence, mt_config, stop = cell.build()
    result = engine.run_trial(env, hyps, policy, evidence, mt_config, stop, seed)
    return result.fdp, result.tpp


def empirical_fdr(cell: FdrCell, reps: int, seed: int, workers: int = 1):
    """(mean FDP, its SE, mean TPP) over ``reps`` replications of one cell.

    The TPP average is reported so the transcript shows whether rejections
    actually happened (an all-empty cell would make the FDR bound vacuous).
    """
    tasks = [(cell, seed + r) for r in range(1, reps + 1)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_fdr_trial, tasks, chunksize=max(1, reps // (workers * 8))))
    else:
        rows = [_fdr_trial(t) for t in tasks]
    fdps = np.array([r[0] for r in rows])
    tpps = np.array([r[1] for r in rows])
    se = float(np.std(fdps, ddof=1) / math.sqrt(len(fdps))) if len(fdps) > 1 else 0.0
    return float(np.mean(fdps)), se, float(np.mean(tpps))


def fdr_cells(k: int = 20, delta: float = 0.05, h1_sizes=(0, 2)) -> List[FdrCell]:
    cells = []
    for adaptivity in mt.Adaptivity:
        for dependence in mt.Dependence:
            for mode in mt.Mode:
                for h1 in h1_sizes:
                    # horizons sized so non-null rejections actually happen:
                    # uniform sampling needs ~k x the per-arm crossing time
                    if h1 == 0:
                        t_max = 1000
                    elif adaptivity is mt.Adaptivity.NON_ADAPTIVE:
                        t_max = 4500
                    else:
                        t_max = 1500
                    name = (
                        f"fdr {adaptivity.value}/{dependence.value}/"
                        f"{'ebh' if mode is mt.Mode.E else 'bh'} h1={h1}"
                    )
                    cells.append(
                        FdrCell(name, adaptivity, dependence, mode, k, h1, delta, t_max)
                    )
    return cells


def fdr_table_checks(
    reps: int = 400,
    k: int = 20,
    delta: float = 0.05,
    seed: int = 7401,
    workers: int = 1,
    h1_sizes=(0, 2),
) -> List[CheckResult]:
    out = []
    for i, cell in enumerate(fdr_cells(k, delta, h1_sizes)):
        rate, se, _ = empirical_fdr(cell, reps, seed + 1000 * i, workers)
        out.append(_band_check(cell.name, rate, delta, se, reps))
    return out


# ---------------------------------------------------------------------------
# multi-agent aggregation validity
# ---------------------------------------------------------------------------


def multiagent_sup_crossing(
    reps: int,
    t_max: int,
    arrival_2: int,
    seed: int,
    shared_stream: bool,
    delta: float = 0.05,
    threshold: float = 20.0,
) -> tuple:
    """Fraction of null replications where the two-agent aggregate ever
    reaches ``threshold``.  Agent 1 arrives at round 1, agent 2 at
    ``arrival_2``; both run decaying-schedule betting processes on N(0, 1)
    rewards, either the same stream or independent ones.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    strategy = LambdaStrategy.decaying(delta)
    hits = 0
    for _ in range(reps):
        pool = AgentPool(1, delta)
        pool.register_arrival(0, 1, 1)
        a1 = make_pm_process(0.0, strategy)
        a2 = None
        crossed = False
        x_all = rng.standard_normal((t_max, 2))
        for t in range(1, t_max + 1):
            if t == arrival_2:
                pool.register_arrival(0, 2, t)
                a2 = make_pm_process(0.0, strategy)
            x1 = float(x_all[t - 1, 0])
            x2 = x1 if shared_stream else float(x_all[t - 1, 1])
            a1 = pmh_update(a1, x1)
            reports = {(0, 1): a1.e_value}
            if a2 is not None:
                a2 = pmh_update(a2, x2)
                reports[(0, 2)] = a2.e_value
            pool.aggregate_step(t, reports)
            if pool.aggregate(0) >= threshold:
                crossed = True
                break
        if crossed:
            hits += 1
    rate = hits / reps
    return rate, oracles.proportion_se(rate, reps)


def multiagent_crossing_check(
    reps: int = 400,
    t_max: int = 2000,
    arrival_2: int = 501,
    seed: int = 7501,
    delta: float = 0.05,
) -> List[CheckResult]:
    out = []
    for shared in (True, False):
        rate, se = multiagent_sup_crossing(
            reps, t_max, arrival_2, seed + int(shared), shared
        )
        label = "shared" if shared else "independent"
        out.append(
            _band_check(f"multi-agent sup-crossing ({label} streams)", rate, delta, se, reps)
        )
    return out


def run_validity_suite(
    reps: int = 400,
    t_max: int = 4000,
    seed: int = 7001,
    workers: int = 1,
    fdr_reps: Optional[int] = None,
) -> List[CheckResult]:
    """Run every oracle at the given scale and return the report entries."""
    results = []
    results += superuniformity_checks(reps, t_max, seed=seed)
    results += ville_checks(reps, t_max, seed=seed + 50)
    results += drifting_checks(reps, t_max, seed=seed + 100)
    results += adversarial_checks()
    results += fdr_table_checks(
        fdr_reps if fdr_reps is not None else max(100, reps // 4),
        seed=seed + 200,
        workers=workers,
    )
    results += multiagent_crossing_check(reps=max(100, reps // 4), seed=seed + 300)
    return results
