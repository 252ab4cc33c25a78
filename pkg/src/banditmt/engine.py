"""The sampling loop binding environments, exploration, evidence and testing.

One trial is one sequential state machine: each round the policy picks a
feasible superarm, the environment yields rewards, the evidence process of
every unrejected hypothesis touching a queried arm is advanced, and a
step-up (or DAG-constrained) procedure recomputes the candidate rejection
set.  Rejected hypotheses have their evidence frozen, which makes the
rejection trajectory monotone; the engine asserts that invariant on every
round.

Trials are deterministic functions of (configuration, seed) and are safe to
schedule across any number of worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from . import evidence as ev
from . import mt
from .exploration import ALL_REJECTED, PolicySpec

__all__ = [
    "EnvKind",
    "RewardCoupling",
    "Environment",
    "standard_gaussian",
    "clique_graph",
    "streaming_environment",
    "drifting_null",
    "HypothesisConfig",
    "StopKind",
    "StoppingRule",
    "EvidenceKind",
    "EvidenceSpec",
    "MtConfig",
    "TrialResult",
    "run_trial",
    "run_streaming",
    "compute_fdp_tpp",
]


class EnvKind(Enum):
    STANDARD_GAUSSIAN = "standard-gaussian"
    CLIQUE_GRAPH = "clique-graph"
    STREAMING = "streaming"
    DRIFTING_NULL = "drifting-null"


class RewardCoupling(Enum):
    """Within-round coupling of rewards across arms of one superarm."""

    INDEPENDENT = "independent"
    SHARED_NOISE = "shared-noise"


@dataclass(frozen=True)
class Environment:
    """Synthetic reward source: unit-variance Gaussian around per-arm means.

    SHARED_NOISE draws X_i = mu_i + (Z + zeta_i)/sqrt(2) with one common Z
    per round, which keeps every marginal exactly N(mu_i, 1) while making
    within-round rewards positively dependent.  DRIFTING_NULL ignores the
    per-arm means and alternates the conditional mean -1, +1 by round parity
    (so the running average mean never exceeds 0).
    """

    kind: EnvKind
    means: tuple
    superarms: tuple
    coupling: RewardCoupling = RewardCoupling.INDEPENDENT

    def __post_init__(self):
        n = len(self.means)
        if not self.superarms:
            raise ValueError("environment needs at least one superarm")
        for s in self.superarms:
            if len(s) == 0 or any(not 0 <= a < n for a in s):
                raise ValueError("superarms must be nonempty subsets of the arms")

    @property
    def n_arms(self) -> int:
        return len(self.means)

    def draw(self, rng, arms: Sequence[int], t: int) -> np.ndarray:
        if self.kind is EnvKind.DRIFTING_NULL:
            base = -1.0 if t % 2 == 1 else 1.0
            mu = np.full(len(arms), base)
        else:
            mu = np.array([self.means[a] for a in arms])
        if self.coupling is RewardCoupling.SHARED_NOISE:
            z = rng.standard_normal()
            noise = (z + rng.standard_normal(len(arms))) / np.sqrt(2.0)
        else:
            noise = rng.standard_normal(len(arms))
        return mu + noise


def standard_gaussian(means, coupling=RewardCoupling.INDEPENDENT) -> Environment:
    """Singleton superarms {0}, ..., {n-1}."""
    means = tuple(float(m) for m in means)
    return Environment(
        EnvKind.STANDARD_GAUSSIAN,
        means,
        tuple((i,) for i in range(len(means))),
        coupling,
    )


def clique_graph(
    means, n_cliques: int = 10, coupling=RewardCoupling.INDEPENDENT
) -> Environment:
    """Clique superarms {i, i+c, i+2c, ...} for i = 0..c-1 (c = n_cliques)."""
    means = tuple(float(m) for m in means)
    n = len(means)
    if n % n_cliques != 0:
        raise ValueError("number of arms must be a multiple of the clique count")
    superarms = tuple(tuple(range(i, n, n_cliques)) for i in range(n_cliques))
    return Environment(EnvKind.CLIQUE_GRAPH, means, superarms, coupling)


def streaming_environment(means, coupling=RewardCoupling.INDEPENDENT) -> Environment:
    """Full-feedback environment: any subset of arms may be observed."""
    means = tuple(float(m) for m in means)
    return Environment(
        EnvKind.STREAMING, means, tuple((i,) for i in range(len(means))), coupling
    )


def drifting_null(n_arms: int) -> Environment:
    """All arms share the alternating-mean schedule -1, +1, -1, ..."""
    return Environment(
        EnvKind.DRIFTING_NULL,
        tuple(0.0 for _ in range(n_arms)),
        tuple((i,) for i in range(n_arms)),
    )


@dataclass(frozen=True)
class HypothesisConfig:
    """What is being tested: per-hypothesis arm sets, null means, and (for
    simulation only) the ground-truth non-null labels."""

    arms_of: tuple  # hypothesis id -> tuple of arm ids
    mu0: tuple
    h1: tuple = ()

    def __post_init__(self):
        if len(self.arms_of) != len(self.mu0):
            raise ValueError("arms_of and mu0 must have matching lengths")
        for arms in self.arms_of:
            if len(arms) == 0:
                raise ValueError("every hypothesis must reference at least one arm")
        if any(not 0 <= h < self.k for h in self.h1):
            raise ValueError("h1 labels outside hypothesis range")

    @property
    def k(self) -> int:
        return len(self.arms_of)

    @property
    def is_identity(self) -> bool:
        return all(arms == (h,) for h, arms in enumerate(self.arms_of))

    @classmethod
    def identity(cls, k: int, mu0: float = 0.0, h1: Sequence[int] = ()) -> "HypothesisConfig":
        return cls(
            tuple((i,) for i in range(k)),
            tuple(mu0 for _ in range(k)),
            tuple(sorted(h1)),
        )


class StopKind(Enum):
    FIXED_HORIZON = "fixed-horizon"
    ALL_NONNULLS_ORACLE = "all-nonnulls-oracle"
    REJECTION_COUNT = "rejection-count"
    STREAMING_GAP = "streaming-gap"


@dataclass(frozen=True)
class StoppingRule:
    """When to halt.  All kinds look only at information available at round t;
    ALL_NONNULLS_ORACLE additionally reads simulation ground truth and exists
    purely for measuring time-to-target in the harness."""

    kind: StopKind
    t_max: int
    m: int = 0
    t_gap: int = 0

    @classmethod
    def fixed_horizon(cls, t_max: int) -> "StoppingRule":
        return cls(StopKind.FIXED_HORIZON, t_max)

    @classmethod
    def all_nonnulls_oracle(cls, t_max: int) -> "StoppingRule":
        return cls(StopKind.ALL_NONNULLS_ORACLE, t_max)

    @classmethod
    def rejection_count(cls, m: int, t_max: int) -> "StoppingRule":
        return cls(StopKind.REJECTION_COUNT, t_max, m=m)

    @classmethod
    def streaming_gap(cls, t_gap: int, t_max: int) -> "StoppingRule":
        return cls(StopKind.STREAMING_GAP, t_max, t_gap=t_gap)

    def should_stop(self, t, rejected, h1, t_prev_rejection) -> bool:
        if t >= self.t_max:
            return True
        if self.kind is StopKind.ALL_NONNULLS_ORACLE:
            return all(h in rejected for h in h1)
        if self.kind is StopKind.REJECTION_COUNT:
            return len(rejected) >= self.m
        if self.kind is StopKind.STREAMING_GAP:
            return t - t_prev_rejection > self.t_gap
        return False


class EvidenceKind(Enum):
    DISCRETE_MIXTURE = "dm"
    PREDICTABLE_MIX = "pm"
    INVERSE_PM = "inverse-pm"
    P_CONSERVATIVE = "p-conservative"
    P_TIGHT = "p-tight"
    P_STITCHED = "p-stitched"


_P_BOUNDARIES = {
    EvidenceKind.P_CONSERVATIVE: ev.Boundary.CONSERVATIVE,
    EvidenceKind.P_TIGHT: ev.Boundary.TIGHT,
    EvidenceKind.P_STITCHED: ev.Boundary.STITCHED,
}


@dataclass(frozen=True)
class EvidenceSpec:
    """Evidence process recipe shared by all hypotheses of a trial."""

    kind: EvidenceKind
    strategy: Optional[ev.LambdaStrategy] = None

    def __post_init__(self):
        needs_strategy = self.kind in (
            EvidenceKind.PREDICTABLE_MIX,
            EvidenceKind.INVERSE_PM,
        )
        if needs_strategy and self.strategy is None:
            raise ValueError(f"{self.kind.value} evidence needs a LambdaStrategy")

    @property
    def mode(self) -> mt.Mode:
        if self.kind in (EvidenceKind.DISCRETE_MIXTURE, EvidenceKind.PREDICTABLE_MIX):
            return mt.Mode.E
        return mt.Mode.P

    def build(self, mu0: float):
        if self.kind is EvidenceKind.DISCRETE_MIXTURE:
            return ev.make_dm_process(mu0)
        if self.kind is EvidenceKind.PREDICTABLE_MIX:
            return ev.make_pm_process(mu0, self.strategy)
        if self.kind is EvidenceKind.INVERSE_PM:
            return ev.make_inverse_pm_process(mu0, self.strategy)
        return ev.make_p_process(mu0, _P_BOUNDARIES[self.kind])

    def update(self, state, x: float):
        if self.kind is EvidenceKind.DISCRETE_MIXTURE:
            return ev.dm_update(state, x)
        if self.kind is EvidenceKind.PREDICTABLE_MIX:
            return ev.pmh_update(state, x)
        if self.kind is EvidenceKind.INVERSE_PM:
            return ev.p_update_from_e(state, x)
        return ev.p_update(state, x)

    def strength(self, state) -> float:
        """-log p or log e; the scale shared by policies and step-up."""
        if self.mode is mt.Mode.E:
            return state.log_e
        return -state.log_p


@dataclass(frozen=True)
class MtConfig:
    """Testing configuration: target FDR level plus the declared cell of the
    correction table; a DAG switches the output to the constrained search."""

    delta: float
    setting: mt.DependenceSetting = mt.DependenceSetting()
    dag: Optional[mt.DagConstraint] = None

    def __post_init__(self):
        wants_constrained = self.setting.output_kind is mt.OutputKind.SELF_CONSISTENT_ONLY
        if wants_constrained != (self.dag is not None):
            raise ValueError(
                "a DAG constraint requires output_kind=SELF_CONSISTENT_ONLY and vice versa"
            )

    def level(self, mode: mt.Mode, k: int) -> float:
        return mt.corrected_level(self.delta, self.setting, mode, k)


@dataclass(frozen=True)
class TrialResult:
    """Everything one replication produced.

    ``rejection_round`` lists (hypothesis, first round it was rejected);
    because rejected evidence freezes, the trajectory is monotone and this
    compact form reconstructs R_t for every t.  ``level`` is the corrected
    level actually fed to the procedure and ``setting`` the correction-table
    cell it came from, so results stay auditable.
    """

    stop_round: int
    rejected: tuple
    rejection_round: tuple
    fdp: float
    tpp: float
    level: float
    procedure: mt.Procedure
    setting: mt.DependenceSetting = mt.DependenceSetting()
    snapshots: tuple = ()
    samples: tuple = ()

    def rejected_at(self, t: int) -> frozenset:
        return frozenset(h for h, r in self.rejection_round if r <= t)

    def tpp_at(self, t: int, h1: Sequence[int]) -> float:
        if not h1:
            return 1.0
        r = self.rejected_at(t)
        return sum(1 for h in h1 if h in r) / len(h1)


def compute_fdp_tpp(rejected, h1, k: int):
    """Per-trial false-discovery and true-positive proportions.

    fdp = |H0 and R| / max(|R|, 1); tpp = |H1 and R| / |H1| (1 if H1 empty).
    """
    r = set(rejected)
    h1 = set(h1)
    false = sum(1 for h in r if h not in h1)
    fdp = false / max(len(r), 1)
    tpp = (sum(1 for h in r if h in h1) / len(h1)) if h1 else 1.0
    return fdp, tpp


def _hypotheses_of_arms(hypotheses: HypothesisConfig, n_arms: int):
    out = [[] for _ in range(n_arms)]
    for h, arms in enumerate(hypotheses.arms_of):
        for a in arms:
            out[a].append(h)
    return [tuple(hs) for hs in out]


def _validate(env, hypotheses, evidence_spec, mt_config):
    n = env.n_arms
    for arms in hypotheses.arms_of:
        if any(not 0 <= a < n for a in arms):
            raise ValueError("hypothesis references a nonexistent arm")
    if (
        evidence_spec.mode is mt.Mode.P
        and not hypotheses.is_identity
        and not mt_config.setting.multi_arm
    ):
        raise ValueError(
            "hypotheses spanning multiple arms require setting.multi_arm for p-values"
        )


def _reject(strengths, alpha, mt_config, mode):
    if mt_config.dag is not None:
        procedure = (
            mt.Procedure.CONSTRAINED_P if mode is mt.Mode.P else mt.Procedure.CONSTRAINED_E
        )
        return mt.largest_constrained_from_strengths(
            strengths, alpha, mt_config.dag, procedure
        ).ids
    return mt.step_up_from_strengths(strengths, alpha)


def run_trial(
    env: Environment,
    hypotheses: HypothesisConfig,
    policy_spec: PolicySpec,
    evidence_spec: EvidenceSpec,
    mt_config: MtConfig,
    stop: StoppingRule,
    seed: int,
    snapshot_stride: int = 0,
    record_samples: bool = False,
    single_sample_discard: bool = False,
) -> TrialResult:
    """Run one trial of the exploration/evidence loop.

    ``snapshot_stride`` > 0 stores the per-hypothesis strength vector every
    that many rounds; ``single_sample_discard`` keeps one uniformly chosen
    sample per superarm pull and throws the rest away (the discard choice has
    its own substream, so it never perturbs the environment draws).
    """
    _validate(env, hypotheses, evidence_spec, mt_config)
    k = hypotheses.k
    mode = evidence_spec.mode
    alpha = mt_config.level(mode, k)

    ss = np.random.SeedSequence(seed)
    env_rng, policy_rng, aux_rng = (np.random.default_rng(s) for s in ss.spawn(3))

    policy = policy_spec.build(env.n_arms, env.superarms, hypotheses.arms_of, policy_rng)
    states = [evidence_spec.build(hypotheses.mu0[h]) for h in range(k)]
    strengths = np.array([evidence_spec.strength(s) for s in states])

    hyps_of_arm = _hypotheses_of_arms(hypotheses, env.n_arms)
    arm_retired = np.zeros(env.n_arms, dtype=bool)
    hyp_rejected = np.zeros(k, dtype=bool)
    rejected: set = set()
    rejection_round: list = []
    snapshots: list = []
    samples: list = []

    t = 0
    while t < stop.t_max:
        t += 1
        selection = policy.select(t, arm_retired, hyp_rejected, strengths)
        if selection is ALL_REJECTED:
            t -= 1
            break
        rewards = env.draw(env_rng, selection, t)
        if single_sample_discard and len(selection) > 1:
            keep = int(aux_rng.integers(len(selection)))
            selection = (selection[keep],)
            rewards = rewards[keep : keep + 1]
        for arm, x in zip(selection, rewards):
            x = float(x)
            policy.observe(arm, x)
            if record_samples:
                samples.append((arm, t, x))
            for h in hyps_of_arm[arm]:
                if hyp_rejected[h]:
                    continue  # frozen once rejected
                states[h] = evidence_spec.update(states[h], x)
                strengths[h] = evidence_spec.strength(states[h])
        ids = _reject(strengths, alpha, mt_config, mode)
        if not rejected.issubset(ids):
            raise AssertionError("rejection trajectory lost a member")
        for h in ids:
            if not hyp_rejected[h]:
                hyp_rejected[h] = True
                rejected.add(h)
                rejection_round.append((h, t))
                for a in hypotheses.arms_of[h]:
                    if all(hyp_rejected[hh] for hh in hyps_of_arm[a]):
                        arm_retired[a] = True
        if snapshot_stride > 0 and t % snapshot_stride == 0:
            snapshots.append((t, tuple(float(v) for v in strengths)))
        if stop.should_stop(t, rejected, hypotheses.h1, 0):
            break

    fdp, tpp = compute_fdp_tpp(rejected, hypotheses.h1, k)
    procedure = _procedure_label(mt_config, mode)
    return TrialResult(
        stop_round=t,
        rejected=tuple(sorted(rejected)),
        rejection_round=tuple(sorted(rejection_round)),
        fdp=fdp,
        tpp=tpp,
        level=alpha,
        procedure=procedure,
        setting=mt_config.setting,
        snapshots=tuple(snapshots),
        samples=tuple(samples),
    )


def _procedure_label(mt_config, mode):
    if mt_config.dag is not None:
        return mt.Procedure.CONSTRAINED_P if mode is mt.Mode.P else mt.Procedure.CONSTRAINED_E
    return mt.Procedure.BH if mode is mt.Mode.P else mt.Procedure.EBH


def run_streaming(
    env: Environment,
    hypotheses: HypothesisConfig,
    evidence_spec: EvidenceSpec,
    mt_config: MtConfig,
    t_gap: int,
    t_max: int,
    seed: int,
    initial_log_e: Optional[Sequence[float]] = None,
) -> TrialResult:
    """Full-feedback monitoring: observe every unrejected arm each round.

    Stops when more than ``t_gap`` rounds pass without a new rejection, when
    everything is rejected, or at ``t_max``.  ``initial_log_e`` (e-modes only)
    seeds the starting wealth of each hypothesis.
    """
    _validate(env, hypotheses, evidence_spec, mt_config)
    if not hypotheses.is_identity:
        raise ValueError("streaming monitor assumes one hypothesis per arm")
    k = hypotheses.k
    mode = evidence_spec.mode
    alpha = mt_config.level(mode, k)
    env_rng = np.random.default_rng(np.random.SeedSequence(seed))

    states = [evidence_spec.build(hypotheses.mu0[h]) for h in range(k)]
    if initial_log_e is not None:
        if mode is not mt.Mode.E:
            raise ValueError("initial_log_e only applies to e-process evidence")
        states = [
            replace(s, log_wealth=float(v), log_e=float(v))
            for s, v in zip(states, initial_log_e)
        ]
    strengths = np.array([evidence_spec.strength(s) for s in states])

    rejected: set = set()
    rejection_round: list = []
    t_prev_rejection = 0
    rule = StoppingRule.streaming_gap(t_gap, t_max)
    t = 0
    while t < t_max:
        t += 1
        live = [h for h in range(k) if h not in rejected]
        if live:
            rewards = env.draw(env_rng, live, t)
            for h, x in zip(live, rewards):
                states[h] = evidence_spec.update(states[h], float(x))
                strengths[h] = evidence_spec.strength(states[h])
        ids = _reject(strengths, alpha, mt_config, mode)
        if not rejected.issubset(ids):
            raise AssertionError("rejection trajectory lost a member")
        for h in ids:
            if h not in rejected:
                rejected.add(h)
                rejection_round.append((h, t))
                t_prev_rejection = t
        if len(rejected) == k:
            break
        if rule.should_stop(t, rejected, hypotheses.h1, t_prev_rejection):
            break

    fdp, tpp = compute_fdp_tpp(rejected, hypotheses.h1, k)
    return TrialResult(
        stop_round=t,
        rejected=tuple(sorted(rejected)),
        rejection_round=tuple(sorted(rejection_round)),
        fdp=fdp,
        tpp=tpp,
        level=alpha,
        procedure=_procedure_label(mt_config, mode),
        setting=mt_config.setting,
    )
