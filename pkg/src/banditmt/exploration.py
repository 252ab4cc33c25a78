"""Exploration policies: which superarm to query next.

Four interchangeable selectors: uniform sampling, an upper-confidence-bound
rule for the single-arm setting, a best-evidence rule that chases the
hypothesis with the strongest current statistic, and a reduction to a
best-arm-identification subroutine (successive elimination) that locks onto
one arm at a time until it is rejected.

Every selector is predictable: the choice at round t depends only on data
observed through round t-1 plus the policy's private random stream, so a
logged trajectory replays identically under the same seed.  FDR control never
depends on the selector; the engine treats policies as opaque.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .evidence import Boundary, eval_boundary

__all__ = [
    "ALL_REJECTED",
    "PolicyKind",
    "PolicySpec",
    "Policy",
    "UniformPolicy",
    "UcbPolicy",
    "BestEvidencePolicy",
    "BaiPolicy",
]


class _AllRejected:
    """Distinguished signal returned when every selectable arm is rejected."""

    def __repr__(self):
        return "ALL_REJECTED"


ALL_REJECTED = _AllRejected()


class PolicyKind(Enum):
    UNIFORM = "uniform"
    UCB = "ucb"
    BEST_EVIDENCE = "best-evidence"
    BAI = "bai"


@dataclass(frozen=True)
class PolicySpec:
    """Picklable recipe for a policy; the engine instantiates it per trial."""

    kind: PolicyKind
    boundary: Boundary = Boundary.CONSERVATIVE
    delta: float = 0.05

    def build(self, n_arms, superarms, hyp_arms, rng) -> "Policy":
        if self.kind is PolicyKind.UNIFORM:
            return UniformPolicy(superarms, rng)
        if self.kind is PolicyKind.UCB:
            return UcbPolicy(n_arms, superarms, self.boundary, self.delta)
        if self.kind is PolicyKind.BEST_EVIDENCE:
            return BestEvidencePolicy(n_arms, superarms, hyp_arms)
        return BaiPolicy(n_arms, superarms, self.boundary, self.delta)


def _first_superarm_of_arm(superarms) -> dict:
    first = {}
    for idx, s in enumerate(superarms):
        for a in s:
            if a not in first:
                first[a] = idx
    return first


class Policy:
    """Common interface.

    select() sees the round index, which arms are retired (every hypothesis
    touching them is rejected), which hypotheses are rejected, and the current
    per-hypothesis evidence strengths (-log p or log e; larger means more
    evidence).  observe() feeds back one observed sample.
    """

    def select(self, t, arm_retired, hyp_rejected, strengths):
        raise NotImplementedError

    def observe(self, arm: int, x: float) -> None:
        pass


class UniformPolicy(Policy):
    """Uniformly random feasible superarm; ignores the data entirely."""

    def __init__(self, superarms, rng):
        if len(superarms) == 0:
            raise ValueError("feasible superarm set is empty")
        self.superarms = tuple(tuple(s) for s in superarms)
        self.rng = rng

    def select(self, t, arm_retired, hyp_rejected, strengths):
        return self.superarms[int(self.rng.integers(len(self.superarms)))]


class UcbPolicy(Policy):
    """argmax of mean + phi(T_i, delta) over non-retired arms.

    Single-arm setting only.  Arms never sampled have an infinite bound and
    are taken first in ascending id order.
    """

    def __init__(self, n_arms, superarms, boundary, delta):
        if any(len(s) != 1 for s in superarms):
            raise ValueError("UCB policy requires singleton superarms")
        self.boundary = boundary
        self.delta = delta
        self.counts = np.zeros(n_arms, dtype=np.int64)
        self.means = np.zeros(n_arms)
        self.ucb = np.full(n_arms, np.inf)

    def select(self, t, arm_retired, hyp_rejected, strengths):
        masked = np.where(arm_retired, -np.inf, self.ucb)
        arm = int(np.argmax(masked))
        if masked[arm] == -np.inf:
            return ALL_REJECTED
        return (arm,)

    def observe(self, arm, x):
        c = self.counts[arm] + 1
        self.counts[arm] = c
        self.means[arm] += (x - self.means[arm]) / c
        self.ucb[arm] = self.means[arm] + eval_boundary(self.boundary, int(c), self.delta)


class BestEvidencePolicy(Policy):
    """Round-robin over arms for the first n rounds, then chase the unrejected
    hypothesis with the strongest evidence; the chosen arm is lifted to the
    smallest-index feasible superarm containing it."""

    def __init__(self, n_arms, superarms, hyp_arms):
        self.n_arms = n_arms
        self.superarms = tuple(tuple(s) for s in superarms)
        self.hyp_arms = tuple(tuple(a) for a in hyp_arms)
        self.first_superarm = _first_superarm_of_arm(self.superarms)

    def _lift(self, arm):
        return self.superarms[self.first_superarm[arm]]

    def select(self, t, arm_retired, hyp_rejected, strengths):
        if t <= self.n_arms:
            return self._lift(t - 1)
        masked = np.where(hyp_rejected, -np.inf, strengths)
        h = int(np.argmax(masked))
        if masked[h] == -np.inf:
            return ALL_REJECTED
        for arm in self.hyp_arms[h]:
            if not arm_retired[arm]:
                return self._lift(arm)
        return ALL_REJECTED


class BaiPolicy(Policy):
    """Best-arm reduction: run successive elimination over the unrejected
    arms, then hammer the identified best arm until it enters the rejection
    set, then restart elimination on whatever remains.

    Elimination uses phi(T_i, delta_se / |B|) confidence radii with a fresh
    budget delta_se = delta / 2 for every restart over the arm pool B.
    """

    def __init__(self, n_arms, superarms, boundary, delta):
        self.n_arms = n_arms
        self.superarms = tuple(tuple(s) for s in superarms)
        self.first_superarm = _first_superarm_of_arm(self.superarms)
        self.boundary = boundary
        self.se_delta = delta / 2.0
        self.counts = np.zeros(n_arms, dtype=np.int64)
        self.means = np.zeros(n_arms)
        self.candidate: Optional[int] = None
        self.active: Optional[list] = None
        self.per_arm_delta: float = self.se_delta

    def _lift(self, arm):
        return self.superarms[self.first_superarm[arm]]

    def _radius(self, arm):
        c = int(self.counts[arm])
        if c == 0:
            return math.inf
        return eval_boundary(self.boundary, c, self.per_arm_delta)

    def select(self, t, arm_retired, hyp_rejected, strengths):
        avail = [a for a in range(self.n_arms) if not arm_retired[a]]
        if not avail:
            return ALL_REJECTED
        if self.candidate is not None and arm_retired[self.candidate]:
            self.candidate = None
            self.active = None
        if self.candidate is not None:
            return self._lift(self.candidate)
        if self.active is not None:
            self.active = [a for a in self.active if not arm_retired[a]]
        if not self.active:
            self.active = avail
            self.per_arm_delta = self.se_delta / len(self.active)
        # eliminate arms whose upper bound falls below the best lower bound
        radii = {a: self._radius(a) for a in self.active}
        best_lower = max(self.means[a] - radii[a] for a in self.active)
        survivors = [a for a in self.active if self.means[a] + radii[a] >= best_lower]
        self.active = survivors
        if len(self.active) == 1:
            self.candidate = self.active[0]
            return self._lift(self.candidate)
        arm = min(self.active, key=lambda a: (self.counts[a], a))
        return self._lift(arm)

    def observe(self, arm, x):
        c = self.counts[arm] + 1
        self.counts[arm] = c
        self.means[arm] += (x - self.means[arm]) / c
