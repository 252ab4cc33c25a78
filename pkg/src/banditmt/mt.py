"""Multiple-testing procedures with FDR control.

Step-up procedures over p-values (BH) and e-values (e-BH), the
self-consistency predicates behind them, level corrections for the various
adaptivity/dependence regimes, DAG-constrained rejection sets, and a
brute-force enumerator used as an independent test oracle.

Both step-up procedures reduce to the same rule once values are mapped to a
common "strength" scale: strength = -log(p) or log(e), with rejection
threshold log(k) - log(alpha) - log(m) for a candidate set of size m.  All
comparisons therefore happen in log domain and accept arbitrarily extreme
values without overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "Mode",
    "Procedure",
    "Adaptivity",
    "Dependence",
    "OutputKind",
    "DependenceSetting",
    "RejectionSet",
    "DagConstraint",
    "harmonic",
    "solve_c_delta",
    "corrected_level",
    "bh",
    "ebh",
    "bh_log",
    "ebh_log",
    "is_self_consistent",
    "largest_constrained_self_consistent",
    "largest_constrained_from_strengths",
    "step_up_from_strengths",
    "brute_force_largest_self_consistent",
]


class Mode(Enum):
    P = "p"
    E = "e"


class Procedure(Enum):
    BH = "bh"
    EBH = "ebh"
    CONSTRAINED_P = "constrained-p"
    CONSTRAINED_E = "constrained-e"


class Adaptivity(Enum):
    ADAPTIVE = "adaptive"
    NON_ADAPTIVE = "non-adaptive"


class Dependence(Enum):
    INDEPENDENT = "independent"
    ARBITRARY = "arbitrary"


class OutputKind(Enum):
    STEP_UP = "step-up"
    SELF_CONSISTENT_ONLY = "self-consistent-only"


@dataclass(frozen=True)
class DependenceSetting:
    """One cell of the level-correction table.

    ``multi_arm`` marks configurations where hypotheses may span several arms,
    which forces the arbitrary-dependence correction for p-values regardless
    of how the rewards themselves are coupled.
    """

    adaptivity: Adaptivity = Adaptivity.ADAPTIVE
    dependence: Dependence = Dependence.INDEPENDENT
    output_kind: OutputKind = OutputKind.STEP_UP
    multi_arm: bool = False


@dataclass(frozen=True)
class RejectionSet:
    """Rejected hypothesis ids (sorted ascending) plus provenance.

    ``level`` is the level actually fed to the procedure, ``exact`` records
    whether a constrained search was provably maximal.
    """

    ids: tuple
    level: float
    procedure: Procedure
    exact: bool = True

    def __contains__(self, i) -> bool:
        return i in self.ids

    def __len__(self) -> int:
        return len(self.ids)


def harmonic(k: int) -> float:
    """k-th harmonic number, the dependence-correction factor l_k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return math.fsum(1.0 / i for i in range(1, k + 1))


def solve_c_delta(delta: float) -> float:
    """Unique c in (0, delta] with c (1 + log(1/c)) = delta.

    The map c -> c(1 + log(1/c)) is strictly increasing on (0, 1), so plain
    bisection converges; tolerance 1e-12.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    lo, hi = 0.0, delta
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if mid * (1.0 + math.log(1.0 / mid)) < delta:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def corrected_level(
    delta: float, setting: DependenceSetting, mode: Mode, k: int
) -> float:
    """Level to feed the procedure so the realized FDR stays at ``delta``.

    E mode never needs correction.  P mode pays for adaptivity and for
    dependence; self-consistent-only outputs (e.g. DAG-constrained sets)
    pay the c_delta calibration on top.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    if k < 1:
        raise ValueError("k must be >= 1")
    if mode is Mode.E:
        return delta
    l_k = harmonic(k)
    if setting.multi_arm:
        return delta / l_k
    if setting.output_kind is OutputKind.STEP_UP:
        if setting.dependence is Dependence.ARBITRARY:
            return delta / l_k
        if setting.adaptivity is Adaptivity.NON_ADAPTIVE:
            return delta
        return max(solve_c_delta(delta), delta / l_k)
    # self-consistent-only outputs
    if setting.dependence is Dependence.ARBITRARY:
        return solve_c_delta(delta) / l_k
    return solve_c_delta(delta)


# ---------------------------------------------------------------------------
# step-up core (strength scale)
# ---------------------------------------------------------------------------


@lru_cache(maxsize=256)
def _log_thresholds(k: int, alpha: float) -> np.ndarray:
    # threshold for the m-th most extreme value: log(k) - log(alpha) - log(m)
    return math.log(k) - math.log(alpha) - np.log(np.arange(1, k + 1))


def step_up_from_strengths(strengths: np.ndarray, alpha: float) -> tuple:
    """ids of the largest self-consistent set, step-up on the strength scale.

    strength_i = -log(p_i) in P mode or log(e_i) in E mode; the two coincide
    under reciprocal calibration, which is why a single core serves both.
    """
    k = strengths.shape[0]
    order = np.lexsort((np.arange(k), -strengths))
    passing = strengths[order] >= _log_thresholds(k, alpha)
    idx = np.nonzero(passing)[0]
    if idx.size == 0:
        return ()
    m = int(idx[-1]) + 1
    return tuple(sorted(int(i) for i in order[:m]))


def _p_strengths(pvals: Sequence[float]) -> np.ndarray:
    p = np.asarray(pvals, dtype=float)
    if p.size == 0:
        raise ValueError("empty p-value input")
    if np.any(~np.isfinite(p)) or np.any(p <= 0.0) or np.any(p > 1.0):
        raise ValueError("p-values must lie in (0, 1]")
    return -np.log(p)


def _e_strengths(evals: Sequence[float]) -> np.ndarray:
    e = np.asarray(evals, dtype=float)
    if e.size == 0:
        raise ValueError("empty e-value input")
    if np.any(np.isnan(e)) or np.any(e < 0.0):
        raise ValueError("e-values must be nonnegative")
    with np.errstate(divide="ignore"):
        return np.log(e)


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")


def bh(pvals: Sequence[float], alpha: float) -> RejectionSet:
    """Step-up over p-values: largest set with max_{i in R} p_i <= |R| alpha / k."""
    _check_alpha(alpha)
    ids = step_up_from_strengths(_p_strengths(pvals), alpha)
    return RejectionSet(ids, alpha, Procedure.BH)


def ebh(evals: Sequence[float], alpha: float) -> RejectionSet:
    """Step-up over e-values: largest set with min_{i in R} e_i >= k / (alpha |R|)."""
    _check_alpha(alpha)
    ids = step_up_from_strengths(_e_strengths(evals), alpha)
    return RejectionSet(ids, alpha, Procedure.EBH)


def bh_log(log_pvals: np.ndarray, alpha: float) -> RejectionSet:
    """bh for log-domain p-values (log p <= 0)."""
    _check_alpha(alpha)
    ids = step_up_from_strengths(-np.asarray(log_pvals, dtype=float), alpha)
    return RejectionSet(ids, alpha, Procedure.BH)


def ebh_log(log_evals: np.ndarray, alpha: float) -> RejectionSet:
    """ebh for log-domain e-values (log e, -inf allowed for e = 0)."""
    _check_alpha(alpha)
    ids = step_up_from_strengths(np.asarray(log_evals, dtype=float), alpha)
    return RejectionSet(ids, alpha, Procedure.EBH)


def is_self_consistent(
    values: Sequence[float], ids: Sequence[int], alpha: float, mode: Mode
) -> bool:
    """Self-consistency predicate; the empty set is vacuously consistent.

    P mode: max_{i in R} p_i <= |R| alpha / k.
    E mode: min_{i in R} e_i >= k / (alpha |R|).
    """
    ids = tuple(ids)
    if not ids:
        return True
    k = len(values)
    m = len(ids)
    if mode is Mode.P:
        return max(values[i] for i in ids) <= m * alpha / k
    return min(values[i] for i in ids) >= k / (alpha * m)


# ---------------------------------------------------------------------------
# DAG-constrained rejection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DagConstraint:
    """Acyclic precedence constraints: a set is feasible iff it contains every
    predecessor of each of its members."""

    n: int
    edges: tuple  # (parent, child) pairs

    def __post_init__(self):
        for p, c in self.edges:
            if not (0 <= p < self.n and 0 <= c < self.n):
                raise ValueError("edge endpoint outside [0, n)")
        parents = self._parent_lists()
        # Kahn's algorithm to verify acyclicity
        indeg = [0] * self.n
        children = [[] for _ in range(self.n)]
        for p, c in self.edges:
            indeg[c] += 1
            children[p].append(c)
        queue = [i for i in range(self.n) if indeg[i] == 0]
        seen = 0
        while queue:
            u = queue.pop()
            seen += 1
            for v in children[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    queue.append(v)
        if seen != self.n:
            raise ValueError("constraint graph has a cycle")
        object.__setattr__(self, "_parents", parents)

    def _parent_lists(self):
        parents = [[] for _ in range(self.n)]
        for p, c in self.edges:
            parents[c].append(p)
        return parents

    def parent_masks(self) -> list:
        """Direct-parent bitmasks (sufficient for closure computations)."""
        masks = [0] * self.n
        for p, c in self.edges:
            masks[c] |= 1 << p
        return masks

    def ancestor_masks(self) -> list:
        """Transitive-ancestor bitmasks."""
        masks = self.parent_masks()
        changed = True
        while changed:
            changed = False
            for c in range(self.n):
                acc = masks[c]
                m = acc
                while m:
                    p = (m & -m).bit_length() - 1
                    acc |= masks[p]
                    m &= m - 1
                if acc != masks[c]:
                    masks[c] = acc
                    changed = True
        return masks

    def is_feasible(self, ids: Sequence[int]) -> bool:
        mask = 0
        for i in ids:
            mask |= 1 << i
        for i in ids:
            if self._parents[i] and any((mask >> p) & 1 == 0 for p in self._parents[i]):
                return False
        return True


def _max_downward_closed(candidate_mask: int, parent_masks: list) -> int:
    """Largest subset of ``candidate_mask`` containing all parents of members.

    Unique because downward-closed subsets are closed under union; computed by
    repeatedly dropping members with a parent outside the set.
    """
    mask = candidate_mask
    changed = True
    while changed:
        changed = False
        m = mask
        while m:
            i = (m & -m).bit_length() - 1
            if parent_masks[i] & ~mask:
                mask &= ~(1 << i)
                changed = True
            m &= m - 1
    return mask


def largest_constrained_from_strengths(
    strengths: np.ndarray, alpha: float, dag: DagConstraint, procedure: Procedure
) -> RejectionSet:
    """Maximum-cardinality DAG-feasible self-consistent set on the strength scale.

    Scans candidate sizes m from k down.  For each m, take every hypothesis
    whose strength passes the size-m threshold, then the largest
    downward-closed subset of those.  The first m where that subset has >= m
    members is provably the optimum: the subset's actual size s >= m faces an
    even looser threshold, so it is self-consistent, and any feasible
    self-consistent set of size m* is contained in the size-m* candidate pool,
    forcing equality at m = m*.  Runs in polynomial time, so no size cap is
    needed; the result is always exact (and unique, since feasible
    self-consistent sets are closed under union).
    """
    k = strengths.shape[0]
    if dag.n != k:
        raise ValueError("constraint size does not match number of hypotheses")
    parent_masks = dag.parent_masks()
    thresholds = _log_thresholds(k, alpha)
    for m in range(k, 0, -1):
        thr = thresholds[m - 1]
        candidate = 0
        for i in range(k):
            if strengths[i] >= thr:
                candidate |= 1 << i
        closed = _max_downward_closed(candidate, parent_masks)
        if closed.bit_count() >= m:
            ids = tuple(i for i in range(k) if (closed >> i) & 1)
            return RejectionSet(ids, alpha, procedure)
    return RejectionSet((), alpha, procedure)


def largest_constrained_self_consistent(
    values: Sequence[float], alpha: float, mode: Mode, dag: DagConstraint
) -> RejectionSet:
    """DAG-feasible analog of bh/ebh; with no edges it matches them exactly."""
    _check_alpha(alpha)
    if mode is Mode.P:
        strengths = _p_strengths(values)
        procedure = Procedure.CONSTRAINED_P
    else:
        strengths = _e_strengths(values)
        procedure = Procedure.CONSTRAINED_E
    return largest_constrained_from_strengths(strengths, alpha, dag, procedure)


def brute_force_largest_self_consistent(
    values: Sequence[float],
    alpha: float,
    mode: Mode,
    dag: Optional[DagConstraint] = None,
) -> RejectionSet:
    """Test oracle: enumerate all subsets (all downward-closed subsets when a
    DAG is given) and return the maximum-cardinality self-consistent one,
    ties broken by lexicographically smallest id tuple.  Guarded to k <= 16.
    """
    _check_alpha(alpha)
    if mode is Mode.P:
        strengths = _p_strengths(values)
        procedure = Procedure.BH if dag is None else Procedure.CONSTRAINED_P
    else:
        strengths = _e_strengths(values)
        procedure = Procedure.EBH if dag is None else Procedure.CONSTRAINED_E
    k = strengths.shape[0]
    if k > 16:
        raise ValueError("brute force capped at k <= 16")
    thresholds = _log_thresholds(k, alpha)
    anc = dag.ancestor_masks() if dag is not None else None
    best_ids: tuple = ()
    for mask in range(1, 1 << k):
        members = [i for i in range(k) if (mask >> i) & 1]
        if anc is not None and any(anc[i] & ~mask for i in members):
            continue
        thr = thresholds[len(members) - 1]
        if all(strengths[i] >= thr for i in members):
            ids = tuple(members)
            if len(ids) > len(best_ids) or (
                len(ids) == len(best_ids) and ids < best_ids
            ):
                best_ids = ids
    return RejectionSet(best_ids, alpha, procedure)
