"""Per-hypothesis evidence processes.

This module holds everything that summarizes the samples of a single
hypothesis into an anytime-valid statistic:

* time-uniform confidence-sequence boundaries for a sub-Gaussian mean,
* p-processes obtained by inverting a boundary (or a wealth process),
* e-processes: a discrete mixture of Hoeffding supermartingales and a
  predictably-mixed wealth process with pluggable betting schedules,
* merging functions for combining e-values from several sources.

States are plain frozen values; every update is a pure transition from the
old state to a new one, so states can be shared or moved across threads
freely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "Boundary",
    "PMode",
    "PProcessState",
    "EVariant",
    "EProcessState",
    "LambdaKind",
    "LambdaStrategy",
    "eval_boundary",
    "invert_boundary",
    "phi0_log_p",
    "p_update",
    "p_update_from_e",
    "p_from_e",
    "pmh_step",
    "pmh_update",
    "dm_update",
    "make_p_process",
    "make_inverse_pm_process",
    "make_pm_process",
    "make_dm_process",
    "merge_product",
    "merge_mean",
    "logsumexp",
    "DM_COMPONENTS",
    "dm_lambdas",
    "dm_log_weights",
    "LOG_P_FLOOR",
]

# p-values are carried in log domain; the linear floor keeps exp() away from 0.
LOG_P_FLOOR = math.log(1e-320)

_BISECT_TOL = 1e-12
_BISECT_MAX_ITER = 200


def logsumexp(values):
    """Stable log(sum(exp(values))) along the last axis."""
    if isinstance(values, np.ndarray) and values.ndim == 1:
        m = values.max()
        if m == -np.inf:
            return float(m)
        return float(m) + math.log(np.exp(values - m).sum())
    values = np.asarray(values, dtype=float)
    m = np.max(values, axis=-1)
    if np.ndim(m) == 0:
        if m == -np.inf:
            return float(m)
        return float(m + np.log(np.sum(np.exp(values - m))))
    safe = np.where(np.isfinite(m), m, 0.0)
    out = safe + np.log(np.sum(np.exp(values - safe[..., None]), axis=-1))
    return np.where(np.isfinite(m), out, m)


class Boundary(Enum):
    """Time-uniform boundaries phi(t, delta) for the mean of 1-sub-Gaussian i.i.d. samples.

    Each boundary satisfies P(exists t: |mean_t - mu| > phi(t, delta)) <= delta
    on its valid delta range.

    CONSERVATIVE: sqrt(4 log(log2(2t)/delta) / t), delta in (0, 1).
    TIGHT:        sqrt((2 log(1/delta) + 6 log log(1/delta)
                        + 3 log(log(e t / 2))) / t), delta in (0, 0.1].
    STITCHED:     sqrt((2.89 log log(2.041 t) + 2.065 log(4.983/delta)) / t),
                  delta in (0, 1).

    All logarithms are natural except the explicit base-2 logarithm inside
    CONSERVATIVE.
    """

    CONSERVATIVE = "conservative"
    TIGHT = "tight"
    STITCHED = "stitched"

    @property
    def max_delta(self) -> float:
        return 0.1 if self is Boundary.TIGHT else 1.0

    def validate_delta(self, delta: float) -> None:
        if self is Boundary.TIGHT:
            ok = 0.0 < delta <= 0.1
        else:
            ok = 0.0 < delta < 1.0
        if not ok:
            raise ValueError(
                f"delta={delta} outside valid range for {self.name} boundary"
            )


def _phi_sq_times_t(boundary: Boundary, t, y):
    """t * phi(t, exp(-y))**2 through y = log(1/delta); numpy-friendly.

    Strictly increasing in y for every boundary, which is what makes the
    p-value inversion a safe bisection.
    """
    if boundary is Boundary.CONSERVATIVE:
        return 4.0 * (np.log(np.log2(2.0 * t)) + y)
    if boundary is Boundary.TIGHT:
        return 2.0 * y + 6.0 * np.log(y) + 3.0 * np.log(np.log(np.e * t / 2.0))
    return 2.89 * np.log(np.log(2.041 * t)) + 2.065 * (math.log(4.983) + y)


def _phi_sq_times_t_scalar(boundary: Boundary, t: float, y: float) -> float:
    # math-module twin of _phi_sq_times_t; scalar hot path
    if boundary is Boundary.CONSERVATIVE:
        return 4.0 * (math.log(math.log2(2.0 * t)) + y)
    if boundary is Boundary.TIGHT:
        return 2.0 * y + 6.0 * math.log(y) + 3.0 * math.log(math.log(math.e * t / 2.0))
    return 2.89 * math.log(math.log(2.041 * t)) + 2.065 * (math.log(4.983) + y)


def eval_boundary(boundary: Boundary, t, delta: float):
    """Evaluate phi_boundary(t, delta).

    ``t`` may be a positive integer or an array of them (the array form is what
    the Monte Carlo oracles use); ``delta`` must lie in the boundary's valid
    range.  Raises ValueError outside the domain.
    """
    boundary.validate_delta(delta)
    y = math.log(1.0 / delta)
    if np.ndim(t) == 0:
        if t < 1:
            raise ValueError("t must be >= 1")
        t_f = float(t)
        return math.sqrt(_phi_sq_times_t_scalar(boundary, t_f, y) / t_f)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 1):
        raise ValueError("t must be >= 1")
    return np.sqrt(_phi_sq_times_t(boundary, t_arr, y) / t_arr)


def _min_y(boundary: Boundary) -> float:
    # smallest log(1/delta) inside the valid range (delta at its upper end)
    return math.log(10.0) if boundary is Boundary.TIGHT else 0.0


def phi0_log_p(t: int, deviation: float) -> float:
    """Closed-form log p for the CONSERVATIVE boundary.

    p = min(1, log2(2t) * exp(-t d^2 / 4)); the log value is exact even when
    the linear p would underflow.
    """
    log_p = math.log(math.log2(2.0 * t)) - t * deviation * deviation / 4.0
    return min(0.0, log_p)


def invert_boundary(boundary: Boundary, t: int, deviation: float) -> float:
    """log of inf{rho in the valid range: deviation > phi(t, rho)}.

    Returns 0.0 (p = 1) when the deviation never exceeds the boundary inside
    the valid delta range.  Monotone bisection on y = log(1/rho), run to
    1e-12 relative tolerance on y (which implies 1e-12 absolute tolerance on
    rho), max 200 iterations.  The log value is exact even when the linear p
    would underflow.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    d2t = deviation * deviation * float(t)
    t_f = float(t)
    lo = _min_y(boundary)
    # every boundary has phi^2 t >= 2y, so y = d2t dominates the crossing point
    hi = max(-LOG_P_FLOOR, d2t) + 10.0
    if not d2t > _phi_sq_times_t_scalar(boundary, t_f, lo):
        return 0.0
    if d2t > _phi_sq_times_t_scalar(boundary, t_f, hi):
        return -hi
    # invariant: crossing at lo, no crossing at hi
    for _ in range(_BISECT_MAX_ITER):
        if hi - lo <= _BISECT_TOL * max(1.0, lo):
            break
        mid = 0.5 * (lo + hi)
        if d2t > _phi_sq_times_t_scalar(boundary, t_f, mid):
            lo = mid
        else:
            hi = mid
    return -0.5 * (lo + hi)


class PMode(Enum):
    BOUNDARY_INVERSION = "boundary-inversion"
    INVERSE_E = "inverse-e"


class LambdaKind(Enum):
    FIXED = "fixed"
    DECAYING = "decaying"
    HALF_MEAN = "half-mean"


@dataclass(frozen=True)
class LambdaStrategy:
    """Predictable betting schedule for the wealth e-process.

    FIXED:     lambda = value on every sample.
    DECAYING:  lambda_j = sqrt(2 log(2/alpha) / (j log(j+1))) where j counts
               the upcoming sample and ``value`` holds alpha.
    HALF_MEAN: lambda_j = max(0, prior-mean / 2), with the prior mean taken
               over samples strictly before j (0 when there are none).

    The bet for the j-th sample depends only on data before that sample.
    """

    kind: LambdaKind
    value: float = 0.0

    def __post_init__(self):
        if self.kind is LambdaKind.FIXED and self.value < 0.0:
            raise ValueError("fixed lambda must be nonnegative")
        if self.kind is LambdaKind.DECAYING and not 0.0 < self.value < 2.0:
            raise ValueError("decaying schedule needs alpha in (0, 2)")

    @classmethod
    def fixed(cls, lam: float) -> "LambdaStrategy":
        return cls(LambdaKind.FIXED, lam)

    @classmethod
    def decaying(cls, alpha: float) -> "LambdaStrategy":
        return cls(LambdaKind.DECAYING, alpha)

    @classmethod
    def half_mean(cls) -> "LambdaStrategy":
        return cls(LambdaKind.HALF_MEAN)

    def next_lambda(self, prior_count: int, prior_mean: float) -> float:
        if self.kind is LambdaKind.FIXED:
            return self.value
        if self.kind is LambdaKind.DECAYING:
            j = prior_count + 1
            return math.sqrt(2.0 * math.log(2.0 / self.value) / (j * math.log(j + 1.0)))
        return max(0.0, prior_mean / 2.0)


class EVariant(Enum):
    PREDICTABLE_MIX = "predictable-mix"
    DISCRETE_MIXTURE = "discrete-mixture"


DM_COMPONENTS = 50


def dm_lambdas(n: int = DM_COMPONENTS) -> np.ndarray:
    """Component bets lambda_l = exp(-(l + 5/2)), l = 0..n-1."""
    return np.exp(-(np.arange(n) + 2.5))


def dm_log_weights(n: int = DM_COMPONENTS) -> np.ndarray:
    """log of component weights w_l = 2(e-1) / (e (l+2)^2)."""
    l = np.arange(n)
    return np.log(2.0 * (math.e - 1.0) / (math.e * (l + 2.0) ** 2))


_DM_LAMBDAS = dm_lambdas()
_DM_HALF_SQ = 0.5 * _DM_LAMBDAS**2
_DM_LOG_W = dm_log_weights()


@dataclass(frozen=True)
class EProcessState:
    """A running e-process for one hypothesis.

    PREDICTABLE_MIX carries the cumulative log wealth; DISCRETE_MIXTURE
    carries one log term per mixture component (``log_terms``) and exposes
    the mixture through a stable log-sum-exp.  ``log_e`` is kept current so
    the hot loop never recomputes it.
    """

    variant: EVariant
    mu0: float
    count: int = 0
    mean_sum: float = 0.0
    strategy: Optional[LambdaStrategy] = None
    log_wealth: float = 0.0
    log_terms: Optional[np.ndarray] = None
    log_e: float = 0.0

    @property
    def mean(self) -> float:
        return self.mean_sum / self.count if self.count else 0.0

    @property
    def e_value(self) -> float:
        try:
            return math.exp(self.log_e)
        except OverflowError:
            return math.inf


def make_pm_process(mu0: float, strategy: LambdaStrategy) -> EProcessState:
    return EProcessState(EVariant.PREDICTABLE_MIX, mu0, strategy=strategy)


def make_dm_process(mu0: float, n_components: int = DM_COMPONENTS) -> EProcessState:
    if n_components == DM_COMPONENTS:
        log_w = _DM_LOG_W
        terms = np.zeros(DM_COMPONENTS)
    else:
        log_w = dm_log_weights(n_components)
        terms = np.zeros(n_components)
    return EProcessState(
        EVariant.DISCRETE_MIXTURE,
        mu0,
        log_terms=terms,
        log_e=float(logsumexp(log_w)),
    )


def pmh_step(log_wealth: float, lam: float, x: float, mu0: float) -> float:
    """One wealth update: log_wealth + lam*(x - mu0) - lam^2/2."""
    return log_wealth + lam * (x - mu0) - 0.5 * lam * lam


def pmh_update(state: EProcessState, x: float) -> EProcessState:
    """Consume one sample; the bet is drawn from the pre-update state."""
    if state.variant is not EVariant.PREDICTABLE_MIX:
        raise ValueError("pmh_update requires a PREDICTABLE_MIX state")
    lam = state.strategy.next_lambda(state.count, state.mean)
    w = pmh_step(state.log_wealth, lam, x, state.mu0)
    return replace(
        state,
        count=state.count + 1,
        mean_sum=state.mean_sum + x,
        log_wealth=w,
        log_e=w,
    )


def dm_update(state: EProcessState, x: float) -> EProcessState:
    if state.variant is not EVariant.DISCRETE_MIXTURE:
        raise ValueError("dm_update requires a DISCRETE_MIXTURE state")
    n = state.log_terms.shape[0]
    lams = _DM_LAMBDAS if n == DM_COMPONENTS else dm_lambdas(n)
    half = _DM_HALF_SQ if n == DM_COMPONENTS else 0.5 * lams**2
    log_w = _DM_LOG_W if n == DM_COMPONENTS else dm_log_weights(n)
    terms = state.log_terms + lams * (x - state.mu0) - half
    return replace(
        state,
        count=state.count + 1,
        mean_sum=state.mean_sum + x,
        log_terms=terms,
        log_e=float(logsumexp(log_w + terms)),
    )


@dataclass(frozen=True)
class PProcessState:
    """A running p-process for one hypothesis.

    BOUNDARY_INVERSION derives the current p-value from the boundary of the
    running mean; INVERSE_E takes the reciprocal of a wealth e-process held in
    ``inner``.  p-values live in log domain (``log_p``); the running infimum
    is what multiple-testing validity rests on.
    """

    boundary: Boundary
    mu0: float
    mode: PMode = PMode.BOUNDARY_INVERSION
    count: int = 0
    mean_sum: float = 0.0
    log_p: float = 0.0
    log_inf_p: float = 0.0
    inner: Optional[EProcessState] = None

    @property
    def current_p(self) -> float:
        # log domain is exact; the linear view floors at 1e-320 to stay positive
        return math.exp(max(self.log_p, LOG_P_FLOOR))

    @property
    def running_inf_p(self) -> float:
        return math.exp(max(self.log_inf_p, LOG_P_FLOOR))

    @property
    def mean(self) -> float:
        return self.mean_sum / self.count if self.count else 0.0


def make_p_process(mu0: float, boundary: Boundary) -> PProcessState:
    return PProcessState(boundary=boundary, mu0=mu0)


def make_inverse_pm_process(mu0: float, strategy: LambdaStrategy) -> PProcessState:
    return PProcessState(
        boundary=Boundary.CONSERVATIVE,
        mu0=mu0,
        mode=PMode.INVERSE_E,
        inner=make_pm_process(mu0, strategy),
    )


def p_update(state: PProcessState, x: float) -> PProcessState:
    """Consume one sample and re-invert the boundary at the new count.

    CONSERVATIVE uses the closed-form inversion
    rho = min(1, log2(2T) exp(-T d^2 / 4)); the other boundaries bisect.
    """
    if state.mode is not PMode.BOUNDARY_INVERSION:
        raise ValueError("p_update requires BOUNDARY_INVERSION mode")
    count = state.count + 1
    mean_sum = state.mean_sum + x
    deviation = abs(mean_sum / count - state.mu0)
    if state.boundary is Boundary.CONSERVATIVE:
        log_p = phi0_log_p(count, deviation)
    else:
        log_p = invert_boundary(state.boundary, count, deviation)
    return replace(
        state,
        count=count,
        mean_sum=mean_sum,
        log_p=log_p,
        log_inf_p=min(state.log_inf_p, log_p),
    )


def p_update_from_e(state: PProcessState, x: float) -> PProcessState:
    """INVERSE_E update: p = min(1, 1/e) of the inner wealth process."""
    if state.mode is not PMode.INVERSE_E:
        raise ValueError("p_update_from_e requires INVERSE_E mode")
    inner = pmh_update(state.inner, x)
    log_p = min(0.0, -inner.log_e)
    return replace(
        state,
        count=inner.count,
        mean_sum=inner.mean_sum,
        log_p=log_p,
        log_inf_p=min(state.log_inf_p, log_p),
        inner=inner,
    )


def p_from_e(e: float) -> float:
    """min(1, 1/e); by Markov's inequality a p-value whenever e is an e-value."""
    if e < 0.0:
        raise ValueError("e-value must be nonnegative")
    if e <= 1.0:
        return 1.0
    return 1.0 / e


def merge_product(values: Sequence[float]) -> float:
    """Product merge; valid for independent e-values.  Empty product is 1."""
    out = 1.0
    for v in values:
        if v < 0.0:
            raise ValueError("e-values must be nonnegative")
        out *= v
    return out


def merge_mean(values: Sequence[float]) -> float:
    """Arithmetic-mean merge; valid under arbitrary dependence."""
    if len(values) == 0:
        raise ValueError("merge_mean needs at least one value")
    if any(v < 0.0 for v in values):
        raise ValueError("e-values must be nonnegative")
    return sum(values) / len(values)
