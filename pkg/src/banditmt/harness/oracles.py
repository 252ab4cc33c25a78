"""Vectorized Monte Carlo oracles for the validity checks.

These recompute evidence trajectories directly from reward matrices with
plain cumulative sums, independently of the stateful per-sample updates in
:mod:`banditmt.evidence` (unit tests pin the two routes against each other).
Row = replication, column = time step; computations are chunked over
replications to bound memory.

Every rate comes back with its binomial standard error so callers can apply
the usual estimate <= bound + 3*SE acceptance band.
"""

from __future__ import annotations

import math
from typing import Tuple

import numpy as np

from ..evidence import Boundary, dm_lambdas, dm_log_weights, eval_boundary

__all__ = [
    "null_rewards",
    "drifting_rewards",
    "boundary_crossing_rate",
    "dm_log_e_paths",
    "pm_decaying_log_e_paths",
    "pm_half_mean_log_e_paths",
    "ville_rate",
    "proportion_se",
]

_REP_CHUNK = 250


def proportion_se(rate: float, n: int) -> float:
    return math.sqrt(rate * (1.0 - rate) / n)


def null_rewards(rng, reps: int, t_max: int, mu: float = 0.0) -> np.ndarray:
    return mu + rng.standard_normal((reps, t_max))


def drifting_rewards(rng, reps: int, t_max: int) -> np.ndarray:
    """Conditional means alternate -1, +1 starting at -1 (averages stay <= 0)."""
    base = np.where(np.arange(1, t_max + 1) % 2 == 1, -1.0, 1.0)
    return base[None, :] + rng.standard_normal((reps, t_max))


def boundary_crossing_rate(
    boundary: Boundary,
    alpha: float,
    t_max: int,
    reps: int,
    seed: int,
    mu: float = 0.0,
    mu0: float = 0.0,
) -> Tuple[float, float]:
    """P(exists t <= t_max: |mean_t - mu0| > phi(t, alpha)) under N(mu, 1).

    The running infimum of the boundary-inversion p-process drops below alpha
    exactly when this event happens, so this is the superuniformity oracle.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    t = np.arange(1, t_max + 1, dtype=float)
    phi = eval_boundary(boundary, t, alpha)
    hits = 0
    done = 0
    while done < reps:
        n = min(_REP_CHUNK, reps - done)
        x = null_rewards(rng, n, t_max, mu)
        means = np.cumsum(x, axis=1) / t[None, :]
        crossed = np.any(np.abs(means - mu0) > phi[None, :], axis=1)
        hits += int(crossed.sum())
        done += n
    rate = hits / reps
    return rate, proportion_se(rate, reps)


def dm_log_e_paths(x: np.ndarray, mu0: float = 0.0) -> np.ndarray:
    """log e-value trajectory of the discrete mixture for each reward row."""
    lams = dm_lambdas()
    log_w = dm_log_weights()
    reps, t_max = x.shape
    out = np.full((reps, t_max), -np.inf)
    centered = np.cumsum(x - mu0, axis=1)
    counts = np.arange(1, t_max + 1, dtype=float)
    for lam, lw in zip(lams, log_w):
        term = lw + lam * centered - 0.5 * lam * lam * counts[None, :]
        out = np.logaddexp(out, term)
    return out


def pm_decaying_log_e_paths(x: np.ndarray, alpha: float, mu0: float = 0.0) -> np.ndarray:
    """log wealth of the predictable mixture with the decaying schedule."""
    _, t_max = x.shape
    j = np.arange(1, t_max + 1, dtype=float)
    lam = np.sqrt(2.0 * math.log(2.0 / alpha) / (j * np.log(j + 1.0)))
    return np.cumsum(lam[None, :] * (x - mu0) - 0.5 * lam[None, :] ** 2, axis=1)


def pm_half_mean_log_e_paths(x: np.ndarray, mu0: float = 0.0) -> np.ndarray:
    """log wealth with the half-of-prior-mean betting schedule."""
    reps, t_max = x.shape
    cums = np.cumsum(x, axis=1)
    prior_mean = np.zeros_like(x)
    if t_max > 1:
        prior_mean[:, 1:] = cums[:, :-1] / np.arange(1, t_max, dtype=float)[None, :]
    lam = np.clip(prior_mean / 2.0, 0.0, None)
    return np.cumsum(lam * (x - mu0) - 0.5 * lam**2, axis=1)


_PM_KINDS = ("dm", "pm-decaying", "pm-half-mean")


def ville_rate(
    kind: str,
    threshold: float,
    t_max: int,
    reps: int,
    seed: int,
    stream: str = "null",
    alpha: float = 0.05,
    mu: float = 0.0,
    mu0: float = 0.0,
) -> Tuple[float, float]:
    """P(sup_{t <= t_max} E_t >= threshold) for one e-process family.

    ``stream`` selects the reward source: "null" (i.i.d. N(mu, 1)) or
    "drifting" (alternating conditional means).
    """
    if kind not in _PM_KINDS:
        raise ValueError(f"unknown e-process kind {kind!r}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    log_thr = math.log(threshold)
    hits = 0
    done = 0
    while done < reps:
        n = min(_REP_CHUNK, reps - done)
        if stream == "null":
            x = null_rewards(rng, n, t_max, mu)
        elif stream == "drifting":
            x = drifting_rewards(rng, n, t_max)
        else:
            raise ValueError(f"unknown stream {stream!r}")
        if kind == "dm":
            paths = dm_log_e_paths(x, mu0)
        elif kind == "pm-decaying":
            paths = pm_decaying_log_e_paths(x, alpha, mu0)
        else:
            paths = pm_half_mean_log_e_paths(x, mu0)
        hits += int(np.any(paths >= log_thr, axis=1).sum())
        done += n
    rate = hits / reps
    return rate, proportion_se(rate, reps)
