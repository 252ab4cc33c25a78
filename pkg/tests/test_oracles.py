"""Cross-checks: vectorized Monte Carlo oracles vs the stateful updates.

The oracles recompute trajectories from reward matrices with cumulative
sums; these tests pin them against the per-sample state transitions so that
the fast validity checks and the production evidence code can never drift
apart.
"""

import math

import numpy as np
import pytest

from banditmt import evidence as ev
from banditmt.harness import oracles


def _reward_batch(seed, reps=6, t_max=300, mu=0.0):
    rng = np.random.default_rng(seed)
    return mu + rng.standard_normal((reps, t_max))


def test_dm_paths_match_stateful_updates():
    x = _reward_batch(1)
    paths = oracles.dm_log_e_paths(x, mu0=0.0)
    for r in range(x.shape[0]):
        state = ev.make_dm_process(0.0)
        for t in range(x.shape[1]):
            state = ev.dm_update(state, float(x[r, t]))
            assert paths[r, t] == pytest.approx(state.log_e, rel=1e-10, abs=1e-10)


def test_pm_decaying_paths_match_stateful_updates():
    x = _reward_batch(2)
    alpha = 0.05
    paths = oracles.pm_decaying_log_e_paths(x, alpha, mu0=0.0)
    for r in range(x.shape[0]):
        state = ev.make_pm_process(0.0, ev.LambdaStrategy.decaying(alpha))
        for t in range(x.shape[1]):
            state = ev.pmh_update(state, float(x[r, t]))
            assert paths[r, t] == pytest.approx(state.log_e, rel=1e-10, abs=1e-10)


def test_pm_half_mean_paths_match_stateful_updates():
    x = _reward_batch(3, mu=0.3)
    paths = oracles.pm_half_mean_log_e_paths(x, mu0=0.0)
    for r in range(x.shape[0]):
        state = ev.make_pm_process(0.0, ev.LambdaStrategy.half_mean())
        for t in range(x.shape[1]):
            state = ev.pmh_update(state, float(x[r, t]))
            assert paths[r, t] == pytest.approx(state.log_e, rel=1e-10, abs=1e-10)


@pytest.mark.parametrize("boundary", [ev.Boundary.TIGHT, ev.Boundary.STITCHED])
def test_boundary_crossing_equals_p_process_running_inf(boundary):
    """The crossing event probed by the oracle is exactly {running inf <= alpha}."""
    rng = np.random.default_rng(4)
    alpha = 0.05
    agree = 0
    total = 120
    for _ in range(total):
        xs = rng.normal(0.0, 1.0, size=150)
        state = ev.make_p_process(0.0, boundary)
        for x in xs:
            state = ev.p_update(state, float(x))
        means = np.abs(np.cumsum(xs) / np.arange(1, 151))
        phi = ev.eval_boundary(boundary, np.arange(1, 151), alpha)
        crossed = bool(np.any(means > phi))
        assert (state.log_inf_p <= math.log(alpha)) == crossed
        agree += 1
    assert agree == total


def test_drifting_rewards_signs():
    rng = np.random.default_rng(5)
    x = oracles.drifting_rewards(rng, 2000, 10)
    col_means = x.mean(axis=0)
    assert np.all(col_means[::2] < -0.8)  # odd rounds (index 0, 2, ...) near -1
    assert np.all(col_means[1::2] > 0.8)


def test_ville_rate_null_respects_bound():
    rate, se = oracles.ville_rate("dm", 20.0, 2000, 300, seed=6)
    assert rate <= 0.05 + 3 * se


def test_boundary_crossing_rate_small():
    rate, se = oracles.boundary_crossing_rate(ev.Boundary.STITCHED, 0.05, 2000, 300, seed=7)
    assert rate <= 0.05 + 3 * se


def test_proportion_se():
    assert oracles.proportion_se(0.5, 100) == pytest.approx(0.05)
    assert oracles.proportion_se(0.0, 100) == 0.0
