"""Unit tests for environments, stopping rules and the trial loop."""

import math

import numpy as np
import pytest

from banditmt import engine, mt
from banditmt.evidence import LambdaStrategy
from banditmt.exploration import PolicyKind, PolicySpec

DM = engine.EvidenceSpec(engine.EvidenceKind.DISCRETE_MIXTURE)
PM = engine.EvidenceSpec(engine.EvidenceKind.PREDICTABLE_MIX, LambdaStrategy.decaying(0.05))
P_TIGHT = engine.EvidenceSpec(engine.EvidenceKind.P_TIGHT)
UCB = PolicySpec(PolicyKind.UCB, delta=0.05)
UNIFORM = PolicySpec(PolicyKind.UNIFORM)
BEST_EV = PolicySpec(PolicyKind.BEST_EVIDENCE)


def _mt(delta=0.05, **kwargs):
    return engine.MtConfig(delta, mt.DependenceSetting(**kwargs))


# ---------------------------------------------------------------------------
# environments
# ---------------------------------------------------------------------------


def test_environment_validation():
    with pytest.raises(ValueError):
        engine.Environment(engine.EnvKind.STANDARD_GAUSSIAN, (0.0,), ())
    with pytest.raises(ValueError):
        engine.Environment(engine.EnvKind.STANDARD_GAUSSIAN, (0.0,), ((0, 1),))
    with pytest.raises(ValueError):
        engine.clique_graph([0.0] * 15)  # not a multiple of the clique count


def test_clique_family_layout():
    env = engine.clique_graph([0.0] * 50)
    assert len(env.superarms) == 10
    assert env.superarms[0] == (0, 10, 20, 30, 40)
    assert env.superarms[9] == (9, 19, 29, 39, 49)


def test_standard_env_marginals():
    env = engine.standard_gaussian([1.0, -2.0])
    rng = np.random.default_rng(0)
    draws = np.array([env.draw(rng, (0, 1), t) for t in range(1, 20001)])
    assert draws[:, 0].mean() == pytest.approx(1.0, abs=0.05)
    assert draws[:, 1].mean() == pytest.approx(-2.0, abs=0.05)
    assert draws[:, 0].std() == pytest.approx(1.0, abs=0.05)


def test_shared_noise_keeps_marginals_and_adds_correlation():
    env = engine.standard_gaussian([0.0, 0.0], engine.RewardCoupling.SHARED_NOISE)
    rng = np.random.default_rng(1)
    draws = np.array([env.draw(rng, (0, 1), t) for t in range(1, 10001)])
    corr = np.corrcoef(draws[:, 0], draws[:, 1])[0, 1]
    # corr = 1/2 by construction; 5 sigma of the correlation estimate ~ 0.05
    assert abs(corr - 0.5) < 0.05
    assert draws[:, 0].std() == pytest.approx(1.0, abs=0.05)


def test_independent_coupling_has_no_correlation():
    env = engine.standard_gaussian([0.0, 0.0])
    rng = np.random.default_rng(2)
    draws = np.array([env.draw(rng, (0, 1), t) for t in range(1, 10001)])
    corr = np.corrcoef(draws[:, 0], draws[:, 1])[0, 1]
    assert abs(corr) < 0.05  # 5 sigma band around zero


def test_drifting_null_alternates_conditional_means():
    env = engine.drifting_null(1)
    rng = np.random.default_rng(3)
    odd = np.array([env.draw(rng, (0,), t)[0] for t in range(1, 4001, 2)])
    even = np.array([env.draw(rng, (0,), t)[0] for t in range(2, 4001, 2)])
    assert odd.mean() == pytest.approx(-1.0, abs=0.12)
    assert even.mean() == pytest.approx(1.0, abs=0.12)


# ---------------------------------------------------------------------------
# fdp / tpp
# ---------------------------------------------------------------------------


def test_compute_fdp_tpp():
    assert engine.compute_fdp_tpp((), (1,), 2) == (0.0, 0.0)
    assert engine.compute_fdp_tpp((0, 1), (1,), 2) == (0.5, 1.0)
    assert engine.compute_fdp_tpp((1,), (1,), 2) == (0.0, 1.0)
    assert engine.compute_fdp_tpp((), (), 2) == (0.0, 1.0)  # no non-nulls to find


# ---------------------------------------------------------------------------
# trial loop
# ---------------------------------------------------------------------------


def test_zero_round_trial():
    env = engine.standard_gaussian([0.0, 0.0])
    hyps = engine.HypothesisConfig.identity(2)
    res = engine.run_trial(
        env, hyps, UNIFORM, DM, _mt(), engine.StoppingRule.fixed_horizon(0), seed=1
    )
    assert res.stop_round == 0
    assert res.rejected == ()
    assert res.fdp == 0.0


def test_huge_gap_trial_rejects_the_signal_arm():
    env = engine.standard_gaussian([0.0, 10.0])
    hyps = engine.HypothesisConfig.identity(2, 0.0, (1,))
    hits = 0
    for seed in range(500):
        res = engine.run_trial(
            env, hyps, UCB, DM, _mt(), engine.StoppingRule.all_nonnulls_oracle(200), seed
        )
        hits += 1 in res.rejected
    assert hits >= 495  # >= 99% of 500 runs


def test_determinism_bit_identical():
    env = engine.clique_graph([0.5, 0.5] + [0.0] * 18, coupling=engine.RewardCoupling.SHARED_NOISE)
    hyps = engine.HypothesisConfig.identity(20, 0.0, (0, 1))
    kwargs = dict(snapshot_stride=7, record_samples=True)
    a = engine.run_trial(
        env, hyps, BEST_EV, DM, _mt(), engine.StoppingRule.fixed_horizon(300), 42, **kwargs
    )
    b = engine.run_trial(
        env, hyps, BEST_EV, DM, _mt(), engine.StoppingRule.fixed_horizon(300), 42, **kwargs
    )
    assert a == b


def test_rejection_trajectory_is_monotone_and_frozen():
    env = engine.standard_gaussian([0.8, 0.6, 0.0, 0.0])
    hyps = engine.HypothesisConfig.identity(4, 0.0, (0, 1))
    res = engine.run_trial(
        env,
        hyps,
        UNIFORM,
        PM,
        _mt(),
        engine.StoppingRule.fixed_horizon(800),
        seed=9,
        snapshot_stride=1,
    )
    # monotone: rejection rounds reconstruct nested sets by construction;
    # frozen: strengths stop moving after the rejection round
    rej = dict(res.rejection_round)
    assert res.rejected == tuple(sorted(rej))
    for h, r in rej.items():
        values = [snap[h] for t, snap in res.snapshots if t >= r]
        assert len(set(values)) == 1


def test_evidence_isolation():
    """A hypothesis's evidence changes only in rounds its arm was queried."""
    env = engine.standard_gaussian([0.3, 0.3, 0.3])
    hyps = engine.HypothesisConfig.identity(3)
    res = engine.run_trial(
        env,
        hyps,
        UNIFORM,
        DM,
        _mt(),
        engine.StoppingRule.fixed_horizon(120),
        seed=11,
        snapshot_stride=1,
        record_samples=True,
    )
    queried = {(t, a) for a, t, _ in res.samples}
    prev = {h: res.snapshots[0][1][h] for h in range(3)}
    for idx in range(1, len(res.snapshots)):
        t, snap = res.snapshots[idx]
        for h in range(3):
            if snap[h] != prev[h]:
                assert (t, h) in queried
            prev[h] = snap[h]


def test_policy_replay_from_sample_log():
    """Replaying a logged trajectory reproduces the identical selections."""
    env = engine.standard_gaussian([0.5, 0.2, 0.0])
    hyps = engine.HypothesisConfig.identity(3, 0.0, (0,))
    res = engine.run_trial(
        env,
        hyps,
        UCB,
        DM,
        _mt(),
        engine.StoppingRule.fixed_horizon(100),
        seed=17,
        record_samples=True,
    )
    by_round = {}
    for arm, t, x in res.samples:
        by_round.setdefault(t, []).append((arm, x))
    # rebuild the policy and feed it the logged data
    ss = np.random.SeedSequence(17)
    _, policy_rng, _ = (np.random.default_rng(s) for s in ss.spawn(3))
    policy = UCB.build(3, env.superarms, hyps.arms_of, policy_rng)
    arm_ret = np.zeros(3, bool)
    hyp_rej = np.zeros(3, bool)
    for t in sorted(by_round):
        sel = policy.select(t, arm_ret, hyp_rej, np.zeros(3))
        assert sel == tuple(a for a, _ in by_round[t])
        for arm, x in by_round[t]:
            policy.observe(arm, x)


def test_single_sample_discard_keeps_one_per_pull():
    env = engine.clique_graph([0.0] * 20)
    hyps = engine.HypothesisConfig.identity(20)
    res = engine.run_trial(
        env,
        hyps,
        UNIFORM,
        P_TIGHT,
        _mt(adaptivity=mt.Adaptivity.NON_ADAPTIVE),
        engine.StoppingRule.fixed_horizon(50),
        seed=3,
        record_samples=True,
    )
    rounds = [t for _, t, _ in res.samples]
    assert len(rounds) == 2 * 50  # cliques have two arms here
    res_discard = engine.run_trial(
        env,
        hyps,
        UNIFORM,
        P_TIGHT,
        _mt(adaptivity=mt.Adaptivity.NON_ADAPTIVE),
        engine.StoppingRule.fixed_horizon(50),
        seed=3,
        record_samples=True,
        single_sample_discard=True,
    )
    assert len(res_discard.samples) == 50


def test_rejection_count_stopping():
    env = engine.standard_gaussian([5.0, 5.0, 0.0])
    hyps = engine.HypothesisConfig.identity(3, 0.0, (0, 1))
    res = engine.run_trial(
        env, hyps, UCB, DM, _mt(), engine.StoppingRule.rejection_count(1, 500), seed=2
    )
    assert len(res.rejected) >= 1
    assert res.stop_round < 500


def test_multi_arm_hypotheses_update_and_level():
    # hypothesis 0 spans arms 0 and 1; hypothesis 1 is arm 2 alone
    env = engine.standard_gaussian([0.0, 0.0, 0.0])
    hyps = engine.HypothesisConfig(((0, 1), (2,)), (0.0, 0.0), ())
    with pytest.raises(ValueError):
        engine.run_trial(
            env, hyps, UNIFORM, P_TIGHT, _mt(), engine.StoppingRule.fixed_horizon(5), 1
        )
    res = engine.run_trial(
        env,
        hyps,
        UNIFORM,
        P_TIGHT,
        _mt(multi_arm=True),
        engine.StoppingRule.fixed_horizon(5),
        seed=1,
    )
    assert res.level == pytest.approx(0.05 / mt.harmonic(2))
    res_e = engine.run_trial(
        env, hyps, UNIFORM, DM, _mt(), engine.StoppingRule.fixed_horizon(5), seed=1
    )
    assert res_e.level == 0.05


def test_inverse_pm_evidence_through_engine():
    """1/wealth p-values drive BH: a strong arm is still found."""
    env = engine.standard_gaussian([3.0, 0.0])
    hyps = engine.HypothesisConfig.identity(2, 0.0, (0,))
    spec = engine.EvidenceSpec(engine.EvidenceKind.INVERSE_PM, LambdaStrategy.half_mean())
    res = engine.run_trial(
        env,
        hyps,
        UNIFORM,
        spec,
        _mt(adaptivity=mt.Adaptivity.ADAPTIVE, dependence=mt.Dependence.INDEPENDENT),
        engine.StoppingRule.all_nonnulls_oracle(2000),
        seed=4,
    )
    assert 0 in res.rejected
    assert res.level == pytest.approx(
        max(mt.solve_c_delta(0.05), 0.05 / mt.harmonic(2)), rel=1e-12
    )


def test_engine_ville_small_monte_carlo():
    """Single null arm + e-BH: rejection iff the e-process crosses 1/delta."""
    env = engine.standard_gaussian([0.0])
    hyps = engine.HypothesisConfig.identity(1)
    reps = 300
    hits = 0
    for seed in range(reps):
        res = engine.run_trial(
            env, hyps, UCB, DM, _mt(), engine.StoppingRule.fixed_horizon(2000), seed
        )
        hits += len(res.rejected) > 0
    rate = hits / reps
    se = math.sqrt(max(rate * (1 - rate), 1e-9) / reps)
    assert rate <= 0.05 + 3 * se


# ---------------------------------------------------------------------------
# streaming monitor
# ---------------------------------------------------------------------------


def test_streaming_preseeded_rejects_everything_at_once():
    env = engine.streaming_environment([0.0] * 3)
    hyps = engine.HypothesisConfig.identity(3)
    spec = engine.EvidenceSpec(engine.EvidenceKind.PREDICTABLE_MIX, LambdaStrategy.fixed(0.0))
    seed_value = math.log(3 / 0.05) + 1.0  # above every step-up threshold
    res = engine.run_streaming(
        env, hyps, spec, _mt(dependence=mt.Dependence.ARBITRARY), 10, 100, 1,
        initial_log_e=[seed_value] * 3,
    )
    assert res.stop_round == 1
    assert res.rejected == (0, 1, 2)


def test_streaming_gap_stop_without_rejections():
    env = engine.streaming_environment([0.0] * 3)
    hyps = engine.HypothesisConfig.identity(3)
    spec = engine.EvidenceSpec(engine.EvidenceKind.PREDICTABLE_MIX, LambdaStrategy.fixed(0.0))
    res = engine.run_streaming(
        env, hyps, spec, _mt(dependence=mt.Dependence.ARBITRARY), 25, 1000, 2
    )
    assert res.stop_round == 26  # t - t_prev_rejection > t_gap first holds at t_gap + 1
    assert res.rejected == ()


def test_streaming_null_fdr_small_monte_carlo():
    env = engine.streaming_environment([0.0] * 5)
    hyps = engine.HypothesisConfig.identity(5)
    reps = 200
    fdps = []
    for seed in range(reps):
        res = engine.run_streaming(
            env, hyps, DM, _mt(dependence=mt.Dependence.ARBITRARY), 300, 600, seed
        )
        fdps.append(res.fdp)
    mean = float(np.mean(fdps))
    se = float(np.std(fdps, ddof=1) / math.sqrt(reps))
    assert mean <= 0.05 + 3 * se


def test_trial_result_reconstruction_helpers():
    res = engine.TrialResult(
        stop_round=10,
        rejected=(0, 2),
        rejection_round=((0, 3), (2, 7)),
        fdp=0.0,
        tpp=1.0,
        level=0.05,
        procedure=mt.Procedure.EBH,
    )
    assert res.rejected_at(2) == frozenset()
    assert res.rejected_at(3) == {0}
    assert res.rejected_at(9) == {0, 2}
    assert res.tpp_at(5, (0, 2)) == 0.5
    assert res.tpp_at(7, (0, 2)) == 1.0
