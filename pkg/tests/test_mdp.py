import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fail_lfo.environments import make_random_mdp, make_tree_mdp, random_policy
from fail_lfo.mdp import (Mdp, MdpError, MeteredEnv, PolicySequence, PropensityError, Transitions,
                          bellman_backup, exact_value, optimal_policy, performance_difference,
                          policy_values, rollout, rollout_batch, state_distributions, step_from)


def small_mdp():
    P = np.array([[[0.5, 0.5], [1.0, 0.0]], [[0.0, 1.0], [0.25, 0.75]]])
    return Mdp(2, (2, 2), 2, (P,), np.array([1.0, 0.0]), np.array([0.5, 0.5]))


def test_hand_computed_value():
    mdp = small_mdp()
    pol = PolicySequence((np.array([[1.0, 0.0], [0.0, 1.0]]),))
    # x=0, a=0 -> cost 0.5 ; x=1, a=1 -> 0.25 ; averaged
    assert exact_value(mdp, pol) == pytest.approx(0.375)


def test_rejects_bad_rows():
    P = np.array([[[0.6, 0.6]]])
    with pytest.raises(MdpError, match="sum to 1"):
        Mdp(2, (1, 2), 1, (P,), np.zeros(2), np.array([1.0]))


def test_rejects_cost_outside_unit_interval():
    P = np.array([[[1.0]]])
    with pytest.raises(MdpError):
        Mdp(2, (1, 1), 1, (P,), np.array([1.5]), np.array([1.0]))


def test_step_bounds():
    mdp = small_mdp()
    with pytest.raises(MdpError):
        mdp.n_obs(0)
    with pytest.raises(MdpError):
        mdp.transition(2)


def test_json_roundtrip():
    mdp = make_random_mdp([2, 3, 2], 2, seed=3)
    back = Mdp.from_json(mdp.to_json())
    for P, Q in zip(mdp.transitions, back.transitions):
        np.testing.assert_array_equal(P, Q)
    np.testing.assert_array_equal(mdp.terminal_cost, back.terminal_cost)


def test_with_terminal_cost_keeps_dynamics():
    mdp, _ = make_tree_mdp(3, [0.2, 0.1, 0.5, 0.9])
    other = mdp.with_terminal_cost([0.0, 1.0, 1.0, 1.0])
    assert other.transitions is mdp.transitions
    assert exact_value(other, PolicySequence.deterministic(other, [0, 0])) == 0.0
    with pytest.raises(MdpError):
        mdp.with_terminal_cost([2.0, 0, 0, 0])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6), H=st.integers(2, 5), K=st.integers(1, 3))
def test_performance_difference_identity(seed, H, K):
    rng = np.random.default_rng(seed)
    mdp = make_random_mdp(list(rng.integers(1, 6, size=H)), K, seed)
    learner, expert = random_policy(mdp, seed + 1), random_policy(mdp, seed + 2)
    total, terms = performance_difference(mdp, learner, expert)
    assert terms.shape == (H - 1,)
    assert total == pytest.approx(exact_value(mdp, learner) - exact_value(mdp, expert), abs=1e-12)


def test_optimal_policy_is_optimal():
    mdp = make_random_mdp([3, 4, 3], 3, seed=11)
    best = exact_value(mdp, optimal_policy(mdp))
    for s in range(20):
        assert best <= exact_value(mdp, random_policy(mdp, s, deterministic=True)) + 1e-12


def test_bellman_backup_matches_values():
    mdp = make_random_mdp([3, 4, 3], 2, seed=5)
    pol = random_policy(mdp, 1)
    V, _ = policy_values(mdp, pol)
    for h in (1, 2):
        np.testing.assert_allclose(bellman_backup(mdp, h, pol.at(h), V[h]), V[h - 1], atol=1e-14)


def test_rollout_is_deterministic_and_prefix_stable():
    mdp = make_random_mdp([3, 4, 3], 2, seed=5)
    pol = random_policy(mdp, 1)
    a = rollout_batch(mdp, pol, 99, 50)
    b = rollout_batch(mdp, pol, 99, 50)
    np.testing.assert_array_equal(a.observations, b.observations)
    short = rollout_batch(mdp, pol, 99, 50, stop=2)
    np.testing.assert_array_equal(short.observations, a.observations[:, :2])
    assert short.costs is None
    first = rollout(mdp, pol, 99)
    np.testing.assert_array_equal(first.observations, a.observations[0])


def test_rollout_marginals_match_exact(backend):
    mdp = make_random_mdp([3, 4, 3], 2, seed=8)
    pol = random_policy(mdp, 2)
    batch = rollout_batch(mdp, pol, 7, 40000, backend=backend)
    mus = state_distributions(mdp, pol)
    for h in (1, 2, 3):
        freq = np.bincount(batch.obs(h), minlength=mdp.n_obs(h)) / 40000
        np.testing.assert_allclose(freq, mus[h - 1], atol=0.012)


def test_exploration_records_uniform_propensity():
    mdp = make_random_mdp([3, 4, 3], 3, seed=8)
    pol = random_policy(mdp, 2).prefix(1)
    batch = rollout_batch(mdp, pol, 1, 300, explore_step=2)
    assert batch.observations.shape == (300, 3)
    np.testing.assert_allclose(batch.action_probs[:, 1], 1 / 3)
    assert np.bincount(batch.actions[:, 1], minlength=3).min() > 70


def test_missing_prefix_policy_raises():
    mdp = make_random_mdp([2, 2, 2], 2, seed=0)
    with pytest.raises(MdpError, match="missing"):
        rollout_batch(mdp, PolicySequence(), 0, 5, explore_step=2)


def test_transitions_from_batch_and_propensities():
    mdp = make_random_mdp([2, 3], 2, seed=0)
    batch = rollout_batch(mdp, PolicySequence(), 0, 10, explore_step=1)
    data = Transitions.from_batch(batch, 1)
    assert len(data) == 10
    data.check_propensities()
    bad = Transitions(data.x, data.a, np.zeros(10), data.x_next)
    with pytest.raises(PropensityError):
        bad.check_propensities()


def test_metered_env_counts():
    mdp = make_random_mdp([2, 3, 2], 2, seed=0)
    env = MeteredEnv(mdp)
    env.rollouts(PolicySequence.uniform(mdp), 0, 7)
    env.rollouts(PolicySequence.uniform(mdp), 1, 3, stop=2)
    assert env.trajectories == 10


def test_step_from_is_seeded():
    mdp = make_random_mdp([3, 3], 2, seed=0)
    a = step_from(mdp, 1, [0, 1, 2], [1, 0, 1], seed=4)
    b = step_from(mdp, 1, [0, 1, 2], [1, 0, 1], seed=4)
    np.testing.assert_array_equal(a, b)


def test_metric_check():
    d = np.array([[0, 1, 3.0], [1, 0, 1], [3, 1, 0]])
    P = np.full((3, 1, 3), 1 / 3)
    mdp = Mdp(2, (3, 3), 1, (P,), np.zeros(3), np.full(3, 1 / 3), metric=(d, d))
    with pytest.raises(MdpError, match="triangle"):
        mdp.check_metric()
