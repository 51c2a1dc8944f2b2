import math

import numpy as np
import pytest

from fail_lfo.discriminators import FiniteClass, TableHandle
from fail_lfo.environments import make_random_mdp, random_policy
from fail_lfo.game import (FiniteList, GameError, PropensityMismatch, TabularSoftmax,
                           brute_force_minmax, cost_matrix, default_eta, ftrl_step, minmax_solve,
                           pg_minmax_solve, reinforce_gradient, softmax_rows, utility,
                           utility_gradient)
from fail_lfo.mdp import PolicySequence, Transitions, rollout_batch


def tiny_game(seed, N=80):
    mdp = make_random_mdp([3, 3], 2, seed)
    expert = random_policy(mdp, seed + 1)
    batch = rollout_batch(mdp, PolicySequence(), seed + 2, N, explore_step=1)
    ex = rollout_batch(mdp, expert, seed + 3, N).obs(2)
    return Transitions.from_batch(batch, 1), ex


def test_ftrl_tabular_is_softmax():
    cum = np.array([[1.0, 0.0], [0.0, 0.0]])
    pol = ftrl_step(cum, 2.0)
    assert pol[0, 1] / pol[0, 0] == pytest.approx(math.exp(2.0))
    np.testing.assert_allclose(pol[1], [0.5, 0.5])


def test_ftrl_finite_list_mixture():
    cands = np.stack([np.eye(2), np.eye(2)[::-1]])
    pc = FiniteList(cands)
    cum = np.array([[1.0, 0.0], [0.0, 1.0]])  # candidate 0 loses 2, candidate 1 loses 0
    pol = ftrl_step(cum, 1.0, pc)
    w1 = 1 / (1 + math.exp(-2.0))
    np.testing.assert_allclose(pol[0], [1 - w1, w1])


def test_default_eta_singleton():
    assert default_eta(FiniteList(np.eye(2)[None]), 10, 2) == 1.0
    assert default_eta(TabularSoftmax(3, 2), 100, 2) == pytest.approx(math.sqrt(2 * math.log(2) / 400))


def test_cost_matrix_linearity():
    data, ex = tiny_game(0)
    f = TableHandle(np.array([0.3, -1.0, 0.5]))
    C = cost_matrix(f(data.x_next), data, 3, 2)
    pol = softmax_rows(np.random.default_rng(0).normal(size=(3, 2)))
    assert (pol * C).sum() - f(ex).mean() == pytest.approx(utility(pol, f, data, ex), abs=1e-12)


def test_singleton_class_returns_it():
    data, ex = tiny_game(1)
    only = np.eye(2)[[0, 1, 0]]
    pol, tr = minmax_solve(ex, data, FiniteList(only[None]), FiniteClass.closed(np.eye(3)), 5)
    np.testing.assert_array_equal(pol, only)
    assert len(tr) == 5 and tr.n_star == 1


def test_constant_discriminator_gives_zero():
    data, ex = tiny_game(2)
    fc = FiniteClass(np.array([[0.0, 0.0, 0.0]]))
    _, tr = minmax_solve(ex, data, TabularSoftmax(3, 2), fc, 4)
    assert tr.values == [0.0] * 4


@pytest.mark.parametrize("seed", range(5))
def test_game_value_close_to_brute_force(seed):
    data, ex = tiny_game(seed, N=200)
    rng = np.random.default_rng(seed)
    cands = np.eye(2)[rng.integers(2, size=(4, 3))]
    fc = FiniteClass.closed(rng.uniform(-1, 1, (3, 3)))
    T = 400
    _, tr = minmax_solve(ex, data, FiniteList(cands), fc, T)
    brute = brute_force_minmax(ex, data, cands, fc)
    assert tr.best_value <= brute + 2 * 2 / math.sqrt(T) + 1e-9
    assert tr.best_value == min(tr.values)
    assert tr.values.index(tr.best_value) + 1 == tr.n_star


def test_transcript_jsonl():
    data, ex = tiny_game(3)
    _, tr = minmax_solve(ex, data, TabularSoftmax(3, 2), FiniteClass.closed(np.eye(3)), 3)
    lines = tr.to_jsonl().splitlines()
    assert len(lines) == 3
    assert sum('"selected": true' in line for line in lines) == 1


def test_game_input_validation():
    data, ex = tiny_game(4)
    with pytest.raises(GameError):
        minmax_solve(ex, data, TabularSoftmax(3, 2), FiniteClass.closed(np.eye(3)), 0)
    with pytest.raises(GameError):
        minmax_solve(ex, data, TabularSoftmax(2, 2), FiniteClass.closed(np.eye(3)), 3)


@pytest.mark.parametrize("seed", range(10))
def test_gradient_finite_differences(seed):
    rng = np.random.default_rng(seed)
    theta = rng.normal(size=(3, 3))
    data = Transitions(rng.integers(3, size=12), rng.integers(3, size=12), rng.uniform(0.2, 1, 12),
                       rng.integers(4, size=12))
    f = TableHandle(rng.uniform(-1, 1, 4))
    ex = np.array([0, 1])
    g = utility_gradient(theta, f, data)
    eps = 1e-6
    for idx in np.ndindex(theta.shape):
        tp, tm = theta.copy(), theta.copy()
        tp[idx] += eps
        tm[idx] -= eps
        fd = (utility(softmax_rows(tp), f, data, ex) - utility(softmax_rows(tm), f, data, ex)) / (2 * eps)
        assert g[idx] == pytest.approx(fd, abs=1e-7)


def test_reinforce_matches_importance_form_on_policy():
    rng = np.random.default_rng(0)
    theta = rng.normal(size=(2, 3))
    pi = softmax_rows(theta)
    x = rng.integers(2, size=30)
    a = np.array([rng.choice(3, p=pi[s]) for s in x])
    data = Transitions(x, a, pi[x, a], rng.integers(3, size=30))
    f = TableHandle(np.array([1.0, -0.5, 0.2]))
    np.testing.assert_allclose(reinforce_gradient(theta, f, data), utility_gradient(theta, f, data))
    off = Transitions(x, a, np.full(30, 1 / 3), data.x_next)
    with pytest.raises(PropensityMismatch):
        reinforce_gradient(theta, f, off)


def test_pg_solver_moves_toward_expert():
    # one state, action 1 leads to the expert's observation
    data = Transitions(np.zeros(200, int), np.tile([0, 1], 100), np.full(200, 0.5),
                       np.tile([0, 1], 100))
    ex = np.ones(100, dtype=int)
    theta, tr = pg_minmax_solve(ex, data, np.zeros((1, 2)), FiniteClass.closed([[1.0, -1.0]]), 100,
                                eta0=5.0)
    assert softmax_rows(theta)[0, 1] > 0.9
    assert tr.best_value < tr.values[0]
    with pytest.raises(PropensityMismatch):
        pg_minmax_solve(ex, data, np.array([[3.0, 0.0]]), FiniteClass.closed([[1.0, -1.0]]), 2,
                        form="reinforce")
