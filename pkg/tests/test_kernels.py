import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fail_lfo import _fallback
from fail_lfo.checks import random_lipschitz_instance
from fail_lfo.discriminators import LipschitzClass
from fail_lfo.environments import make_random_mdp, random_policy
from fail_lfo.kernels import available_backends, get_backend
from fail_lfo.mdp import rollout_batch
from fail_lfo.rng import child_seed, make_rng, split_seed

compiled_only = pytest.mark.skipif("cython" not in available_backends(),
                                   reason="compiled kernels not built")


def test_backend_selection(monkeypatch):
    assert get_backend("python") is _fallback
    with pytest.raises(ValueError):
        get_backend("fortran")
    monkeypatch.setenv("FAIL_LFO_BACKEND", "python")
    assert get_backend() is _fallback


@compiled_only
@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 32))
def test_sample_rows_parity(seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(5), size=4)
    p[rng.random(p.shape) < 0.3] = 0.0
    p[:, 0] += 1e-3
    p /= p.sum(1, keepdims=True)
    cdf = np.cumsum(p, 1)
    cdf[:, -1] = 1.0
    rows = rng.integers(4, size=200)
    u = 1.0 - rng.random(200)
    a = get_backend("cython").sample_rows(cdf, rows, u)
    b = get_backend("python").sample_rows(cdf, rows, u)
    np.testing.assert_array_equal(a, b)


@compiled_only
def test_witness_and_ratio_parity():
    rng = np.random.default_rng(1)
    d = rng.random((30, 6))
    alpha = rng.uniform(-1, 1, 6)
    np.testing.assert_allclose(get_backend("cython").witness_eval(d, alpha, 1.3),
                               get_backend("python").witness_eval(d, alpha, 1.3), atol=1e-15)
    dd = np.abs(rng.random(6)[:, None] - rng.random(6)[None, :])
    assert get_backend("cython").max_pair_ratio(alpha, dd) == pytest.approx(
        get_backend("python").max_pair_ratio(alpha, dd), rel=1e-14)


@compiled_only
def test_rollouts_identical_across_backends():
    mdp = make_random_mdp([3, 5, 4], 3, seed=2)
    pol = random_policy(mdp, 3)
    a = rollout_batch(mdp, pol, 11, 500, backend="cython")
    b = rollout_batch(mdp, pol, 11, 500, backend="python")
    np.testing.assert_array_equal(a.observations, b.observations)
    np.testing.assert_array_equal(a.actions, b.actions)


@compiled_only
@pytest.mark.parametrize("seed", range(20))
def test_lipschitz_oracle_parity(seed):
    inst = random_lipschitz_instance(seed)
    _, v1 = LipschitzClass(inst.dist, inst.L, backend="cython").best_response(inst.points, inst.weights)
    _, v2 = LipschitzClass(inst.dist, inst.L, backend="python").best_response(inst.points, inst.weights)
    assert v1 == pytest.approx(v2, abs=1e-10)


def test_seed_helpers():
    assert make_rng(5).random() == make_rng(5).random()
    assert child_seed(1, 2, 3) == child_seed(1, 2, 3) != child_seed(1, 3, 2)
    seeds = split_seed(9, 4)
    assert len(set(seeds)) == 4
