import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fail_lfo.checks import random_bounded_lp, vertex_enumeration
from fail_lfo.lp import (LinearProgram, LPError, Status, aggregate_points, build_lipschitz_lp,
                         solve)


def test_textbook_program(backend):
    # max 3x + 2y s.t. x + y <= 4, x + 3y <= 6, 0 <= x <= 3, y >= 0
    lp = LinearProgram([3, 2], [[1, 1], [1, 3]], [4, 6], [0, 0], [3, np.inf])
    res = solve(lp, backend=backend)
    assert res.status is Status.OPTIMAL
    assert res.value == pytest.approx(11.0)
    np.testing.assert_allclose(res.x, [3, 1], atol=1e-10)


def test_infeasible(backend):
    lp = LinearProgram([1.0], [[1.0], [-1.0]], [-1.0, -1.0], [-5], [5])
    assert solve(lp, backend=backend).status is Status.INFEASIBLE


def test_unbounded(backend):
    lp = LinearProgram([1.0, 1.0], [[1.0, -1.0]], [1.0], [0, 0], [np.inf, np.inf])
    assert solve(lp, backend=backend).status is Status.UNBOUNDED


def test_free_variables(backend):
    lp = LinearProgram([1.0], [[1.0], [-1.0]], [2.0, 3.0], [-np.inf], [np.inf])
    res = solve(lp, backend=backend)
    assert res.value == pytest.approx(2.0)


def test_rejects_bad_bounds():
    with pytest.raises(LPError):
        LinearProgram([1.0], np.zeros((0, 1)), [], [1.0], [0.0])


def test_dimension_cap():
    with pytest.raises(LPError):
        solve(LinearProgram(np.ones(5), np.zeros((0, 5)), [], -1, 1), max_vars=4)


def test_degenerate_program_terminates(backend):
    # many redundant tight rows at the optimum
    A = np.vstack([np.eye(2)] * 6 + [np.ones((3, 2))])
    b = np.concatenate([np.ones(12), 2 * np.ones(3)])
    res = solve(LinearProgram([1, 1], A, b, [0, 0], [5, 5]), backend=backend)
    assert res.value == pytest.approx(2.0)


@pytest.mark.parametrize("seed", range(60))
def test_matches_vertex_enumeration(seed, backend):
    c, A, b, lo, hi = random_bounded_lp(seed)
    res = solve(LinearProgram(c, A, b, lo, hi), backend=backend)
    best, _ = vertex_enumeration(c, A, b, lo, hi)
    if best is None:
        assert res.status is Status.INFEASIBLE
    else:
        assert res.status is Status.OPTIMAL
        assert res.value == pytest.approx(best, abs=1e-7)
        assert LinearProgram(c, A, b, lo, hi).is_feasible(res.x)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6), perm_seed=st.integers(0, 10 ** 6))
def test_row_permutation_invariance(seed, perm_seed):
    c, A, b, lo, hi = random_bounded_lp(seed)
    lp = LinearProgram(c, A, b, lo, hi)
    order = np.random.default_rng(perm_seed).permutation(lp.n_rows)
    r1, r2 = solve(lp), solve(lp.permuted(order))
    assert r1.status is r2.status
    if r1.status is Status.OPTIMAL:
        assert r1.value == pytest.approx(r2.value, abs=1e-8)


def test_aggregate_points_merges_duplicates_and_zero_distance():
    d = np.array([[0, 0, 1.0], [0, 0, 1.0], [1.0, 1.0, 0]])
    pts, w = aggregate_points([2, 0, 1, 2], [0.5, 1.0, -0.25, 0.5], dist=d)
    np.testing.assert_array_equal(pts, [2, 0])
    np.testing.assert_allclose(w, [1.0, 0.75])


def test_lipschitz_lp_shape_and_pair_value():
    d = np.array([[0, 0.3], [0.3, 0]])
    lp = build_lipschitz_lp([1.0, -1.0], d, 2.0)
    assert lp.A.shape == (2, 2)
    assert solve(lp).value == pytest.approx(0.6)
    assert solve(build_lipschitz_lp([1.0, -1.0], d, 10.0)).value == pytest.approx(2.0)


def test_lipschitz_lp_requires_distinct_points():
    with pytest.raises(LPError):
        build_lipschitz_lp([1.0, -1.0], np.zeros((2, 2)), 1.0)
