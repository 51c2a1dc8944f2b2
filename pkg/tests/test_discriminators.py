import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fail_lfo.checks import kernel_quadratic_loop, lipschitz_grid_max, random_lipschitz_instance
from fail_lfo.discriminators import (DiscriminatorError, FiniteClass, LipschitzClass,
                                     PiecewiseConstantClass, RkhsClass, dedup_rows, empirical_ipm,
                                     lipschitz_witness, median_width, rbf_gram, two_sample_weights)
from fail_lfo.mdp import PropensityError, Transitions


def line_metric(n):
    z = np.linspace(0, 1, n)
    return np.abs(z[:, None] - z[None, :])


# -- finite -------------------------------------------------------------------

def test_finite_requires_symmetry():
    with pytest.raises(DiscriminatorError, match="negation"):
        FiniteClass([[1.0, -1.0]])
    fc = FiniteClass.closed([[1.0, -1.0], [1.0, -1.0], [0.5, 0.5]])
    assert len(fc) == 4


def test_finite_best_response_and_ties():
    fc = FiniteClass.closed([[1.0, 0.0], [0.0, 1.0]])
    f, v = fc.best_response([0, 1], [0.5, -0.5])
    assert v == pytest.approx(0.5)
    # all scores zero: lowest index wins
    f, v = fc.best_response([0], [0.0])
    assert v == 0.0 and f.ident == "finite:0"


def test_dedup_rows_first_appearance():
    out = dedup_rows(np.array([[1.0, 0], [0, 1.0], [1.0, 0]]))
    np.testing.assert_array_equal(out, [[1, 0], [0, 1]])


def test_empty_points_rejected():
    with pytest.raises(DiscriminatorError):
        FiniteClass.closed([[1.0]]).best_response([], [])


# -- RKHS ---------------------------------------------------------------------

def test_rkhs_value_is_mmd():
    coords = np.array([0.0, 0.5, 1.0])
    gram = rbf_gram(coords, 0.4)
    pts, w = np.array([0, 1, 2, 2]), np.array([0.5, 0.5, -0.5, -0.5])
    f, v = RkhsClass(gram=gram).best_response(pts, w)
    assert v ** 2 == pytest.approx(kernel_quadratic_loop(pts, w, gram), abs=1e-12)
    assert w @ f(pts) == pytest.approx(v, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_rkhs_permutation_and_duplication_invariance(seed):
    rng = np.random.default_rng(seed)
    gram = rbf_gram(rng.random((8, 2)), 0.5)
    pts = rng.integers(8, size=6)
    w = rng.normal(size=6)
    fc = RkhsClass(gram=gram)
    _, v = fc.best_response(pts, w)
    perm = rng.permutation(6)
    _, vp = fc.best_response(pts[perm], w[perm])
    _, vd = fc.best_response(np.concatenate([pts, pts]), np.concatenate([w, w]) / 2)
    assert vp == pytest.approx(v, abs=1e-12)
    assert vd == pytest.approx(v, abs=1e-12)


def test_rkhs_cancelling_samples_give_zero():
    gram = rbf_gram(np.arange(4.0), 1.0)
    f, v = RkhsClass(gram=gram).best_response([1, 2, 1, 2], [0.5, 0.5, -0.5, -0.5])
    assert v == 0.0
    np.testing.assert_array_equal(f.tabulate(4), 0.0)


def test_rkhs_median_width_and_psd_check():
    coords = np.array([0.0, 1.0, 3.0])
    assert median_width(coords, [0, 1, 2, 2]) == pytest.approx(2.0)
    fc = RkhsClass(coords=coords)
    _, v = fc.best_response([0, 2], [1.0, -1.0])
    assert v > 0
    bad = np.array([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(DiscriminatorError, match="PSD"):
        RkhsClass(gram=bad).best_response([0, 1], [1.0, -1.0])


# -- Lipschitz ----------------------------------------------------------------

def test_lipschitz_single_pair_closed_form(backend):
    d = line_metric(5)
    for L in (0.5, 1.0, 3.0):
        f, v = LipschitzClass(d, L, backend=backend).best_response([0, 3], [1.0, -1.0])
        assert v == pytest.approx(min(2.0, L * d[0, 3]), abs=1e-10)


def test_lipschitz_point_mass_hits_box():
    f, v = LipschitzClass(line_metric(4), 1.0).best_response([2], [0.7])
    assert v == pytest.approx(0.7)


def test_lipschitz_zero_weights():
    f, v = LipschitzClass(line_metric(4), 1.0).best_response([1, 1], [0.5, -0.5])
    assert v == 0.0


@pytest.mark.parametrize("seed", range(15))
def test_lipschitz_against_grid(seed):
    inst = random_lipschitz_instance(seed)
    f, v = LipschitzClass(inst.dist, inst.L).best_response(inst.points, inst.weights)
    grid = lipschitz_grid_max(inst.weights, inst.dist[np.ix_(inst.points, inst.points)], inst.L)
    assert grid - 1e-9 <= v <= grid + 2e-2
    vals = f.tabulate(len(inst.dist))
    assert LipschitzClass(inst.dist, inst.L).contains(vals)


def test_witness_interpolates_and_is_lipschitz():
    d = line_metric(6)
    pts = np.array([0, 2, 5])
    alpha = np.array([0.5, -0.1, 0.3])
    f = lipschitz_witness(alpha, pts, d)
    vals = f.tabulate(6)
    np.testing.assert_allclose(vals[pts], alpha, atol=1e-12)
    assert (np.abs(vals[:, None] - vals[None, :]) - f.lipschitz * d).max() <= 1e-12


def test_witness_rejects_infeasible_values():
    d = line_metric(3)
    with pytest.raises(DiscriminatorError):
        lipschitz_witness([1.0, -1.0], [0, 1], d, lipschitz=0.5)
    with pytest.raises(DiscriminatorError):
        lipschitz_witness([1.5], [0], d)


# -- piecewise ----------------------------------------------------------------

def test_piecewise_sign_rule():
    phi = np.array([0, 0, 1, 1, 2])
    fc = PiecewiseConstantClass(phi)
    f, v = fc.best_response([0, 1, 2, 4], [0.5, 0.5, -0.5, -0.5])
    assert v == pytest.approx(2.0)
    np.testing.assert_array_equal(f.tabulate(5), [1, 1, -1, -1, -1])
    assert fc.contains(f.tabulate(5))
    assert not fc.contains([1, -1, 1, 1, 1])


# -- empirical IPM --------------------------------------------------------------

def test_two_sample_weights_layout():
    data = Transitions([0, 1], [1, 0], [0.5, 0.5], [2, 3])
    policy = np.array([[0.2, 0.8], [1.0, 0.0]])
    pts, w = two_sample_weights(policy, data, [2, 2, 3])
    np.testing.assert_array_equal(pts, [2, 3, 2, 2, 3])
    np.testing.assert_allclose(w, [0.8, 1.0, -1 / 3, -1 / 3, -1 / 3])


def test_empirical_ipm_zero_propensity():
    data = Transitions([0], [0], [0.0], [1])
    with pytest.raises(PropensityError):
        empirical_ipm(FiniteClass.closed([[1.0, 0.0]]), data, np.array([[1.0]]), [0])
