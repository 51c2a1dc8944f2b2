"""Discriminator classes with a weighted best-response oracle.

Every class answers ``best_response(points, weights)``: the function in the
class maximising ``sum_i weights[i] * f(points[i])`` together with the value
reached.  Points are observation indices of one step, so every returned
handle can be evaluated on (and tabulated over) the whole observation set.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .lp import Status, aggregate_points, build_lipschitz_lp, solve
from .mdp import PropensityError, Transitions

PSD_TOL = 1e-9
FEAS_TOL = 1e-9


class DiscriminatorError(ValueError):
    pass


def _digest(values):
    return hashlib.sha1(np.round(np.asarray(values, dtype=np.float64), 12).tobytes()).hexdigest()[:12]


def _samples(points, weights):
    points = np.asarray(points, dtype=np.int64).ravel()
    weights = np.asarray(weights, dtype=np.float64).ravel()
    if points.size == 0:
        raise DiscriminatorError("best response needs at least one weighted sample")
    if points.size != weights.size:
        raise DiscriminatorError("points and weights differ in length")
    if not np.all(np.isfinite(weights)):
        raise DiscriminatorError("weights must be finite")
    return points, weights


# -- function handles ---------------------------------------------------------

class FunctionHandle:
    """A concrete discriminator ``f: X -> R`` over integer observations."""

    def __call__(self, x):
        raise NotImplementedError

    def tabulate(self, n_obs):
        return self(np.arange(n_obs))

    @property
    def ident(self):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class TableHandle(FunctionHandle):
    values: np.ndarray
    index: Optional[int] = None

    def __call__(self, x):
        return self.values[np.asarray(x, dtype=np.int64)]

    def tabulate(self, n_obs):
        return np.array(self.values[:n_obs])

    @property
    def ident(self):
        return f"finite:{self.index}" if self.index is not None else f"table:{_digest(self.values)}"


@dataclass(frozen=True, eq=False)
class RkhsHandle(FunctionHandle):
    """``f(x) = scale * sum_i coef[i] * k(support[i], x)``; zero when ``coef`` is empty."""

    gram: np.ndarray
    support: np.ndarray
    coef: np.ndarray
    scale: float

    def __call__(self, x):
        x = np.asarray(x, dtype=np.int64)
        if self.coef.size == 0 or self.scale == 0.0:
            return np.zeros(x.shape)
        return self.scale * (self.coef @ self.gram[np.ix_(self.support, x.ravel())]).reshape(x.shape)

    @property
    def ident(self):
        return f"rkhs:{_digest(np.concatenate([self.support, self.coef * self.scale]))}"


@dataclass(frozen=True, eq=False)
class LipschitzHandle(FunctionHandle):
    """Clipped McShane-type extension ``clip(min_i L d(y_i, x) + alpha_i, -1, 1)``."""

    metric: np.ndarray
    points: np.ndarray
    alpha: np.ndarray
    lipschitz: float

    def __call__(self, x):
        x = np.asarray(x, dtype=np.int64)
        kern = kernels.get_backend()
        dist = np.ascontiguousarray(self.metric[np.ix_(x.ravel(), self.points)])
        return kern.witness_eval(dist, self.alpha, float(self.lipschitz)).reshape(x.shape)

    @property
    def ident(self):
        return f"lipschitz:{_digest(np.concatenate([self.points, self.alpha]))}"


@dataclass(frozen=True, eq=False)
class PiecewiseHandle(FunctionHandle):
    """``f(x) = alpha[phi(x)]``."""

    phi: np.ndarray
    alpha: np.ndarray

    def __call__(self, x):
        return self.alpha[self.phi[np.asarray(x, dtype=np.int64)]]

    @property
    def ident(self):
        return "piecewise:" + "".join("+" if a > 0 else "-" for a in self.alpha)


# -- classes ------------------------------------------------------------------

class FunctionClass:
    """Symmetric discriminator class over one step's observations."""

    n_obs: int

    def best_response(self, points, weights):
        raise NotImplementedError

    def contains(self, values, tol=1e-9) -> bool:
        """Whether a tabulated function satisfies the class constraints."""
        raise NotImplementedError


class FiniteClass(FunctionClass):
    """Explicit tabulated functions with values in [-1, 1], closed under negation.

    Row ``k`` of ``table`` is the function with index ``k``; negations are
    stored explicitly.
    """

    def __init__(self, table, check_symmetric=True):
        table = np.array(table, dtype=np.float64, ndmin=2)
        if table.ndim != 2 or table.shape[0] == 0:
            raise DiscriminatorError("finite class needs a nonempty (functions, observations) table")
        if np.any(np.abs(table) > 1.0 + 1e-12):
            raise DiscriminatorError("finite-class functions must take values in [-1, 1]")
        if check_symmetric and not _closed_under_negation(table):
            raise DiscriminatorError("finite class is not closed under negation; use FiniteClass.closed")
        table.setflags(write=False)
        self.table = table
        self.n_obs = table.shape[1]

    @classmethod
    def closed(cls, functions, dedup=True):
        """Build from arbitrary functions, appending missing negations."""
        table = np.array(functions, dtype=np.float64, ndmin=2)
        rows = list(dedup_rows(table)) if dedup else list(table)
        for row in list(rows):
            if not any(np.all(np.abs(-row - r) <= 1e-12) for r in rows):
                rows.append(-row)
        return cls(np.array(rows))

    def __len__(self):
        return self.table.shape[0]

    def handle(self, k):
        return TableHandle(self.table[k], int(k))

    def best_response(self, points, weights):
        points, weights = _samples(points, weights)
        agg = np.bincount(points, weights=weights, minlength=self.n_obs)
        scores = self.table @ agg
        k = int(np.argmax(scores))  # lowest index among equal maxima
        return self.handle(k), float(scores[k])

    def contains(self, values, tol=1e-9):
        return bool(np.any(np.all(np.abs(self.table - np.asarray(values)) <= tol, axis=1)))


def _closed_under_negation(table, tol=1e-12):
    for row in table:
        if not np.any(np.all(np.abs(table + row) <= tol, axis=1)):
            return False
    return True


def dedup_rows(table, tol=1e-12):
    """Unique rows in first-appearance order (exact up to ``tol``)."""
    table = np.asarray(table, dtype=np.float64)
    if table.shape[0] == 0:
        return table
    keys = np.round(table / tol).astype(np.int64) if tol > 0 else table
    _, first = np.unique(keys, axis=0, return_index=True)
    return table[np.sort(first)]


def median_width(coords, points):
    """Median pairwise distance among the pooled sample coordinates.

    Zero distances from repeated observations are skipped; falls back to 1.
    """
    pts = np.asarray(coords, dtype=np.float64)[np.asarray(points, dtype=np.int64)]
    if pts.ndim == 1:
        pts = pts[:, None]
    iu, ju = np.triu_indices(len(pts), k=1)
    d = np.linalg.norm(pts[iu] - pts[ju], axis=-1)
    d = d[d > 0]
    return float(np.median(d)) if d.size else 1.0


def rbf_gram(coords, width):
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim == 1:
        coords = coords[:, None]
    sq = ((coords[:, None, :] - coords[None, :, :]) ** 2).sum(-1)
    return np.exp(-sq / (2.0 * width ** 2))


class RkhsClass(FunctionClass):
    """Ball of radius ``bound`` in the RKHS of a kernel with ``0 <= k <= 1``.

    Give either a Gram matrix over the observations or coordinates for an RBF
    kernel; an RBF width of ``None`` is set per call by the median heuristic
    over the pooled sample points.
    """

    def __init__(self, gram=None, coords=None, width=None, bound=1.0):
        if (gram is None) == (coords is None):
            raise DiscriminatorError("give exactly one of gram or coords")
        self.coords = None if coords is None else np.asarray(coords, dtype=np.float64)
        self.width = width
        self.bound = float(bound)
        if gram is not None:
            gram = np.asarray(gram, dtype=np.float64)
            if gram.ndim != 2 or gram.shape[0] != gram.shape[1]:
                raise DiscriminatorError("gram matrix must be square")
            if np.any(gram < -1e-12) or np.any(gram > 1 + 1e-12):
                raise DiscriminatorError("kernel values must lie in [0, 1]")
            self._gram = gram
            self.n_obs = gram.shape[0]
        else:
            self._gram = None if width is None else rbf_gram(self.coords, width)
            self.n_obs = self.coords.shape[0]

    def gram_for(self, points):
        if self._gram is not None:
            return self._gram
        return rbf_gram(self.coords, median_width(self.coords, points))

    def best_response(self, points, weights):
        points, weights = _samples(points, weights)
        gram = self.gram_for(points)
        return rkhs_best_response(points, weights, gram, self.bound)

    def contains(self, values, tol=1e-9):
        # only checkable for functions in the span of the kernel sections
        raise NotImplementedError("membership in an RKHS ball is not decidable from a table")


def rkhs_best_response(points, weights, gram, bound=1.0):
    """Closed-form maximiser: the normalised weighted mean embedding.

    ``value = bound * sqrt(sum_ij w_i w_j k(x_i, x_j))``.  Weights on the same
    observation are summed first so exactly cancelling samples give 0.
    """
    support, coef = aggregate_points(points, weights)
    sub = gram[np.ix_(support, support)]
    quad = float(coef @ sub @ coef)
    if quad < -PSD_TOL:
        raise DiscriminatorError(f"kernel is not PSD on the samples (quadratic form {quad:.3g})")
    quad = max(quad, 0.0)
    if quad == 0.0:
        return RkhsHandle(gram, support[:0], coef[:0], 0.0), 0.0
    norm = np.sqrt(quad)
    return RkhsHandle(gram, support, coef, bound / norm), bound * norm


class LipschitzClass(FunctionClass):
    """``{f : |f(x) - f(y)| <= L d(x, y), |f| <= 1}`` on a finite metric space."""

    def __init__(self, metric, lipschitz, backend=None):
        metric = np.asarray(metric, dtype=np.float64)
        if metric.ndim != 2 or metric.shape[0] != metric.shape[1]:
            raise DiscriminatorError("metric must be a square distance matrix")
        if lipschitz <= 0:
            raise DiscriminatorError("Lipschitz bound must be positive")
        self.metric = metric
        self.lipschitz = float(lipschitz)
        self.backend = backend
        self.n_obs = metric.shape[0]

    def best_response(self, points, weights):
        points, weights = _samples(points, weights)
        pts, w = aggregate_points(points, weights, dist=self.metric)
        keep = np.abs(w) > 0
        if not keep.any():
            return lipschitz_witness(np.zeros(1), pts[:1], self.metric), 0.0
        pts, w = pts[keep], w[keep]
        lp = build_lipschitz_lp(w, self.metric[np.ix_(pts, pts)], self.lipschitz)
        res = solve(lp, backend=self.backend)
        if res.status is not Status.OPTIMAL:
            raise DiscriminatorError(f"Lipschitz program returned {res.status.value}")
        alpha = np.clip(res.x, -1.0, 1.0)
        handle = lipschitz_witness(alpha, pts, self.metric, self.lipschitz)
        return handle, float(w @ alpha)

    def contains(self, values, tol=1e-9):
        values = np.asarray(values, dtype=np.float64)
        if np.any(np.abs(values) > 1 + tol):
            return False
        gap = np.abs(values[:, None] - values[None, :]) - self.lipschitz * self.metric
        return bool(gap.max() <= tol)


def lipschitz_witness(alpha_star, points, metric, lipschitz=None, tol=FEAS_TOL) -> LipschitzHandle:
    """Extend LP values at the data points to a function on the whole space.

    ``L* = max_{i != j} |alpha_i - alpha_j| / d(y_i, y_j)`` and
    ``f(x) = clip(min_i L* d(y_i, x) + alpha_i, -1, 1)``, so ``f(y_i) = alpha_i``
    and ``f`` is ``L*``-Lipschitz.  With ``lipschitz`` given, the values must
    be feasible for the program with that bound.
    """
    alpha = np.asarray(alpha_star, dtype=np.float64).ravel()
    points = np.asarray(points, dtype=np.int64).ravel()
    metric = np.asarray(metric, dtype=np.float64)
    if alpha.size != points.size or alpha.size == 0:
        raise DiscriminatorError("need one value per data point")
    if np.any(np.abs(alpha) > 1 + tol):
        raise DiscriminatorError("witness values violate the box constraint")
    d = metric[np.ix_(points, points)]
    off = ~np.eye(points.size, dtype=bool)
    if np.any(d[off] <= 0):
        raise DiscriminatorError("data points must be distinct in the metric")
    kern = kernels.get_backend()
    l_star = float(kern.max_pair_ratio(alpha, d))
    if lipschitz is not None:
        excess = np.abs(alpha[:, None] - alpha[None, :]) - lipschitz * d
        if excess[off].size and excess[off].max() > tol:
            raise DiscriminatorError(f"witness values violate a Lipschitz row by {excess[off].max():.3g}")
    return LipschitzHandle(metric, points, np.clip(alpha, -1.0, 1.0), l_star)


class PiecewiseConstantClass(FunctionClass):
    """Functions constant on abstraction blocks, bounded by 1."""

    def __init__(self, phi, n_abstract=None):
        phi = np.asarray(phi, dtype=np.int64).ravel()
        if phi.size == 0 or np.any(phi < 0):
            raise DiscriminatorError("abstraction labels must be nonnegative integers")
        self.phi = phi
        self.n_abstract = int(n_abstract if n_abstract is not None else phi.max() + 1)
        self.n_obs = phi.size

    def best_response(self, points, weights):
        points, weights = _samples(points, weights)
        return piecewise_best_response(points, weights, self.phi, self.n_abstract)

    def contains(self, values, tol=1e-9):
        values = np.asarray(values, dtype=np.float64)
        if np.any(np.abs(values) > 1 + tol):
            return False
        for s in np.unique(self.phi):
            block = values[self.phi == s]
            if block.max() - block.min() > tol:
                return False
        return True


def piecewise_best_response(points, weights, phi, n_abstract=None):
    """Sign rule per block: ``alpha_s = sign(aggregated weight)`` (zero -> +1)."""
    phi = np.asarray(phi, dtype=np.int64)
    n_abstract = int(n_abstract if n_abstract is not None else phi.max() + 1)
    agg = np.bincount(phi[np.asarray(points, dtype=np.int64)], weights=weights, minlength=n_abstract)
    alpha = np.where(agg >= 0, 1.0, -1.0)
    return PiecewiseHandle(phi, alpha), float(np.abs(agg).sum())


def best_response(fclass: FunctionClass, points, weights):
    """Dispatch to the class oracle; returns ``(handle, value)``."""
    return fclass.best_response(points, weights)


# -- empirical IPM ------------------------------------------------------------

def learner_weights(policy, data: Transitions):
    """Importance weights ``pi(a|x) / p`` for each learner tuple."""
    data.check_propensities()
    return np.asarray(policy)[data.x, data.a] / data.p


def two_sample_weights(policy, data: Transitions, expert_obs):
    """Stack learner next-states (weight ``(pi/p)/N``) and expert points (``-1/N'``)."""
    expert_obs = np.asarray(expert_obs, dtype=np.int64).ravel()
    if expert_obs.size == 0:
        raise DiscriminatorError("expert observations are empty")
    if len(data) == 0:
        raise DiscriminatorError("learner data is empty")
    w_learn = learner_weights(policy, data) / len(data)
    w_exp = np.full(expert_obs.size, -1.0 / expert_obs.size)
    return np.concatenate([data.x_next, expert_obs]), np.concatenate([w_learn, w_exp])


def empirical_ipm(fclass: FunctionClass, data: Transitions, policy, expert_obs):
    """Importance-weighted empirical IPM; returns ``(value, maximising handle)``."""
    points, weights = two_sample_weights(policy, data, expert_obs)
    handle, value = fclass.best_response(points, weights)
    return value, handle


__all__ = [
    "DiscriminatorError", "FunctionHandle", "TableHandle", "RkhsHandle", "LipschitzHandle",
    "PiecewiseHandle", "FunctionClass", "FiniteClass", "RkhsClass", "LipschitzClass",
    "PiecewiseConstantClass", "best_response", "rkhs_best_response", "lipschitz_witness",
    "piecewise_best_response", "empirical_ipm", "learner_weights", "two_sample_weights",
    "dedup_rows", "median_width", "rbf_gram", "PropensityError",
]
