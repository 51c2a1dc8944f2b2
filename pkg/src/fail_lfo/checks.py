"""Independent brute-force oracles used by ``lp-check`` and the test suite.

None of these share code with the simplex or the best-response oracles.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .rng import make_rng


def vertex_enumeration(c, A, b, lo, hi, tol=1e-9):
    """Maximise ``c @ x`` over a bounded polytope by enumerating basic solutions.

    Every choice of ``n`` tight constraints (rows or finite bounds) whose
    system is nonsingular gives a candidate vertex.  Returns ``(value, x)``
    or ``(None, None)`` when no feasible vertex exists.
    """
    c = np.asarray(c, float)
    A = np.asarray(A, float).reshape(-1, c.size)
    b = np.asarray(b, float)
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    n = c.size
    rows, rhs = [r for r in A], list(b)
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        if np.isfinite(hi[j]):
            rows.append(e)
            rhs.append(hi[j])
        if np.isfinite(lo[j]):
            rows.append(-e)
            rhs.append(-lo[j])
    G, g = np.array(rows), np.array(rhs)
    best, arg = None, None
    for subset in itertools.combinations(range(len(G)), n):
        M = G[list(subset)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, g[list(subset)])
        if np.all(G @ x <= g + tol):
            v = float(c @ x)
            if best is None or v > best:
                best, arg = v, x
    return best, arg


def random_bounded_lp(seed, max_vars=4, max_rows=6):
    """Small random program with finite boxes (so vertex enumeration is exact)."""
    rng = make_rng(seed)
    n = int(rng.integers(1, max_vars + 1))
    m = int(rng.integers(0, max_rows + 1))
    c = rng.normal(size=n)
    A = rng.normal(size=(m, n))
    lo = -rng.uniform(0, 2, size=n)
    hi = rng.uniform(0, 2, size=n)
    x0 = rng.uniform(lo, hi)
    # keep the program feasible most of the time, but not always
    slack = rng.uniform(-0.3, 1.0, size=m)
    b = A @ x0 + slack
    return c, A, b, lo, hi


# -- Lipschitz program ----------------------------------------------------------

@dataclass
class LipschitzInstance:
    coords: np.ndarray      # pool coordinates (pool x 2)
    dist: np.ndarray        # pool metric
    points: np.ndarray      # sample indices into the pool
    weights: np.ndarray
    L: float

    def to_dict(self):
        return {"coords": self.coords.tolist(), "points": self.points.tolist(),
                "weights": self.weights.tolist(), "L": self.L}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def random_lipschitz_instance(seed, max_per_side=3, pool=30):
    """Random two-sample instance on a Euclidean pool normalised to diameter 1.

    Each side carries 1..max_per_side distinct points with positive weights
    summing to 1 (learner) and -1 (expert).
    """
    rng = make_rng(seed)
    coords = rng.random((pool, 2))
    d = np.sqrt(((coords[:, None] - coords[None]) ** 2).sum(-1))
    d /= d.max()
    n1 = int(rng.integers(1, max_per_side + 1))
    n2 = int(rng.integers(1, max_per_side + 1))
    pts = rng.choice(pool, size=n1 + n2, replace=False)
    w1 = rng.dirichlet(np.ones(n1))
    w2 = -rng.dirichlet(np.ones(n2))
    L = float(rng.choice([0.5, 1.0, 2.0, 4.0]))
    return LipschitzInstance(coords, d, pts, np.concatenate([w1, w2]), L)


def lipschitz_grid_max(weights, dist, L, step=1e-2):
    """Grid brute force for ``max sum w_i a_i`` with ``|a_i - a_j| <= L d_ij``, ``|a| <= 1``.

    Positive-weight points range over the grid; each negative-weight point
    then takes the smallest value compatible with them,
    ``max(-1, max_i a_i - L d_ij)``, which is optimal and feasible because
    a maximum of L-Lipschitz functions is L-Lipschitz.
    """
    w = np.asarray(weights, float)
    d = np.asarray(dist, float)
    pos = np.flatnonzero(w > 0)
    neg = np.flatnonzero(w <= 0)
    grid = np.round(np.arange(-1.0, 1.0 + step / 2, step), 12)
    if pos.size == 0:
        return float(-w[neg].sum()) if neg.size else 0.0
    if pos.size > 3:
        raise ValueError("grid brute force limited to three positive points")
    rest = np.array(list(itertools.product(grid, repeat=pos.size - 1)), dtype=float)
    rest = rest.reshape(len(rest), pos.size - 1)
    ok = np.ones(len(rest), bool)
    for a, b in itertools.combinations(range(1, pos.size), 2):
        ok &= np.abs(rest[:, a - 1] - rest[:, b - 1]) <= L * d[pos[a], pos[b]] + 1e-12
    rest = rest[ok]
    rest_val = rest @ w[pos[1:]]
    if neg.size:
        dn = L * d[np.ix_(pos, neg)]
        rest_lower = (np.max(rest[:, :, None] - dn[None, 1:], axis=1) if pos.size > 1
                      else np.full((len(rest), neg.size), -np.inf))
    best = -np.inf
    for a0 in grid:
        ok = np.ones(len(rest), bool)
        for b in range(1, pos.size):
            ok &= np.abs(rest[:, b - 1] - a0) <= L * d[pos[0], pos[b]] + 1e-12
        if not ok.any():
            continue
        val = a0 * w[pos[0]] + rest_val[ok]
        if neg.size:
            lower = np.maximum(rest_lower[ok], a0 - dn[0][None, :])
            val = val + np.maximum(-1.0, lower) @ w[neg]
        best = max(best, float(val.max()))
    return best


def sign_enumeration(block_weights):
    """``max_{s in {-1,+1}^S} sum_s sign_s * weight_s`` by exhaustive enumeration."""
    w = np.asarray(block_weights, float)
    best = -np.inf
    for signs in itertools.product((-1.0, 1.0), repeat=w.size):
        best = max(best, float(np.dot(signs, w)))
    return best


def kernel_quadratic_loop(points, weights, gram):
    """``sum_i sum_j w_i w_j k(x_i, x_j)`` with plain loops."""
    total = 0.0
    for i in range(len(points)):
        for j in range(len(points)):
            total += weights[i] * weights[j] * gram[points[i], points[j]]
    return total


__all__ = [
    "vertex_enumeration", "random_bounded_lp", "LipschitzInstance", "random_lipschitz_instance",
    "lipschitz_grid_max", "sign_enumeration", "kernel_quadratic_loop",
]
