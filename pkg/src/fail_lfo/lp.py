"""Dense bounded-variable simplex and the Lipschitz-discriminator program.

``solve`` maximises ``c @ x`` subject to ``A @ x <= b`` and ``lo <= x <= hi``
(infinite bounds allowed).  Variables are shifted/reflected so every working
column lives in ``[0, u]``; rows with a negative right-hand side get an
artificial column and a phase-one objective.  Pivoting uses Bland's rule in
the compiled core (``fail_lfo._kernels``) or its numpy twin.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels

MAX_VARIABLES = 512
MAX_CONSTRAINTS = 100_000
FEAS_TOL = 1e-8
PIVOT_TOL = 1e-9


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class LPError(RuntimeError):
    """Dimension cap exceeded, malformed input or numerical failure."""


@dataclass(frozen=True)
class LinearProgram:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=np.float64).ravel()
        n = c.size
        A = np.asarray(self.A, dtype=np.float64).reshape(-1, n)
        b = np.asarray(self.b, dtype=np.float64).ravel()
        lo = np.broadcast_to(np.asarray(self.lo, dtype=np.float64), (n,)).copy()
        hi = np.broadcast_to(np.asarray(self.hi, dtype=np.float64), (n,)).copy()
        if b.size != A.shape[0]:
            raise LPError("b must have one entry per constraint row")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise LPError("coefficients must be finite")
        if np.any(lo > hi) or np.any(lo == np.inf) or np.any(hi == -np.inf):
            raise LPError("variable bounds must satisfy lo <= hi")
        for name, val in (("c", c), ("A", A), ("b", b), ("lo", lo), ("hi", hi)):
            object.__setattr__(self, name, val)

    @property
    def n_vars(self):
        return self.c.size

    @property
    def n_rows(self):
        return self.A.shape[0]

    def is_feasible(self, x, tol=FEAS_TOL):
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all(self.A @ x <= self.b + tol)
                    and np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def permuted(self, order):
        """Same program with constraint rows reordered."""
        order = np.asarray(order)
        return LinearProgram(self.c, self.A[order], self.b[order], self.lo, self.hi)

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in ("c", "A", "b", "lo", "hi")}


@dataclass(frozen=True)
class LPResult:
    x: Optional[np.ndarray]
    value: float
    status: Status
    iterations: int = 0


def _standardise(lp):
    """Map original variables to working columns in [0, u].

    Returns (A_w, b_w, c_w, upper, offset_value, recover) where ``recover``
    turns working values back into the original vector.
    """
    cols, c_w, upper = [], [], []
    shift = np.zeros(lp.n_vars)
    pieces = []  # (orig index, working index, sign)
    for j in range(lp.n_vars):
        lo, hi = lp.lo[j], lp.hi[j]
        if np.isfinite(lo):
            shift[j] = lo
            pieces.append((j, len(cols), 1.0))
            cols.append(lp.A[:, j])
            c_w.append(lp.c[j])
            upper.append(hi - lo)
        elif np.isfinite(hi):
            shift[j] = hi
            pieces.append((j, len(cols), -1.0))
            cols.append(-lp.A[:, j])
            c_w.append(-lp.c[j])
            upper.append(np.inf)
        else:
            pieces.append((j, len(cols), 1.0))
            cols.append(lp.A[:, j])
            c_w.append(lp.c[j])
            upper.append(np.inf)
            pieces.append((j, len(cols), -1.0))
            cols.append(-lp.A[:, j])
            c_w.append(-lp.c[j])
            upper.append(np.inf)
    m = lp.n_rows
    A_w = np.column_stack(cols) if cols else np.zeros((m, 0))
    A_w = A_w.reshape(m, len(cols))
    b_w = lp.b - lp.A @ shift
    offset = float(lp.c @ shift)

    def recover(xw):
        x = shift.copy()
        for j, w, sgn in pieces:
            x[j] += sgn * xw[w]
        return x

    return A_w, b_w, np.asarray(c_w), np.asarray(upper, dtype=np.float64), offset, recover


def _reduced_costs(cost, tab, basis):
    return cost - cost[basis] @ tab


def solve(lp: LinearProgram, backend=None, max_vars=MAX_VARIABLES,
          max_rows=MAX_CONSTRAINTS, max_iter=None) -> LPResult:
    """Maximise ``lp``; returns the optimum, or an Infeasible/Unbounded status."""
    if lp.n_vars > max_vars or lp.n_rows > max_rows:
        raise LPError(f"program with {lp.n_vars} variables and {lp.n_rows} rows exceeds the "
                      f"cap ({max_vars} variables, {max_rows} rows)")
    kern = kernels.get_backend(backend)
    A_w, b_w, c_w, upper_w, offset, recover = _standardise(lp)
    m, n = A_w.shape
    if np.any(upper_w < -FEAS_TOL):
        return LPResult(None, float("nan"), Status.INFEASIBLE)
    upper_w = np.maximum(upper_w, 0.0)

    # working columns | slacks | artificials
    neg = b_w < 0
    n_art = int(neg.sum())
    sign = np.where(neg, -1.0, 1.0)
    tab = np.zeros((m, n + m + n_art))
    tab[:, :n] = A_w * sign[:, None]
    tab[np.arange(m), n + np.arange(m)] = sign
    art_rows = np.flatnonzero(neg)
    tab[art_rows, n + m + np.arange(n_art)] = 1.0
    beta = np.abs(b_w).astype(np.float64)
    basis = np.arange(n, n + m, dtype=np.int64)
    basis[art_rows] = n + m + np.arange(n_art)
    upper = np.concatenate([upper_w, np.full(m, np.inf), np.full(n_art, np.inf)])
    at_upper = np.zeros(n + m + n_art, dtype=np.int8)
    max_iter = int(max_iter or 50 * (m + n + n_art) + 1000)
    total_iter = 0

    if n_art:
        cost1 = np.zeros(n + m + n_art)
        cost1[n + m:] = -1.0
        red = _reduced_costs(cost1, tab, basis)
        status, it = kern.simplex_iterate(tab, beta, red, basis, at_upper, upper, PIVOT_TOL, max_iter)
        total_iter += it
        if status == kern.ITERATION_LIMIT:
            raise LPError("phase one hit the iteration limit")
        if status == kern.UNBOUNDED:
            raise LPError("phase one reported unbounded; numerical failure")
        art_basic = basis >= n + m
        if beta[art_basic].sum() > FEAS_TOL * max(1.0, np.abs(b_w).max()):
            return LPResult(None, float("nan"), Status.INFEASIBLE, total_iter)
        # pin artificials at zero for phase two
        upper[n + m:] = 0.0
        beta[art_basic] = np.maximum(beta[art_basic], 0.0)

    cost2 = np.concatenate([c_w, np.zeros(m + n_art)])
    red = _reduced_costs(cost2, tab, basis)
    status, it = kern.simplex_iterate(tab, beta, red, basis, at_upper, upper, PIVOT_TOL, max_iter)
    total_iter += it
    if status == kern.ITERATION_LIMIT:
        raise LPError("phase two hit the iteration limit")
    if status == kern.UNBOUNDED:
        return LPResult(None, float("inf"), Status.UNBOUNDED, total_iter)

    xw_full = np.where(at_upper.astype(bool), upper, 0.0)
    xw_full[basis] = beta
    xw_full = np.where(np.isfinite(xw_full), xw_full, 0.0)
    x = recover(xw_full[:n])
    x = np.clip(x, lp.lo, lp.hi)
    viol = lp.A @ x - lp.b
    if viol.size and viol.max() > 1e-6 * max(1.0, np.abs(lp.b).max()):
        raise LPError(f"numerical failure: solution violates a row by {viol.max():.3g}")
    return LPResult(x, float(lp.c @ x), Status.OPTIMAL, total_iter)


# -- the Lipschitz discriminator program --------------------------------------

def aggregate_points(points, weights, dist=None):
    """Merge coincident points, summing their weights.

    ``points`` are observation indices; with ``dist`` (a full distance matrix
    over the observation set) distinct indices at distance 0 merge too.
    Returns ``(unique_points, summed_weights)`` ordered by first appearance.
    """
    points = np.asarray(points, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    uniq, first, inv = np.unique(points, return_index=True, return_inverse=True)
    sums = np.bincount(inv, weights=weights, minlength=uniq.size)
    order = np.argsort(first, kind="stable")
    uniq, sums = uniq[order], sums[order]
    if dist is not None and uniq.size > 1:
        d = np.asarray(dist)[np.ix_(uniq, uniq)]
        rep = np.full(uniq.size, -1)
        for i in range(uniq.size):
            if rep[i] < 0:
                rep[(d[i] <= 0.0) & (rep < 0)] = i
                rep[i] = i
        keep = np.flatnonzero(rep == np.arange(uniq.size))
        merged = np.zeros(uniq.size)
        np.add.at(merged, rep, sums)
        uniq, sums = uniq[keep], merged[keep]
    return uniq, sums


def build_lipschitz_lp(weights, dist, L) -> LinearProgram:
    """Program ``max sum_i w_i a_i`` s.t. ``|a_i - a_j| <= L d_ij`` and ``-1 <= a_i <= 1``.

    ``dist`` is the distance matrix among the (already aggregated, distinct)
    points.  Each unordered pair contributes two rows.
    """
    w = np.asarray(weights, dtype=np.float64).ravel()
    d = np.asarray(dist, dtype=np.float64)
    n = w.size
    if d.shape != (n, n):
        raise LPError("distance matrix must match the number of points")
    if L <= 0:
        raise LPError("Lipschitz bound must be positive")
    iu, ju = np.triu_indices(n, k=1)
    if np.any(d[iu, ju] <= 0):
        raise LPError("distinct points at distance 0; aggregate them first")
    npairs = iu.size
    A = np.zeros((2 * npairs, n))
    rows = np.arange(npairs)
    A[2 * rows, iu] = 1.0
    A[2 * rows, ju] = -1.0
    A[2 * rows + 1, iu] = -1.0
    A[2 * rows + 1, ju] = 1.0
    b = np.repeat(L * d[iu, ju], 2)
    return LinearProgram(w, A, b, -np.ones(n), np.ones(n))
