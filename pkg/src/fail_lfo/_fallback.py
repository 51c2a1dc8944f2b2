"""Pure-numpy implementations of the hot kernels.

Semantics match ``fail_lfo._kernels`` exactly; the selector in
``fail_lfo.kernels`` picks whichever is available.
"""
import numpy as np

NAME = "python"

# simplex status codes shared with the compiled core
OPTIMAL = 0
UNBOUNDED = 1
ITERATION_LIMIT = 2


def sample_rows(cdf, rows, uniforms):
    """Inverse-CDF sampling: for each i return #{k : cdf[rows[i], k] < uniforms[i]}.

    ``cdf`` rows must end at exactly 1.0 and ``uniforms`` lie in (0, 1].
    """
    cdf = np.asarray(cdf, dtype=np.float64)
    rows = np.asarray(rows, dtype=np.int64)
    u = np.asarray(uniforms, dtype=np.float64)
    out = (cdf[rows] < u[:, None]).sum(axis=1)
    np.minimum(out, cdf.shape[1] - 1, out=out)
    return out.astype(np.int64)


def witness_eval(dist, alpha, lipschitz):
    """clip(min_j lipschitz * dist[:, j] + alpha[j], -1, 1) for every query row."""
    dist = np.asarray(dist, dtype=np.float64)
    vals = (lipschitz * dist + np.asarray(alpha, dtype=np.float64)[None, :]).min(axis=1)
    return np.clip(vals, -1.0, 1.0)


def max_pair_ratio(values, dist):
    """max over i != j with dist > 0 of |values_i - values_j| / dist_ij (0 if none)."""
    values = np.asarray(values, dtype=np.float64)
    dist = np.asarray(dist, dtype=np.float64)
    diff = np.abs(values[:, None] - values[None, :])
    mask = dist > 0
    if not mask.any():
        return 0.0
    return float((diff[mask] / dist[mask]).max())


def simplex_iterate(tab, beta, red, basis, at_upper, upper, tol, max_iter):
    """Bounded-variable primal simplex (maximisation) with Bland's rule.

    Arrays are modified in place.  ``tab`` is the (m, n) tableau B^-1 A,
    ``beta`` the basic values, ``red`` the reduced costs, ``basis`` the basic
    column per row, ``at_upper`` flags nonbasic columns sitting at their upper
    bound and ``upper`` holds the bounds (``inf`` allowed; lower bounds are 0).
    Returns ``(status, iterations)``.
    """
    m, n = tab.shape
    is_basic = np.zeros(n, dtype=bool)
    is_basic[basis] = True
    it = 0
    while it < max_iter:
        up = at_upper.astype(bool)
        eligible = ~is_basic & (((~up) & (red > tol) & (upper > 0)) | (up & (red < -tol)))
        cand = np.flatnonzero(eligible)
        if cand.size == 0:
            return OPTIMAL, it
        j = int(cand[0])
        sgn = -1.0 if up[j] else 1.0
        col = tab[:, j] * sgn

        # Bland leaving rule: smallest step, ties (within 1e-12) broken by the
        # smallest variable index; the entering column's own bound flip
        # competes as variable j.
        ub_basic = upper[basis]
        steps = np.full(m, np.inf)
        pos = col > tol
        neg = (col < -tol) & np.isfinite(ub_basic)
        steps[pos] = beta[pos] / col[pos]
        steps[neg] = (ub_basic[neg] - beta[neg]) / (-col[neg])
        np.maximum(steps, 0.0, out=steps)
        best_t = min(steps.min() if m else np.inf, upper[j])
        leave = -1
        leave_to_upper = False
        if best_t < np.inf:
            ties = np.flatnonzero(steps <= best_t + 1e-12)
            if ties.size:
                r = int(ties[np.argmin(basis[ties])])
                if not (upper[j] <= best_t + 1e-12 and j < basis[r]):
                    leave = r
                    leave_to_upper = bool(neg[r])
                    best_t = steps[r]
            if leave < 0:
                best_t = upper[j]
        if best_t == np.inf:
            return UNBOUNDED, it

        beta -= best_t * col
        if leave < 0:
            at_upper[j] = 0 if up[j] else 1
            it += 1
            continue

        old = basis[leave]
        entering_value = upper[j] - best_t if up[j] else best_t
        piv = tab[leave, j]
        tab[leave, :] /= piv
        column = tab[:, j].copy()
        column[leave] = 0.0
        rows = np.flatnonzero(column)
        if rows.size:
            tab[rows] -= np.outer(column[rows], tab[leave, :])
        red -= red[j] * tab[leave, :]
        beta[leave] = entering_value
        basis[leave] = j
        is_basic[j] = True
        is_basic[old] = False
        at_upper[j] = 0
        at_upper[old] = 1 if leave_to_upper else 0
        it += 1
    return ITERATION_LIMIT, it
