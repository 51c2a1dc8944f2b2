# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``fail_lfo._fallback`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, fabs

cnp.import_array()

NAME = "cython"

OPTIMAL = 0
UNBOUNDED = 1
ITERATION_LIMIT = 2


def sample_rows(cdf, rows, uniforms):
    cdef double[:, ::1] c = np.ascontiguousarray(cdf, dtype=np.float64)
    cdef long long[::1] r = np.ascontiguousarray(rows, dtype=np.int64)
    cdef double[::1] u = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef Py_ssize_t n = r.shape[0]
    cdef Py_ssize_t width = c.shape[1]
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] o = out
    cdef Py_ssize_t i, lo, hi, mid
    cdef double ui
    cdef long long row
    for i in range(n):
        row = r[i]
        ui = u[i]
        # count of entries strictly below ui (rows are nondecreasing)
        lo = 0
        hi = width
        while lo < hi:
            mid = (lo + hi) >> 1
            if c[row, mid] < ui:
                lo = mid + 1
            else:
                hi = mid
        if lo > width - 1:
            lo = width - 1
        o[i] = lo
    return out


def witness_eval(dist, alpha, double lipschitz):
    cdef double[:, ::1] d = np.ascontiguousarray(dist, dtype=np.float64)
    cdef double[::1] a = np.ascontiguousarray(alpha, dtype=np.float64)
    cdef Py_ssize_t q = d.shape[0]
    cdef Py_ssize_t p = d.shape[1]
    out = np.empty(q, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i, j
    cdef double best, v
    for i in range(q):
        best = INFINITY
        for j in range(p):
            v = lipschitz * d[i, j] + a[j]
            if v < best:
                best = v
        if best > 1.0:
            best = 1.0
        elif best < -1.0:
            best = -1.0
        o[i] = best
    return out


def max_pair_ratio(values, dist):
    cdef double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef double[:, ::1] d = np.ascontiguousarray(dist, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t i, j
    cdef double best = 0.0
    cdef double ratio
    for i in range(n):
        for j in range(n):
            if d[i, j] > 0.0:
                ratio = fabs(v[i] - v[j]) / d[i, j]
                if ratio > best:
                    best = ratio
    return best


def simplex_iterate(cnp.ndarray tab_arr, cnp.ndarray beta_arr, cnp.ndarray red_arr,
                    cnp.ndarray basis_arr, cnp.ndarray at_upper_arr, cnp.ndarray upper_arr,
                    double tol, long long max_iter):
    cdef double[:, ::1] tab = tab_arr
    cdef double[::1] beta = beta_arr
    cdef double[::1] red = red_arr
    cdef long long[::1] basis = basis_arr
    cdef signed char[::1] at_upper = at_upper_arr
    cdef double[::1] upper = upper_arr
    cdef Py_ssize_t m = tab.shape[0]
    cdef Py_ssize_t n = tab.shape[1]
    cdef Py_ssize_t i, k, j, leave, r
    cdef long long it = 0
    cdef long long old
    cdef double sgn, a, t, best_t, ub, piv, factor, entering_value, rj
    cdef bint leave_to_upper, flip_wins
    cdef double[::1] col = np.empty(m, dtype=np.float64)
    cdef double[::1] steps = np.empty(m, dtype=np.float64)
    cdef signed char[::1] step_to_upper = np.zeros(m, dtype=np.int8)
    cdef signed char[::1] is_basic = np.zeros(n, dtype=np.int8)
    for i in range(m):
        is_basic[basis[i]] = 1

    while it < max_iter:
        j = -1
        for k in range(n):
            if is_basic[k]:
                continue
            if at_upper[k]:
                if red[k] < -tol:
                    j = k
                    break
            elif red[k] > tol and upper[k] > 0.0:
                j = k
                break
        if j < 0:
            return OPTIMAL, it
        sgn = -1.0 if at_upper[j] else 1.0

        best_t = upper[j]
        for i in range(m):
            a = tab[i, j] * sgn
            col[i] = a
            step_to_upper[i] = 0
            if a > tol:
                t = beta[i] / a
            elif a < -tol:
                ub = upper[basis[i]]
                if ub == INFINITY:
                    steps[i] = INFINITY
                    continue
                t = (ub - beta[i]) / (-a)
                step_to_upper[i] = 1
            else:
                steps[i] = INFINITY
                continue
            if t < 0.0:
                t = 0.0
            steps[i] = t
            if t < best_t:
                best_t = t

        leave = -1
        leave_to_upper = False
        if best_t < INFINITY:
            r = -1
            for i in range(m):
                if steps[i] <= best_t + 1e-12:
                    if r < 0 or basis[i] < basis[r]:
                        r = i
            if r >= 0:
                flip_wins = upper[j] <= best_t + 1e-12 and j < basis[r]
                if not flip_wins:
                    leave = r
                    leave_to_upper = step_to_upper[r]
                    best_t = steps[r]
            if leave < 0:
                best_t = upper[j]
        if best_t == INFINITY:
            return UNBOUNDED, it

        for i in range(m):
            beta[i] -= best_t * col[i]
        if leave < 0:
            at_upper[j] = 0 if at_upper[j] else 1
            it += 1
            continue

        old = basis[leave]
        entering_value = upper[j] - best_t if at_upper[j] else best_t
        piv = tab[leave, j]
        for k in range(n):
            tab[leave, k] /= piv
        for i in range(m):
            if i == leave:
                continue
            factor = tab[i, j]
            if factor != 0.0:
                for k in range(n):
                    tab[i, k] -= factor * tab[leave, k]
        rj = red[j]
        if rj != 0.0:
            for k in range(n):
                red[k] -= rj * tab[leave, k]
        beta[leave] = entering_value
        basis[leave] = j
        is_basic[j] = 1
        is_basic[old] = 0
        at_upper[j] = 0
        at_upper[old] = 1 if leave_to_upper else 0
        it += 1
    return ITERATION_LIMIT, it
