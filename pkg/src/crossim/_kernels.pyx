# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled weighted-Euclidean kernels.

Every distance is ``sqrt(sum_k w[k] * (a[k] - b[k])**2)`` accumulated in
feature order, so results are bit-identical to ``_kernels_py``.
"""
import numpy as np

from libc.math cimport sqrt


cdef inline double _dist(const double[:, ::1] X, Py_ssize_t i,
                         const double[:, ::1] Y, Py_ssize_t j,
                         const double[::1] w) noexcept nogil:
    cdef Py_ssize_t k
    cdef double s = 0.0, diff
    for k in range(w.shape[0]):
        diff = X[i, k] - Y[j, k]
        s = s + w[k] * (diff * diff)
    return sqrt(s)


def distances_to(const double[:, ::1] X, const double[::1] x, const double[::1] w):
    cdef Py_ssize_t n = X.shape[0], i, k
    cdef double s, diff
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            s = 0.0
            for k in range(w.shape[0]):
                diff = X[i, k] - x[k]
                s = s + w[k] * (diff * diff)
            o[i] = sqrt(s)
    return out


def nearest(const double[:, ::1] X, const double[:, ::1] Q, const double[::1] w):
    """Index of the nearest row of X for every row of Q (lowest index wins ties)."""
    cdef Py_ssize_t n = X.shape[0], m = Q.shape[0], i, j, best
    cdef double d, bd
    idx = np.empty(m, dtype=np.int64)
    dist = np.empty(m, dtype=np.float64)
    cdef long long[::1] iv = idx
    cdef double[::1] dv = dist
    with nogil:
        for j in range(m):
            best = 0
            bd = _dist(X, 0, Q, j, w)
            for i in range(1, n):
                d = _dist(X, i, Q, j, w)
                if d < bd:
                    bd = d
                    best = i
            iv[j] = best
            dv[j] = bd
    return idx, dist


def count_within(const double[:, ::1] X, const double[:, ::1] Q, const double[::1] w,
                 double radius):
    cdef Py_ssize_t n = X.shape[0], m = Q.shape[0], i, j
    cdef long long c
    counts = np.empty(m, dtype=np.int64)
    cdef long long[::1] cv = counts
    with nogil:
        for j in range(m):
            c = 0
            for i in range(n):
                if _dist(X, i, Q, j, w) <= radius:
                    c += 1
            cv[j] = c
    return counts


def greedy_representatives(const double[:, ::1] X, const double[::1] w, double radius):
    """Greedy ball-intersection cover over the rows of X.

    Returns ``(reps, assign)``: representative row indices in pick order and,
    for every row, the index of the representative it was assigned to.
    """
    cdef Py_ssize_t n = X.shape[0], i, j, t, h_len, pos
    cdef double two_r = 2.0 * radius
    assign = np.full(n, -1, dtype=np.int64)
    cdef long long[::1] av = assign
    cdef long long[::1] alive = np.arange(n, dtype=np.int64)
    cdef long long[::1] ball = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t n_alive = n
    reps = []
    while n_alive > 0:
        with nogil:
            i = alive[0]
            # H_i over the full sample
            h_len = 0
            for j in range(n):
                if _dist(X, i, X, j, w) <= radius:
                    ball[h_len] = j
                    h_len += 1
            # W_i: alive rows whose ball meets H_i; such rows lie within 2r of i
            for t in range(n_alive):
                j = alive[t]
                if _dist(X, i, X, j, w) > two_r:
                    continue
                for pos in range(h_len):
                    if _dist(X, ball[pos], X, j, w) <= radius:
                        av[j] = i
                        break
            # compact the alive list, preserving index order
            pos = 0
            for t in range(n_alive):
                j = alive[t]
                if av[j] < 0:
                    alive[pos] = j
                    pos += 1
            n_alive = pos
        reps.append(i)
    return np.asarray(reps, dtype=np.int64), assign


def greedy_separated(const double[:, ::1] X, const double[::1] w, double threshold):
    """Greedy cover where the pick claims every unassigned row within ``threshold``."""
    cdef Py_ssize_t n = X.shape[0], i, j, t, pos
    assign = np.full(n, -1, dtype=np.int64)
    cdef long long[::1] av = assign
    cdef long long[::1] alive = np.arange(n, dtype=np.int64)
    cdef Py_ssize_t n_alive = n
    reps = []
    while n_alive > 0:
        with nogil:
            i = alive[0]
            pos = 0
            for t in range(n_alive):
                j = alive[t]
                if _dist(X, i, X, j, w) <= threshold:
                    av[j] = i
                else:
                    alive[pos] = j
                    pos += 1
            n_alive = pos
        reps.append(i)
    return np.asarray(reps, dtype=np.int64), assign
