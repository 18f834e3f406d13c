"""Pure-numpy kernels, bit-identical to the compiled ``_kernels`` module.

Squared terms are accumulated one feature at a time (vectorised over rows)
so the floating-point operation order matches the compiled loops exactly.
"""

from __future__ import annotations

import numpy as np

_CHUNK = 1 << 22  # max elements in one (queries x rows) block


def _sqdist_rows(X: np.ndarray, x: np.ndarray, w: np.ndarray) -> np.ndarray:
    acc = np.zeros(X.shape[0])
    for k in range(w.shape[0]):
        diff = X[:, k] - x[k]
        acc += w[k] * (diff * diff)
    return acc


def _dist_block(X: np.ndarray, Q: np.ndarray, w: np.ndarray) -> np.ndarray:
    acc = np.zeros((Q.shape[0], X.shape[0]))
    for k in range(w.shape[0]):
        diff = Q[:, k][:, None] - X[:, k][None, :]
        acc += w[k] * (diff * diff)
    return np.sqrt(acc)


def distances_to(X, x, w):
    return np.sqrt(_sqdist_rows(X, x, w))


def nearest(X, Q, w):
    m, n = Q.shape[0], X.shape[0]
    idx = np.empty(m, dtype=np.int64)
    dist = np.empty(m)
    step = max(1, _CHUNK // max(n, 1))
    for s in range(0, m, step):
        D = _dist_block(X, Q[s:s + step], w)
        best = np.argmin(D, axis=1)
        idx[s:s + step] = best
        dist[s:s + step] = D[np.arange(D.shape[0]), best]
    return idx, dist


def count_within(X, Q, w, radius):
    m, n = Q.shape[0], X.shape[0]
    counts = np.empty(m, dtype=np.int64)
    step = max(1, _CHUNK // max(n, 1))
    for s in range(0, m, step):
        D = _dist_block(X, Q[s:s + step], w)
        counts[s:s + step] = np.count_nonzero(D <= radius, axis=1)
    return counts


def greedy_representatives(X, w, radius):
    n = X.shape[0]
    assign = np.full(n, -1, dtype=np.int64)
    alive = np.arange(n, dtype=np.int64)
    reps = []
    while alive.size:
        i = int(alive[0])
        ball = np.flatnonzero(distances_to(X, X[i], w) <= radius)
        d_alive = distances_to(X[alive], X[i], w)
        cand = alive[d_alive <= 2.0 * radius]
        hit = np.zeros(cand.size, dtype=bool)
        step = max(1, _CHUNK // max(ball.size, 1))
        for s in range(0, cand.size, step):
            D = _dist_block(X[ball], X[cand[s:s + step]], w)
            hit[s:s + step] = (D <= radius).any(axis=1)
        assign[cand[hit]] = i
        alive = alive[assign[alive] < 0]
        reps.append(i)
    return np.asarray(reps, dtype=np.int64), assign


def greedy_separated(X, w, threshold):
    n = X.shape[0]
    assign = np.full(n, -1, dtype=np.int64)
    alive = np.arange(n, dtype=np.int64)
    reps = []
    while alive.size:
        i = int(alive[0])
        near = distances_to(X[alive], X[i], w) <= threshold
        assign[alive[near]] = i
        alive = alive[~near]
        reps.append(i)
    return np.asarray(reps, dtype=np.int64), assign
