"""Domain types, intra-group metrics, sample budgets and the query ledger."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import kernels


class CrossimError(Exception):
    """Base class for library errors."""


class ParameterError(CrossimError, ValueError):
    """A numeric parameter is outside its admissible range."""


class UsageError(CrossimError, ValueError):
    """An operation was called with inputs violating its contract."""


class ShapeError(CrossimError, ValueError):
    """Feature vectors have mismatched dimensions."""


class ExhaustedError(CrossimError):
    """A finite source ran out of elements."""


# ---------------------------------------------------------------------------
# RNG streams


def _key_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    if isinstance(key, float):
        key = repr(key)
    return zlib.crc32(str(key).encode())


def rng_stream(seed: int, *keys) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``.

    Streams are addressed by name, so the draws a purpose receives do not
    depend on what other streams were consumed first.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed)] + [_key_int(k) for k in keys]))


# ---------------------------------------------------------------------------
# Types


@dataclass(frozen=True, eq=False)
class Element:
    group: int
    index: int
    features: np.ndarray

    def __post_init__(self):
        f = np.ascontiguousarray(self.features, dtype=np.float64)
        if f.ndim != 1:
            raise ShapeError("features must be a 1-D vector")
        object.__setattr__(self, "features", f)

    @property
    def key(self) -> tuple[int, int]:
        return (self.group, self.index)

    def __repr__(self) -> str:
        return f"Element(group={self.group}, index={self.index}, features={self.features.tolist()})"


@dataclass(frozen=True, eq=False)
class WeightedEuclideanMetric:
    """``sqrt(sum_i w_i (x_i - y_i)^2)`` with non-negative weights."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if w.ndim != 1:
            raise ShapeError("weights must be a 1-D vector")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise ParameterError("weights must be finite and non-negative")
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.shape[-1] != self.dim:
            raise ShapeError(f"expected {self.dim} features, got {X.shape[-1]}")
        return X

    def distance(self, a: np.ndarray, b: np.ndarray) -> float:
        a = self._check(a)
        return float(kernels.distances_to(a[None, :], self._check(b), self.weights)[0])

    def distances_to(self, X: np.ndarray, x: np.ndarray) -> np.ndarray:
        return kernels.distances_to(self._check(X), self._check(x), self.weights)

    def nearest(self, X: np.ndarray, Q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        Q = self._check(np.atleast_2d(Q))
        return kernels.nearest(self._check(X), Q, self.weights)

    def count_within(self, X: np.ndarray, Q: np.ndarray, radius: float) -> np.ndarray:
        Q = self._check(np.atleast_2d(Q))
        return kernels.count_within(self._check(X), Q, self.weights, float(radius))

    def greedy_representatives(self, X: np.ndarray, radius: float):
        return kernels.greedy_representatives(self._check(X), self.weights, float(radius))

    def greedy_separated(self, X: np.ndarray, threshold: float):
        return kernels.greedy_separated(self._check(X), self.weights, float(threshold))

    def to_json(self) -> dict:
        return {"kind": "weighted_euclidean", "weights": self.weights.tolist()}


@dataclass(frozen=True)
class DiscreteMetric:
    """0/1 metric: distance 0 between identical feature vectors, 1 otherwise.

    Used by the lower-bound fixtures where the intra-group metric is discrete.
    """

    dim: int = 1

    def _neq(self, X: np.ndarray, x: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.dim or np.shape(x)[-1] != self.dim:
            raise ShapeError(f"expected {self.dim} features")
        return np.any(X != x, axis=-1)

    def distance(self, a, b) -> float:
        return float(self._neq(np.asarray(a)[None, :], np.asarray(b))[0])

    def distances_to(self, X, x) -> np.ndarray:
        return self._neq(X, x).astype(np.float64)

    def nearest(self, X, Q):
        Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
        idx = np.empty(len(Q), dtype=np.int64)
        dist = np.empty(len(Q))
        for j, q in enumerate(Q):
            d = self.distances_to(X, q)
            idx[j] = int(np.argmin(d))
            dist[j] = d[idx[j]]
        return idx, dist

    def count_within(self, X, Q, radius: float) -> np.ndarray:
        Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
        return np.array([np.count_nonzero(self.distances_to(X, q) <= radius) for q in Q], dtype=np.int64)

    def greedy_representatives(self, X, radius: float):
        # With radius < 1 balls are singletons of identical vectors, so the
        # generic greedy rule reduces to grouping duplicates.
        X = np.asarray(X, dtype=np.float64)
        n = len(X)
        assign = np.full(n, -1, dtype=np.int64)
        reps = []
        for i in range(n):
            if assign[i] >= 0:
                continue
            if radius >= 1.0:
                members = np.flatnonzero(assign < 0)
            else:
                members = np.flatnonzero((assign < 0) & ~self._neq(X, X[i]))
            assign[members] = i
            reps.append(i)
        return np.asarray(reps, dtype=np.int64), assign

    def greedy_separated(self, X, threshold: float):
        X = np.asarray(X, dtype=np.float64)
        assign = np.full(len(X), -1, dtype=np.int64)
        reps = []
        for i in range(len(X)):
            if assign[i] >= 0:
                continue
            near = (assign < 0) & (self.distances_to(X, X[i]) <= threshold)
            assign[near] = i
            reps.append(i)
        return np.asarray(reps, dtype=np.int64), assign

    def to_json(self) -> dict:
        return {"kind": "discrete", "dim": self.dim}


def metric_from_json(obj: dict):
    if obj["kind"] == "weighted_euclidean":
        return WeightedEuclideanMetric(np.asarray(obj["weights"], dtype=np.float64))
    if obj["kind"] == "discrete":
        return DiscreteMetric(int(obj["dim"]))
    raise ValueError(f"unknown metric kind {obj['kind']!r}")


@dataclass(frozen=True, eq=False)
class GroupSample:
    """The sampled set of one group, stored as an ``(n, d)`` matrix.

    Row ``i`` is the element with index ``i``; rows keep sampling order and
    duplicates are retained.
    """

    group: int
    features: np.ndarray

    def __post_init__(self):
        F = np.ascontiguousarray(self.features, dtype=np.float64)
        if F.ndim != 2:
            raise ShapeError("sample features must be an (n, d) matrix")
        object.__setattr__(self, "features", F)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __getitem__(self, i: int) -> Element:
        return Element(self.group, int(i), self.features[int(i)])

    def __iter__(self) -> Iterator[Element]:
        return (self[i] for i in range(len(self)))

    @property
    def elements(self) -> list[Element]:
        return list(self)


@dataclass(frozen=True)
class Params:
    epsilon: float
    delta: float
    gamma: int = 2
    rho: float = 8.0

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ParameterError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0.0 < self.delta < 1.0:
            raise ParameterError(f"delta must lie in (0, 1), got {self.delta}")
        if int(self.gamma) != self.gamma or self.gamma < 2:
            raise ParameterError(f"gamma must be an integer >= 2, got {self.gamma}")
        if not self.rho > 0.0:
            raise ParameterError(f"rho must be positive, got {self.rho}")

    @property
    def ball_radius(self) -> float:
        return self.rho * self.epsilon


# ---------------------------------------------------------------------------
# Query ledger


def canonical_key(a: tuple[int, int], b: tuple[int, int]) -> tuple[tuple[int, int], tuple[int, int]]:
    if a[0] == b[0]:
        raise UsageError(f"cross-group pair required, both elements are in group {a[0]}")
    return (a, b) if a[0] < b[0] else (b, a)


class QueryLedger:
    """Cache and counter of distinct cross-group oracle answers.

    Keys are canonical ``((g, i), (h, j))`` with ``g < h``, packed per group
    pair into the integer ``i << 32 | j``. Block answers live in sorted
    numpy arrays (16 bytes per pair); single answers in a small dict.

    Single-writer: callers serialise mutation.
    """

    def __init__(self):
        self._dense: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
        self._sparse: dict[tuple[int, int], dict[int, float]] = {}
        self.count = 0

    @staticmethod
    def _pack(i: int, j: int) -> int:
        return (i << 32) | j

    def _lookup(self, pair: tuple[int, int], key: int) -> float | None:
        v = self._sparse.get(pair, {}).get(key)
        if v is not None:
            return v
        dense = self._dense.get(pair)
        if dense is not None:
            keys, vals = dense
            pos = int(np.searchsorted(keys, key))
            if pos < keys.size and keys[pos] == key:
                return float(vals[pos])
        return None

    def get(self, a: tuple[int, int], b: tuple[int, int]) -> float | None:
        (g, i), (h, j) = canonical_key(a, b)
        return self._lookup((g, h), self._pack(i, j))

    def __contains__(self, pair) -> bool:
        return self.get(*pair) is not None

    def record(self, a: tuple[int, int], b: tuple[int, int], value: float) -> bool:
        """Store ``value`` for the pair; returns True when the key is new."""
        (g, i), (h, j) = canonical_key(a, b)
        key = self._pack(i, j)
        if self._lookup((g, h), key) is not None:
            return False
        self._sparse.setdefault((g, h), {})[key] = float(value)
        self.count += 1
        return True

    def record_block(self, g: int, rows: np.ndarray, h: int, cols: np.ndarray, values: np.ndarray) -> int:
        """Store a full ``rows x cols`` grid of answers; returns the number of new keys."""
        if g == h:
            raise UsageError("cross-group block required")
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if g > h:
            g, h, rows, cols, values = h, g, cols, rows, values.T
        keys = ((rows[:, None] << 32) | cols[None, :]).ravel()
        vals = values.ravel()
        # first occurrence wins within the block, like repeated single records
        keys, first = np.unique(keys, return_index=True)
        vals = vals[first]
        fresh = np.ones(keys.size, dtype=bool)
        sparse = self._sparse.get((g, h))
        if sparse:
            fresh &= ~np.isin(keys, np.fromiter(sparse, dtype=np.int64, count=len(sparse)))
        old = self._dense.get((g, h))
        if old is not None:
            fresh &= ~np.isin(keys, old[0], assume_unique=True)
        keys, vals = keys[fresh], vals[fresh]
        if old is not None:
            keys = np.concatenate([old[0], keys])
            vals = np.concatenate([old[1], vals])
            order = np.argsort(keys, kind="stable")
            keys, vals = keys[order], vals[order]
        added = int(fresh.sum())
        self._dense[(g, h)] = (keys, vals)
        self.count += added
        return added

    def __len__(self) -> int:
        return self.count

    def items(self):
        for (g, h), (keys, vals) in self._dense.items():
            for key, v in zip(keys.tolist(), vals.tolist()):
                yield ((g, key >> 32), (h, key & 0xFFFFFFFF)), v
        for (g, h), block in self._sparse.items():
            for key, v in block.items():
                yield ((g, key >> 32), (h, key & 0xFFFFFFFF)), v

    def count_for(self, g: int, h: int) -> int:
        g, h = min(g, h), max(g, h)
        dense = self._dense.get((g, h))
        return (0 if dense is None else dense[0].size) + len(self._sparse.get((g, h), ()))


# ---------------------------------------------------------------------------
# Operations


def sample_budget(delta: float) -> int:
    """Per-group sample size ``ceil((1/delta) * ln(1/delta^2))``."""
    if not 0.0 < delta < 1.0:
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")
    return max(1, math.ceil((1.0 / delta) * math.log(1.0 / delta**2)))


def intra_distance(metric, x: Element, y: Element) -> float:
    if x.group != y.group:
        raise UsageError(f"intra-group distance needs one group, got {x.group} and {y.group}")
    if x.features.shape != y.features.shape:
        raise ShapeError("feature dimensions differ")
    return metric.distance(x.features, y.features)


def nearest_in_sample(x: Element, sample: GroupSample, metric) -> Element:
    """Closest sampled element to ``x``; ties go to the lowest index."""
    if len(sample) == 0:
        raise UsageError("sample is empty")
    if x.group != sample.group:
        raise UsageError(f"element of group {x.group} looked up in sample of group {sample.group}")
    idx, _ = metric.nearest(sample.features, x.features[None, :])
    return sample[int(idx[0])]
