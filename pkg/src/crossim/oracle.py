"""Simulated expert oracles and the across-groups triangle-inequality checks."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .core import (
    Element,
    GroupSample,
    ParameterError,
    QueryLedger,
    ShapeError,
    UsageError,
    WeightedEuclideanMetric,
    canonical_key,
)


def _pair(g: int, h: int) -> tuple[int, int]:
    return (g, h) if g < h else (h, g)


@dataclass(frozen=True, eq=False)
class OracleSpec:
    """Ground-truth weights: one intra-group metric per group, one cross metric per group pair."""

    alpha: tuple[WeightedEuclideanMetric, ...]
    beta: dict[tuple[int, int], WeightedEuclideanMetric]

    def __post_init__(self):
        dims = {m.dim for m in self.alpha} | {m.dim for m in self.beta.values()}
        if len(dims) != 1:
            raise ShapeError(f"all weight vectors must share one dimension, got {sorted(dims)}")
        gamma = len(self.alpha)
        for (g, h), b in self.beta.items():
            if not 0 <= g < h < gamma:
                raise ParameterError(f"bad group pair {(g, h)} for gamma={gamma}")
            cap = np.minimum(self.alpha[g].weights, self.alpha[h].weights)
            if np.any(b.weights > cap):
                raise ParameterError(f"beta exceeds min(alpha) for pair {(g, h)}")
        missing = [p for p in combinations(range(gamma), 2) if p not in self.beta]
        if missing:
            raise ParameterError(f"no beta for group pairs {missing}")

    @property
    def gamma(self) -> int:
        return len(self.alpha)

    @property
    def dim(self) -> int:
        return self.alpha[0].dim

    def beta_for(self, g: int, h: int) -> WeightedEuclideanMetric:
        return self.beta[_pair(g, h)]

    def to_json(self) -> dict:
        return {
            "alpha": [m.weights.tolist() for m in self.alpha],
            "beta": [{"groups": list(k), "weights": v.weights.tolist()} for k, v in sorted(self.beta.items())],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "OracleSpec":
        alpha = tuple(WeightedEuclideanMetric(np.asarray(a, dtype=np.float64)) for a in obj["alpha"])
        beta = {
            tuple(b["groups"]): WeightedEuclideanMetric(np.asarray(b["weights"], dtype=np.float64))
            for b in obj["beta"]
        }
        return cls(alpha, beta)

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def draw_weights(dim: int, gamma: int, rng: np.random.Generator) -> OracleSpec:
    """Alpha i.i.d. uniform on [0, 1]; beta per pair uniform on [0, min(alpha_g, alpha_h)]."""
    if dim < 1:
        raise ParameterError("dim must be >= 1")
    if gamma < 2:
        raise ParameterError("gamma must be >= 2")
    alphas = rng.uniform(0.0, 1.0, size=(gamma, dim))
    beta = {}
    for g, h in combinations(range(gamma), 2):
        cap = np.minimum(alphas[g], alphas[h])
        # u * cap stays inside [0, cap] in floating point, unlike uniform(0, cap)
        beta[(g, h)] = WeightedEuclideanMetric(rng.uniform(0.0, 1.0, size=dim) * cap)
    return OracleSpec(tuple(WeightedEuclideanMetric(a) for a in alphas), beta)


def cross_similarity(beta: WeightedEuclideanMetric, x: Element, y: Element) -> float:
    if x.group == y.group:
        raise UsageError(f"cross similarity needs two groups, both elements are in group {x.group}")
    return beta.distance(x.features, y.features)


class SimulatedOracle:
    """Answers cross-group similarity queries from an ``OracleSpec``, billing each distinct pair once."""

    def __init__(self, spec: OracleSpec, ledger: QueryLedger | None = None):
        self.spec = spec
        self.ledger = ledger if ledger is not None else QueryLedger()

    @property
    def gamma(self) -> int:
        return self.spec.gamma

    def intra_metric(self, g: int):
        return self.spec.alpha[g]

    def true_similarity(self, x: Element, y: Element) -> float:
        """Ground truth, not billed."""
        return cross_similarity(self.spec.beta_for(x.group, y.group), x, y)

    def true_block(self, g: int, Xg: np.ndarray, h: int, Xh: np.ndarray) -> np.ndarray:
        beta = self.spec.beta_for(g, h)
        return np.stack([beta.distances_to(Xh, x) for x in np.atleast_2d(Xg)]) if len(Xg) else np.empty((0, len(Xh)))

    def query(self, x: Element, y: Element) -> float:
        cached = self.ledger.get(x.key, y.key)
        if cached is not None:
            return cached
        value = self.true_similarity(x, y)
        self.ledger.record(x.key, y.key, value)
        return value

    def query_block(self, a: GroupSample, rows, b: GroupSample, cols) -> np.ndarray:
        """Answer every pair in ``rows x cols``; each new pair counts as one query."""
        if a.group == b.group:
            raise UsageError("query_block needs two different groups")
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = self.true_block(a.group, a.features[rows], b.group, b.features[cols])
        self.ledger.record_block(a.group, rows, b.group, cols, values)
        return values


def _hash_uniform(seed: int, i: int, j: int) -> float:
    digest = hashlib.blake2b(f"{i}:{j}".encode(), digest_size=8, key=int(seed).to_bytes(8, "little")).digest()
    return (int.from_bytes(digest, "little") >> 11) * (1.0 / (1 << 53))


class TableOracle:
    """Cross similarities i.i.d. uniform on [0, 1], one per pair of support ids.

    Values come from a keyed hash of ``(seed, i, j)`` so nothing is
    materialised; element identity is the first feature (the support id).
    Intra-group metrics are discrete.
    """

    def __init__(self, seed: int, intra_metrics, ledger: QueryLedger | None = None):
        self.seed = int(seed)
        self._intra = tuple(intra_metrics)
        self.ledger = ledger if ledger is not None else QueryLedger()

    @property
    def gamma(self) -> int:
        return len(self._intra)

    def intra_metric(self, g: int):
        return self._intra[g]

    def _value(self, gx: int, sx: float, gy: int, sy: float) -> float:
        if gx == gy:
            raise UsageError("table oracle answers cross-group pairs only")
        if gx > gy:
            sx, sy = sy, sx
        return _hash_uniform(self.seed, int(sx), int(sy))

    def true_similarity(self, x: Element, y: Element) -> float:
        return self._value(x.group, x.features[0], y.group, y.features[0])

    def true_block(self, g: int, Xg: np.ndarray, h: int, Xh: np.ndarray) -> np.ndarray:
        out = np.empty((len(Xg), len(Xh)))
        for a, xa in enumerate(np.atleast_2d(Xg)):
            for b, xb in enumerate(np.atleast_2d(Xh)):
                out[a, b] = self._value(g, xa[0], h, xb[0])
        return out

    def query(self, x: Element, y: Element) -> float:
        cached = self.ledger.get(x.key, y.key)
        if cached is not None:
            return cached
        value = self.true_similarity(x, y)
        self.ledger.record(x.key, y.key, value)
        return value

    def query_block(self, a: GroupSample, rows, b: GroupSample, cols) -> np.ndarray:
        if a.group == b.group:
            raise UsageError("query_block needs two different groups")
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = self.true_block(a.group, a.features[rows], b.group, b.features[cols])
        self.ledger.record_block(a.group, rows, b.group, cols, values)
        return values


# ---------------------------------------------------------------------------
# Property verification


@dataclass
class ViolationReport:
    checked: int
    m1_violations: int
    m2_violations: int
    worst_slack: float  # max of lhs - rhs over all triples; <= tolerance means none

    @property
    def violations(self) -> int:
        return self.m1_violations + self.m2_violations

    @property
    def ok(self) -> bool:
        return self.violations == 0


def verify_cross_metric_properties(d_ell, d_ellp, sigma, triples, tolerance: float = 1e-9) -> ViolationReport:
    """Check the across-groups triangle inequalities on explicit triples.

    ``sigma(x, y)`` takes x from group l and y from group l'. ``triples`` is
    an iterable of ``(kind, x, y, z)``: for kind ``"m1"`` x, z belong to
    group l and y to group l', checking sigma(x,y) <= d_l(x,z) + sigma(z,y);
    for ``"m2"`` x belongs to l and y, z to l', checking
    sigma(x,y) <= sigma(x,z) + d_l'(z,y).
    """
    m1 = m2 = checked = 0
    worst = -np.inf
    for kind, x, y, z in triples:
        lhs = sigma(x, y)
        if kind == "m1":
            rhs = d_ell(x, z) + sigma(z, y)
        elif kind == "m2":
            rhs = sigma(x, z) + d_ellp(z, y)
        else:
            raise UsageError(f"unknown property {kind!r}")
        slack = lhs - rhs
        worst = max(worst, slack)
        checked += 1
        if slack > tolerance:
            if kind == "m1":
                m1 += 1
            else:
                m2 += 1
    return ViolationReport(checked, m1, m2, float(worst))


def verify_weighted_properties(
    alpha_l: np.ndarray,
    alpha_lp: np.ndarray,
    beta: np.ndarray,
    X: np.ndarray,
    Y: np.ndarray,
    Z1: np.ndarray,
    Z2: np.ndarray,
    tolerance: float = 1e-9,
) -> ViolationReport:
    """Vectorised M1/M2 check for weighted-Euclidean oracles.

    Row ``t`` forms the M1 triple ``(X[t], Y[t], Z1[t])`` (Z1 from group l)
    and the M2 triple ``(X[t], Y[t], Z2[t])`` (Z2 from group l').
    """

    def wd(w, A, B):
        return np.sqrt(((A - B) ** 2) @ np.asarray(w, dtype=np.float64))

    s_xy = wd(beta, X, Y)
    slack1 = s_xy - (wd(alpha_l, X, Z1) + wd(beta, Z1, Y))
    slack2 = s_xy - (wd(beta, X, Z2) + wd(alpha_lp, Z2, Y))
    worst = float(max(slack1.max(initial=-np.inf), slack2.max(initial=-np.inf)))
    return ViolationReport(
        checked=2 * len(X),
        m1_violations=int(np.count_nonzero(slack1 > tolerance)),
        m2_violations=int(np.count_nonzero(slack2 > tolerance)),
        worst_slack=worst,
    )
