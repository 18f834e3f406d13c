"""Simple-Alg and the representative-based query-optimised learner."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .core import (
    CrossimError,
    Element,
    GroupSample,
    Params,
    ParameterError,
    UsageError,
    metric_from_json,
)

EAGER = "eager"
LAZY = "lazy"


class ConsistencyError(CrossimError):
    """A trained model is missing data its invariants guarantee."""


def _check_samples(samples) -> list[GroupSample]:
    samples = list(samples)
    if len(samples) < 2:
        raise UsageError("need samples from at least two groups")
    for g, s in enumerate(samples):
        if s.group != g:
            raise UsageError(f"samples must be ordered by group id; position {g} holds group {s.group}")
        if len(s) == 0:
            raise UsageError(f"group {g} sample is empty")
    if len({s.dim for s in samples}) != 1:
        raise UsageError("all group samples must share one feature dimension")
    return samples


def eager_query_count(sizes) -> int:
    """Distinct unordered cross pairs over groups of the given sizes."""
    return sum(a * b for a, b in combinations(list(sizes), 2))


def ordered_query_count(sizes) -> int:
    """The ordered-pair convention: every cross pair counted once per direction."""
    return 2 * eager_query_count(sizes)


# ---------------------------------------------------------------------------
# Simple-Alg


@dataclass(eq=False)
class SimpleModel:
    samples: list[GroupSample]
    metrics: list
    mode: str
    oracle: object = None
    sigma_table: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    @property
    def gamma(self) -> int:
        return len(self.samples)

    @property
    def eager_count(self) -> int:
        return eager_query_count(len(s) for s in self.samples)

    def proxy(self, x: Element) -> tuple[int, float]:
        """Index of the nearest sampled element and its distance."""
        if not 0 <= x.group < self.gamma:
            raise UsageError(f"unknown group {x.group}")
        idx, dist = self.metrics[x.group].nearest(self.samples[x.group].features, x.features[None, :])
        return int(idx[0]), float(dist[0])

    def to_json(self) -> dict:
        if self.mode != EAGER:
            raise UsageError("only eager models carry a full table to serialise")
        return {
            "kind": "simple",
            "mode": self.mode,
            "samples": [s.features.tolist() for s in self.samples],
            "metrics": [m.to_json() for m in self.metrics],
            "sigma_table": [
                {"groups": [g, h], "values": t.tolist()} for (g, h), t in sorted(self.sigma_table.items())
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SimpleModel":
        samples = [GroupSample(g, np.asarray(f, dtype=np.float64)) for g, f in enumerate(obj["samples"])]
        metrics = [metric_from_json(m) for m in obj["metrics"]]
        table = {tuple(t["groups"]): np.asarray(t["values"], dtype=np.float64) for t in obj["sigma_table"]}
        return cls(samples, metrics, obj["mode"], None, table)


def train_simple(samples, oracle, mode: str = EAGER) -> SimpleModel:
    """Query every cross pair of sampled elements (eager) or defer to prediction time (lazy)."""
    samples = _check_samples(samples)
    if mode not in (EAGER, LAZY):
        raise ParameterError(f"mode must be {EAGER!r} or {LAZY!r}")
    metrics = [oracle.intra_metric(s.group) for s in samples]
    table = {}
    if mode == EAGER:
        for a, b in combinations(samples, 2):
            table[(a.group, b.group)] = oracle.query_block(a, np.arange(len(a)), b, np.arange(len(b)))
    return SimpleModel(samples, metrics, mode, oracle, table)


def predict_simple_indices(model: SimpleModel, g: int, i: int, h: int, j: int) -> float:
    """Prediction from proxy indices ``i`` (group g) and ``j`` (group h)."""
    if g == h:
        raise UsageError("prediction needs two different groups")
    if model.mode == EAGER:
        if g < h:
            return float(model.sigma_table[(g, h)][i, j])
        return float(model.sigma_table[(h, g)][j, i])
    return model.oracle.query(model.samples[g][i], model.samples[h][j])


def predict_simple(model: SimpleModel, x: Element, y: Element) -> float:
    i, _ = model.proxy(x)
    j, _ = model.proxy(y)
    return predict_simple_indices(model, x.group, i, y.group, j)


# ---------------------------------------------------------------------------
# Query-optimised learner


OVERLAP_SAMPLE = "sample"
OVERLAP_SPACE = "space"


def select_representatives(sample: GroupSample, metric, epsilon: float, rho: float = 8.0,
                           overlap: str = OVERLAP_SAMPLE):
    """Greedy representative selection over one group's sample.

    Each element ``x`` gets the ball ``H_x`` of samples within ``rho *
    epsilon``. The lowest-index unassigned element becomes a representative
    and claims every unassigned element whose ball meets its own.

    ``overlap="sample"`` tests ball intersection on the sampled points, i.e.
    some sample lies within ``rho * epsilon`` of both centres. With
    ``overlap="space"`` the balls are taken in the feature space, where two
    balls of radius ``rho * epsilon`` meet iff their centres lie within
    ``2 * rho * epsilon``; this claims more elements per pick.

    Returns ``(reps, assign)``: representative indices in pick order and an
    array mapping every sample index to its representative's index.
    """
    if not epsilon > 0:
        raise ParameterError("epsilon must be positive")
    if not rho > 0:
        raise ParameterError("rho must be positive")
    if len(sample) == 0:
        raise UsageError("sample is empty")
    if overlap == OVERLAP_SAMPLE:
        return metric.greedy_representatives(sample.features, rho * epsilon)
    if overlap == OVERLAP_SPACE:
        return metric.greedy_separated(sample.features, 2.0 * rho * epsilon)
    raise ParameterError(f"overlap must be {OVERLAP_SAMPLE!r} or {OVERLAP_SPACE!r}, got {overlap!r}")


@dataclass(eq=False)
class RepModel:
    samples: list[GroupSample]
    metrics: list
    representatives: list[np.ndarray]
    assignment: list[np.ndarray]
    sigma_table: dict[tuple[int, int], np.ndarray]
    params: Params
    overlap: str = OVERLAP_SAMPLE
    mode: str = EAGER  # lazy: representative pairs are queried at prediction time
    oracle: object = None
    _positions: dict = field(default_factory=dict, init=False, repr=False)

    @property
    def gamma(self) -> int:
        return len(self.samples)

    @property
    def query_count(self) -> int:
        """Distinct representative pairs, i.e. the queries an eager model makes."""
        return eager_query_count(len(r) for r in self.representatives)

    def rep_position(self, g: int) -> np.ndarray:
        """Map sample index -> row of its representative in the sigma table (-1 if missing)."""
        if g not in self._positions:
            pos = np.full(len(self.samples[g]), -1, dtype=np.int64)
            pos[self.representatives[g]] = np.arange(len(self.representatives[g]))
            self._positions[g] = pos[self.assignment[g]]
        return self._positions[g]

    def proxy(self, x: Element) -> tuple[int, float]:
        if not 0 <= x.group < self.gamma:
            raise UsageError(f"unknown group {x.group}")
        idx, dist = self.metrics[x.group].nearest(self.samples[x.group].features, x.features[None, :])
        return int(idx[0]), float(dist[0])

    def to_json(self) -> dict:
        if self.mode != EAGER:
            raise UsageError("only eager models carry a full table to serialise")
        return {
            "kind": "queryopt",
            "params": {
                "epsilon": self.params.epsilon,
                "delta": self.params.delta,
                "gamma": self.params.gamma,
                "rho": self.params.rho,
            },
            "overlap": self.overlap,
            "samples": [s.features.tolist() for s in self.samples],
            "metrics": [m.to_json() for m in self.metrics],
            "representatives": [r.tolist() for r in self.representatives],
            "assignment": [a.tolist() for a in self.assignment],
            "sigma_table": [
                {"groups": [g, h], "values": t.tolist()} for (g, h), t in sorted(self.sigma_table.items())
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RepModel":
        return cls(
            samples=[GroupSample(g, np.asarray(f, dtype=np.float64)) for g, f in enumerate(obj["samples"])],
            metrics=[metric_from_json(m) for m in obj["metrics"]],
            representatives=[np.asarray(r, dtype=np.int64) for r in obj["representatives"]],
            assignment=[np.asarray(a, dtype=np.int64) for a in obj["assignment"]],
            sigma_table={
                tuple(t["groups"]): np.asarray(t["values"], dtype=np.float64).reshape(
                    len(obj["representatives"][t["groups"][0]]), len(obj["representatives"][t["groups"][1]])
                )
                for t in obj["sigma_table"]
            },
            params=Params(**obj["params"]),
            overlap=obj.get("overlap", OVERLAP_SAMPLE),
        )


def train_queryopt(samples, oracle, params: Params, overlap: str = OVERLAP_SAMPLE,
                   materialize_limit: int | None = None) -> RepModel:
    """Select representatives per group and query every cross pair of them.

    When the number of representative pairs exceeds ``materialize_limit``
    the model is built lazily: no queries at training time, each distinct
    pair is queried (once) when a prediction first needs it.
    """
    samples = _check_samples(samples)
    metrics = [oracle.intra_metric(s.group) for s in samples]
    reps, assign = [], []
    for s, m in zip(samples, metrics):
        r, a = select_representatives(s, m, params.epsilon, params.rho, overlap)
        reps.append(r)
        assign.append(a)
    mode = EAGER
    if materialize_limit is not None and eager_query_count(len(r) for r in reps) > materialize_limit:
        mode = LAZY
    table = {}
    if mode == EAGER:
        for a, b in combinations(samples, 2):
            table[(a.group, b.group)] = oracle.query_block(a, reps[a.group], b, reps[b.group])
    return RepModel(samples, metrics, reps, assign, table, params, overlap, mode, oracle)


def predict_queryopt_indices(model: RepModel, g: int, i: int, h: int, j: int) -> float:
    """Prediction from sample proxy indices; never queries the oracle."""
    if g == h:
        raise UsageError("prediction needs two different groups")
    pi = int(model.rep_position(g)[i])
    pj = int(model.rep_position(h)[j])
    if pi < 0 or pj < 0:
        raise ConsistencyError(f"representative of ({g},{i}) or ({h},{j}) is not in the representative set")
    if model.mode == LAZY:
        ri, rj = int(model.assignment[g][i]), int(model.assignment[h][j])
        return model.oracle.query(model.samples[g][ri], model.samples[h][rj])
    key = (g, h) if g < h else (h, g)
    table = model.sigma_table.get(key)
    if table is None:
        raise ConsistencyError(f"no sigma table for groups {key}")
    return float(table[pi, pj] if g < h else table[pj, pi])


def predict_queryopt(model: RepModel, x: Element, y: Element) -> float:
    i, _ = model.proxy(x)
    j, _ = model.proxy(y)
    return predict_queryopt_indices(model, x.group, i, y.group, j)


def dumps_model(model) -> str:
    return json.dumps(model.to_json())


def loads_model(text: str):
    obj = json.loads(text)
    if obj["kind"] == "simple":
        return SimpleModel.from_json(obj)
    if obj["kind"] == "queryopt":
        return RepModel.from_json(obj)
    raise ValueError(f"unknown model kind {obj['kind']!r}")


def check_rep_invariants(model: RepModel, tolerance: float = 1e-9) -> dict:
    """Count violations of the representative-set invariants per group.

    Separation (no two representatives within ``rho * eps``) is checked
    exactly; the assignment radius ``2 * rho * eps`` gets ``tolerance``.
    """
    radius = model.params.rho * model.params.epsilon
    report = {"separation": [], "assignment_radius": [], "not_self_assigned": [], "table_shape_ok": True}
    for g in range(model.gamma):
        X = model.samples[g].features
        reps = model.representatives[g]
        metric = model.metrics[g]
        within = metric.count_within(X[reps], X[reps], radius)
        report["separation"].append(int(np.count_nonzero(within > 1)))
        d = _assigned_distances(metric, X, model.assignment[g])
        report["assignment_radius"].append(int(np.count_nonzero(d > 2 * radius + tolerance)))
        report["not_self_assigned"].append(int(np.count_nonzero(model.assignment[g][reps] != reps)))
    if model.mode == EAGER:
        for g, h in combinations(range(model.gamma), 2):
            t = model.sigma_table.get((g, h))
            if t is None or t.shape != (len(model.representatives[g]), len(model.representatives[h])):
                report["table_shape_ok"] = False
    report["ok"] = (
        report["table_shape_ok"]
        and not any(report["separation"])
        and not any(report["assignment_radius"])
        and not any(report["not_self_assigned"])
    )
    return report


def _assigned_distances(metric, X: np.ndarray, assign: np.ndarray) -> np.ndarray:
    out = np.empty(len(X))
    for r in np.unique(assign):
        rows = np.flatnonzero(assign == r)
        out[rows] = metric.distances_to(X[rows], X[r])
    return out
