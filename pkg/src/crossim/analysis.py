"""Trial execution, error metrics, rare-element estimation and the exact set-cover check."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .core import ExhaustedError, GroupSample, ParameterError, UsageError
from .learners import RepModel, SimpleModel, predict_queryopt_indices, predict_simple_indices

RELATIVE_BINS = (0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, math.inf)
ABS_EPS_BINS = (0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 38.0, math.inf)
ZERO_TRUTH = 1e-12


# ---------------------------------------------------------------------------
# Trials


@dataclass
class TrialRecord:
    true_sigma: float
    predictions: dict[str, float]
    proxy_dist_x: float
    proxy_dist_y: float
    relative_error_pct: dict[str, float | None]
    abs_error_over_eps: dict[str, float]

    @classmethod
    def build(cls, truth: float, predictions: dict[str, float], dx: float, dy: float, epsilon: float):
        rel = {}
        absn = {}
        for name, p in predictions.items():
            err = abs(p - truth)
            rel[name] = 100.0 * err / truth if truth >= ZERO_TRUTH else None
            absn[name] = err / epsilon
        return cls(truth, dict(predictions), dx, dy, rel, absn)


def _predict(model, g, i, h, j) -> float:
    if isinstance(model, SimpleModel):
        return predict_simple_indices(model, g, i, h, j)
    if isinstance(model, RepModel):
        return predict_queryopt_indices(model, g, i, h, j)
    raise UsageError(f"unsupported model type {type(model).__name__}")


def run_trials(models: dict, truth_oracle, pairs, n_trials: int, epsilon: float) -> list[TrialRecord]:
    """Evaluate every model on ``n_trials`` cross-group pairs.

    ``pairs`` yields ``(x, y)`` elements. All models must be trained on the
    same samples: the nearest-sample proxies are computed once and shared.
    Ground truth comes from ``truth_oracle.true_similarity`` and is not
    billed to any ledger.
    """
    if not models:
        raise UsageError("no models to evaluate")
    ref = next(iter(models.values()))
    records = []
    it = iter(pairs)
    for t in range(n_trials):
        try:
            x, y = next(it)
        except StopIteration:
            raise ExhaustedError(f"pair source exhausted after {t} of {n_trials} trials") from None
        i, dx = ref.proxy(x)
        j, dy = ref.proxy(y)
        preds = {name: _predict(m, x.group, i, y.group, j) for name, m in models.items()}
        truth = truth_oracle.true_similarity(x, y)
        records.append(TrialRecord.build(truth, preds, dx, dy, epsilon))
    return records


def error_bound(learner: str, epsilon: float, rho: float) -> float:
    """Worst-case error when both proxy distances are within ``3 * epsilon``."""
    if learner == "simple":
        return 6.0 * epsilon
    return (4.0 * rho + 6.0) * epsilon


def conditional_violations(records, epsilon: float, rho: float) -> dict:
    """Trials with both proxy distances <= 3 eps whose error exceeds the bound."""
    near = [r for r in records if r.proxy_dist_x <= 3 * epsilon and r.proxy_dist_y <= 3 * epsilon]
    out = {"conditioned_trials": len(near), "violations": {}}
    for name in records[0].predictions if records else ():
        bound = error_bound(name, epsilon, rho)
        out["violations"][name] = sum(1 for r in near if abs(r.predictions[name] - r.true_sigma) > bound)
    return out


# ---------------------------------------------------------------------------
# Summaries


def _histogram(values: np.ndarray, edges) -> list[int]:
    edges = np.asarray(edges, dtype=np.float64)
    idx = np.searchsorted(edges, values, side="right") - 1
    idx = np.clip(idx, 0, len(edges) - 2)
    return np.bincount(idx, minlength=len(edges) - 1).tolist()


def _stats(values: np.ndarray) -> dict:
    if values.size == 0:
        return {"n": 0}
    q = np.percentile(values, [25, 50, 75, 90, 99])
    return {
        "n": int(values.size),
        "mean": float(values.mean()),
        "p25": float(q[0]),
        "median": float(q[1]),
        "p75": float(q[2]),
        "p90": float(q[3]),
        "p99": float(q[4]),
        "max": float(values.max()),
    }


def summarize_errors(records, epsilon: float, relative_bins=RELATIVE_BINS, abs_bins=ABS_EPS_BINS) -> dict:
    """Histograms and quantiles per learner for both error metrics.

    Trials whose true similarity is below ``ZERO_TRUTH`` are left out of the
    relative-error statistics and counted under ``zero_truth``.
    """
    if not records:
        raise UsageError("no records to summarise")
    out = {}
    for name in records[0].predictions:
        rel = np.array([r.relative_error_pct[name] for r in records if r.relative_error_pct[name] is not None])
        absn = np.array([r.abs_error_over_eps[name] for r in records])
        out[name] = {
            "relative_error_pct": {
                "bins": list(relative_bins),
                "counts": _histogram(rel, relative_bins),
                "zero_truth": len(records) - int(rel.size),
                **_stats(rel),
            },
            "abs_error_over_eps": {
                "bins": list(abs_bins),
                "counts": _histogram(absn, abs_bins),
                **_stats(absn),
            },
            "fraction_abs_error_gt_eps": float(np.mean(absn > 1.0)),
        }
    return out


def query_decrease_pct(simple_count: int, queryopt_count: int) -> float:
    if simple_count <= 0:
        raise ParameterError("simple_count must be positive")
    return 100.0 * (simple_count - queryopt_count) / simple_count


# ---------------------------------------------------------------------------
# Rare elements


@dataclass
class RareEstimate:
    """Monte Carlo estimate of the probability of drawing an (eps, delta)-rare element.

    ``q_hat[m]`` is the fraction of ``K`` inner draws within ``epsilon`` of
    outer draw ``m``; an outer draw counts as rare when ``q_hat < delta``.
    The finite ``K`` biases the indicator near the threshold.
    """

    p_hat: float
    M: int
    K: int
    epsilon: float
    delta: float
    q_hat: np.ndarray = field(repr=False)
    rare: np.ndarray = field(repr=False)

    def to_json(self) -> dict:
        return {
            "p_hat": self.p_hat,
            "outer_samples": self.M,
            "inner_samples": self.K,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "rare_count": int(self.rare.sum()),
            "note": "Monte Carlo; indicator q_hat < delta with finite inner samples K",
        }


def default_inner_samples(delta: float) -> int:
    return math.ceil(50.0 / delta)


def estimate_rare_probability(sampler, metric, epsilon: float, delta: float, M: int,
                              K: int | None, rng: np.random.Generator) -> RareEstimate:
    """``sampler.draw(n, rng)`` must return an ``(n, d)`` feature matrix."""
    if M < 1:
        raise ParameterError("M must be >= 1")
    if K is None:
        K = default_inner_samples(delta)
    if K < math.ceil(10.0 / delta):
        raise ParameterError(f"K must be >= ceil(10/delta) = {math.ceil(10.0 / delta)}")
    outer = sampler.draw(M, rng)
    q_hat = np.empty(M)
    for m in range(M):
        inner = sampler.draw(K, rng)
        q_hat[m] = metric.count_within(inner, outer[m][None, :], epsilon)[0] / K
    rare = q_hat < delta
    return RareEstimate(float(rare.mean()), M, K, epsilon, delta, q_hat, rare)


# ---------------------------------------------------------------------------
# Exact set cover


BRUTEFORCE_LIMIT = 20


def _ball_masks(X: np.ndarray, metric, radius: float) -> list[int]:
    masks = []
    for i in range(len(X)):
        near = np.flatnonzero(metric.distances_to(X, X[i]) <= radius)
        masks.append(sum(1 << int(j) for j in near))
    return masks


def bruteforce_set_cover_opt(sample, metric, radius: float) -> int:
    """Smallest number of sample-centred balls of ``radius`` covering the sample.

    Exhaustive over subsets by increasing size; limited to 20 points.
    """
    X = sample.features if isinstance(sample, GroupSample) else np.atleast_2d(np.asarray(sample, dtype=np.float64))
    n = len(X)
    if n > BRUTEFORCE_LIMIT:
        raise UsageError(f"exhaustive cover limited to {BRUTEFORCE_LIMIT} points, got {n}")
    if n == 0:
        return 0
    masks = _ball_masks(X, metric, radius)
    full = (1 << n) - 1
    for k in range(1, n + 1):
        for combo in combinations(masks, k):
            acc = 0
            for m in combo:
                acc |= m
            if acc == full:
                return k
    return n  # unreachable: every point covers itself


def expected_rep_bound(delta: float, p_hat: float, n: int) -> float:
    """Expected-size bound ``1/delta + p * n`` for the representative count."""
    return 1.0 / delta + p_hat * n
