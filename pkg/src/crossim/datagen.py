"""Synthetic group distributions and the lower-bound fixtures."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DiscreteMetric, GroupSample, ParameterError
from .oracle import TableOracle


def dyadic_weights(k: int) -> np.ndarray:
    """``(1/2, 1/4, ..., 1/2^(k-1), 1/2^(k-1))``; sums to exactly 1."""
    if k < 1:
        raise ParameterError("k must be >= 1")
    if k == 1:
        return np.ones(1)
    w = 0.5 ** np.arange(1, k, dtype=np.float64)
    return np.append(w, w[-1])


@dataclass(frozen=True, eq=False)
class MixtureSpec:
    means: np.ndarray  # (k, d)
    variances: np.ndarray  # (k, d), diagonal covariances
    mixing_weights: np.ndarray  # (k,)

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        var = np.asarray(self.variances, dtype=np.float64)
        w = np.asarray(self.mixing_weights, dtype=np.float64)
        if means.ndim != 2 or var.shape != means.shape or w.shape != (means.shape[0],):
            raise ParameterError("means/variances must be (k, d) and weights (k,)")
        if np.any(var < 0):
            raise ParameterError("variances must be non-negative")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ParameterError("mixing weights must be non-negative and sum to 1")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", var)
        object.__setattr__(self, "mixing_weights", w)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def k(self) -> int:
        return self.means.shape[0]

    def draw(self, n: int, rng: np.random.Generator, return_components: bool = False):
        # inverse CDF on the mixing weights; the last edge is forced to 1
        cdf = np.cumsum(self.mixing_weights)
        cdf[-1] = 1.0
        comp = np.searchsorted(cdf, rng.random(n), side="right")
        comp = np.minimum(comp, self.k - 1)
        X = self.means[comp] + rng.standard_normal((n, self.dim)) * np.sqrt(self.variances[comp])
        return (X, comp) if return_components else X

    def to_json(self) -> dict:
        return {
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "mixing_weights": self.mixing_weights.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MixtureSpec":
        return cls(np.asarray(obj["means"]), np.asarray(obj["variances"]), np.asarray(obj["mixing_weights"]))


def make_mixture_group(dim: int, k: int, u_var: float, rng: np.random.Generator,
                       mean_range: float = 10.0) -> MixtureSpec:
    """``k`` diagonal Gaussians in ``dim`` dimensions with dyadic mixing weights.

    Means are uniform on ``[0, mean_range]^dim``; each variance is uniform
    on ``[0, u_var]``.
    """
    if not u_var > 0:
        raise ParameterError("u_var must be positive")
    if dim < 1 or k < 1:
        raise ParameterError("dim and k must be >= 1")
    means = rng.uniform(0.0, mean_range, size=(k, dim))
    variances = rng.uniform(0.0, u_var, size=(k, dim))
    return MixtureSpec(means, variances, dyadic_weights(k))


def sample_from_mixture(spec: MixtureSpec, n: int, group_id: int, rng: np.random.Generator) -> GroupSample:
    if n < 1:
        raise ParameterError("n must be >= 1")
    return GroupSample(group_id, spec.draw(n, rng))


@dataclass(frozen=True, eq=False)
class FiniteSupportSpec:
    """Distribution over finitely many feature vectors.

    The support is ``support_size`` points whose first feature is the point's
    id (remaining features zero), so huge supports need no storage.
    Non-uniform supports pass explicit ``probabilities``.
    """

    support_size: int
    dim: int = 1
    probabilities: np.ndarray | None = None  # None means uniform

    def __post_init__(self):
        if self.support_size < 1:
            raise ParameterError("support must be non-empty")
        if self.dim < 1:
            raise ParameterError("dim must be >= 1")
        if self.probabilities is not None:
            p = np.asarray(self.probabilities, dtype=np.float64)
            if p.shape != (self.support_size,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
                raise ParameterError("probabilities must be non-negative, one per point, and sum to 1")
            object.__setattr__(self, "probabilities", p)

    def point(self, i) -> np.ndarray:
        i = np.atleast_1d(np.asarray(i, dtype=np.float64))
        X = np.zeros((i.size, self.dim))
        X[:, 0] = i
        return X

    @property
    def support(self) -> np.ndarray:
        return self.point(np.arange(self.support_size))

    def mass(self, i: int) -> float:
        return 1.0 / self.support_size if self.probabilities is None else float(self.probabilities[i])

    def draw_ids(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.probabilities is None:
            return rng.integers(0, self.support_size, size=n)
        return rng.choice(self.support_size, size=n, p=self.probabilities)

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.point(self.draw_ids(n, rng))


def thm2_instance(support_size: int, dim: int, rng: np.random.Generator):
    """Point-mass group 0 against a huge uniform group 1.

    Every group-1 element is rare for any (epsilon, delta) with
    ``support_size > 1/delta``; cross similarities are independent uniforms.
    Returns ``(group0, group1, oracle)``.
    """
    if support_size < 2:
        raise ParameterError("support_size must be >= 2")
    g0 = FiniteSupportSpec(1, dim)
    g1 = FiniteSupportSpec(int(support_size), dim)
    seed = int(rng.integers(0, 2**63 - 1))
    return g0, g1, TableOracle(seed, (DiscreteMetric(dim), DiscreteMetric(dim)))


def thm4_instance(delta: float, dim: int, rng: np.random.Generator):
    """Two uniform groups of ``1/delta`` points each with discrete metrics."""
    if not 0.0 < delta < 1.0:
        raise ParameterError("delta must lie in (0, 1)")
    m = round(1.0 / delta)
    if m < 2 or not math.isclose(m * delta, 1.0, rel_tol=1e-9):
        raise ParameterError(f"1/delta must be an integer >= 2, got {1.0 / delta}")
    g0 = FiniteSupportSpec(m, dim)
    g1 = FiniteSupportSpec(m, dim)
    seed = int(rng.integers(0, 2**63 - 1))
    return g0, g1, TableOracle(seed, (DiscreteMetric(dim), DiscreteMetric(dim)))
