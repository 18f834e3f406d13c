"""Property suites run by ``crossim verify``.

Each suite returns a :class:`SuiteResult`; hard suites fail the command,
soft suites only report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import analysis, datagen
from .core import DiscreteMetric, Element, GroupSample, Params, WeightedEuclideanMetric, rng_stream, sample_budget
from .learners import check_rep_invariants, select_representatives, train_queryopt, train_simple
from .oracle import SimulatedOracle, draw_weights, verify_weighted_properties


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str
    soft: bool = False
    data: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------


def suite_cross_metric(seed: int, n_triples: int = 100_000, dim: int = 20, tol: float = 1e-9) -> SuiteResult:
    rng = rng_stream(seed, "verify", "m1m2")
    spec = draw_weights(dim, 2, rng)
    X, Y, Z1, Z2 = (rng.uniform(-10, 10, size=(n_triples, dim)) for _ in range(4))
    rep = verify_weighted_properties(
        spec.alpha[0].weights, spec.alpha[1].weights, spec.beta_for(0, 1).weights, X, Y, Z1, Z2, tol
    )
    return SuiteResult(
        "M1/M2 on sampled oracle", rep.ok,
        f"{rep.checked} checks, {rep.violations} violations, worst slack {rep.worst_slack:.3g}",
    )


def suite_counterexample() -> SuiteResult:
    """A cross metric with beta above the intra weights must be caught."""
    alpha = np.array([1.0])
    beta = np.array([4.0])
    X = np.array([[0.0]])
    Y = np.array([[1.0]])
    Z1 = np.array([[1.0]])  # same group as x
    Z2 = np.array([[0.0]])  # same group as y
    rep = verify_weighted_properties(alpha, alpha, beta, X, Y, Z1, Z2, 1e-9)
    return SuiteResult("violating beta is detected", rep.violations > 0, f"{rep.violations} violations flagged")


def _random_small_instance(rng):
    n = int(rng.integers(1, 13))
    dim = int(rng.integers(1, 3))
    X = rng.uniform(0, 1, size=(n, dim))
    w = rng.uniform(0.05, 1.0, size=dim)
    radius = float(rng.uniform(0.02, 0.6))
    return GroupSample(0, X), WeightedEuclideanMetric(w), radius


def suite_cover_opt(seed: int, n_instances: int = 250) -> SuiteResult:
    """|R| from the greedy never exceeds the optimal cover with radius rho*eps/2."""
    rng = rng_stream(seed, "verify", "cover-opt")
    bad = 0
    for _ in range(n_instances):
        sample, metric, radius = _random_small_instance(rng)
        eps, rho = radius / 8.0, 8.0
        reps, _ = select_representatives(sample, metric, eps, rho)
        opt = analysis.bruteforce_set_cover_opt(sample, metric, rho * eps / 2.0)
        bad += len(reps) > opt
    return SuiteResult("greedy size vs optimal cover", bad == 0, f"{n_instances} instances, {bad} failures")


def suite_rep_invariants(seed: int, n_instances: int = 200) -> SuiteResult:
    rng = rng_stream(seed, "verify", "reps")
    bad = 0
    for t in range(n_instances):
        dim = int(rng.integers(1, 4))
        n = int(rng.integers(2, 80))
        spec = draw_weights(dim, 2, rng)
        samples = [GroupSample(g, rng.uniform(0, 1, size=(n, dim))) for g in range(2)]
        params = Params(float(rng.uniform(0.005, 0.05)), 0.1, 2, float(rng.uniform(1, 12)))
        for overlap in ("sample", "space"):
            oracle = SimulatedOracle(spec)
            model = train_queryopt(samples, oracle, params, overlap)
            bad += not check_rep_invariants(model)["ok"]
            bad += oracle.ledger.count != model.query_count
    return SuiteResult("representative invariants", bad == 0, f"{2 * n_instances} models, {bad} failures")


def suite_conditional_accuracy(seed: int, delta: float = 0.01, n_trials: int = 1000, epsilon: float = 0.1,
                               rho: float = 12.0, u_var: float = 2.0, dim: int = 20, k: int = 16,
                               name: str = "conditional accuracy bounds") -> SuiteResult:
    """Both learners stay within their error bounds whenever both proxies lie within 3 eps."""
    spec = draw_weights(dim, 2, rng_stream(seed, "verify", "acc", "w"))
    mix = [datagen.make_mixture_group(dim, k, u_var, rng_stream(seed, "verify", "acc", "m", g)) for g in range(2)]
    n = sample_budget(delta)
    samples = [datagen.sample_from_mixture(mix[g], n, g, rng_stream(seed, "verify", "acc", "s", g)) for g in range(2)]
    simple = train_simple(samples, SimulatedOracle(spec))
    qopt = train_queryopt(samples, SimulatedOracle(spec), Params(epsilon, delta, 2, rho))
    rng = rng_stream(seed, "verify", "acc", "t")
    X, Y = mix[0].draw(n_trials, rng), mix[1].draw(n_trials, rng)
    pairs = ((Element(0, t, X[t]), Element(1, t, Y[t])) for t in range(n_trials))
    records = analysis.run_trials({"simple": simple, "queryopt": qopt}, SimulatedOracle(spec), pairs, n_trials, epsilon)
    cond = analysis.conditional_violations(records, epsilon, rho)
    total = sum(cond["violations"].values())
    return SuiteResult(
        name, total == 0,
        f"{cond['conditioned_trials']} conditioned trials, violations {cond['violations']}",
        data=cond,
    )


def suite_query_dominance(seed: int, n_instances: int = 50) -> SuiteResult:
    rng = rng_stream(seed, "verify", "dominance")
    bad = 0
    for _ in range(n_instances):
        dim = int(rng.integers(1, 5))
        spec = draw_weights(dim, 2, rng)
        samples = [GroupSample(g, rng.normal(size=(int(rng.integers(1, 60)), dim))) for g in range(2)]
        so, qo = SimulatedOracle(spec), SimulatedOracle(spec)
        train_simple(samples, so)
        train_queryopt(samples, qo, Params(float(rng.uniform(0.01, 1)), 0.1, 2, 8.0))
        bad += qo.ledger.count > so.ledger.count
    return SuiteResult("query dominance", bad == 0, f"{n_instances} instances, {bad} with more queries")


def suite_thm2(seed: int, support_size: int = 10**6, n: int = 100, n_trials: int = 1000,
               epsilon: float = 0.1, threshold: float = 0.70) -> SuiteResult:
    g0, g1, oracle = datagen.thm2_instance(support_size, 1, rng_stream(seed, "verify", "thm2"))
    rng = rng_stream(seed, "verify", "thm2", "draws")
    samples = [GroupSample(0, g0.draw(n, rng)), GroupSample(1, g1.draw(n, rng))]
    model = train_simple(samples, oracle)
    X, Y = g0.draw(n_trials, rng), g1.draw(n_trials, rng)
    pairs = ((Element(0, t, X[t]), Element(1, t, Y[t])) for t in range(n_trials))
    records = analysis.run_trials({"simple": model}, oracle, pairs, n_trials, epsilon)
    frac = float(np.mean([abs(r.predictions["simple"] - r.true_sigma) > epsilon for r in records]))
    band = 1.0 - (2 * epsilon - epsilon**2)
    return SuiteResult(
        "thm2 no-free-lunch", frac >= threshold,
        f"Pr[|f-sigma| > {epsilon:g}] = {frac:.3f} (uniform-guess band {band:.3f}, threshold {threshold:.2f})",
        data={"fraction": frac, "band": band},
    )


def suite_thm4(seed: int, delta: float = 0.1, n_trials: int = 1000, epsilon: float = 0.1) -> SuiteResult:
    """With N samples from 1/delta support points, unseen pairs get uninformed predictions."""
    g0, g1, oracle = datagen.thm4_instance(delta, 1, rng_stream(seed, "verify", "thm4"))
    rng = rng_stream(seed, "verify", "thm4", "draws")
    m = g0.support_size
    n = max(1, m // 2)
    samples = [GroupSample(0, g0.draw(n, rng)), GroupSample(1, g1.draw(n, rng))]
    model = train_simple(samples, oracle)
    X, Y = g0.draw(n_trials, rng), g1.draw(n_trials, rng)
    seen0 = set(samples[0].features[:, 0].astype(int).tolist())
    seen1 = set(samples[1].features[:, 0].astype(int).tolist())
    pairs = ((Element(0, t, X[t]), Element(1, t, Y[t])) for t in range(n_trials))
    records = analysis.run_trials({"simple": model}, oracle, pairs, n_trials, epsilon)
    unseen = [r for t, r in enumerate(records) if int(X[t, 0]) not in seen0 or int(Y[t, 0]) not in seen1]
    seen = [r for t, r in enumerate(records) if int(X[t, 0]) in seen0 and int(Y[t, 0]) in seen1]
    exact_on_seen = all(r.predictions["simple"] == r.true_sigma for r in seen)
    frac = float(np.mean([abs(r.predictions["simple"] - r.true_sigma) > epsilon for r in unseen])) if unseen else 0.0
    ok = exact_on_seen and bool(unseen) and frac >= 0.6
    return SuiteResult(
        "thm4 lower-bound fixture", ok,
        f"support {m}, {len(seen)} seen pairs exact={exact_on_seen}, "
        f"Pr[err > eps | unseen] = {frac:.3f} over {len(unseen)} trials",
    )


def suite_rare_exact(seed: int, K: int = 10_000, M: int = 200) -> SuiteResult:
    eps, delta = 0.1, 0.1
    rng = rng_stream(seed, "verify", "rare")
    metric1 = WeightedEuclideanMetric(np.ones(1))
    point = datagen.FiniteSupportSpec(1, 1)
    p_point = analysis.estimate_rare_probability(point, metric1, eps, delta, M, K, rng).p_hat
    g0, g1, _ = datagen.thm2_instance(10**6, 1, rng)
    p_thm2 = analysis.estimate_rare_probability(g1, DiscreteMetric(1), eps, delta, M, K, rng).p_hat
    two = datagen.FiniteSupportSpec(2, 1)  # mass 0.5 each, far apart under the 0/1 metric
    p_two = analysis.estimate_rare_probability(two, DiscreteMetric(1), eps, 0.4, M, K, rng).p_hat
    ok = p_point == 0.0 and p_thm2 == 1.0 and p_two == 0.0
    return SuiteResult(
        "rare estimator analytic cases", ok,
        f"point mass {p_point:g} (want 0), thm2 group 2 {p_thm2:g} (want 1), two-point {p_two:g} (want 0)",
    )


def suite_rep_size(seed: int, delta: float = 0.01, epsilon: float = 0.1, rho: float = 8.0,
                 u_var: float = 0.5, dim: int = 2, k: int = 4, outer: int = 200) -> SuiteResult:
    """Soft check of the expected representative count against 1/delta + p*N."""
    mix = datagen.make_mixture_group(dim, k, u_var, rng_stream(seed, "verify", "l2", "m"))
    n = sample_budget(delta)
    sample = datagen.sample_from_mixture(mix, n, 0, rng_stream(seed, "verify", "l2", "s"))
    metric = WeightedEuclideanMetric(np.full(dim, 0.5))
    reps, _ = select_representatives(sample, metric, epsilon, rho)
    est = analysis.estimate_rare_probability(mix, metric, epsilon, delta, outer, None,
                                             rng_stream(seed, "verify", "l2", "r"))
    bound = analysis.expected_rep_bound(delta, est.p_hat, n)
    slack = 3.0 * math.sqrt(max(est.p_hat * (1 - est.p_hat), 1.0 / outer) / outer) * n
    return SuiteResult(
        "expected representative count (report)", len(reps) <= bound + slack,
        f"|R| = {len(reps)}, 1/delta + p_hat*N = {bound:.1f} (+{slack:.1f} MC slack), p_hat = {est.p_hat:.3f}",
        soft=True,
    )


SUITES = (
    ("m1m2", lambda s: suite_cross_metric(s)),
    ("counterexample", lambda s: suite_counterexample()),
    ("cover-opt", lambda s: suite_cover_opt(s)),
    ("reps", lambda s: suite_rep_invariants(s)),
    ("accuracy", lambda s: suite_conditional_accuracy(s)),
    # In 20 dimensions proxies are rarely within 3 eps; this setting exercises the bounds densely.
    ("accuracy-dense", lambda s: suite_conditional_accuracy(s, u_var=0.01, dim=2, k=4, rho=2.0,
                                                            name="conditional accuracy (dense, 2-D)")),
    ("dominance", lambda s: suite_query_dominance(s)),
    ("thm2", lambda s: suite_thm2(s)),
    ("thm4", lambda s: suite_thm4(s)),
    ("rare", lambda s: suite_rare_exact(s)),
    ("rep-size", lambda s: suite_rep_size(s)),
)


def run_suites(seed: int = 0, only=None) -> list[SuiteResult]:
    names = {n for n, _ in SUITES}
    if only:
        unknown = set(only) - names
        if unknown:
            raise ValueError(f"unknown suites {sorted(unknown)}; choose from {sorted(names)}")
    return [fn(seed) for name, fn in SUITES if not only or name in only]


def format_table(results) -> str:
    width = max(len(r.name) for r in results)
    lines = []
    for r in results:
        status = "PASS" if r.passed else ("WARN" if r.soft else "FAIL")
        lines.append(f"{status:<5} {r.name:<{width}}  {r.detail}")
    return "\n".join(lines)


def all_passed(results) -> bool:
    return all(r.passed or r.soft for r in results)
