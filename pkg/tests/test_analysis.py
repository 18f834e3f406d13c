import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossim.analysis import (
    ABS_EPS_BINS,
    RELATIVE_BINS,
    TrialRecord,
    bruteforce_set_cover_opt,
    conditional_violations,
    default_inner_samples,
    error_bound,
    estimate_rare_probability,
    expected_rep_bound,
    query_decrease_pct,
    run_trials,
    summarize_errors,
)
from crossim.core import (
    DiscreteMetric,
    ExhaustedError,
    GroupSample,
    ParameterError,
    UsageError,
    WeightedEuclideanMetric,
    rng_stream,
)
from crossim.datagen import FiniteSupportSpec, thm2_instance
from crossim.learners import select_representatives, train_simple
from crossim.oracle import SimulatedOracle, draw_weights

from conftest import elem, line_sample


def test_opt_examples(unit1):
    assert bruteforce_set_cover_opt(line_sample([0, 0.1, 0.2]), unit1, 0.5) == 1
    assert bruteforce_set_cover_opt(line_sample([0, 10, 20]), unit1, 1.0) == 3
    assert bruteforce_set_cover_opt(line_sample([0, 0.3, 10]), unit1, 0.4) == 2
    assert bruteforce_set_cover_opt(line_sample([]), unit1, 1.0) == 0


def test_opt_size_limit(unit1):
    with pytest.raises(UsageError):
        bruteforce_set_cover_opt(line_sample(range(21)), unit1, 1.0)


instances = st.tuples(
    st.lists(st.floats(0, 1), min_size=1, max_size=12),
    st.integers(1, 2),
    st.floats(0.01, 0.5),
)


@settings(max_examples=150, deadline=None)
@given(instances)
def test_greedy_within_optimal_cover(inst):
    values, dim, radius = inst
    n = len(values) // dim or 1
    X = np.resize(np.asarray(values), n * dim).reshape(n, dim)
    metric = WeightedEuclideanMetric(np.full(dim, 0.7))
    eps, rho = radius / 8.0, 8.0
    reps, _ = select_representatives(GroupSample(0, X), metric, eps, rho)
    opt = bruteforce_set_cover_opt(X, metric, rho * eps / 2)
    assert len(reps) <= opt <= n
    assert bruteforce_set_cover_opt(X, metric, radius * 2) <= opt


def test_quartiles_by_hand():
    recs = [TrialRecord.build(1.0, {"m": 1.0 + e}, 0, 0, 0.1) for e in (0.0, 0.1, 0.2, 0.3)]
    s = summarize_errors(recs, 0.1)["m"]["relative_error_pct"]
    assert s["p25"] == pytest.approx(7.5) and s["median"] == pytest.approx(15.0)
    assert s["p75"] == pytest.approx(22.5) and s["max"] == pytest.approx(30.0)


def test_all_zero_errors_single_bin():
    recs = [TrialRecord.build(2.0, {"m": 2.0}, 0, 0, 0.1) for _ in range(5)]
    s = summarize_errors(recs, 0.1)["m"]
    assert s["relative_error_pct"]["counts"] == [5] + [0] * (len(RELATIVE_BINS) - 2)
    assert s["abs_error_over_eps"]["counts"] == [5] + [0] * (len(ABS_EPS_BINS) - 2)
    assert s["fraction_abs_error_gt_eps"] == 0.0


@given(st.lists(st.tuples(st.floats(0, 10), st.floats(0, 10)), min_size=1, max_size=50))
def test_histograms_sum_to_trials(pairs):
    recs = [TrialRecord.build(t, {"m": p}, 0, 0, 0.1) for t, p in pairs]
    s = summarize_errors(recs, 0.1)["m"]
    assert sum(s["abs_error_over_eps"]["counts"]) == len(recs)
    rel = s["relative_error_pct"]
    assert sum(rel["counts"]) + rel["zero_truth"] == len(recs)


def test_zero_truth_excluded_from_relative():
    recs = [TrialRecord.build(0.0, {"m": 0.5}, 0, 0, 0.1), TrialRecord.build(1.0, {"m": 1.0}, 0, 0, 0.1)]
    rel = summarize_errors(recs, 0.1)["m"]["relative_error_pct"]
    assert rel["zero_truth"] == 1 and rel["n"] == 1


def test_query_decrease():
    assert query_decrease_pct(100, 100) == 0.0
    assert query_decrease_pct(100, 25) == 75.0
    with pytest.raises(ParameterError):
        query_decrease_pct(0, 0)


def test_error_bounds():
    assert error_bound("simple", 0.1, 12) == pytest.approx(0.6)
    assert error_bound("queryopt", 0.1, 12) == pytest.approx(5.4)
    assert error_bound("queryopt", 0.1, 8) == pytest.approx(3.8)


def _trial_setup(n_trials=50):
    spec = draw_weights(2, 2, rng_stream(0))
    rng = rng_stream(0, "s")
    samples = [GroupSample(g, rng.normal(size=(30, 2))) for g in range(2)]
    model = train_simple(samples, SimulatedOracle(spec))
    X, Y = rng.normal(size=(n_trials, 2)), rng.normal(size=(n_trials, 2))
    pairs = [(elem(0, t, *X[t]), elem(1, t, *Y[t])) for t in range(n_trials)]
    return spec, model, pairs


def test_run_trials_counts_and_replay():
    spec, model, pairs = _trial_setup()
    a = run_trials({"simple": model}, SimulatedOracle(spec), pairs, 50, 0.1)
    b = run_trials({"simple": model}, SimulatedOracle(spec), pairs, 50, 0.1)
    assert len(a) == 50
    assert [r.predictions for r in a] == [r.predictions for r in b]
    with pytest.raises(ExhaustedError):
        run_trials({"simple": model}, SimulatedOracle(spec), pairs, 51, 0.1)


def test_perfect_model_has_zero_error():
    spec, model, _ = _trial_setup()
    pairs = [(model.samples[0][i], model.samples[1][i]) for i in range(30)]
    recs = run_trials({"simple": model}, SimulatedOracle(spec), pairs, 30, 0.1)
    assert all(r.abs_error_over_eps["simple"] == 0.0 for r in recs)
    assert conditional_violations(recs, 0.1, 12)["conditioned_trials"] == 30


def test_rare_point_mass():
    est = estimate_rare_probability(FiniteSupportSpec(1), WeightedEuclideanMetric(np.ones(1)),
                                    0.1, 0.1, 100, 10_000, rng_stream(0))
    assert est.p_hat == 0.0 and np.all(est.q_hat == 1.0)
    assert est.to_json()["rare_count"] == 0


def test_rare_thm2_group_two():
    _, g1, oracle = thm2_instance(10**6, 1, rng_stream(0))
    est = estimate_rare_probability(g1, oracle.intra_metric(1), 0.1, 0.1, 100, 10_000, rng_stream(1))
    assert est.p_hat == 1.0


def test_rare_two_points():
    est = estimate_rare_probability(FiniteSupportSpec(2), DiscreteMetric(1), 0.1, 0.4, 200, 10_000, rng_stream(2))
    assert est.p_hat == 0.0


def test_rare_reproducible_and_validated():
    spec = FiniteSupportSpec(20)
    a = estimate_rare_probability(spec, DiscreteMetric(1), 0.1, 0.06, 50, None, rng_stream(3))
    b = estimate_rare_probability(spec, DiscreteMetric(1), 0.1, 0.06, 50, None, rng_stream(3))
    assert a.p_hat == b.p_hat and a.K == default_inner_samples(0.06) == 834
    with pytest.raises(ParameterError):
        estimate_rare_probability(spec, DiscreteMetric(1), 0.1, 0.1, 10, 99, rng_stream(3))
    with pytest.raises(ParameterError):
        estimate_rare_probability(spec, DiscreteMetric(1), 0.1, 0.1, 0, 100, rng_stream(3))


@pytest.mark.parametrize("probs, delta", [
    ((0.5, 0.5), 0.4),
    ((0.7, 0.3), 0.5),
    ((0.6, 0.3, 0.1), 0.2),
    ((0.45, 0.45, 0.1), 0.3),
])
def test_rare_error_shrinks_as_k_doubles(probs, delta):
    spec = FiniteSupportSpec(len(probs), probabilities=np.array(probs))
    M = 2000
    K0 = math.ceil(10 / delta)
    errs = []
    for K in (K0, 2 * K0, 4 * K0, 8 * K0, 16 * K0):
        # same seed: identical outer draws, so only the inner estimate changes with K
        est = estimate_rare_probability(spec, DiscreteMetric(1), 0.1, delta, M, K, rng_stream(4))
        outer_ids = spec.draw_ids(M, rng_stream(4))  # the estimator draws its outer sample first
        exact = float(np.mean(np.asarray(probs)[outer_ids] < delta))
        errs.append(abs(est.p_hat - exact))
    assert all(b <= a for a, b in zip(errs, errs[1:])), errs
    assert errs[-1] == 0.0


def test_expected_rep_bound():
    assert expected_rep_bound(0.1, 0.0, 47) == 10.0
    assert expected_rep_bound(0.1, 1.0, 47) == 57.0
