import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from crossim.core import (
    DiscreteMetric,
    GroupSample,
    Params,
    ParameterError,
    QueryLedger,
    ShapeError,
    UsageError,
    WeightedEuclideanMetric,
    canonical_key,
    intra_distance,
    metric_from_json,
    nearest_in_sample,
    rng_stream,
    sample_budget,
)

from conftest import elem, line_sample


@pytest.mark.parametrize("delta, expected", [(0.1, 47), (0.5, 3), (0.01, 922), (0.001, 13816)])
def test_sample_budget_values(delta, expected):
    assert sample_budget(delta) == expected


def test_sample_budget_uses_natural_log():
    assert sample_budget(0.1) == math.ceil(10 * math.log(100))


@pytest.mark.parametrize("delta", [0.0, 1.0, -0.1, 1.5])
def test_sample_budget_rejects_out_of_range(delta):
    with pytest.raises(ParameterError):
        sample_budget(delta)


@given(st.floats(1e-4, 0.99), st.floats(1e-4, 0.99))
def test_sample_budget_monotone(a, b):
    lo, hi = sorted((a, b))
    assert sample_budget(lo) >= sample_budget(hi)


def test_intra_distance_examples():
    m = WeightedEuclideanMetric(np.array([1.0, 1.0]))
    assert intra_distance(m, elem(0, 0, 0, 0), elem(0, 1, 3, 4)) == 5.0
    m2 = WeightedEuclideanMetric(np.array([0.25, 1.0]))
    assert intra_distance(m2, elem(0, 0, 0, 0), elem(0, 1, 2, 0)) == 1.0


def test_intra_distance_rejects_cross_group():
    m = WeightedEuclideanMetric(np.ones(1))
    with pytest.raises(UsageError):
        intra_distance(m, elem(0, 0, 1.0), elem(1, 0, 1.0))


def test_metric_rejects_bad_weights():
    with pytest.raises(ParameterError):
        WeightedEuclideanMetric(np.array([1.0, -0.1]))
    with pytest.raises(ParameterError):
        WeightedEuclideanMetric(np.array([np.nan]))
    with pytest.raises(ShapeError):
        WeightedEuclideanMetric(np.ones((2, 2)))


def test_metric_dimension_mismatch():
    m = WeightedEuclideanMetric(np.ones(2))
    with pytest.raises(ShapeError):
        m.distance(np.zeros(2), np.zeros(3))


def test_nearest_in_sample_examples(unit1):
    s = line_sample([0, 1, 5])
    hit = nearest_in_sample(elem(0, 99, 0.9), s, unit1)
    assert hit.index == 1 and hit.features.tolist() == [1.0]
    assert nearest_in_sample(elem(0, 99, 5.0), s, unit1).index == 2


def test_nearest_tie_goes_to_lowest_index(unit1):
    s = line_sample([0, 2, 1])
    assert nearest_in_sample(elem(0, 9, 1.0), s, unit1).index == 2
    s = line_sample([0, 2])
    assert nearest_in_sample(elem(0, 9, 1.0), s, unit1).index == 0


def test_nearest_in_sample_errors(unit1):
    with pytest.raises(UsageError):
        nearest_in_sample(elem(0, 0, 1.0), line_sample([]), unit1)
    with pytest.raises(UsageError):
        nearest_in_sample(elem(1, 0, 1.0), line_sample([0.0]), unit1)


vectors = arrays(np.float64, 3, elements=st.floats(-100, 100))
weights = arrays(np.float64, 3, elements=st.floats(0, 10))


@given(weights, vectors, vectors, vectors)
def test_weighted_metric_axioms(w, x, y, z):
    m = WeightedEuclideanMetric(w)
    assert m.distance(x, x) == 0.0
    assert m.distance(x, y) == m.distance(y, x)
    assert m.distance(x, z) <= m.distance(x, y) + m.distance(y, z) + 1e-9


@given(weights, arrays(np.float64, (7, 3), elements=st.floats(-50, 50)), vectors)
def test_nearest_is_argmin_with_low_index_ties(w, X, q):
    m = WeightedEuclideanMetric(w)
    idx, dist = m.nearest(X, q)
    d = m.distances_to(X, q)
    assert dist[0] == d.min()
    assert idx[0] == np.flatnonzero(d == d.min())[0]


def test_discrete_metric():
    m = DiscreteMetric(1)
    X = np.array([[0.0], [3.0], [3.0]])
    assert m.distances_to(X, np.array([3.0])).tolist() == [1.0, 0.0, 0.0]
    idx, dist = m.nearest(X, np.array([[3.0], [7.0]]))
    assert idx.tolist() == [1, 0] and dist.tolist() == [0.0, 1.0]
    assert m.count_within(X, np.array([[3.0]]), 0.5).tolist() == [2]


def test_metric_json_roundtrip():
    m = WeightedEuclideanMetric(np.array([0.5, 0.25]))
    back = metric_from_json(m.to_json())
    assert np.array_equal(back.weights, m.weights)
    assert isinstance(metric_from_json(DiscreteMetric(2).to_json()), DiscreteMetric)


def test_params_validation():
    assert Params(0.1, 0.1, 2, 12).ball_radius == pytest.approx(1.2)
    for bad in [dict(epsilon=0), dict(epsilon=1), dict(delta=0), dict(gamma=1), dict(rho=0)]:
        kw = dict(epsilon=0.1, delta=0.1, gamma=2, rho=8.0) | bad
        with pytest.raises(ParameterError):
            Params(**kw)


def test_group_sample_elements():
    s = GroupSample(1, np.arange(6.0).reshape(3, 2))
    assert len(s) == 3 and s.dim == 2
    e = s[2]
    assert e.key == (1, 2) and e.features.tolist() == [4.0, 5.0]
    assert [x.index for x in s] == [0, 1, 2]
    with pytest.raises(ShapeError):
        GroupSample(0, np.zeros(3))


def test_rng_stream_is_named_and_reproducible():
    a = rng_stream(7, "data", 0.1, 2).random(4)
    b = rng_stream(7, "data", 0.1, 2).random(4)
    c = rng_stream(7, "data", 0.01, 2).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_canonical_key():
    assert canonical_key((1, 5), (0, 2)) == ((0, 2), (1, 5))
    with pytest.raises(UsageError):
        canonical_key((0, 1), (0, 2))


pair_lists = st.lists(
    st.tuples(st.integers(0, 2), st.integers(0, 50), st.integers(0, 2), st.integers(0, 50)).filter(
        lambda t: t[0] != t[2]
    ),
    max_size=60,
)


@given(pair_lists)
def test_ledger_counts_distinct_unordered_pairs(pairs):
    ledger = QueryLedger()
    seen = set()
    for g, i, h, j in pairs:
        value = float(hash(canonical_key((g, i), (h, j))) % 97)
        new = ledger.record((g, i), (h, j), value)
        key = canonical_key((g, i), (h, j))
        assert new == (key not in seen)
        seen.add(key)
        assert ledger.get((h, j), (g, i)) == value
    assert ledger.count == len(seen) == len(ledger)
    assert {k for k, _ in ledger.items()} == seen


@settings(max_examples=50)
@given(st.lists(st.integers(0, 20), min_size=1, max_size=6, unique=True),
       st.lists(st.integers(0, 20), min_size=1, max_size=6, unique=True))
def test_ledger_block_matches_single_records(rows, cols):
    rows, cols = np.array(rows), np.array(cols)
    values = np.arange(rows.size * cols.size, dtype=float).reshape(rows.size, cols.size)
    a, b = QueryLedger(), QueryLedger()
    assert a.record_block(1, rows, 0, cols, values) == rows.size * cols.size
    for r, i in enumerate(rows):
        for c, j in enumerate(cols):
            b.record((1, int(i)), (0, int(j)), values[r, c])
    assert dict(a.items()) == dict(b.items())
    assert a.count_for(0, 1) == a.count
    assert a.record_block(0, cols, 1, rows, values.T) == 0


def test_ledger_mixes_single_and_block_records():
    ledger = QueryLedger()
    assert ledger.record((0, 1), (1, 2), 0.5)
    added = ledger.record_block(0, np.array([0, 1]), 1, np.array([2, 3]), np.array([[1.0, 2.0], [9.0, 4.0]]))
    assert added == 3 and ledger.count == 4
    assert ledger.get((0, 1), (1, 2)) == 0.5  # the earlier answer is kept
    assert not ledger.record((1, 3), (0, 0), 7.0)
    assert ledger.get((0, 0), (1, 3)) == 2.0
    assert ledger.record_block(0, np.array([5]), 1, np.array([5]), np.array([[3.0]])) == 1
    assert ledger.count_for(1, 0) == 5 == len(dict(ledger.items()))
    assert ledger.get((0, 9), (1, 9)) is None
