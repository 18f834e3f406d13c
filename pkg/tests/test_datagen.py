import math

import numpy as np
import pytest

from crossim.core import DiscreteMetric, ParameterError, rng_stream
from crossim.datagen import (
    FiniteSupportSpec,
    MixtureSpec,
    dyadic_weights,
    make_mixture_group,
    sample_from_mixture,
    thm2_instance,
    thm4_instance,
)


def test_dyadic_weights_sum_exactly_to_one():
    w = dyadic_weights(16)
    assert w.sum() == 1.0
    assert w[0] == 0.5 and w[14] == 2.0**-15 and w[15] == 2.0**-15
    assert dyadic_weights(1).tolist() == [1.0]


def test_mixture_group_ranges():
    spec = make_mixture_group(20, 16, 2.0, rng_stream(0))
    assert spec.means.shape == (16, 20) and spec.variances.shape == (16, 20)
    assert np.all((spec.variances >= 0) & (spec.variances <= 2.0))
    assert spec.k == 16 and spec.dim == 20


def test_mixture_group_deterministic():
    a = make_mixture_group(3, 4, 1.0, rng_stream(5))
    b = make_mixture_group(3, 4, 1.0, rng_stream(5))
    assert a.to_json() == b.to_json()
    assert MixtureSpec.from_json(a.to_json()).to_json() == a.to_json()


def test_zero_variance_samples_are_component_means():
    spec = MixtureSpec(np.array([[0.0, 1.0], [5.0, 5.0]]), np.zeros((2, 2)), np.array([0.5, 0.5]))
    X = spec.draw(200, rng_stream(1))
    assert all(any(np.array_equal(x, m) for m in spec.means) for x in X)


def test_single_component_point_mass():
    spec = MixtureSpec(np.array([[3.0, -1.0]]), np.zeros((1, 2)), np.array([1.0]))
    s = sample_from_mixture(spec, 10, 1, rng_stream(2))
    assert s.group == 1 and np.all(s.features == [3.0, -1.0])


def test_component_frequencies_match_weights():
    spec = make_mixture_group(2, 16, 1.0, rng_stream(3))
    n = 100_000
    _, comp = spec.draw(n, rng_stream(4), return_components=True)
    counts = np.bincount(comp, minlength=16)
    p = spec.mixing_weights
    sd = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 3 * sd + 1)


def test_mixture_validation():
    with pytest.raises(ParameterError):
        MixtureSpec(np.zeros((2, 2)), np.zeros((2, 2)), np.array([0.7, 0.7]))
    with pytest.raises(ParameterError):
        MixtureSpec(np.zeros((2, 2)), -np.ones((2, 2)), np.array([0.5, 0.5]))
    with pytest.raises(ParameterError):
        make_mixture_group(2, 2, -1.0, rng_stream(0))


def test_finite_support_encodes_id_in_first_feature():
    s = FiniteSupportSpec(5, dim=3)
    assert s.point(4).tolist() == [[4.0, 0.0, 0.0]]
    assert s.support.shape == (5, 3)
    assert s.mass(2) == 0.2
    ids = s.draw_ids(1000, rng_stream(0))
    assert ids.min() >= 0 and ids.max() < 5


def test_thm2_instance():
    g0, g1, oracle = thm2_instance(10**6, 1, rng_stream(0))
    assert g0.support_size == 1 and g1.support_size == 10**6
    assert isinstance(oracle.intra_metric(0), DiscreteMetric)
    assert np.all(g0.draw(50, rng_stream(1)) == 0.0)
    # N << support: fresh draws are almost never seen in training
    train = set(g1.draw_ids(100, rng_stream(2)).tolist())
    test = g1.draw_ids(1000, rng_stream(3))
    assert np.mean([t in train for t in test]) < 0.01


def test_thm4_instance_sizes():
    g0, g1, _ = thm4_instance(0.5, 1, rng_stream(0))
    assert g0.support_size == g1.support_size == 2
    g0, g1, _ = thm4_instance(0.1, 1, rng_stream(0))
    assert g0.support_size * g1.support_size == 100
    with pytest.raises(ParameterError):
        thm4_instance(0.3, 1, rng_stream(0))


def test_thm4_every_element_is_rare_above_delta():
    g0, _, _ = thm4_instance(0.1, 1, rng_stream(0))
    m = DiscreteMetric(1)
    X = g0.support
    mass = np.array([m.count_within(X, X[i:i + 1], 0.5)[0] * g0.mass(i) for i in range(len(X))])
    assert np.allclose(mass, 0.1) and np.all(mass < 0.11)


def test_uniform_band_probability():
    eps = 0.1
    rng = rng_stream(0)
    u, v = rng.random(200_000), rng.random(200_000)
    assert math.isclose(np.mean(np.abs(u - v) <= eps), 2 * eps - eps**2, abs_tol=0.005)
