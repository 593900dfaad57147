import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from normpreserve.errors import DimensionMismatchError, NotPositiveDefiniteError
from normpreserve.gaussian import (
    AffineMap,
    GaussianMeasure,
    affine_pushforward,
    log_density,
    sample,
    whitening_map,
)
from normpreserve.linalg_core import random_orthogonal, random_spd


def random_gaussian(n, rng):
    return GaussianMeasure(rng.normal(scale=2.0, size=n), random_spd(n, rng))


def random_map(n, rng):
    A = rng.standard_normal((n, n)) + 2.0 * np.eye(n)
    return AffineMap(A, rng.standard_normal(n))


def test_measure_validation():
    with pytest.raises(NotPositiveDefiniteError):
        GaussianMeasure(np.zeros(2), np.diag([1.0, -1.0]))
    with pytest.raises(DimensionMismatchError):
        GaussianMeasure(np.zeros(3), np.eye(2))


# --- log_density ------------------------------------------------------------

def test_log_density_at_mode():
    assert log_density(GaussianMeasure.standard(1), [0.0]) == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-15)


def test_log_density_one_mahalanobis_unit():
    g = GaussianMeasure(np.zeros(2), np.diag([4.0, 1.0]))
    expected = -np.log(2 * np.pi) - 0.5 * np.log(4.0) - 0.5
    assert log_density(g, [2.0, 0.0]) == pytest.approx(expected, abs=1e-14)


def test_log_density_rows_and_dimension():
    g = GaussianMeasure(np.zeros(2), np.diag([4.0, 1.0]))
    X = np.array([[0.0, 0.0], [2.0, 0.0]])
    assert log_density(g, X).shape == (2,)
    with pytest.raises(DimensionMismatchError):
        log_density(g, [1.0, 2.0, 3.0])


def test_log_density_matches_quadrature_normalized_kernel():
    rng = np.random.default_rng(3)
    theta, sd = rng.normal(), rng.uniform(0.3, 3.0)
    g = GaussianMeasure([theta], [[sd * sd]])
    grid = np.linspace(theta - 12 * sd, theta + 12 * sd, 200_001)
    kernel = lambda x: np.exp(-0.5 * ((x - theta) / sd) ** 2)
    Z = np.trapezoid(kernel(grid), grid) if hasattr(np, "trapezoid") else np.trapz(kernel(grid), grid)
    xs = theta + sd * rng.uniform(-4, 4, size=20)
    oracle = np.log(kernel(xs)) - np.log(Z)
    np.testing.assert_allclose(log_density(g, xs[:, None]), oracle, atol=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_density_integrates_to_one(seed):
    rng = np.random.default_rng(seed)
    g = GaussianMeasure([rng.normal()], [[rng.uniform(0.1, 5.0)]])
    sd = np.sqrt(g.cov[0, 0])
    x = np.linspace(g.mean[0] - 10 * sd, g.mean[0] + 10 * sd, 10_000)
    p = np.exp(log_density(g, x[:, None]))
    total = np.sum(0.5 * (p[1:] + p[:-1]) * np.diff(x))
    assert abs(total - 1.0) <= 1e-6


# --- sample -----------------------------------------------------------------

def test_sample_standard_mean():
    X = sample(GaussianMeasure.standard(2), 100_000, 1234)
    assert X.shape == (100_000, 2)
    assert np.all(np.abs(X.mean(axis=0)) <= 0.02)


def test_sample_shifted_mean():
    g = GaussianMeasure([5.0, -3.0], [[2.0, 0.5], [0.5, 1.0]])
    X = sample(g, 100_000, 99)
    assert np.all(np.abs(X.mean(axis=0) - g.mean) <= 0.05)
    assert np.linalg.norm(np.cov(X.T) - g.cov) <= 0.05


def test_sample_single_point_shape():
    assert sample(GaussianMeasure.standard(3), 1, 0).shape == (1, 3)


def test_sample_is_deterministic():
    g = GaussianMeasure([1.0, 2.0], [[2.0, 0.3], [0.3, 1.0]])
    np.testing.assert_array_equal(sample(g, 500, 17), sample(g, 500, 17))
    assert not np.array_equal(sample(g, 500, 17), sample(g, 500, 18))


def test_sample_rejects_zero_count():
    with pytest.raises(ValueError):
        sample(GaussianMeasure.standard(1), 0, 0)


# --- affine_pushforward -----------------------------------------------------

def test_pushforward_scalar_map():
    img = affine_pushforward(GaussianMeasure.standard(2), AffineMap(2.0 * np.eye(2), [1.0, 0.0]))
    np.testing.assert_array_equal(img.mean, [1.0, 0.0])
    np.testing.assert_array_equal(img.cov, 4.0 * np.eye(2))


def test_pushforward_rotation_invariant():
    Q = random_orthogonal(3, np.random.default_rng(0))
    img = affine_pushforward(GaussianMeasure.standard(3), AffineMap(Q))
    np.testing.assert_allclose(img.cov, np.eye(3), atol=1e-14)
    np.testing.assert_array_equal(img.mean, np.zeros(3))


def test_pushforward_matches_monte_carlo():
    rng = np.random.default_rng(5)
    g = random_gaussian(3, rng)
    m = random_map(3, rng)
    img = affine_pushforward(g, m)
    np.testing.assert_allclose(img.cov, m.linear @ g.cov @ m.linear.T, atol=1e-12)
    Y = m.apply(sample(g, 200_000, 6))
    emp = np.cov(Y.T)
    assert np.max(np.abs(emp - img.cov)) <= 0.02 * np.max(np.abs(img.cov))


def test_pushforward_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        affine_pushforward(GaussianMeasure.standard(2), AffineMap.identity(3))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6))
def test_pushforward_composes(seed, n):
    rng = np.random.default_rng(seed)
    g = random_gaussian(n, rng)
    m1, m2 = random_map(n, rng), random_map(n, rng)
    two_step = affine_pushforward(affine_pushforward(g, m1), m2)
    one_step = affine_pushforward(g, m2.compose(m1))
    scale = 1 + np.max(np.abs(one_step.cov))
    np.testing.assert_allclose(two_step.mean, one_step.mean, atol=1e-10 * scale)
    np.testing.assert_allclose(two_step.cov, one_step.cov, atol=1e-10 * scale)


# --- whitening_map ----------------------------------------------------------

def test_whitening_standard_is_identity():
    m = whitening_map(GaussianMeasure.standard(3))
    np.testing.assert_array_equal(m.linear, np.eye(3))
    np.testing.assert_array_equal(m.shift, np.zeros(3))


def test_whitening_diagonal():
    m = whitening_map(GaussianMeasure([1.0, 1.0], np.diag([4.0, 9.0])))
    np.testing.assert_allclose(m.apply(np.array([3.0, 7.0])), [1.0, 2.0], atol=1e-15)
    np.testing.assert_allclose(m.linear, np.diag([0.5, 1 / 3]), atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6))
def test_whitening_yields_standard(seed, n):
    g = random_gaussian(n, np.random.default_rng(seed))
    img = affine_pushforward(g, whitening_map(g))
    assert np.max(np.abs(img.mean)) <= 1e-10
    assert np.max(np.abs(img.cov - np.eye(n))) <= 1e-10


def test_affine_map_inverse_round_trip():
    m = random_map(4, np.random.default_rng(2))
    X = np.random.default_rng(3).standard_normal((10, 4))
    np.testing.assert_allclose(m.apply_inverse(m.apply(X)), X, atol=1e-12)
    np.testing.assert_allclose(m.inverse().apply(m.apply(X)), X, atol=1e-12)


def test_json_round_trip():
    g = GaussianMeasure([1.0, 2.0], [[2.0, 0.3], [0.3, 1.0]])
    h = GaussianMeasure.from_dict(g.to_dict())
    np.testing.assert_array_equal(h.mean, g.mean)
    np.testing.assert_array_equal(h.cov, g.cov)
    m = AffineMap([[1.0, 2.0], [0.0, 1.0]], [3.0, 4.0])
    m2 = AffineMap.from_dict(m.to_dict())
    np.testing.assert_array_equal(m2.linear, m.linear)
    np.testing.assert_array_equal(m2.shift, m.shift)
