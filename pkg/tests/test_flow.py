import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from flowup.errors import InvalidArgumentError, NumericalError
from flowup.flow import (ScheduleConfig, alpha, cosine_t, cosine_t_cdf, euler_sample, fm_loss, fm_loss_grad,
                         interpolate, sample_t, sigma, time_grid, velocity_target)

from strategies import seeded_clouds


def test_cosine_boundaries():
    assert cosine_t(0.0) == 0.0
    assert cosine_t(1.0) == pytest.approx(1.0, abs=1e-15)


def test_cosine_cdf_kolmogorov():
    t = sample_t(np.random.default_rng(0), ScheduleConfig(), size=100_000)
    assert t.min() >= 0 and t.max() <= 1
    assert stats.kstest(t, cosine_t_cdf).statistic < 0.01
    # mass piles up near 0
    assert np.mean(t < 0.5) > 0.6


def test_uniform_law():
    t = sample_t(np.random.default_rng(0), ScheduleConfig(t_law="uniform"), size=20_000)
    assert stats.kstest(t, "uniform").statistic < 0.02
    assert isinstance(sample_t(np.random.default_rng(0), ScheduleConfig()), float)


def test_path_coefficients():
    ts = np.linspace(0, 1, 11)
    assert np.all(np.diff(alpha(ts)) > 0) and np.all(np.diff(sigma(ts)) < 0)


def test_interpolate_examples():
    st_ = interpolate([[0.0, 0, 0]], [[2.0, 0, 0]], 0.5)
    np.testing.assert_array_equal(st_.x_t, [[1.0, 0, 0]])


def test_interpolate_endpoints_exact(rng):
    a = rng.normal(size=(100, 3)).astype(np.float32)
    b = rng.normal(size=(100, 3)).astype(np.float32)
    assert np.array_equal(interpolate(a, b, 0.0).x_t, a)
    np.testing.assert_allclose(interpolate(a, b, 1.0).x_t, b, rtol=0, atol=np.finfo(np.float32).eps * 8)


def test_interpolate_batched_t(rng):
    a = rng.normal(size=(3, 5, 3))
    b = rng.normal(size=(3, 5, 3))
    t = np.array([0.0, 0.5, 1.0])
    x = interpolate(a, b, t).x_t
    np.testing.assert_array_equal(x[0], a[0])
    np.testing.assert_allclose(x[1], 0.5 * (a[1] + b[1]))


def test_interpolate_errors():
    with pytest.raises(InvalidArgumentError):
        interpolate(np.zeros((2, 3)), np.zeros((3, 3)), 0.5)
    with pytest.raises(InvalidArgumentError):
        interpolate(np.zeros((2, 3)), np.zeros((2, 3)), 1.5)


def test_velocity_target():
    np.testing.assert_array_equal(velocity_target([[0, 0, 0]], [[1, 2, 3]]), [[1, 2, 3]])
    assert not velocity_target(np.ones((4, 3)), np.ones((4, 3))).any()


def test_loss_examples(rng):
    assert fm_loss(np.ones((4, 3)), np.ones((4, 3))) == 0.0
    assert fm_loss(np.ones((7, 3)), np.zeros((7, 3))) == 1.0
    p, q = rng.normal(size=(2, 9, 3))
    assert fm_loss(p, q) == pytest.approx(sum((p - q).ravel() ** 2) / 27)
    with pytest.raises(InvalidArgumentError):
        fm_loss(np.zeros((2, 3)), np.zeros((3, 3)))


def test_loss_grad_fd(rng):
    p, q = rng.normal(size=(2, 4, 3))
    g = fm_loss_grad(p, q)
    h = 1e-6
    for idx in [(0, 0), (3, 2), (1, 1)]:
        e = np.zeros_like(p)
        e[idx] = h
        assert g[idx] == pytest.approx((fm_loss(p + e, q) - fm_loss(p - e, q)) / (2 * h), rel=1e-6)


@given(seeded_clouds(1, 50), seeded_clouds(1, 50))
def test_loss_nonnegative(a, b):
    n = min(len(a), len(b))
    assert fm_loss(a[:n], b[:n]) >= 0
    assert (fm_loss(a[:n], b[:n]) == 0) == np.array_equal(a[:n], b[:n])


@pytest.mark.parametrize("steps", [1, 2, 5, 100])
def test_constant_oracle_field(steps, rng):
    x0 = rng.normal(size=(64, 3))
    x1 = rng.normal(size=(64, 3))
    out = euler_sample(lambda x, t: x1 - x0, x0, ScheduleConfig(num_steps=steps))
    np.testing.assert_allclose(out, x1, atol=1e-6)


def test_zero_field_and_snapshots(rng):
    x0 = rng.normal(size=(10, 3))
    snaps = []
    out = euler_sample(lambda x, t: np.zeros_like(x), x0, ScheduleConfig(num_steps=4), snapshots=snaps)
    np.testing.assert_array_equal(out, x0)
    assert [t for t, _ in snaps] == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_euler_uses_left_grid(rng):
    seen = []
    euler_sample(lambda x, t: seen.append(t) or np.zeros_like(x), np.zeros((2, 3)), ScheduleConfig(num_steps=4))
    assert seen == [0.0, 0.25, 0.5, 0.75]
    np.testing.assert_array_equal(time_grid(2), [0, 0.5, 1])


def test_literal_mode_endpoint_prediction(rng):
    # an endpoint predictor that always says x1 reaches x1 on the final step
    x0 = rng.normal(size=(20, 3))
    x1 = rng.normal(size=(20, 3))
    out = euler_sample(lambda x, t: x1, x0, ScheduleConfig(num_steps=5, sampler_mode="literal"))
    np.testing.assert_allclose(out, x1, atol=1e-12)


def test_sampler_errors():
    with pytest.raises(NumericalError):
        euler_sample(lambda x, t: np.full_like(x, np.nan), np.zeros((2, 3)), ScheduleConfig())
    with pytest.raises(InvalidArgumentError):
        euler_sample(lambda x, t: np.zeros((1, 3)), np.zeros((2, 3)), ScheduleConfig())
    for bad in (dict(num_steps=0), dict(t_law="beta"), dict(sampler_mode="heun")):
        with pytest.raises(InvalidArgumentError):
            ScheduleConfig(**bad)


@given(seeded_clouds(1, 40), st.integers(1, 20))
def test_cardinality_preserved(x0, steps):
    out = euler_sample(lambda x, t: np.sin(x) * t, x0, ScheduleConfig(num_steps=steps))
    assert out.shape == x0.shape
