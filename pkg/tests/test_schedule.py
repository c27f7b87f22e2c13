import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from alf.fusion.schedule import (ancestral_step, forward_noise, fused_update, make_schedule, predict_noise,
                                 schedule_from_betas, timestep_grid)

SCHED = make_schedule()


def test_two_step_product():
    s = schedule_from_betas([0.1, 0.2])
    np.testing.assert_allclose(s.alphas, [1.0, 0.9, 0.72], rtol=1e-15)


def test_default_schedule_ends_near_zero():
    # oracle: direct product in exact arithmetic order
    prod = 1.0
    for b in np.linspace(1e-4, 0.02, 1000):
        prod *= 1.0 - b
    assert SCHED.alphas[1000] == pytest.approx(prod, rel=1e-12)
    assert SCHED.alphas[1000] < 0.01
    assert SCHED.alphas[0] == 1.0


def test_monotonicity():
    assert (np.diff(SCHED.betas) > 0).all()
    assert (np.diff(SCHED.alphas) < 0).all()


@pytest.mark.parametrize("args", [(0, 1e-4, 0.02), (10, 0.02, 1e-4), (10, 0.0, 0.1), (10, 0.1, 1.0)])
def test_schedule_validation(args):
    with pytest.raises(ValueError):
        make_schedule(*args)


def test_forward_noise_endpoints(rng):
    y = rng.standard_normal((4, 3, 3))
    np.testing.assert_array_equal(forward_noise(y, 0, rng.standard_normal(y.shape), SCHED), y)
    np.testing.assert_allclose(forward_noise(y, 500, np.zeros_like(y), SCHED), math.sqrt(SCHED.alpha(500)) * y)
    with pytest.raises(ValueError):
        forward_noise(y, 1001, y, SCHED)
    with pytest.raises(ValueError):
        forward_noise(y, 10, y[:2], SCHED)


def test_forward_noise_monte_carlo(rng):
    t, y = 300, np.array([1.5, -0.7])
    draws = np.stack([forward_noise(y, t, rng.standard_normal(2), SCHED) for _ in range(10_000)])
    a = SCHED.alpha(t)
    sd = math.sqrt(1 - a)
    assert np.all(np.abs(draws.mean(0) - math.sqrt(a) * y) < 3 * sd / math.sqrt(10_000) + 1e-12)
    np.testing.assert_allclose(draws.var(0), 1 - a, rtol=0.05)


def test_predict_noise_scalar_oracle():
    s = schedule_from_betas([0.1, 0.2])
    eps = predict_noise(1.0, 0.5, 2, s)
    assert float(eps) == pytest.approx((1 - math.sqrt(0.72) * 0.5) / math.sqrt(0.28), abs=1e-12)
    assert float(eps) == pytest.approx(1.0880, abs=1e-4)


def test_predict_noise_zero_when_d_matches():
    y = np.array([0.3, -2.0])
    np.testing.assert_allclose(predict_noise(y, y / math.sqrt(SCHED.alpha(40)), 40, SCHED), 0.0, atol=1e-12)
    with pytest.raises(ValueError):
        predict_noise(y, y, 0, SCHED)


@given(st.integers(1, 1000), st.integers(0, 2 ** 32 - 1))
def test_predict_noise_inverts_forward(t, seed):
    rng = np.random.default_rng(seed)
    y_t, d = rng.standard_normal((2, 3, 4, 4))
    a = SCHED.alpha(t)
    recon = math.sqrt(a) * d + math.sqrt(1 - a) * predict_noise(y_t, d, t, SCHED)
    np.testing.assert_allclose(recon, y_t, atol=1e-6, rtol=0)


def test_fused_update_scalar_oracle():
    s = schedule_from_betas([0.1, 0.2])  # alphas 1, 0.9, 0.72
    out = float(fused_update(1.0, 2.0, 0.5, 2, 1, 0.5, s))
    eps = (1 - math.sqrt(0.72) * 0.5) / math.sqrt(0.28)
    assert out == pytest.approx(math.sqrt(0.9) * 0.875 + 0.75 * math.sqrt(0.1) * eps, abs=1e-12)
    assert out == pytest.approx(1.0882, abs=1e-4)


@given(st.integers(2, 1000), st.integers(0, 2 ** 32 - 1))
def test_fused_update_endpoints(t, seed):
    rng = np.random.default_rng(seed)
    t_prev = int(rng.integers(0, t))
    y_t, y_hat, d = rng.standard_normal((3, 2, 3, 3))
    a_prev = SCHED.alpha(t_prev)
    np.testing.assert_allclose(fused_update(y_t, y_hat, d, t, t_prev, 1.0, SCHED), math.sqrt(a_prev) * y_hat,
                               atol=1e-6, rtol=0)
    eps = predict_noise(y_t, d, t, SCHED)
    ddim = math.sqrt(a_prev) * d + math.sqrt(1 - a_prev) * eps
    np.testing.assert_allclose(fused_update(y_t, y_hat, d, t, t_prev, 0.0, SCHED), ddim, atol=1e-6, rtol=0)


def test_fused_update_validation():
    with pytest.raises(ValueError):
        fused_update(0.0, 0.0, 0.0, 5, 5, 0.5, SCHED)
    with pytest.raises(ValueError):
        fused_update(0.0, 0.0, 0.0, 5, 4, 1.5, SCHED)


def test_ancestral_step_oracles(rng):
    s = schedule_from_betas([0.05, 0.1])  # beta_2 = 0.1, alpha-bar_2 = 0.95 * 0.9
    x = np.array([1.0])
    np.testing.assert_allclose(ancestral_step(x, np.zeros(1), 2, s), x / math.sqrt(0.9))
    # the worked example uses abar = 0.72 with beta_t = 0.1
    s2 = schedule_from_betas([0.2, 0.1])
    out = ancestral_step(x, np.array([0.5]), 2, s2)
    assert float(out[0]) == pytest.approx((1 - (0.1 / math.sqrt(0.28)) * 0.5) / math.sqrt(0.9), abs=1e-12)
    # the quoted 0.9546 is the formula's 0.95449 rounded up
    assert float(out[0]) == pytest.approx(0.9546, abs=2e-4)
    a = ancestral_step(x, np.zeros(1), 2, s, 0.1, np.random.default_rng(0))
    b = ancestral_step(x, np.zeros(1), 2, s, 0.1, np.random.default_rng(1))
    assert a[0] != b[0]
    with pytest.raises(ValueError):
        ancestral_step(x, x, 0, s)


def test_timestep_grid():
    assert timestep_grid(10, 1000) == list(range(1000, -1, -100))
    assert timestep_grid(1, 1000) == [1000, 0]
    g = timestep_grid(7, 1000)
    assert g[0] == 1000 and g[-1] == 0 and all(a > b for a, b in zip(g, g[1:]))
    with pytest.raises(ValueError):
        timestep_grid(0, 1000)
