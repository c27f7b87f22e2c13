"""Fast self-checks for ``alf selftest``: algebra, coding and gradients."""

from __future__ import annotations

import math

import numpy as np

from .. import autodiff as ad
from ..codec import build_cdf_table, range_decode, range_encode
from ..fusion.schedule import fused_update, make_schedule, predict_noise


def check_algebra(rng):
    sched = make_schedule()
    for _ in range(20):
        t = int(rng.integers(2, sched.T + 1))
        t_prev = int(rng.integers(0, t))
        y_t, y_hat, d = (rng.standard_normal((4, 4, 4)) for _ in range(3))
        eps = predict_noise(y_t, d, t, sched)
        a = sched.alpha(t)
        assert np.allclose(math.sqrt(a) * d + math.sqrt(1 - a) * eps, y_t, atol=1e-6, rtol=0)
        pass_through = fused_update(y_t, y_hat, d, t, t_prev, 1.0, sched)
        assert np.allclose(pass_through, math.sqrt(sched.alpha(t_prev)) * y_hat, atol=1e-6, rtol=0)


def check_coding(rng):
    means = rng.normal(0, 2, 4)
    scales = rng.uniform(0.5, 6, 4)
    table = build_cdf_table(means, scales)
    for _ in range(20):
        sym = np.round(rng.normal(means[:, None, None], scales[:, None, None], (4, 3, 3))).astype(np.int64)
        sym[0, 0, 0] = 200  # force an escape
        assert np.array_equal(range_decode(range_encode(sym, table), table, sym.shape), sym)


def check_gradients(rng):
    x = rng.standard_normal((1, 2, 5, 5))
    w = rng.standard_normal((3, 2, 3, 3))
    err = ad.gradcheck(lambda a, b: ad.leaky_relu(ad.conv2d(a, b, stride=2, padding=1)).sum(), [x, w])
    assert err < 1e-3, f"conv gradient error {err:.2e}"


CHECKS = (("schedule algebra", check_algebra), ("range coder", check_coding),
          ("conv gradients", check_gradients))


def run_selftest(emit=print):
    """Run every check; returns the number of failures."""
    failures = 0
    for name, fn in CHECKS:
        try:
            fn(np.random.default_rng(0))
            emit(f"PASS {name}")
        except AssertionError as exc:
            failures += 1
            emit(f"FAIL {name}: {exc}")
    return failures
