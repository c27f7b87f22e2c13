import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import ndimage

from alf.autodiff import Tensor, gradcheck
from alf.metrics import (CSVFormatError, RDCurve, RDPoint, bd_rate, bd_rate_arrays, pdist, pdist_tensor,
                         points_from_csv, points_to_csv, psnr, ssim)
from alf.harness.data import make_images


def _textured(seed=0, size=32):
    return make_images(seed, 6, size)


def test_psnr_oracle(rng):
    x = rng.uniform(size=(1, 8, 8))
    y = x + 0.01
    assert psnr(x, y) == pytest.approx(40.0, abs=1e-9)
    assert psnr(x, x) == 100.0
    with pytest.raises(ValueError):
        psnr(x, x[:, :4])


def _ssim_loop(a, b, size=11, sigma=1.5):
    # independent oracle: explicit windows with a normalized 2-d Gaussian
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    vals = []
    for i in range(a.shape[0] - size + 1):
        for j in range(a.shape[1] - size + 1):
            pa, pb = a[i:i + size, j:j + size], b[i:i + size, j:j + size]
            ma, mb = (g * pa).sum(), (g * pb).sum()
            va = (g * (pa - ma) ** 2).sum()
            vb = (g * (pb - mb) ** 2).sum()
            cov = (g * (pa - ma) * (pb - mb)).sum()
            vals.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def test_ssim_matches_loop_oracle(rng):
    a = rng.uniform(size=(16, 16))
    b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
    assert ssim(a[None], b[None]) == pytest.approx(_ssim_loop(a, b), abs=1e-10)
    assert ssim(a[None], a[None]) == pytest.approx(1.0)


def test_ssim_rgb_uses_luma(rng):
    img = rng.uniform(size=(3, 16, 16))
    luma = 0.299 * img[0] + 0.587 * img[1] + 0.114 * img[2]
    other = rng.uniform(size=(3, 16, 16))
    luma2 = 0.299 * other[0] + 0.587 * other[1] + 0.114 * other[2]
    assert ssim(img, other) == pytest.approx(_ssim_loop(luma, luma2), abs=1e-10)


def test_ssim_rejects_small_images():
    with pytest.raises(ValueError):
        ssim(np.zeros((1, 8, 8)), np.zeros((1, 8, 8)))


def test_pdist_basic_properties(rng):
    x, y = _textured()[:2]
    assert pdist(x, x) == 0.0
    assert pdist(x, y) > 0
    assert pdist(x, y) == pytest.approx(pdist(y, x), rel=1e-6)
    assert pdist(x, y) == pdist(x.copy(), y.copy())


def test_pdist_penalizes_blur_more_than_noise_at_matched_mse():
    worse = 0
    for img in _textured(1):
        blurred = ndimage.gaussian_filter(img[0], 1.0)[None]
        mse = np.mean((blurred - img) ** 2)
        noisy = img + np.random.default_rng(0).normal(0, math.sqrt(mse), img.shape)
        assert np.mean((noisy - img) ** 2) == pytest.approx(mse, rel=0.15)
        worse += pdist(img, blurred) > pdist(img, noisy)
    assert worse == 6


def test_pdist_gradients(rng):
    x = rng.uniform(size=(1, 1, 16, 16))
    y = rng.uniform(size=(1, 1, 16, 16))
    assert gradcheck(lambda a: pdist_tensor(Tensor(x, dtype=np.float64), a), [y]) < 1e-3


def _curve(rates, quality, field="psnr_db"):
    return RDCurve("c", [RDPoint(bpp=r, psnr_db=q, ssim=0.9, pdist=0.1) if field == "psnr_db"
                         else RDPoint(bpp=r, psnr_db=30, ssim=0.9, pdist=q) for r, q in zip(rates, quality)])


def _trapezoid_bd(ra, qa, rb, qb, n=2001):
    # oracle: piecewise-linear log-rate curves integrated on a dense grid
    lo, hi = max(min(qa), min(qb)), min(max(qa), max(qb))
    grid = np.linspace(lo, hi, n)
    la = np.interp(grid, qa, np.log(ra))
    lb = np.interp(grid, qb, np.log(rb))
    return 100 * (math.exp(np.trapezoid(lb - la, grid) / (hi - lo)) - 1)


RATES = np.array([0.2, 0.4, 0.7, 1.1])
QUAL = np.array([26.0, 29.0, 31.5, 33.0])


def test_bd_identical_curves_is_zero():
    assert bd_rate(_curve(RATES, QUAL), _curve(RATES, QUAL)) == pytest.approx(0.0, abs=1e-9)


def test_bd_doubled_rate_is_plus_100():
    value = bd_rate_arrays(RATES, QUAL, 2 * RATES, QUAL)
    assert value == pytest.approx(_trapezoid_bd(RATES, QUAL, 2 * RATES, QUAL), abs=0.5)
    assert value == pytest.approx(100.0, abs=1e-6)


@given(st.floats(0.3, 3.0), st.floats(-1.0, 1.0))
def test_bd_reciprocal_consistency(scale, shift):
    rb = RATES * scale
    qb = QUAL + shift
    ab = bd_rate_arrays(RATES, QUAL, rb, qb)
    ba = bd_rate_arrays(rb, qb, RATES, QUAL)
    assert (1 + ab / 100) * (1 + ba / 100) == pytest.approx(1.0, abs=1e-3)
    assert abs(ba - (100 / (1 + ab / 100) - 100)) < 0.1


def test_bd_close_to_trapezoid_on_smooth_curves():
    q = np.array([25.0, 28.0, 31.0, 34.0])
    ra = np.exp((q - 20) / 8)
    rb = np.exp((q - 20.5) / 8)
    assert bd_rate_arrays(ra, q, rb, q) == pytest.approx(_trapezoid_bd(ra, q, rb, q), abs=0.5)


def test_bd_lower_is_better_quality_field():
    ra = RATES
    pd = np.array([0.4, 0.3, 0.22, 0.18])
    value = bd_rate(_curve(ra, pd, "pdist"), _curve(ra * 0.8, pd, "pdist"), "pdist")
    assert value == pytest.approx(-20.0, abs=1e-6)


def test_bd_errors():
    with pytest.raises(ValueError):
        bd_rate_arrays(RATES[:3], QUAL[:3], RATES[:3], QUAL[:3])
    with pytest.raises(ValueError):
        bd_rate_arrays(RATES, QUAL, RATES, QUAL + 100)
    with pytest.raises(ValueError):
        bd_rate_arrays(RATES, [26, 29, 28, 33], RATES, QUAL)
    with pytest.raises(ValueError):
        RDCurve("bad", [RDPoint(0.5, 30, 0.9, 0.1), RDPoint(0.5, 31, 0.9, 0.1)])


def test_csv_round_trip():
    pts = [RDPoint(0.51234567891234, 28.1, 0.91, 0.2, tau=0.3, beta=0.008, label="fusion", seed=2, steps=10),
           RDPoint(0.7, 30.0, 0.95, 0.1, tau=1.0, beta=0.01, label="variant1", seed=0, steps=0)]
    text = points_to_csv(pts)
    assert text.splitlines()[0] == "label,beta,tau,bpp,psnr_db,ssim,pdist,seed,steps"
    back = points_from_csv(text)
    assert back[1] == pts[1]
    assert back[0].bpp == pytest.approx(pts[0].bpp, abs=1e-10)
    assert points_to_csv(back) == text


def test_csv_errors_name_the_row():
    with pytest.raises(CSVFormatError, match="row 0"):
        points_from_csv("")
    with pytest.raises(CSVFormatError, match="row 2"):
        points_from_csv("label,beta,tau,bpp,psnr_db,ssim,pdist,seed\n")
    with pytest.raises(CSVFormatError, match="row 3"):
        points_from_csv("label,beta,tau,bpp,psnr_db,ssim,pdist,seed\nx,1,0,1,1,1,1,0\nx,1,0,oops,1,1,1,0\n")
