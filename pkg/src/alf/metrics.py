"""Distortion, perception and Bjontegaard-delta measurements.

Images are float arrays in [0, 1] shaped ``[C, H, W]`` or ``[N, C, H, W]``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

PSNR_CAP_DB = 100.0
PDIST_SEED = 7177
PDIST_CHANNELS = (16, 32, 64)
CSV_COLUMNS = ("label", "beta", "tau", "bpp", "psnr_db", "ssim", "pdist", "seed", "steps")


def _check_same_shape(a, b):
    if np.shape(a) != np.shape(b):
        raise ValueError(f"shape mismatch: {np.shape(a)} vs {np.shape(b)}")


def psnr(x, y, peak=1.0):
    """PSNR in dB; identical inputs return ``PSNR_CAP_DB``."""
    _check_same_shape(x, y)
    mse = float(np.mean((np.asarray(x, np.float64) - np.asarray(y, np.float64)) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(peak * peak / mse))


# -- SSIM ----------------------------------------------------------------------

_LUMA = np.array([0.299, 0.587, 0.114])


def to_luma(img):
    img = np.asarray(img, np.float64)
    if img.ndim == 3 and img.shape[0] == 3:
        return np.tensordot(_LUMA, img, axes=(0, 0))
    if img.ndim == 3 and img.shape[0] == 1:
        return img[0]
    if img.ndim == 2:
        return img
    raise ValueError(f"expected [C,H,W] or [H,W] image, got {img.shape}")


def _gaussian_window(size=11, sigma=1.5):
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-r * r / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img, g):
    k = g.size
    rows = np.lib.stride_tricks.sliding_window_view(img, k, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=1) @ g


def ssim(x, y, peak=1.0, window=11, sigma=1.5, k1=0.01, k2=0.03):
    """Single-scale SSIM on luma with a Gaussian window (valid region only)."""
    _check_same_shape(x, y)
    a, b = to_luma(x), to_luma(y)
    if min(a.shape) < window:
        raise ValueError(f"image {a.shape} smaller than the {window}x{window} SSIM window")
    g = _gaussian_window(window, sigma)
    c1, c2 = (k1 * peak) ** 2, (k2 * peak) ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    saa = _filter_valid(a * a, g) - mu_a * mu_a
    sbb = _filter_valid(b * b, g) - mu_b * mu_b
    sab = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (saa + sbb + c2)
    return float(np.mean(num / den))


# -- P-dist perceptual proxy ---------------------------------------------------

class PDistNetwork:
    """Fixed random conv features: three stride-2 stages (16/32/64 channels).

    Kernels are Gaussian draws from a fixed seed, scaled to unit norm per
    output channel.
    """

    def __init__(self, in_channels=1, seed=PDIST_SEED, channels=PDIST_CHANNELS):
        rng = np.random.default_rng(seed)
        self.kernels = []
        cin = in_channels
        for cout in channels:
            w = rng.standard_normal((cout, cin, 3, 3))
            w /= np.sqrt((w * w).sum(axis=(1, 2, 3), keepdims=True))
            self.kernels.append(w.astype(np.float32))
            cin = cout

    def features(self, x):
        feats = []
        h = (x - 0.5) * 2.0
        for w in self.kernels:
            h = ad.leaky_relu(ad.conv2d(h, Tensor(w.astype(h.dtype)), stride=2, padding=1), 0.2)
            feats.append(h)
        return feats


_NETWORKS = {}
ENERGY_FLOOR = 1e-2
ENERGY_WINDOW = 3
STRUCTURE_WEIGHT = 0.5


def _network(in_channels):
    if in_channels not in _NETWORKS:
        _NETWORKS[in_channels] = PDistNetwork(in_channels)
    return _NETWORKS[in_channels]


def _local_energy(f):
    n, c, h, w = f.shape
    k = min(ENERGY_WINDOW, h, w)
    box = Tensor(np.full((1, 1, k, k), 1.0 / (k * k), dtype=f.dtype))
    e = ad.conv2d(ad.square(f).reshape(n * c, 1, h, w), box, padding=(k - 1) // 2)
    h, w = e.shape[2], e.shape[3]
    return e.reshape(n, c, h, w)


def pdist_tensor(x, y, reduce=True):
    """Differentiable P-dist between batches ``[N, C, H, W]``.

    Per stage, two terms are accumulated:

    * structure: squared difference of the features after dividing both by
      their shared per-position channel norm, summed over channels and
      averaged over positions;
    * texture energy: squared difference of log local (3x3) feature energy,
      averaged over channels and positions.  This is what makes a blurred
      copy score worse than a noisy copy of equal MSE.
    """
    x, y = ad.as_tensor(x), ad.as_tensor(y)
    _check_same_shape(x.data, y.data)
    net = _network(x.shape[1])
    total = None
    for fx, fy in zip(net.features(x), net.features(y)):
        sx = ad.tsum(ad.square(fx), axis=1, keepdims=True)
        sy = ad.tsum(ad.square(fy), axis=1, keepdims=True)
        norm = ad.sqrt((sx + sy) * 0.5 + 1e-6)
        structure = ad.tsum(ad.square((fx - fy) / norm), axis=1).mean(axis=(1, 2))
        ex = ad.log(_local_energy(fx) + ENERGY_FLOOR)
        ey = ad.log(_local_energy(fy) + ENERGY_FLOOR)
        energy = ad.square(ex - ey).mean(axis=(1, 2, 3))
        term = structure * STRUCTURE_WEIGHT + energy
        total = term if total is None else total + term
    return total.mean() if reduce else total


def pdist(x, y):
    """P-dist between two images (or batches) as a float; 0 for identical inputs."""
    _check_same_shape(x, y)
    x = np.asarray(x, np.float32)
    y = np.asarray(y, np.float32)
    if x.ndim == 3:
        x, y = x[None], y[None]
    with ad.no_grad():
        return float(pdist_tensor(Tensor(x), Tensor(y)).data)


# -- rate-quality curves -------------------------------------------------------

@dataclass
class RDPoint:
    bpp: float
    psnr_db: float
    ssim: float
    pdist: float
    tau: float = 1.0
    beta: float = 0.0
    label: str = ""
    seed: int = 0
    steps: int = 0

    def as_row(self):
        d = asdict(self)
        return [d[c] for c in CSV_COLUMNS]


@dataclass
class RDCurve:
    label: str
    points: list = field(default_factory=list)

    def __post_init__(self):
        self.points = sorted(self.points, key=lambda p: p.bpp)
        bpps = [p.bpp for p in self.points]
        if any(b <= 0 for b in bpps):
            raise ValueError("bpp must be positive")
        if any(b1 >= b2 for b1, b2 in zip(bpps, bpps[1:])):
            raise ValueError("bpp must be strictly increasing along a curve")

    def arrays(self, quality_field):
        rate = np.array([p.bpp for p in self.points], np.float64)
        quality = np.array([getattr(p, quality_field) for p in self.points], np.float64)
        return rate, quality


def _validate_curve(rate, quality):
    if rate.size < 4:
        raise ValueError("BD computation needs at least 4 points per curve")
    dq = np.diff(quality)
    if not ((dq > 0).all() or (dq < 0).all()):
        raise ValueError("quality must be strictly monotone in rate")


def bd_rate_arrays(rate_a, q_a, rate_b, q_b):
    """Bjontegaard delta rate of curve b against anchor a, in percent.

    Fits log-rate as a cubic in quality for each curve, integrates both over
    the overlapping quality interval and reports ``100 * (exp(mean diff) - 1)``.
    Negative means the test curve needs less rate.
    """
    rate_a, q_a, rate_b, q_b = (np.asarray(v, np.float64) for v in (rate_a, q_a, rate_b, q_b))
    _validate_curve(rate_a, q_a)
    _validate_curve(rate_b, q_b)
    lo = max(q_a.min(), q_b.min())
    hi = min(q_a.max(), q_b.max())
    if not hi > lo:
        raise ValueError("quality ranges do not overlap")
    pa = np.polyint(np.polyfit(q_a, np.log(rate_a), 3))
    pb = np.polyint(np.polyfit(q_b, np.log(rate_b), 3))
    ia = np.polyval(pa, hi) - np.polyval(pa, lo)
    ib = np.polyval(pb, hi) - np.polyval(pb, lo)
    return 100.0 * (math.exp((ib - ia) / (hi - lo)) - 1.0)


def bd_rate(anchor, test, quality_field="psnr_db"):
    ra, qa = anchor.arrays(quality_field)
    rb, qb = test.arrays(quality_field)
    return bd_rate_arrays(ra, qa, rb, qb)


# -- CSV -----------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return repr(round(v, 10))
    return str(v)


def points_to_csv(points):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for p in points:
        w.writerow([_fmt(v) for v in p.as_row()])
    return buf.getvalue()


class CSVFormatError(ValueError):
    pass


def points_from_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise CSVFormatError("row 0: empty CSV")
    header = rows[0]
    missing = [c for c in CSV_COLUMNS[:-1] if c not in header]
    if missing:
        raise CSVFormatError(f"row 1: missing columns {missing}")
    if len(rows) < 2:
        raise CSVFormatError("row 2: CSV has a header but no data rows")
    idx = {c: header.index(c) for c in header}
    points = []
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            get = lambda c: row[idx[c]]  # noqa: E731
            points.append(RDPoint(
                bpp=float(get("bpp")), psnr_db=float(get("psnr_db")), ssim=float(get("ssim")),
                pdist=float(get("pdist")), tau=float(get("tau")), beta=float(get("beta")),
                label=get("label"), seed=int(get("seed")),
                steps=int(get("steps")) if "steps" in idx else 0))
        except (ValueError, IndexError) as exc:
            raise CSVFormatError(f"row {lineno}: {exc}") from exc
    return points
