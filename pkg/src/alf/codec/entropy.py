"""Static per-channel discretized Gaussian entropy model."""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from .. import autodiff as ad
from ..autodiff import Tensor
from ..nn import Module, parameter
from .rangecoder import CdfTable

SUPPORT_MIN = -64
SUPPORT_MAX = 63
LIKELIHOOD_FLOOR = 1e-9
_SQRT_HALF = math.sqrt(0.5)


def gaussian_bucket_prob(symbols, means, scales):
    """P(symbol) for a Gaussian integrated over [s - 0.5, s + 0.5] (float64, numpy)."""
    d = np.abs(np.asarray(symbols, np.float64) - means)
    upper = special.erfc((d - 0.5) / scales * _SQRT_HALF)
    lower = special.erfc((d + 0.5) / scales * _SQRT_HALF)
    return 0.5 * (upper - lower)


def bucket_likelihood(y, means, scales):
    """Differentiable version of :func:`gaussian_bucket_prob` on Tensors.

    Uses the tail on the far side of the mean so that small probabilities
    keep their precision.
    """
    d = ad.absolute(y - means)
    inv = 1.0 / scales
    upper = ad.erfc((d - 0.5) * inv * _SQRT_HALF)
    lower = ad.erfc((d + 0.5) * inv * _SQRT_HALF)
    return ad.clamp_min((upper - lower) * 0.5, LIKELIHOOD_FLOOR)


class GaussianEntropyModel(Module):
    """One learned (mean, scale) pair per latent channel."""

    def __init__(self, channels, init_scale=4.0):
        self.channels = channels
        self.means = parameter(np.zeros(channels))
        # softplus parameterization keeps scales positive
        self.raw_scales = parameter(np.full(channels, math.log(math.expm1(init_scale))))

    def scales(self):
        return ad.softplus(self.raw_scales) + 1e-3

    def _broadcast(self, t, ndim):
        shape = (1, self.channels) + (1,) * (ndim - 2)
        return t.reshape(shape)

    def likelihood(self, y_hat):
        """Per-element probability of a batch ``[N, C, H, W]`` of (relaxed) symbols."""
        means = self._broadcast(self.means, y_hat.ndim)
        scales = self._broadcast(self.scales(), y_hat.ndim)
        return bucket_likelihood(y_hat, means, scales)

    def bits(self, y_hat):
        """Total bits as a scalar Tensor."""
        return ad.tsum(ad.log(self.likelihood(y_hat))) * (-1.0 / math.log(2.0))

    def snapshot(self):
        """Float64 (means, scales) used to build coding tables."""
        with ad.no_grad():
            scales = self.scales().data.astype(np.float64)
        return self.means.data.astype(np.float64), scales

    def cdf_table(self):
        return build_cdf_table(*self.snapshot())


def build_cdf_table(means, scales):
    if np.any(np.asarray(scales) <= 0):
        raise ValueError("entropy model scales must be positive")
    support = np.arange(SUPPORT_MIN, SUPPORT_MAX + 1, dtype=np.float64)
    pmf = gaussian_bucket_prob(support[None, :], np.asarray(means)[:, None], np.asarray(scales)[:, None])
    tail = np.clip(1.0 - pmf.sum(axis=1, keepdims=True), 1e-9, None)
    return CdfTable.from_pmf(np.concatenate([pmf, tail], axis=1), offset=SUPPORT_MIN, escape=True)


def rate_estimate(y_hat, means, scales):
    """Estimated bits for symbols ``y_hat`` of shape [C, ...] under per-channel Gaussians.

    Plain-numpy counterpart of :meth:`GaussianEntropyModel.bits`.
    """
    means = np.asarray(means, np.float64)
    scales = np.asarray(scales, np.float64)
    if not (np.isfinite(means).all() and np.isfinite(scales).all()):
        raise ValueError("entropy model parameters must be finite")
    if np.any(scales <= 0):
        raise ValueError("entropy model scales must be positive")
    y_hat = np.asarray(y_hat, np.float64)
    shape = (-1,) + (1,) * (y_hat.ndim - 1)
    p = gaussian_bucket_prob(y_hat, means.reshape(shape), scales.reshape(shape))
    return float(-np.log2(np.maximum(p, LIKELIHOOD_FLOOR)).sum())
