"""Noise schedule and the closed-form diffusion algebra."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear betas; ``alphas[t]`` is the cumulative product up to t, with alphas[0] = 1."""

    betas: np.ndarray
    alphas: np.ndarray

    @property
    def T(self):
        return len(self.betas)

    def alpha(self, t):
        if not 0 <= t <= self.T:
            raise ValueError(f"timestep {t} outside [0, {self.T}]")
        return float(self.alphas[t])

    def to_dict(self):
        return {"T_train": self.T, "beta_min": float(self.betas[0]), "beta_max": float(self.betas[-1])}


def schedule_from_betas(betas):
    betas = np.asarray(betas, dtype=np.float64)
    if betas.ndim != 1 or betas.size < 1:
        raise ValueError("need at least one beta")
    if ((betas <= 0) | (betas >= 1)).any():
        raise ValueError("betas must lie in (0, 1)")
    alphas = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return NoiseSchedule(betas, alphas)


def make_schedule(T_train=1000, beta_min=1e-4, beta_max=0.02):
    if T_train < 1:
        raise ValueError("T_train must be >= 1")
    if not 0 < beta_min < beta_max < 1:
        raise ValueError("need 0 < beta_min < beta_max < 1")
    return schedule_from_betas(np.linspace(beta_min, beta_max, T_train))


def forward_noise(y_hat, t, eps, schedule):
    """``sqrt(a_t) * y_hat + sqrt(1 - a_t) * eps`` (numpy or Tensor operands)."""
    if np.shape(eps) != np.shape(y_hat):
        raise ValueError("noise and latent shapes differ")
    a = schedule.alpha(t)
    return y_hat * math.sqrt(a) + eps * math.sqrt(1.0 - a)


def predict_noise(y_t, d_out, t, schedule):
    """Noise implied by a clean-latent prediction: ``(y_t - sqrt(a_t) D) / sqrt(1 - a_t)``."""
    if t < 1:
        raise ValueError("predict_noise is undefined at t = 0 (alpha = 1)")
    a = schedule.alpha(t)
    return (np.asarray(y_t, np.float64) - math.sqrt(a) * np.asarray(d_out, np.float64)) / math.sqrt(1.0 - a)


def fused_update(y_t, y_hat, d_out, t, t_prev, tau, schedule):
    """One tau-weighted DDIM update given the network output ``d_out``.

    With ``w = tau**2``::

        y_prev = sqrt(a_prev) * ((1 - w) * D + w * y_hat)
                 + (1 - w) * sqrt(1 - a_prev) * eps_hat

    ``tau = 0`` is the plain deterministic DDIM step; ``tau = 1`` returns
    ``sqrt(a_prev) * y_hat``.
    """
    if not t > t_prev >= 0:
        raise ValueError(f"need t > t_prev >= 0, got t={t}, t_prev={t_prev}")
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    w = tau * tau
    a_prev = schedule.alpha(t_prev)
    eps_hat = predict_noise(y_t, d_out, t, schedule)
    y_hat = np.asarray(y_hat, np.float64)
    mix = (1.0 - w) * np.asarray(d_out, np.float64) + w * y_hat
    return math.sqrt(a_prev) * mix + (1.0 - w) * math.sqrt(1.0 - a_prev) * eps_hat


def ancestral_step(x_t, eps_hat, t, schedule, sigma_t=0.0, rng=None):
    """DDPM ancestral update using the per-step ``beta_t`` and cumulative ``alphas[t]``."""
    if t < 1:
        raise ValueError("ancestral_step needs t >= 1")
    beta = float(schedule.betas[t - 1])
    a_bar = schedule.alpha(t)
    x_t = np.asarray(x_t, np.float64)
    out = (x_t - (beta / math.sqrt(1.0 - a_bar)) * np.asarray(eps_hat, np.float64)) / math.sqrt(1.0 - beta)
    if sigma_t:
        if rng is None:
            raise ValueError("sigma_t > 0 needs an rng")
        out = out + sigma_t * rng.standard_normal(x_t.shape)
    return out


def timestep_grid(steps, T_train):
    """``steps + 1`` evenly spaced integers from T_train down to 0."""
    if not 1 <= steps <= T_train:
        raise ValueError(f"steps must lie in [1, {T_train}]")
    return [int(v) for v in np.round(np.linspace(T_train, 0, steps + 1))]
