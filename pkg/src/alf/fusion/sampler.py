"""tau-controlled DDIM sampling and controllable decoding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..codec.bitstream import Bitstream
from .schedule import fused_update, timestep_grid


@dataclass
class SamplerConfig:
    steps: int = 10
    tau: float = 0.0
    seed: int = 0

    def validate(self, schedule):
        if not 1 <= self.steps <= schedule.T:
            raise ValueError(f"steps must lie in [1, {schedule.T}]")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")


def _predict(model, y_t, y_hat, t_frac):
    with ad.no_grad():
        return model(Tensor(y_t.astype(np.float32)), Tensor(y_hat.astype(np.float32)), t_frac).data


def ddim_step_tau(y_t, y_hat, t, t_prev, tau, model, schedule):
    """Evaluate D at (y_t, y_hat, t/T) and apply the tau-weighted DDIM update.

    Arrays are batched ``[N, C, H, W]``; the result is float64.
    """
    if not t > t_prev >= 0:
        raise ValueError(f"need t > t_prev >= 0, got t={t}, t_prev={t_prev}")
    d_out = _predict(model, np.asarray(y_t), np.asarray(y_hat), t / schedule.T)
    return fused_update(y_t, y_hat, d_out, t, t_prev, tau, schedule)


def initial_noise(shape, seed, index=None):
    """Standard normal start point; per-image streams are keyed by (seed, index)."""
    key = seed if index is None else [seed, index]
    return np.random.default_rng(key).standard_normal(shape)


def sample(y_hat, config, model, schedule, noise=None, trajectory=None):
    """Run the sampler from t = T down to 0 and return the fused latent y~_0.

    ``y_hat`` is ``[C, H, W]`` or ``[N, C, H, W]``.  Without ``noise`` the
    start point is drawn from ``config.seed``.  At tau = 1 the result equals
    ``y_hat`` exactly.
    """
    config.validate(schedule)
    y_hat = np.asarray(y_hat, np.float64)
    single = y_hat.ndim == 3
    if single:
        y_hat = y_hat[None]
    y = initial_noise(y_hat.shape, config.seed) if noise is None else np.asarray(noise, np.float64)
    if single and y.ndim == 3:
        y = y[None]
    if y.shape != y_hat.shape:
        raise ValueError("noise shape does not match the latent")
    grid = timestep_grid(config.steps, schedule.T)
    if trajectory is not None:
        trajectory.append(y.copy())
    for t, t_prev in zip(grid, grid[1:]):
        y = ddim_step_tau(y, y_hat, t, t_prev, config.tau, model, schedule)
        if trajectory is not None:
            trajectory.append(y.copy())
    y = y.astype(np.float32)
    return y[0] if single else y


@dataclass
class FusionDecoder:
    """Frozen base codec plus fusion network and schedule."""

    codec: object
    model: object
    schedule: object

    def reconstruct(self, latent):
        with ad.no_grad():
            x = self.codec.synthesis(Tensor(np.asarray(latent, np.float32)))
        return np.clip(x.data, 0.0, 1.0)


def decode_controlled(bitstream, tau, steps, seed, decoder):
    """Range-decode, fuse under ``tau`` and synthesize an image in [0, 1].

    The bitstream itself never depends on tau.
    """
    if isinstance(bitstream, (bytes, bytearray)):
        bitstream = Bitstream.from_bytes(bitstream)
    y_hat = decoder.codec.decode_latent(bitstream)
    y0 = sample(y_hat, SamplerConfig(steps=steps, tau=tau, seed=seed), decoder.model, decoder.schedule)
    return decoder.reconstruct(y0)
