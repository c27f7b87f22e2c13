"""Conditional latent denoiser D(y_t, y_hat, t/T) and the no-diffusion translator."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import ShapeError, Tensor
from ..nn import LEAKY_SLOPE, Conv2d, GroupNorm, Module, TimeEmbedding, Unit


@dataclass
class DenoiserConfig:
    latent_channels: int = 32
    channels: int = 64
    num_units: int = 2
    time_embed_dim: int = 32
    groups: int = 4

    def __post_init__(self):
        if self.num_units < 1:
            raise ValueError("need at least one unit")
        if self.channels < self.latent_channels:
            raise ValueError("channels must be >= latent_channels")

    def to_dict(self):
        return asdict(self)


class Denoiser(Module):
    """Predicts the transformed latent directly (not the noise).

    The condition ``y_hat`` runs through its own unit and is concatenated
    channelwise with the embedded noisy input; ``num_units`` units follow.
    The output is added to ``y_hat``, and the last conv starts at zero, so
    an untrained network returns the decoded latent unchanged.
    """

    def __init__(self, config, seed=0):
        self.config = config
        rng = np.random.default_rng(seed)
        c, lc, g = config.channels, config.latent_channels, config.groups
        self.time = TimeEmbedding(config.time_embed_dim, c, rng)
        self.cond_in = Conv2d(lc, c, 3, rng=rng)
        self.cond_unit = Unit(c, c, rng, g)
        self.noisy_in = Conv2d(lc, c, 3, rng=rng)
        self.merge = Conv2d(2 * c, c, 1, rng=rng)
        self.units = [Unit(c, c, rng, g) for _ in range(config.num_units)]
        self.out_norm = GroupNorm(c, g)
        self.out = Conv2d(c, lc, 3, rng=rng, zero_init=True)

    def forward(self, y_t, y_hat, t_frac):
        y_t, y_hat = ad.as_tensor(y_t), ad.as_tensor(y_hat)
        if y_t.shape != y_hat.shape:
            raise ShapeError(f"noisy latent {y_t.shape} and condition {y_hat.shape} differ")
        if y_hat.shape[1] != self.config.latent_channels:
            raise ShapeError(f"expected {self.config.latent_channels} latent channels, got {y_hat.shape[1]}")
        t_frac = np.broadcast_to(np.asarray(t_frac, np.float64), (y_t.shape[0],))
        temb = self.time(t_frac)
        cond = self.cond_unit(self.cond_in(y_hat), temb)
        h = self.merge(ad.concat([self.noisy_in(y_t), cond], axis=1))
        for unit in self.units:
            h = unit(h, temb)
        h = self.out(ad.leaky_relu(self.out_norm(h), LEAKY_SLOPE))
        return y_hat + h


class Translator(Module):
    """Feed-forward D-shaped network without noise input or time conditioning."""

    def __init__(self, config, seed=0):
        self.config = config
        rng = np.random.default_rng(seed)
        c, lc, g = config.channels, config.latent_channels, config.groups
        self.inp = Conv2d(lc, c, 3, rng=rng)
        self.units = [Unit(c, 0, rng, g) for _ in range(config.num_units + 1)]
        self.out_norm = GroupNorm(c, g)
        self.out = Conv2d(c, lc, 3, rng=rng, zero_init=True)

    def forward(self, y_hat):
        y_hat = ad.as_tensor(y_hat)
        h = self.inp(y_hat)
        for unit in self.units:
            h = unit(h)
        return y_hat + self.out(ad.leaky_relu(self.out_norm(h), LEAKY_SLOPE))


def denoiser_forward(y_t, y_hat, t_frac, model):
    """Single-latent convenience wrapper: ``[C, H, W]`` in, numpy ``[C, H, W]`` out."""
    with ad.no_grad():
        out = model(Tensor(np.asarray(y_t, np.float32)[None]),
                    Tensor(np.asarray(y_hat, np.float32)[None]), t_frac)
    return out.data[0]
