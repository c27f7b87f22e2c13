"""Neural building blocks on top of :mod:`alf.autodiff`."""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

LEAKY_SLOPE = 0.2


def parameter(data):
    return Tensor(np.asarray(data, dtype=ad.DEFAULT_DTYPE), requires_grad=True)


def kaiming_uniform(rng, shape, fan_in, slope=LEAKY_SLOPE):
    gain = math.sqrt(2.0 / (1.0 + slope * slope))
    bound = gain * math.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(ad.DEFAULT_DTYPE)


class Module:
    """Container that discovers parameters through its attributes."""

    def named_parameters(self, prefix=""):
        for key, value in self.__dict__.items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self):
        """Trainable tensors only; frozen ones still appear in ``state_dict``."""
        return [p for _, p in self.named_parameters() if p.requires_grad]

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state, strict=True):
        own = dict(self.named_parameters())
        if strict:
            missing = set(own) - set(state)
            extra = set(state) - set(own)
            if missing or extra:
                raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, p in own.items():
            if name not in state:
                continue
            arr = np.asarray(state[name], dtype=p.dtype)
            if arr.shape != p.shape:
                raise ad.ShapeError(f"{name}: expected {p.shape}, got {arr.shape}")
            p.data = arr.copy()

    def zero_grad(self):
        for _, p in self.named_parameters():
            p.grad = None

    def freeze(self):
        for _, p in self.named_parameters():
            p.requires_grad = False
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Conv2d(Module):
    def __init__(self, cin, cout, k, stride=1, padding=None, rng=None, zero_init=False):
        rng = rng or np.random.default_rng(0)
        self.stride = stride
        self.padding = (k - 1) // 2 if padding is None else padding
        shape = (cout, cin, k, k)
        w = np.zeros(shape, ad.DEFAULT_DTYPE) if zero_init else kaiming_uniform(rng, shape, cin * k * k)
        self.weight = parameter(w)
        self.bias = parameter(np.zeros(cout))

    def forward(self, x):
        return ad.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose2d(Module):
    def __init__(self, cin, cout, k, stride=1, padding=0, rng=None):
        rng = rng or np.random.default_rng(0)
        self.stride = stride
        self.padding = padding
        # each output pixel sees about cin*k*k/stride^2 taps
        fan_in = max(1, cin * k * k // (stride * stride))
        self.weight = parameter(kaiming_uniform(rng, (cin, cout, k, k), fan_in))
        self.bias = parameter(np.zeros(cout))

    def forward(self, x):
        return ad.conv2d_transpose(x, self.weight, self.bias, self.stride, self.padding)


class Dense(Module):
    def __init__(self, cin, cout, rng=None, zero_init=False):
        rng = rng or np.random.default_rng(0)
        w = np.zeros((cin, cout), ad.DEFAULT_DTYPE) if zero_init else kaiming_uniform(rng, (cin, cout), cin)
        self.weight = parameter(w)
        self.bias = parameter(np.zeros(cout))

    def forward(self, x):
        return x @ self.weight + self.bias


class GroupNorm(Module):
    def __init__(self, channels, groups=4, eps=1e-5):
        if channels % groups:
            raise ad.ShapeError(f"{channels} channels not divisible into {groups} groups")
        self.groups = groups
        self.eps = eps
        self.gamma = parameter(np.ones(channels))
        self.beta = parameter(np.zeros(channels))

    def forward(self, x):
        n, c, h, w = x.shape
        g = x.reshape(n, self.groups, c // self.groups * h * w)
        mu = g.mean(axis=2, keepdims=True)
        centered = g - mu
        var = ad.square(centered).mean(axis=2, keepdims=True)
        normed = centered / ad.sqrt(var + self.eps)
        normed = normed.reshape(n, c, h, w)
        return normed * self.gamma.reshape(1, c, 1, 1) + self.beta.reshape(1, c, 1, 1)


def sinusoidal_embedding(t_frac, dim=32, scale=1000.0):
    """Embed noise levels in [0, 1] as [sin, cos] features; returns [N, dim]."""
    t = np.atleast_1d(np.asarray(t_frac, dtype=np.float64)) * scale
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    args = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1).astype(ad.DEFAULT_DTYPE)


class TimeEmbedding(Module):
    """Sinusoidal features of t/T followed by two dense layers."""

    def __init__(self, dim, channels, rng):
        self.dim = dim
        self.fc1 = Dense(dim, channels, rng)
        self.fc2 = Dense(channels, channels, rng)

    def forward(self, t_frac):
        e = Tensor(sinusoidal_embedding(t_frac, self.dim))
        return self.fc2(ad.leaky_relu(self.fc1(e), LEAKY_SLOPE))


class ResBlock(Module):
    """``x + conv(lrelu(conv(norm(x) + proj(t))))``, identity at init."""

    def __init__(self, channels, temb_channels, rng, groups=4):
        self.norm = GroupNorm(channels, groups)
        self.proj = Dense(temb_channels, channels, rng) if temb_channels else None
        self.conv1 = Conv2d(channels, channels, 3, rng=rng)
        self.conv2 = Conv2d(channels, channels, 3, rng=rng, zero_init=True)

    def forward(self, x, temb=None):
        h = self.norm(x)
        if self.proj is not None and temb is not None:
            t = self.proj(temb)
            h = h + t.reshape(t.shape[0], t.shape[1], 1, 1)
        h = self.conv2(ad.leaky_relu(self.conv1(h), LEAKY_SLOPE))
        return x + h


class AttentionBlock(Module):
    """Single-head self-attention over spatial positions, with residual."""

    def __init__(self, channels, rng, groups=4):
        self.channels = channels
        self.norm = GroupNorm(channels, groups)
        self.q = Dense(channels, channels, rng)
        self.k = Dense(channels, channels, rng)
        self.v = Dense(channels, channels, rng)

    def _tokens(self, x):
        n, c, h, w = x.shape
        return self.norm(x).reshape(n, c, h * w).transpose(0, 2, 1)

    def weights(self, x):
        tok = self._tokens(x)
        scores = (self.q(tok) @ self.k(tok).transpose(0, 2, 1)) * (1.0 / math.sqrt(self.channels))
        return ad.softmax(scores, axis=-1)

    def value_projection(self, x):
        return self.v(self._tokens(x))

    def forward(self, x):
        n, c, h, w = x.shape
        tok = self._tokens(x)
        scores = (self.q(tok) @ self.k(tok).transpose(0, 2, 1)) * (1.0 / math.sqrt(c))
        attn = ad.softmax(scores, axis=-1)
        out = attn @ self.v(tok)
        return x + out.transpose(0, 2, 1).reshape(n, c, h, w)


class Unit(Module):
    """Two time-aware residual blocks followed by attention."""

    def __init__(self, channels, temb_channels, rng, groups=4):
        self.blocks = [ResBlock(channels, temb_channels, rng, groups),
                       ResBlock(channels, temb_channels, rng, groups)]
        self.attn = AttentionBlock(channels, rng, groups)

    def forward(self, x, temb=None):
        for b in self.blocks:
            x = b(x, temb)
        return self.attn(x)
