"""Analysis/synthesis transforms, quantizer and the frozen base codec."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import asdict, dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import ShapeError, Tensor
from ..nn import LEAKY_SLOPE, Conv2d, ConvTranspose2d, Module
from .bitstream import Bitstream, BitstreamError
from .checkpoint import ModelCheckpoint
from .entropy import SUPPORT_MAX, SUPPORT_MIN, GaussianEntropyModel
from .rangecoder import range_decode, range_encode

log = logging.getLogger(__name__)

BASE_PREFIXES = ("g_a.", "g_s.", "entropy.")
# fixed gain between transform units and latent units; keeps the initial
# latent spread well above the +-0.5 quantization noise
LATENT_GAIN = 8.0


@dataclass
class CodecConfig:
    latent_channels: int = 32
    hidden_channels: int = 32
    num_downsamples: int = 3
    image_channels: int = 1
    beta: float = 0.1
    loss_kind: str = "distortion"

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.loss_kind not in ("distortion", "perception"):
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")
        if self.num_downsamples < 1:
            raise ValueError("need at least one downsampling stage")

    def check_image_shape(self, shape):
        c, h, w = shape[-3:]
        f = 2 ** self.num_downsamples
        if h % f or w % f:
            raise ShapeError(f"image side lengths {h}x{w} not divisible by {f}")
        if c != self.image_channels:
            raise ShapeError(f"expected {self.image_channels} image channels, got {c}")

    def latent_shape(self, image_shape):
        self.check_image_shape(image_shape)
        f = 2 ** self.num_downsamples
        return (self.latent_channels, image_shape[-2] // f, image_shape[-1] // f)

    def to_dict(self):
        return asdict(self)


class AnalysisTransform(Module):
    """Stack of stride-2 3x3 convolutions with leaky-ReLU between them."""

    def __init__(self, config, rng):
        chans = [config.image_channels] + [config.hidden_channels] * (config.num_downsamples - 1)
        chans.append(config.latent_channels)
        self.layers = [Conv2d(a, b, 3, stride=2, padding=1, rng=rng) for a, b in zip(chans, chans[1:])]

    def forward(self, x):
        h = x - 0.5
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if i + 1 < len(self.layers):
                h = ad.leaky_relu(h, LEAKY_SLOPE)
        return h * LATENT_GAIN


class SynthesisTransform(Module):
    """Mirror of the analysis transform using 4x4 stride-2 transposed convs."""

    def __init__(self, config, rng):
        chans = [config.latent_channels] + [config.hidden_channels] * (config.num_downsamples - 1)
        chans.append(config.image_channels)
        self.layers = [ConvTranspose2d(a, b, 4, stride=2, padding=1, rng=rng)
                       for a, b in zip(chans, chans[1:])]

    def forward(self, y):
        h = y * (1.0 / LATENT_GAIN)
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if i + 1 < len(self.layers):
                h = ad.leaky_relu(h, LEAKY_SLOPE)
        return h + 0.5


def round_half_away(a):
    a = np.asarray(a)
    return np.sign(a) * np.floor(np.abs(a) + 0.5)


def quantize(y, mode="eval", rng=None):
    """``eval``: round half away from zero, identity gradient.
    ``train``: add Uniform(-0.5, 0.5) noise."""
    if mode == "eval":
        return ad.round_ste(y)
    if mode == "train":
        if rng is None:
            raise ValueError("train-mode quantization needs an rng")
        u = rng.uniform(-0.5, 0.5, size=y.shape).astype(y.dtype)
        return y + Tensor(u)
    raise ValueError(f"unknown quantization mode {mode!r}")


def _batched(x):
    x = ad.as_tensor(x)
    if x.ndim == 3:
        return x.reshape((1,) + x.shape), True
    return x, False


class BaseCodec:
    """g_a, g_s and the entropy model, with bitstream encode/decode."""

    def __init__(self, config, seed=0):
        self.config = config
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.g_a = AnalysisTransform(config, rng)
        self.g_s = SynthesisTransform(config, rng)
        self.entropy = GaussianEntropyModel(config.latent_channels)
        self._table = None

    # -- parameters ---------------------------------------------------------
    def modules(self):
        return {"g_a": self.g_a, "g_s": self.g_s, "entropy": self.entropy}

    def parameters(self):
        return [p for m in self.modules().values() for p in m.parameters()]

    def tensors(self):
        return {f"{prefix}.{name}": arr for prefix, m in self.modules().items()
                for name, arr in m.state_dict().items()}

    def to_checkpoint(self, **extra_meta):
        meta = {"config": self.config.to_dict(), "seed": self.seed, "kind": "base"}
        meta.update(extra_meta)
        return ModelCheckpoint(self.tensors(), meta)

    @classmethod
    def from_checkpoint(cls, ckpt):
        codec = cls(CodecConfig(**ckpt.metadata["config"]), ckpt.metadata.get("seed", 0))
        for prefix, m in codec.modules().items():
            m.load_state_dict(ckpt.subset(prefix + "."))
        return codec

    def freeze(self):
        for m in self.modules().values():
            m.freeze()
        self._table = None

    def model_hash(self):
        h = hashlib.sha256()
        for name, arr in sorted(self.tensors().items()):
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr, "<f4").tobytes())
        return h.digest()[:8]

    # -- transforms ---------------------------------------------------------
    def analysis(self, x):
        x, single = _batched(x)
        self.config.check_image_shape(x.shape)
        y = self.g_a(x)
        return y.reshape(y.shape[1:]) if single else y

    def synthesis(self, y_hat):
        y_hat, single = _batched(y_hat)
        if y_hat.shape[1] != self.config.latent_channels:
            raise ShapeError(f"latent has {y_hat.shape[1]} channels, codec expects "
                             f"{self.config.latent_channels}")
        x = self.g_s(y_hat)
        return x.reshape(x.shape[1:]) if single else x

    # -- coding -------------------------------------------------------------
    def cdf_table(self):
        if self._table is None:
            self._table = self.entropy.cdf_table()
        return self._table

    def latent_symbols(self, image):
        """Eval-mode quantized latent of one image ``[C, H, W]`` as int64."""
        with ad.no_grad():
            y = self.analysis(Tensor(np.asarray(image, np.float32)))
        return round_half_away(y.data).astype(np.int64)

    def encode_symbols(self, symbols):
        symbols = np.asarray(symbols, np.int64)
        outliers = (symbols < SUPPORT_MIN) | (symbols > SUPPORT_MAX)
        if outliers.any():
            log.warning("%d latent symbols outside [%d, %d] use the escape code",
                        int(outliers.sum()), SUPPORT_MIN, SUPPORT_MAX)
        payload = range_encode(symbols, self.cdf_table())
        return Bitstream(tuple(symbols.shape), self.model_hash(), payload)

    def encode(self, image):
        return self.encode_symbols(self.latent_symbols(image))

    def decode_latent(self, stream):
        if isinstance(stream, (bytes, bytearray)):
            stream = Bitstream.from_bytes(stream)
        if stream.model_hash != self.model_hash():
            raise BitstreamError("bitstream was produced by a different base checkpoint")
        if stream.latent_shape[0] != self.config.latent_channels:
            raise BitstreamError("latent channel count does not match the codec")
        symbols = range_decode(stream.payload, self.cdf_table(), tuple(stream.latent_shape))
        return symbols.astype(np.float32)

    def decode(self, stream):
        """Plain base-codec reconstruction, clamped to [0, 1]."""
        y_hat = self.decode_latent(stream)
        with ad.no_grad():
            x = self.synthesis(Tensor(y_hat))
        return np.clip(x.data, 0.0, 1.0)
