"""Training of the auxiliary encoder, the fusion denoiser and the translator ablation."""

from __future__ import annotations

import logging

import numpy as np

from .. import autodiff as ad
from ..autodiff import ShapeError, Tensor
from ..codec.checkpoint import CheckpointError, ModelCheckpoint
from ..codec.model import AnalysisTransform, BaseCodec, quantize, round_half_away
from ..codec.train import batches, ensure_finite
from ..metrics import pdist_tensor
from ..optim import AdamW
from .denoiser import Denoiser, DenoiserConfig, Translator
from .schedule import make_schedule

log = logging.getLogger(__name__)

DEFAULT_LR = 5e-5


class FrozenBaseError(RuntimeError):
    """The base codec changed during a stage that must leave it untouched."""


def as_codec(base):
    return BaseCodec.from_checkpoint(base) if isinstance(base, ModelCheckpoint) else base


def _prepare(codec, images):
    images = np.asarray(images, np.float32)
    if len(images) == 0:
        raise ValueError("dataset is empty")
    codec.config.check_image_shape(images.shape[1:])
    codec.freeze()
    return images


def _check_unchanged(codec, before, stage):
    if codec.model_hash() != before:
        raise FrozenBaseError(f"{stage}: base codec weights changed during training")


# -- auxiliary encoder ---------------------------------------------------------

def new_aux_encoder(codec):
    """Encoder with g_a's architecture, initialized from its weights."""
    aux = AnalysisTransform(codec.config, np.random.default_rng(0))
    aux.load_state_dict(codec.g_a.state_dict())
    return aux


def train_aux_encoder(base, images, steps, seed=0, lr=DEFAULT_LR, batch_size=8, log_every=0):
    """Fit g'_a so that g_s(Q(g'_a(x))) minimizes P-dist, with g_s frozen.

    Returns ``(aux_encoder, history)`` with one loss value per step.
    """
    codec = as_codec(base)
    images = _prepare(codec, images)
    before = codec.model_hash()
    aux = new_aux_encoder(codec)
    rng = np.random.default_rng([seed, 1])
    opt = AdamW(aux.parameters(), lr=lr)
    stream = batches(images, min(batch_size, len(images)), rng)
    history = []
    for step in range(steps):
        x = Tensor(next(stream))
        y = quantize(aux(x), "train", rng)
        loss = pdist_tensor(x, codec.g_s(y))
        ensure_finite(loss.item(), step, "train_aux_encoder")
        opt.zero_grad()
        ad.backward(loss, opt.params)
        opt.step()
        history.append(loss.item())
        if log_every and step % log_every == 0:
            log.info("aux step %d pdist %.4f", step, history[-1])
    _check_unchanged(codec, before, "train_aux_encoder")
    return aux, np.array(history, dtype=np.float64)


def aux_checkpoint(aux, codec):
    tensors = {f"aux_encoder.{k}": v for k, v in aux.state_dict().items()}
    meta = {"kind": "aux_encoder", "config": codec.config.to_dict(),
            "base_hash": codec.model_hash().hex()}
    return ModelCheckpoint(tensors, meta)


def load_aux_encoder(ckpt, codec):
    if ckpt.metadata.get("base_hash") != codec.model_hash().hex():
        raise CheckpointError("auxiliary encoder was trained against a different base codec")
    aux = AnalysisTransform(codec.config, np.random.default_rng(0))
    aux.load_state_dict(ckpt.subset("aux_encoder."))
    return aux


# -- fusion denoiser -----------------------------------------------------------

def fusion_loss(model, codec, x, y_bar, y_t, y_hat, t_frac, lam):
    """``lam * mean((y_bar - D)^2) + P-dist(x, g_s(D))`` and its two terms."""
    d = model(y_t, y_hat, t_frac)
    if d.shape != y_bar.shape:
        raise ShapeError(f"denoiser output {d.shape} does not match the target {y_bar.shape}")
    latent = ad.square(y_bar - d).mean()
    recon = pdist_tensor(x, codec.g_s(d))
    return latent * lam + recon, latent, recon


def train_fusion(base, aux, images, lam=1.0, steps=1000, schedule=None, seed=0,
                 lr=DEFAULT_LR, batch_size=8, config=None, log_every=0):
    """Train D on ``(noisy y_hat, y_hat, t/T) -> y_bar``.

    ``y_hat`` is the eval-mode quantized base latent and ``y_bar`` the
    noise-quantized auxiliary latent.  t and the noise are drawn per sample.
    Returns ``(denoiser, history)``; history rows are ``(loss, latent, recon)``.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    codec = as_codec(base)
    images = _prepare(codec, images)
    before = codec.model_hash()
    schedule = schedule or make_schedule()
    config = config or DenoiserConfig(latent_channels=codec.config.latent_channels)
    if config.latent_channels != codec.config.latent_channels:
        raise ShapeError("denoiser and codec latent channel counts differ")
    model = Denoiser(config, seed)
    rng = np.random.default_rng([seed, 2])
    opt = AdamW(model.parameters(), lr=lr)
    stream = batches(images, min(batch_size, len(images)), rng)
    history = []
    for step in range(steps):
        xb = next(stream)
        x = Tensor(xb)
        with ad.no_grad():
            y_hat = round_half_away(codec.g_a(x).data).astype(np.float32)
            y_bar = quantize(aux(x), "train", rng).data
        n = len(xb)
        t = rng.integers(1, schedule.T + 1, size=n)
        eps = rng.standard_normal(y_hat.shape)
        a = schedule.alphas[t].reshape(n, 1, 1, 1)
        y_t = (np.sqrt(a) * y_hat + np.sqrt(1.0 - a) * eps).astype(np.float32)
        loss, latent, recon = fusion_loss(model, codec, x, Tensor(y_bar), Tensor(y_t),
                                          Tensor(y_hat), t / schedule.T, lam)
        ensure_finite(loss.item(), step, "train_fusion", latent=latent.item(), recon=recon.item())
        opt.zero_grad()
        ad.backward(loss, opt.params)
        opt.step()
        history.append((loss.item(), latent.item(), recon.item()))
        if log_every and step % log_every == 0:
            log.info("fusion step %d loss %.4f latent %.4f recon %.4f", step, *history[-1])
    _check_unchanged(codec, before, "train_fusion")
    return model, np.array(history, dtype=np.float64).reshape(-1, 3)


def denoiser_checkpoint(model, schedule, codec, lam, aux_hash=""):
    tensors = {f"denoiser.{k}": v for k, v in model.state_dict().items()}
    meta = {"kind": "denoiser", "config": model.config.to_dict(), "schedule": schedule.to_dict(),
            "lambda": lam, "base_hash": codec.model_hash().hex(), "aux_hash": aux_hash}
    return ModelCheckpoint(tensors, meta)


def load_denoiser(ckpt, codec=None):
    """Rebuild ``(denoiser, schedule)``; checks the base hash when a codec is given."""
    meta = ckpt.metadata
    if meta.get("kind") != "denoiser":
        raise CheckpointError("not a denoiser checkpoint")
    if codec is not None and meta.get("base_hash") != codec.model_hash().hex():
        raise CheckpointError("denoiser was trained against a different base codec")
    model = Denoiser(DenoiserConfig(**meta["config"]))
    model.load_state_dict(ckpt.subset("denoiser."))
    return model, make_schedule(**meta["schedule"])


# -- translator ablation -------------------------------------------------------

def train_variant1(base, images, steps, seed=0, lr=DEFAULT_LR, batch_size=8, config=None, log_every=0):
    """Train the no-diffusion translator with the reconstruction term only."""
    codec = as_codec(base)
    images = _prepare(codec, images)
    before = codec.model_hash()
    config = config or DenoiserConfig(latent_channels=codec.config.latent_channels)
    model = Translator(config, seed)
    rng = np.random.default_rng([seed, 3])
    opt = AdamW(model.parameters(), lr=lr)
    stream = batches(images, min(batch_size, len(images)), rng)
    history = []
    for step in range(steps):
        x = Tensor(next(stream))
        with ad.no_grad():
            y_hat = round_half_away(codec.g_a(x).data).astype(np.float32)
        loss = pdist_tensor(x, codec.g_s(model(Tensor(y_hat))))
        ensure_finite(loss.item(), step, "train_variant1")
        opt.zero_grad()
        ad.backward(loss, opt.params)
        opt.step()
        history.append(loss.item())
        if log_every and step % log_every == 0:
            log.info("variant1 step %d pdist %.4f", step, history[-1])
    _check_unchanged(codec, before, "train_variant1")
    return model, np.array(history, dtype=np.float64)


def translate_variant1(y_hat, model):
    """One forward pass; accepts ``[C, H, W]`` or ``[N, C, H, W]``."""
    y_hat = np.asarray(y_hat, np.float32)
    single = y_hat.ndim == 3
    with ad.no_grad():
        out = model(Tensor(y_hat[None] if single else y_hat)).data
    return out[0] if single else out


def translator_checkpoint(model, codec):
    tensors = {f"translator.{k}": v for k, v in model.state_dict().items()}
    meta = {"kind": "translator", "config": model.config.to_dict(), "base_hash": codec.model_hash().hex()}
    return ModelCheckpoint(tensors, meta)


def load_translator(ckpt, codec=None):
    meta = ckpt.metadata
    if codec is not None and meta.get("base_hash") != codec.model_hash().hex():
        raise CheckpointError("translator was trained against a different base codec")
    model = Translator(DenoiserConfig(**meta["config"]))
    model.load_state_dict(ckpt.subset("translator."))
    return model
