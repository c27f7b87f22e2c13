"""Rate-distortion training of the base codec."""

from __future__ import annotations

import logging
import math

import numpy as np

from .. import autodiff as ad
from ..autodiff import NumericAbort, Tensor
from ..metrics import pdist_tensor
from ..optim import AdamW
from .model import BaseCodec, quantize

log = logging.getLogger(__name__)

# distortion is measured in 8-bit pixel units so that beta in [0.01, 1] spans
# a useful rate range when the rate term is in bits per pixel
MSE_SCALE = 255.0 ** 2
PDIST_SCALE = 100.0


def reconstruction_loss(x, x_hat, kind):
    if kind == "distortion":
        return ad.square(x_hat - x).mean() * MSE_SCALE
    return pdist_tensor(x, x_hat) * PDIST_SCALE


def batches(images, batch_size, rng):
    """Endless stream of random minibatches drawn without replacement per epoch."""
    n = len(images)
    while True:
        order = rng.permutation(n)
        for i in range(0, n - batch_size + 1 if n >= batch_size else 1, batch_size):
            yield images[order[i:i + batch_size]]


def ensure_finite(value, step, stage, **terms):
    if not math.isfinite(value):
        detail = ", ".join(f"{k}={v:.6g}" for k, v in terms.items())
        raise NumericAbort(f"{stage}: non-finite loss at step {step} ({detail})")


def train_base(images, config, steps, seed=0, lr=1e-3, batch_size=8, log_every=0, mixed=True):
    """Train g_a, g_s and the entropy model on ``images`` [N, C, H, W] in [0, 1].

    Minimizes ``bpp + beta * L(x, g_s(Q(g_a(x))))``.  The rate always sees
    noise-relaxed latents; with ``mixed`` the synthesis sees rounded latents
    (straight-through), so it is trained on what it decodes at test time.
    Returns ``(codec, history)``; ``history`` has one ``(loss, bpp, distortion)``
    row per step.
    """
    images = np.asarray(images, np.float32)
    if len(images) == 0:
        raise ValueError("dataset is empty")
    config.check_image_shape(images.shape[1:])
    codec = BaseCodec(config, seed)
    rng = np.random.default_rng(seed + 1)
    opt = AdamW(codec.parameters(), lr=lr)
    history = []
    stream = batches(images, min(batch_size, len(images)), rng)
    pixels = images.shape[2] * images.shape[3]
    for step in range(steps):
        x = Tensor(next(stream))
        y = codec.g_a(x)
        y_tilde = quantize(y, "train", rng)
        bpp = codec.entropy.bits(y_tilde) * (1.0 / (x.shape[0] * pixels))
        y_dec = quantize(y, "eval") if mixed else y_tilde
        dist = reconstruction_loss(x, codec.g_s(y_dec), config.loss_kind)
        loss = bpp + dist * config.beta
        ensure_finite(loss.item(), step, "train_base", bpp=bpp.item(), distortion=dist.item())
        opt.zero_grad()
        ad.backward(loss, opt.params)
        opt.step()
        history.append((loss.item(), bpp.item(), dist.item()))
        if log_every and step % log_every == 0:
            log.info("base step %d loss %.4f bpp %.4f dist %.4f", step, *history[-1])
    codec._table = None
    return codec, np.array(history, dtype=np.float64).reshape(-1, 3)
