"""tau / beta / step-count sweeps over the held-out set."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..fusion.sampler import SamplerConfig, initial_noise, sample
from ..fusion.train import translate_variant1
from ..metrics import RDPoint, pdist, points_to_csv, psnr, ssim
from .pipeline import run_pipeline, write_manifest

log = logging.getLogger(__name__)

# images per sampler call; fixed so results never depend on the worker count
CHUNK = 16


def _chunks(n):
    return [slice(i, min(i + CHUNK, n)) for i in range(0, n, CHUNK)]


def _map_chunks(fn, n, threads):
    parts = _chunks(n)
    if threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(fn, parts))
    else:
        results = [fn(p) for p in parts]
    return np.concatenate(results)


def fuse_batch(y_hat, tau, steps, seed, model, schedule, threads=1):
    """Sample every latent in ``y_hat`` with its own (seed, index) noise stream."""
    noise = np.stack([initial_noise(y_hat.shape[1:], seed, i) for i in range(len(y_hat))])
    cfg = SamplerConfig(steps=steps, tau=tau, seed=seed)
    return _map_chunks(lambda s: sample(y_hat[s], cfg, model, schedule, noise=noise[s]),
                       len(y_hat), threads)


def reconstruct(codec, latents):
    with ad.no_grad():
        x = codec.synthesis(Tensor(np.asarray(latents, np.float32))).data
    return np.clip(x, 0.0, 1.0)


def quality(images, recon):
    return (float(np.mean([psnr(a, b) for a, b in zip(images, recon)])),
            float(np.mean([ssim(a, b) for a, b in zip(images, recon)])),
            float(np.mean([pdist(a, b) for a, b in zip(images, recon)])))


def encode_set(codec, images):
    """Bitstreams, mean bpp and decoded latents for a set of images."""
    streams = [codec.encode(x) for x in images]
    pixels = images.shape[-1] * images.shape[-2]
    bpp = float(np.mean([s.payload_bits / pixels for s in streams]))
    y_hat = np.stack([codec.decode_latent(s) for s in streams])
    return streams, bpp, y_hat


def sweep_stack(stack, holdout, cfg, timings=None):
    """RD points for one beta: the tau grid, the step-count grid at tau=0 and the translator."""
    codec, model, schedule = stack.codec, stack.denoiser, stack.schedule
    _, bpp, y_hat = encode_set(codec, holdout)
    points = []

    def point(latents, label, tau, seed, steps):
        p, s, d = quality(holdout, reconstruct(codec, latents))
        points.append(RDPoint(bpp=bpp, psnr_db=p, ssim=s, pdist=d, tau=float(tau), beta=stack.beta,
                              label=label, seed=seed, steps=steps))

    for seed in cfg.sample_seeds:
        for tau in cfg.tau_grid:
            point(fuse_batch(y_hat, tau, cfg.default_steps, seed, model, schedule, cfg.threads),
                  "fusion", tau, seed, cfg.default_steps)
        for steps in cfg.steps_grid:
            start = time.perf_counter()
            fused = fuse_batch(y_hat, 0.0, steps, seed, model, schedule, cfg.threads)
            if timings is not None:
                timings.setdefault(f"{stack.beta:g}", {})[str(steps)] = time.perf_counter() - start
            point(fused, "steps", 0.0, seed, steps)
    translated = translate_variant1(y_hat, stack.translator)
    for tau in cfg.tau_grid:
        w = tau * tau
        point((1.0 - w) * translated + w * y_hat, "variant1", tau, 0, 0)
    return points


def sweep(cfg, result=None, csv_path=None):
    """Run the pipeline if needed, evaluate every beta and write the CSV.

    Returns ``(points, timings)``; sampling wall-times go to a separate JSON
    file so the CSV stays reproducible.
    """
    if result is None:
        result = run_pipeline(cfg)
    missing = [b for b in cfg.betas if b not in result.stacks]
    if missing:
        raise KeyError(f"no checkpoints for beta={missing[0]:g}")
    timings = {}
    points = []
    for beta in cfg.betas:
        log.info("sweeping beta=%g", beta)
        points.extend(sweep_stack(result.stacks[beta], result.holdout, cfg, timings))
    out = Path(cfg.out_dir)
    csv_path = Path(csv_path) if csv_path else out / "sweep.csv"
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    csv_path.write_text(points_to_csv(points))
    timing_path = out / "timings.json"
    timing_path.write_text(json.dumps(timings, indent=2, sort_keys=True) + "\n")
    write_manifest(out, result.manifest, [csv_path, timing_path])
    return points, timings
