"""Stage orchestration with content-addressed checkpoint caching."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..autodiff import NumericAbort
from ..codec import BaseCodec, ModelCheckpoint, train_base
from ..fusion import train as ftrain
from .config import ConfigError
from .data import load_directory, make_images, split_holdout

log = logging.getLogger(__name__)

DATA_KEYS = ("seed", "data_dir", "image_count", "image_size", "holdout_fraction")
CODEC_KEYS = ("latent_channels", "hidden_channels", "num_downsamples", "loss_kind")
DENOISER_KEYS = ("channels", "num_units", "time_embed_dim", "latent_channels")
SCHEDULE_KEYS = ("T_train", "beta_min", "beta_max")


class StageError(RuntimeError):
    """A training stage aborted; the message names the stage."""


def load_dataset(cfg):
    """``(train, holdout)`` image arrays for the configured dataset."""
    if cfg.data_dir:
        images, _ = load_directory(cfg.data_dir)
        if len(images) == 0:
            raise ConfigError(f"no images found in {cfg.data_dir!r}")
        cfg.codec_config().check_image_shape(images.shape[1:])
    else:
        images = make_images(cfg.seed, cfg.image_count, cfg.image_size)
    train, holdout = split_holdout(images, cfg.holdout_fraction)
    if len(train) == 0:
        raise ConfigError("dataset too small to split off a held-out set")
    return train, holdout


def _key(stage, cfg, keys, **extra):
    d = {k: getattr(cfg, k) for k in keys}
    d.update(extra)
    d["stage"] = stage
    d["version"] = __version__
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def _sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class BetaStack:
    """Everything trained for one base-codec beta."""

    beta: float
    codec: BaseCodec
    aux: object
    denoiser: object
    schedule: object
    translator: object
    paths: dict = field(default_factory=dict)


@dataclass
class PipelineResult:
    stacks: dict
    manifest: dict
    train: np.ndarray
    holdout: np.ndarray


class _Runner:
    def __init__(self, cfg, ckpt_dir):
        self.cfg = cfg
        self.dir = ckpt_dir
        self.records = {}

    def stage(self, name, key, train_fn):
        """Load ``name`` from cache when its key exists, otherwise train and save."""
        path = self.dir / f"{name}-{key[:16]}.alfc"
        start = time.perf_counter()
        hit = path.exists()
        if hit:
            ckpt = ModelCheckpoint.load(path)
            log.info("%s: cache hit %s", name, path.name)
        else:
            log.info("%s: training", name)
            try:
                ckpt = train_fn()
            except NumericAbort as exc:
                raise NumericAbort(f"stage {name}: {exc}") from exc
            except Exception as exc:
                if isinstance(exc, (ConfigError, OSError)):
                    raise
                raise StageError(f"stage {name} failed: {exc}") from exc
            ckpt.save(path)
        self.records[name] = {"path": str(path), "sha256": _sha(path), "key": key,
                              "cache_hit": hit, "seconds": round(time.perf_counter() - start, 3)}
        return ckpt, path


def run_pipeline(cfg, betas=None):
    """Train (or load) base, auxiliary encoder, denoiser and translator per beta.

    Returns a :class:`PipelineResult`; ``manifest.json`` is written to
    ``cfg.out_dir``.
    """
    cfg.validate()
    out = Path(cfg.out_dir)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    train, holdout = load_dataset(cfg)
    data_hash = hashlib.sha256(np.ascontiguousarray(train).tobytes()).hexdigest()
    runner = _Runner(cfg, ckpt_dir)
    schedule = cfg.schedule()
    stacks = {}
    for beta in (cfg.betas if betas is None else betas):
        tag = f"b{beta:g}"
        common = {"data": data_hash, "batch_size": cfg.batch_size}

        base_key = _key("base", cfg, CODEC_KEYS, beta=beta, steps=cfg.base_steps,
                        lr=cfg.base_lr, seed=cfg.seed, **common)
        base_ckpt, _ = runner.stage(f"base_{tag}", base_key, lambda b=beta: train_base(
            train, cfg.codec_config(b), cfg.base_steps, seed=cfg.seed, lr=cfg.base_lr,
            batch_size=cfg.batch_size)[0].to_checkpoint())
        codec = BaseCodec.from_checkpoint(base_ckpt)
        codec.freeze()
        base_hash = base_ckpt.component_hash()

        aux_key = _key("aux", cfg, (), base=base_hash, steps=cfg.aux_steps, lr=cfg.aux_lr,
                       seed=cfg.seed, **common)
        aux_ckpt, _ = runner.stage(f"aux_{tag}", aux_key, lambda: ftrain.aux_checkpoint(
            ftrain.train_aux_encoder(codec, train, cfg.aux_steps, seed=cfg.seed, lr=cfg.aux_lr,
                                     batch_size=cfg.batch_size)[0], codec))
        aux = ftrain.load_aux_encoder(aux_ckpt, codec)
        aux_hash = aux_ckpt.component_hash()

        fusion_key = _key("fusion", cfg, DENOISER_KEYS + SCHEDULE_KEYS, base=base_hash, aux=aux_hash,
                          steps=cfg.fusion_steps, lr=cfg.fusion_lr, lam=cfg.lam, seed=cfg.seed, **common)
        den_ckpt, _ = runner.stage(f"fusion_{tag}", fusion_key, lambda: ftrain.denoiser_checkpoint(
            ftrain.train_fusion(codec, aux, train, lam=cfg.lam, steps=cfg.fusion_steps, schedule=schedule,
                                seed=cfg.seed, lr=cfg.fusion_lr, batch_size=cfg.batch_size,
                                config=cfg.denoiser_config())[0],
            schedule, codec, cfg.lam, aux_hash))
        denoiser, den_schedule = ftrain.load_denoiser(den_ckpt, codec)

        v1_key = _key("variant1", cfg, DENOISER_KEYS, base=base_hash, steps=cfg.variant1_steps,
                      lr=cfg.variant1_lr, seed=cfg.seed, **common)
        v1_ckpt, _ = runner.stage(f"variant1_{tag}", v1_key, lambda: ftrain.translator_checkpoint(
            ftrain.train_variant1(codec, train, cfg.variant1_steps, seed=cfg.seed, lr=cfg.variant1_lr,
                                  batch_size=cfg.batch_size, config=cfg.denoiser_config())[0], codec))
        translator = ftrain.load_translator(v1_ckpt, codec)

        if codec.model_hash() != BaseCodec.from_checkpoint(base_ckpt).model_hash():
            raise ftrain.FrozenBaseError(f"base codec for beta={beta:g} changed during fusion training")
        stacks[beta] = BetaStack(beta, codec, aux, denoiser, den_schedule, translator,
                                 {k: v["path"] for k, v in runner.records.items() if k.endswith(tag)})

    n_total = len(train) + len(holdout)
    manifest = {
        "config_hash": cfg.digest(),
        "config": cfg.to_dict(),
        "data_hash": data_hash,
        "holdout_indices": [n_total - len(holdout), n_total],
        "stages": runner.records,
    }
    write_manifest(out, manifest)
    return PipelineResult(stacks, manifest, train, holdout)


def write_manifest(out_dir, manifest, outputs=()):
    """Merge ``outputs`` (paths) into the manifest with their content hashes and save it."""
    out_dir = Path(out_dir)
    path = out_dir / "manifest.json"
    listed = dict(manifest.get("outputs", {}))
    for p in outputs:
        listed[str(p)] = _sha(p)
    manifest["outputs"] = listed
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    tmp.replace(path)
    return path
