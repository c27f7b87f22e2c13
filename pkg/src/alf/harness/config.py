"""Experiment configuration: defaults, TOML loading, env and CLI overrides."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import tomli

from ..codec.model import CodecConfig
from ..fusion.denoiser import DenoiserConfig
from ..fusion.schedule import make_schedule

DEFAULT_TAU_GRID = (0.0, 0.3, 0.5, 0.8, 1.0)
DEFAULT_STEPS_GRID = (1, 5, 10, 20, 40)


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    # dataset: synthetic unless data_dir is set
    seed: int = 0
    data_dir: str = ""
    image_count: int = 20000
    image_size: int = 32
    holdout_fraction: float = 0.1
    # base codec
    latent_channels: int = 16
    hidden_channels: int = 32
    num_downsamples: int = 3
    loss_kind: str = "distortion"
    beta: float = 0.008
    betas: list = field(default_factory=lambda: [0.008])
    # schedule and denoiser
    T_train: int = 1000
    beta_min: float = 1e-4
    beta_max: float = 0.02
    channels: int = 64
    num_units: int = 2
    time_embed_dim: int = 32
    # training
    batch_size: int = 8
    base_steps: int = 8000
    aux_steps: int = 2000
    fusion_steps: int = 6000
    variant1_steps: int = 1000
    base_lr: float = 2e-3
    aux_lr: float = 5e-4
    fusion_lr: float = 5e-4
    variant1_lr: float = 5e-4
    lam: float = 1.0
    # evaluation
    tau_grid: list = field(default_factory=lambda: list(DEFAULT_TAU_GRID))
    steps_grid: list = field(default_factory=lambda: list(DEFAULT_STEPS_GRID))
    default_steps: int = 10
    sample_seeds: list = field(default_factory=lambda: [0])
    threads: int = 1
    out_dir: str = "runs/default"

    def validate(self):
        try:
            self.codec_config()
            self.denoiser_config()
            sched = self.schedule()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if any(not 0.0 <= t <= 1.0 for t in self.tau_grid):
            raise ConfigError("tau grid values must lie in [0, 1]")
        if not self.tau_grid:
            raise ConfigError("tau grid is empty")
        for s in list(self.steps_grid) + [self.default_steps]:
            if not 1 <= s <= sched.T:
                raise ConfigError(f"sampling steps {s} outside [1, {sched.T}]")
        if any(b <= 0 for b in self.betas) or not self.betas:
            raise ConfigError("betas must be a non-empty list of positive values")
        if self.data_dir and not Path(self.data_dir).is_dir():
            raise ConfigError(f"data directory {self.data_dir!r} does not exist")
        if self.image_size % (2 ** self.num_downsamples):
            raise ConfigError(f"image_size {self.image_size} not divisible by {2 ** self.num_downsamples}")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ConfigError("holdout_fraction must lie in (0, 1)")
        for name in ("image_count", "batch_size", "threads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("base_steps", "aux_steps", "fusion_steps", "variant1_steps"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.lam < 0:
            raise ConfigError("lam must be non-negative")
        return self

    def codec_config(self, beta=None):
        return CodecConfig(latent_channels=self.latent_channels, hidden_channels=self.hidden_channels,
                           num_downsamples=self.num_downsamples, beta=self.beta if beta is None else beta,
                           loss_kind=self.loss_kind)

    def denoiser_config(self):
        return DenoiserConfig(latent_channels=self.latent_channels, channels=self.channels,
                              num_units=self.num_units, time_embed_dim=self.time_embed_dim)

    def schedule(self):
        return make_schedule(self.T_train, self.beta_min, self.beta_max)

    def to_dict(self):
        return dataclasses.asdict(self)

    def digest(self, keys=None):
        d = self.to_dict()
        if keys is not None:
            d = {k: d[k] for k in keys}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def coerce(name, value):
    """Convert a TOML or command-line value to the declared field type."""
    kind = FIELD_TYPES[name]
    try:
        if kind == "list":
            if isinstance(value, str):
                value = [v for v in value.replace(",", " ").split() if v]
            elem = int if name in ("steps_grid", "sample_seeds") else float
            return [elem(v) for v in value]
        if kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(f"{value} is not an integer")
            return int(value)
        if kind == "float":
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def _flatten(table, prefix=""):
    # sections are accepted for readability; keys must still be unique
    out = {}
    for key, value in table.items():
        if isinstance(value, dict):
            out.update(_flatten(value))
        else:
            out[key] = value
    return out


def load_config(path=None, overrides=None, environ=None):
    """File < environment < command line.  Unknown keys are errors."""
    values = {}
    if path:
        try:
            with open(path, "rb") as fh:
                values.update(_flatten(tomli.load(fh)))
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    environ = os.environ if environ is None else environ
    if environ.get("ALF_SEED"):
        values["seed"] = environ["ALF_SEED"]
    if environ.get("ALF_THREADS"):
        values["threads"] = environ["ALF_THREADS"]
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    unknown = sorted(set(values) - set(FIELD_TYPES))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    cfg = ExperimentConfig(**{k: coerce(k, v) for k, v in values.items()})
    return cfg.validate()
