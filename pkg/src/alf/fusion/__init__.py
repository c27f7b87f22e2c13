"""Adaptive latent fusion: noise schedule, denoiser, tau-controlled sampler and trainers."""

from .denoiser import Denoiser, DenoiserConfig, Translator, denoiser_forward
from .sampler import FusionDecoder, SamplerConfig, ddim_step_tau, decode_controlled, sample
from .schedule import (NoiseSchedule, ancestral_step, forward_noise, fused_update, make_schedule,
                       predict_noise, timestep_grid)
from .train import (FrozenBaseError, train_aux_encoder, train_fusion, train_variant1,
                    translate_variant1)

__all__ = [
    "Denoiser", "DenoiserConfig", "FrozenBaseError", "FusionDecoder", "NoiseSchedule", "SamplerConfig",
    "Translator", "ancestral_step", "ddim_step_tau", "decode_controlled", "denoiser_forward",
    "forward_noise", "fused_update", "make_schedule", "predict_noise", "sample", "timestep_grid",
    "train_aux_encoder", "train_fusion", "train_variant1", "translate_variant1",
]
