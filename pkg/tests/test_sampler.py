import math

import numpy as np
import pytest

from alf.autodiff import Tensor
from alf.codec.checkpoint import CheckpointError
from alf.fusion import (Denoiser, DenoiserConfig, FusionDecoder, SamplerConfig, ddim_step_tau,
                        decode_controlled, make_schedule, sample, timestep_grid)
from alf.fusion.sampler import initial_noise
from alf.fusion.train import denoiser_checkpoint, load_denoiser

SCHED = make_schedule()


class HalfOfCondition:
    """D(y_t, y_hat, t) = y_hat / 2 + y_t / 10; simple enough to unroll by hand."""

    def __call__(self, y_t, y_hat, t_frac):
        return Tensor(y_hat.data * 0.5 + y_t.data * 0.1)


def _randomized(seed=0, channels=8):
    m = Denoiser(DenoiserConfig(latent_channels=channels, channels=16), seed=seed)
    rng = np.random.default_rng(seed + 100)
    for _, p in m.named_parameters():
        if p.ndim == 4 and not p.data.any():
            p.data = rng.standard_normal(p.shape).astype(np.float32) * 0.1
    return m


def _oracle(y_hat, noise, tau, steps):
    # the fused update written out scalar-by-scalar
    y = noise.astype(np.float64)
    w = tau * tau
    for t, tp in zip(timestep_grid(steps, SCHED.T), timestep_grid(steps, SCHED.T)[1:]):
        a, ap = SCHED.alphas[t], SCHED.alphas[tp]
        d = 0.5 * y_hat + 0.1 * y
        eps = (y - math.sqrt(a) * d) / math.sqrt(1 - a)
        y = math.sqrt(ap) * ((1 - w) * d + w * y_hat) + (1 - w) * math.sqrt(1 - ap) * eps
    return y


@pytest.mark.parametrize("tau", [0.0, 0.3, 0.7])
@pytest.mark.parametrize("steps", [1, 4, 10])
def test_matches_hand_unrolled_oracle(rng, tau, steps):
    y_hat = rng.standard_normal((1, 2, 3, 3))
    noise = rng.standard_normal((1, 2, 3, 3))
    got = sample(y_hat, SamplerConfig(steps, tau), HalfOfCondition(), SCHED, noise=noise)
    np.testing.assert_allclose(got, _oracle(y_hat, noise, tau, steps), rtol=1e-5, atol=1e-5)


def test_tau_one_returns_condition_exactly(rng):
    y_hat = np.round(rng.normal(0, 3, (8, 4, 4))).astype(np.float32)
    out = sample(y_hat, SamplerConfig(10, 1.0, 3), _randomized(), SCHED)
    np.testing.assert_array_equal(out, y_hat)


def test_same_seed_same_output(rng):
    y_hat = rng.standard_normal((8, 4, 4)).astype(np.float32)
    m = _randomized()
    a = sample(y_hat, SamplerConfig(5, 0.2, 11), m, SCHED)
    b = sample(y_hat, SamplerConfig(5, 0.2, 11), m, SCHED)
    np.testing.assert_array_equal(a, b)
    c = sample(y_hat, SamplerConfig(5, 0.2, 12), m, SCHED)
    assert not np.array_equal(a, c)


def test_continuous_in_tau(rng):
    y_hat = rng.standard_normal((8, 4, 4)).astype(np.float32)
    m = _randomized()
    base = sample(y_hat, SamplerConfig(10, 0.5, 0), m, SCHED)
    near = sample(y_hat, SamplerConfig(10, 0.5 + 1e-4, 0), m, SCHED)
    assert np.abs(base - near).max() < 1e-2


def test_batch_rows_match_single_runs(rng):
    y_hat = rng.standard_normal((3, 8, 4, 4)).astype(np.float32)
    noise = np.stack([initial_noise(y_hat.shape[1:], 5, i) for i in range(3)])
    m = _randomized()
    batch = sample(y_hat, SamplerConfig(4, 0.4), m, SCHED, noise=noise)
    for i in range(3):
        one = sample(y_hat[i], SamplerConfig(4, 0.4), m, SCHED, noise=noise[i])
        np.testing.assert_allclose(batch[i], one, rtol=1e-5, atol=1e-5)


def test_trajectory_records_every_step(rng):
    traj = []
    sample(rng.standard_normal((8, 2, 2)), SamplerConfig(6, 0.0), _randomized(), SCHED, trajectory=traj)
    assert len(traj) == 7


def test_invalid_configs(rng):
    y = rng.standard_normal((8, 2, 2))
    with pytest.raises(ValueError):
        sample(y, SamplerConfig(0, 0.0), _randomized(), SCHED)
    with pytest.raises(ValueError):
        sample(y, SamplerConfig(SCHED.T + 1, 0.0), _randomized(), SCHED)
    with pytest.raises(ValueError):
        sample(y, SamplerConfig(5, 1.5), _randomized(), SCHED)
    with pytest.raises(ValueError):
        ddim_step_tau(y[None], y[None], 5, 5, 0.0, _randomized(), SCHED)


def test_pass_through_decode_matches_base(tiny_codec, toy_images):
    model = Denoiser(DenoiserConfig(latent_channels=tiny_codec.config.latent_channels, channels=16))
    decoder = FusionDecoder(tiny_codec, model, SCHED)
    for image in toy_images[1][:3]:
        stream = tiny_codec.encode(image)
        fused = decode_controlled(stream.to_bytes(), 1.0, 10, 0, decoder)
        assert np.abs(fused - tiny_codec.decode(stream)).max() <= 1e-6


def test_denoiser_refuses_other_base(tiny_codec):
    from alf.codec import BaseCodec
    model = Denoiser(DenoiserConfig(latent_channels=tiny_codec.config.latent_channels, channels=16))
    ckpt = denoiser_checkpoint(model, SCHED, tiny_codec, 1.0)
    load_denoiser(ckpt, tiny_codec)
    other = BaseCodec(tiny_codec.config, seed=99)
    with pytest.raises(CheckpointError):
        load_denoiser(ckpt, other)
