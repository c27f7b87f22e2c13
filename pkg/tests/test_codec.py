import logging

import numpy as np
import pytest

from alf import autodiff as ad
from alf.autodiff import ShapeError, Tensor
from alf.codec import BaseCodec, BitstreamError, CodecConfig, quantize, rate_estimate, train_base
from alf.codec.model import round_half_away

from conftest import TINY


def test_config_validation():
    with pytest.raises(ValueError):
        CodecConfig(beta=0)
    with pytest.raises(ValueError):
        CodecConfig(loss_kind="lpips")
    with pytest.raises(ShapeError):
        CodecConfig(num_downsamples=3).check_image_shape((1, 20, 32))
    assert CodecConfig(latent_channels=32).latent_shape((1, 32, 32)) == (32, 4, 4)


def test_transform_shapes():
    codec = BaseCodec(TINY, seed=0)
    x = Tensor(np.random.default_rng(0).uniform(size=(2, 1, 32, 32)).astype(np.float32))
    y = codec.analysis(x)
    assert y.shape == (2, 8, 4, 4)
    assert codec.synthesis(y).shape == (2, 1, 32, 32)
    with pytest.raises(ShapeError):
        codec.synthesis(Tensor(np.zeros((1, 3, 4, 4), np.float32)))


def test_quantize_modes(rng):
    y = Tensor(np.array([-1.5, -0.49, 0.5, 2.51]))
    np.testing.assert_array_equal(quantize(y, "eval").data, [-2.0, 0.0, 1.0, 3.0])
    noisy = quantize(Tensor(np.zeros(10_000)), "train", rng).data
    assert noisy.min() >= -0.5 and noisy.max() <= 0.5
    assert abs(noisy.mean()) < 0.02
    with pytest.raises(ValueError):
        quantize(y, "train")
    with pytest.raises(ValueError):
        quantize(y, "stochastic", rng)


def test_round_half_away_from_zero():
    np.testing.assert_array_equal(round_half_away([-2.5, -0.5, 0.5, 1.5]), [-3, -1, 1, 2])


def test_encode_decode_is_lossless_on_the_latent(tiny_codec, toy_images):
    for x in toy_images[1][:5]:
        stream = tiny_codec.encode(x)
        np.testing.assert_array_equal(tiny_codec.decode_latent(stream), tiny_codec.latent_symbols(x))
        rec = tiny_codec.decode(stream.to_bytes())
        assert rec.shape == x.shape and rec.min() >= 0 and rec.max() <= 1


def test_estimated_bits_close_to_actual(tiny_codec, toy_images):
    means, scales = tiny_codec.entropy.snapshot()
    syms = [tiny_codec.latent_symbols(x) for x in toy_images[1]]
    est = sum(rate_estimate(s, means, scales) for s in syms)
    actual = sum(tiny_codec.encode_symbols(s).payload_bits for s in syms)
    assert abs(actual - est) < 0.02 * est + 32 * len(syms)


def test_outliers_are_escaped_and_logged(tiny_codec, caplog):
    sym = np.zeros((8, 4, 4), np.int64)
    sym[0, 0, 0] = 500
    with caplog.at_level(logging.WARNING):
        stream = tiny_codec.encode_symbols(sym)
    assert "escape" in caplog.text
    np.testing.assert_array_equal(tiny_codec.decode_latent(stream), sym)


def test_decode_refuses_foreign_bitstream(tiny_codec, toy_images):
    other = BaseCodec(TINY, seed=99)
    with pytest.raises(BitstreamError):
        other.decode(tiny_codec.encode(toy_images[1][0]))


def test_checkpoint_round_trip_preserves_hash(tiny_codec, tmp_path):
    path = tmp_path / "base.alfc"
    tiny_codec.to_checkpoint().save(path)
    from alf.codec import ModelCheckpoint
    back = BaseCodec.from_checkpoint(ModelCheckpoint.load(path))
    assert back.model_hash() == tiny_codec.model_hash()


def test_frozen_codec_still_serializes(tiny_codec):
    assert tiny_codec.parameters() == []
    assert len(tiny_codec.tensors()) > 0


def test_training_lowers_the_loss(toy_images):
    _, hist = train_base(toy_images[0], TINY, 150, seed=1, lr=2e-3)
    assert hist[-20:, 0].mean() < hist[:20, 0].mean()
    assert np.isfinite(hist).all()


def test_larger_beta_spends_more_bits(toy_images):
    lo, _ = train_base(toy_images[0], CodecConfig(8, 16, beta=0.0005), 300, seed=0, lr=2e-3)
    hi, _ = train_base(toy_images[0], CodecConfig(8, 16, beta=0.01), 300, seed=0, lr=2e-3)
    bits = lambda c: np.mean([c.encode(x).payload_bits for x in toy_images[1]])  # noqa: E731
    assert bits(hi) > bits(lo)


def test_perception_loss_kind_trains(toy_images):
    cfg = CodecConfig(8, 16, beta=0.01, loss_kind="perception")
    _, hist = train_base(toy_images[0][:16], cfg, 5, seed=0, lr=1e-3)
    assert np.isfinite(hist).all()
