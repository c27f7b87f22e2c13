"""Fixed base codec: transforms, quantizer, entropy model and range coding."""

from .bitstream import Bitstream, BitstreamError
from .checkpoint import ModelCheckpoint
from .entropy import GaussianEntropyModel, build_cdf_table, rate_estimate
from .model import BASE_PREFIXES, BaseCodec, CodecConfig, quantize
from .rangecoder import CdfTable, DecodeError, range_decode, range_encode
from .train import train_base

__all__ = [
    "BASE_PREFIXES", "BaseCodec", "Bitstream", "BitstreamError", "CdfTable", "CodecConfig",
    "DecodeError", "GaussianEntropyModel", "ModelCheckpoint", "build_cdf_table", "quantize",
    "range_decode", "range_encode", "rate_estimate", "train_base",
]
