"""Adaptive latent fusion for a fixed neural image codec, at desk scale."""

__version__ = "0.1.0"
