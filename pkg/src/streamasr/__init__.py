"""Streaming speech-recognition kernels, augmentation engines and a desk-scale experiment harness."""

__version__ = "0.1.0"
