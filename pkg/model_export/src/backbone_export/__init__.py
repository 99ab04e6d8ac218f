"""Exports the truncated VGG16 convolutional base as portable ONNX."""

__version__ = "0.1.0"
