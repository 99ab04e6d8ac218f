"""Truncated VGG16 convolutional base: layer plan, weights, reference run.

The reference runtime is TensorFlow's own conv ops (NHWC); the exported
ONNX graph re-expresses the same weights in NCHW. Keeping the reference
inside this package gives the cross-runtime parity check a side that is
fully independent of the consumer's executor.
"""

from __future__ import annotations

import hashlib

import numpy as np

INPUT_SIDE = 150
OUTPUT_SHAPE = (4, 4, 512)
FLAT_DIM = 4 * 4 * 512
TRUNCATE_AT = "block5_pool"

# ImageNet convention used by the published VGG16 weights: inputs are
# converted RGB -> BGR and the per-channel means below are subtracted.
CHANNEL_ORDER = "BGR"
CHANNEL_MEAN = (103.939, 116.779, 123.68)

#: (layer name, in channels, out channels); None marks a 2x2 max pool.
CONV_PLAN = (
    ("block1_conv1", 3, 64), ("block1_conv2", 64, 64), None,
    ("block2_conv1", 64, 128), ("block2_conv2", 128, 128), None,
    ("block3_conv1", 128, 256), ("block3_conv2", 256, 256),
    ("block3_conv3", 256, 256), None,
    ("block4_conv1", 256, 512), ("block4_conv2", 512, 512),
    ("block4_conv3", 512, 512), None,
    ("block5_conv1", 512, 512), ("block5_conv2", 512, 512),
    ("block5_conv3", 512, 512), None,
)


class DownloadFailure(RuntimeError):
    pass


class ShapeMismatch(RuntimeError):
    pass


def random_weights(seed: int) -> dict:
    """He-normal kernels, zero biases; deterministic per seed.

    Stands in for the pretrained weights when no network or weight cache
    is available; parity between exporter and consumer does not depend
    on the weight values.
    """
    rng = np.random.default_rng(seed)
    weights = {}
    for entry in CONV_PLAN:
        if entry is None:
            continue
        name, cin, cout = entry
        std = np.sqrt(2.0 / (3 * 3 * cin))
        kernel = rng.normal(0.0, std, size=(3, 3, cin, cout)).astype(np.float32)
        bias = np.zeros(cout, dtype=np.float32)
        weights[name] = (kernel, bias)
    return weights


def imagenet_weights() -> dict:
    """Pretrained weights via the Keras application (needs network/cache)."""
    try:
        from tensorflow.keras.applications import VGG16
        model = VGG16(include_top=False, weights="imagenet")
    except Exception as exc:
        raise DownloadFailure(
            f"cannot obtain pretrained weights: {exc}") from exc
    weights = {}
    for entry in CONV_PLAN:
        if entry is None:
            continue
        name = entry[0]
        kernel, bias = model.get_layer(name).get_weights()
        weights[name] = (kernel.astype(np.float32), bias.astype(np.float32))
    return weights


def check_shapes(weights: dict) -> None:
    side = INPUT_SIDE
    channels = 3
    for entry in CONV_PLAN:
        if entry is None:
            side //= 2
            continue
        name, cin, cout = entry
        kernel, bias = weights[name]
        if kernel.shape != (3, 3, cin, cout) or bias.shape != (cout,):
            raise ShapeMismatch(f"{name}: kernel {kernel.shape}, bias {bias.shape}")
        channels = cout
    if (side, side, channels) != OUTPUT_SHAPE:
        raise ShapeMismatch(f"pooled output {(side, side, channels)}, "
                            f"want {OUTPUT_SHAPE}")
    if int(np.prod(OUTPUT_SHAPE)) != FLAT_DIM:
        raise ShapeMismatch("output does not flatten to 8192")


def weights_checksum(weights: dict) -> str:
    h = hashlib.sha256()
    for entry in CONV_PLAN:
        if entry is None:
            continue
        kernel, bias = weights[entry[0]]
        h.update(kernel.tobytes())
        h.update(bias.tobytes())
    return h.hexdigest()


def preprocess(rgb_image: np.ndarray) -> np.ndarray:
    """uint8 RGB (150,150,3) -> float32 NHWC batch, BGR mean-subtracted."""
    if rgb_image.shape != (INPUT_SIDE, INPUT_SIDE, 3):
        raise ShapeMismatch(f"probe shape {rgb_image.shape}")
    x = rgb_image.astype(np.float32)[:, :, ::-1]  # RGB -> BGR
    x = x - np.array(CHANNEL_MEAN, dtype=np.float32)
    return x[None]


def reference_features(weights: dict, rgb_image: np.ndarray) -> np.ndarray:
    """Run the truncated base with TensorFlow; flattened (8192,) float32.

    Flattening is row-major over the 4x4 grid with channels minor, the
    layout consumers are specified to produce as well.
    """
    import tensorflow as tf

    x = tf.constant(preprocess(rgb_image))
    for entry in CONV_PLAN:
        if entry is None:
            x = tf.nn.max_pool2d(x, ksize=2, strides=2, padding="VALID")
            continue
        kernel, bias = weights[entry[0]]
        x = tf.nn.conv2d(x, tf.constant(kernel), strides=1, padding="SAME")
        x = tf.nn.relu(tf.nn.bias_add(x, tf.constant(bias)))
    out = x.numpy()[0]
    if out.shape != OUTPUT_SHAPE:
        raise ShapeMismatch(f"reference output {out.shape}")
    return out.reshape(-1).astype(np.float32)
