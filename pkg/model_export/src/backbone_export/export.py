"""Write the truncated conv base as self-describing ONNX plus artifacts.

Outputs in the target directory:

    backbone.onnx        NCHW graph, preprocessing in metadata_props
    manifest.json        source, weight checksum, shapes, preprocessing
    probe.png            deterministic probe image
    probe_features.csv   reference activations from this exporter's runtime

The probe pair lets any consumer verify, end to end, that its decoder
and executor reproduce this exporter's numbers.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__, onnx_write, vgg

PROBE_SEED = 20240917


def probe_image() -> np.ndarray:
    """Deterministic structured probe: gradients plus seeded texture."""
    rng = np.random.default_rng(PROBE_SEED)
    side = vgg.INPUT_SIDE
    yy, xx = np.mgrid[0:side, 0:side]
    base = np.stack([
        (xx * 255 / (side - 1)),
        (yy * 255 / (side - 1)),
        ((xx + yy) * 255 / (2 * side - 2)),
    ], axis=2)
    noise = rng.integers(-40, 41, size=(side, side, 3))
    img = np.clip(base + noise, 0, 255).astype(np.uint8)
    img[40:70, 40:110] = (20, 200, 120)  # a flat patch with hard edges
    return img


def build_onnx(weights: dict) -> bytes:
    """Re-express the TF/NHWC weights as a standard NCHW ONNX graph."""
    nodes = []
    initializers = []
    current = "input"
    pool_index = 0
    for entry in vgg.CONV_PLAN:
        if entry is None:
            pool_index += 1
            out_name = f"pool{pool_index}"
            nodes.append(onnx_write.node(
                "MaxPool", [current], [out_name], name=f"block{pool_index}_pool",
                kernel_shape=[2, 2], strides=[2, 2], pads=[0, 0, 0, 0]))
            current = out_name
            continue
        name, _, _ = entry
        kernel, bias = weights[name]
        # (kh, kw, cin, cout) -> (cout, cin, kh, kw)
        initializers.append(onnx_write.tensor(
            f"{name}_W", np.ascontiguousarray(kernel.transpose(3, 2, 0, 1))))
        initializers.append(onnx_write.tensor(f"{name}_B", bias))
        nodes.append(onnx_write.node(
            "Conv", [current, f"{name}_W", f"{name}_B"], [f"{name}_pre"],
            name=name, kernel_shape=[3, 3], pads=[1, 1, 1, 1], strides=[1, 1]))
        nodes.append(onnx_write.node("Relu", [f"{name}_pre"], [name]))
        current = name

    h, w, c = vgg.OUTPUT_SHAPE
    metadata = {
        "input_layout": "NCHW",
        "output_layout": "NCHW",
        "channel_order": vgg.CHANNEL_ORDER,
        "channel_mean": ",".join(str(m) for m in vgg.CHANNEL_MEAN),
        "scale": "1.0",
        "truncate_at": vgg.TRUNCATE_AT,
        "producer_version": __version__,
    }
    return onnx_write.model(
        nodes,
        inputs=[("input", (1, 3, vgg.INPUT_SIDE, vgg.INPUT_SIDE))],
        outputs=[(current, (1, c, h, w))],
        initializers=initializers,
        metadata=metadata,
    )


def export_backbone(out_dir, weights_source: str = "random",
                    seed: int = 0) -> dict:
    """Build weights, write model + manifest + probe pair; returns manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if weights_source == "imagenet":
        weights = vgg.imagenet_weights()
        source = "vgg16-imagenet"
    elif weights_source == "random":
        weights = vgg.random_weights(seed)
        source = f"vgg16-random-seed{seed}"
    else:
        raise ValueError(f"weights_source must be imagenet|random, "
                         f"got {weights_source!r}")
    vgg.check_shapes(weights)

    model_bytes = build_onnx(weights)
    (out_dir / "backbone.onnx").write_bytes(model_bytes)

    probe = probe_image()
    Image.fromarray(probe, mode="RGB").save(out_dir / "probe.png", format="PNG")
    reference = vgg.reference_features(weights, probe)
    lines = ["index,value"]
    lines += [f"{i},{float(v)!r}" for i, v in enumerate(reference)]
    (out_dir / "probe_features.csv").write_text("\n".join(lines) + "\n")

    manifest = {
        "source": source,
        "weights_sha256": vgg.weights_checksum(weights),
        "model_file": "backbone.onnx",
        "truncate_at": vgg.TRUNCATE_AT,
        "input_shape": [vgg.INPUT_SIDE, vgg.INPUT_SIDE, 3],
        "output_shape": list(vgg.OUTPUT_SHAPE),
        "flat_dim": vgg.FLAT_DIM,
        "preprocessing": {
            "channel_order": vgg.CHANNEL_ORDER,
            "mean": list(vgg.CHANNEL_MEAN),
            "scale": 1.0,
        },
        "probe": "probe.png",
        "probe_features": "probe_features.csv",
        "exporter_version": __version__,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def load_probe_features(out_dir) -> np.ndarray:
    path = Path(out_dir) / "probe_features.csv"
    values = [float(line.split(",")[1])
              for line in path.read_text().splitlines()[1:]]
    return np.asarray(values, dtype=np.float32)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="backbone-export",
        description="Export the truncated VGG16 conv base to ONNX")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--weights", choices=("imagenet", "random"),
                        default="imagenet")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for --weights random")
    args = parser.parse_args(argv)
    try:
        manifest = export_backbone(args.out, args.weights, args.seed)
    except vgg.DownloadFailure as exc:
        print(f"error: DownloadFailure: {exc}", file=sys.stderr)
        return 4
    except vgg.ShapeMismatch as exc:
        print(f"error: ShapeMismatch: {exc}", file=sys.stderr)
        return 4
    print(f"exported {manifest['source']} -> {args.out} "
          f"(flat dim {manifest['flat_dim']})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
