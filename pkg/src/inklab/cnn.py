"""Deep visual feature extraction behind one backend-agnostic interface.

Two interchangeable backends produce 8,192-dim vectors per image:

* ``PretrainedBackbone`` loads a portable ONNX file holding a truncated
  convolutional base whose final pooled tensor is 4x4x512. Preprocessing
  (channel order, per-channel mean, scale) is read from metadata embedded
  in the model file, so the file is self-describing.
* ``StubHash`` needs no model file: a projection matrix expanded
  deterministically from a 64-bit seed maps a downsampled image to 8,192
  pseudo-activations in [0, 1). The mapping is locality-preserving
  (nearby images give nearby vectors), which keeps the whole evaluation
  pipeline exercisable without large weights.

The 4x4x512 pooled tensor flattens row-major over space with channels
minor: index = (row * 4 + col) * 512 + channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import onnxlite
from .errors import BadInputShape, DimMismatch, ModelError, ModelFileMissing, ShapeMismatch
from .render import RgbImage
from .vectors import FeatureVector, default_dim_names

INPUT_SIDE = 150
OUTPUT_DIM = 8192
_POOLED_SHAPE = (4, 4, 512)

_STUB_GRID = 15          # stub downsample: 15x15x3 block means
_STUB_INPUT = _STUB_GRID * _STUB_GRID * 3

CNN_MODALITIES = ("raw", "residual", "edge")


@dataclass(frozen=True)
class StubHash:
    seed: int = 0


@dataclass(frozen=True)
class PretrainedBackbone:
    path: Path


@dataclass(frozen=True)
class ExtractorHandle:
    backend: object
    input_side: int = INPUT_SIDE
    output_dim: int = OUTPUT_DIM
    _state: dict = field(default_factory=dict, repr=False, compare=False)


def _build_stub_state(seed: int) -> dict:
    # documented recurrence: one PCG64 stream seeded with `seed` drives
    # first the projection matrix (row-major), then the bias vector
    rng = np.random.default_rng(seed)
    proj = rng.standard_normal((OUTPUT_DIM, _STUB_INPUT)).astype(np.float32)
    proj /= np.float32(np.sqrt(_STUB_INPUT))
    bias = (0.5 * rng.standard_normal(OUTPUT_DIM)).astype(np.float32)
    return {"proj": proj, "bias": bias}


def _load_backbone_state(path: Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ModelFileMissing(path)
    try:
        model = onnxlite.read_model(path.read_bytes())
    except ModelError:
        raise
    except Exception as exc:
        raise ModelError(f"cannot decode model file {path}: {exc}") from exc

    if not model.graph.inputs or not model.graph.outputs:
        raise ModelError("model declares no graph inputs/outputs")
    in_name, in_shape = model.graph.inputs[0]
    out_name, out_shape = model.graph.outputs[0]

    layout = model.metadata.get("input_layout", "NCHW")
    want_in = (1, 3, INPUT_SIDE, INPUT_SIDE) if layout == "NCHW" \
        else (1, INPUT_SIDE, INPUT_SIDE, 3)
    if tuple(in_shape) != want_in:
        raise ShapeMismatch(want_in, tuple(in_shape))

    flat = int(np.prod([d for d in out_shape if d > 0]))
    spatial_channels = tuple(d for d in out_shape if d != 1)
    want_pooled = {(512, 4, 4), (4, 4, 512)}
    if flat != OUTPUT_DIM or spatial_channels not in want_pooled:
        raise ShapeMismatch("(4, 4, 512) pooled / 8192 flat",
                            tuple(out_shape))

    mean = model.metadata.get("channel_mean", "0,0,0")
    scale = float(model.metadata.get("scale", "1.0"))
    return {
        "executor": onnxlite.Executor(model.graph),
        "input_name": in_name,
        "output_name": out_name,
        "input_layout": layout,
        "output_layout": model.metadata.get("output_layout",
                                            "NCHW" if spatial_channels == (512, 4, 4)
                                            else "NHWC"),
        "channel_order": model.metadata.get("channel_order", "RGB"),
        "channel_mean": np.array([float(v) for v in mean.split(",")],
                                 dtype=np.float32),
        "scale": np.float32(scale),
        "metadata": model.metadata,
    }


def load_extractor(backend) -> ExtractorHandle:
    """Validate the backend and return a ready, shareable handle."""
    if isinstance(backend, StubHash):
        return ExtractorHandle(backend=backend, _state=_build_stub_state(backend.seed))
    if isinstance(backend, PretrainedBackbone):
        return ExtractorHandle(backend=backend,
                               _state=_load_backbone_state(backend.path))
    raise ModelError(f"unknown extractor backend {backend!r}")


def _check_image(img: RgbImage) -> np.ndarray:
    pixels = img.pixels
    if pixels.shape != (INPUT_SIDE, INPUT_SIDE, 3):
        raise BadInputShape((INPUT_SIDE, INPUT_SIDE, 3), pixels.shape)
    return pixels


def _stub_batch(state: dict, batch: np.ndarray) -> np.ndarray:
    n = batch.shape[0]
    g = _STUB_GRID
    block = INPUT_SIDE // g
    coarse = batch.reshape(n, g, block, g, block, 3).mean(axis=(2, 4))
    flat = coarse.reshape(n, -1).astype(np.float32) / np.float32(255.0)
    pre = (flat - np.float32(0.5)) @ state["proj"].T * np.float32(2.0)
    return 0.5 * (1.0 + np.tanh(pre + state["bias"]))


def _backbone_single(state: dict, pixels: np.ndarray) -> np.ndarray:
    x = pixels.astype(np.float32)
    if state["channel_order"] == "BGR":
        x = x[:, :, ::-1]
    x = (x - state["channel_mean"]) * state["scale"]
    if state["input_layout"] == "NCHW":
        x = x.transpose(2, 0, 1)
    out = state["executor"].run({state["input_name"]: x[None]})[state["output_name"]]
    out = np.squeeze(out, axis=0) if out.shape[0] == 1 else out
    if state["output_layout"] == "NCHW":
        out = out.reshape(512, 4, 4).transpose(1, 2, 0)
    return out.reshape(-1).astype(np.float32)


def extract_batch(handle: ExtractorHandle, images, modality: str = "raw") -> np.ndarray:
    """(n, 8192) float32 matrix for a batch of 150x150x3 images."""
    pixels = np.stack([_check_image(img) for img in images])
    if isinstance(handle.backend, StubHash):
        return _stub_batch(handle._state, pixels).astype(np.float32)
    return np.stack([_backbone_single(handle._state, p) for p in pixels])


def extract(handle: ExtractorHandle, img: RgbImage,
            modality: str = "raw") -> FeatureVector:
    """One 8,192-dim feature vector, deterministic per (backend, image)."""
    values = extract_batch(handle, [img], modality)[0]
    return FeatureVector(values=values.astype(np.float64), modality=modality)


def combine_task_features(raw_fv: FeatureVector, residual_fv: FeatureVector,
                          edge_fv: FeatureVector) -> FeatureVector:
    """Concatenate the three modalities in fixed raw||residual||edge order.

    Inputs may arrive in any order; they are reordered by modality tag.
    """
    by_modality = {}
    for fv in (raw_fv, residual_fv, edge_fv):
        if len(fv) != OUTPUT_DIM:
            raise DimMismatch(f"{fv.modality} vector has {len(fv)} dims, "
                              f"want {OUTPUT_DIM}")
        if fv.modality in by_modality:
            raise DimMismatch(f"duplicate modality {fv.modality}")
        by_modality[fv.modality] = fv
    if set(by_modality) != set(CNN_MODALITIES):
        raise DimMismatch(f"need modalities {CNN_MODALITIES}, got "
                          f"{sorted(by_modality)}")
    ordered = [by_modality[m] for m in CNN_MODALITIES]
    return FeatureVector(
        values=np.concatenate([fv.values for fv in ordered]),
        modality="combined",
        dim_names=tuple(n for fv in ordered for n in fv.dim_names),
    )


def split_combined(fv: FeatureVector) -> tuple[FeatureVector, ...]:
    """Inverse of combine_task_features (concatenation round-trip)."""
    if len(fv) != 3 * OUTPUT_DIM:
        raise DimMismatch(f"combined vector has {len(fv)} dims")
    parts = []
    for i, modality in enumerate(CNN_MODALITIES):
        chunk = fv.values[i * OUTPUT_DIM:(i + 1) * OUTPUT_DIM]
        parts.append(FeatureVector(values=chunk, modality=modality))
    return tuple(parts)
