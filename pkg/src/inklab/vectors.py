"""Named feature vectors shared by the deep and hand-crafted extractors."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DataError

MODALITIES = ("raw", "residual", "edge", "dynamic")


@lru_cache(maxsize=None)
def default_dim_names(modality: str, dim: int) -> tuple:
    """Stable `<modality>:<index>` identifiers, shared across vectors."""
    return tuple(f"{modality}:{i}" for i in range(dim))


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    modality: str
    dim_names: tuple = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 1:
            raise DataError(f"feature vector must be 1-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataError("feature vector contains non-finite values")
        if not self.dim_names:
            object.__setattr__(
                self, "dim_names", default_dim_names(self.modality, len(values))
            )
        if len(self.dim_names) != len(values):
            raise DataError(
                f"{len(self.dim_names)} dim names for {len(values)} values"
            )

    def __len__(self) -> int:
        return len(self.values)
