"""Stratified fold assignment shared by the CV harness and the inner
selection loop."""

from __future__ import annotations

import numpy as np

from .errors import TooFewSubjects


def stratified_assignment(labels, k: int, rng: np.random.Generator) -> np.ndarray:
    """Deterministic stratified fold indices, one per row of `labels`.

    Each class is shuffled and dealt round-robin; classes start dealing
    at staggered offsets (largest-remainder staggering) so total fold
    sizes stay within one of each other, not just per-class counts.
    """
    labels = np.asarray(labels)
    n = len(labels)
    if k < 2:
        raise TooFewSubjects(f"need k >= 2 folds, got {k}")
    if k > n:
        raise TooFewSubjects(f"k={k} folds but only {n} subjects")
    classes = sorted(set(labels.tolist()))
    if len(classes) < 2:
        raise TooFewSubjects("need at least one subject per class in folds; "
                             "labels contain a single class")
    assignment = np.empty(n, dtype=np.int64)
    offset = 0
    for cls in classes:
        rows = np.nonzero(labels == cls)[0]
        rows = rows[rng.permutation(len(rows))]
        assignment[rows] = (np.arange(len(rows)) + offset) % k
        offset += len(rows) % k
    return assignment
