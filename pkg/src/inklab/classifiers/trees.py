"""Random forest and extremely randomized trees, built from scratch.

Trees grow to purity on Gini impurity with a random feature subset of
size sqrt(d) per split. RF bootstraps rows and searches every cut point
of each candidate feature; ET keeps the full sample and draws one
uniform random cut per candidate feature. The per-tree builder is a flat
numba kernel; randomness comes from an explicit splitmix64 stream so the
grown trees are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from ..errors import DataError, DimMismatch, SingleClassTrainingSet
from ..seeding import child_seed

_LEAF = np.int32(-1)


@numba.njit(cache=True, inline="always")
def _mix64(state):
    state = state + numba.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> numba.uint64(30))) * numba.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> numba.uint64(27))) * numba.uint64(0x94D049BB133111EB)
    return state, z ^ (z >> numba.uint64(31))


@numba.njit(cache=True, inline="always")
def _impurity_pair(n_left, pos_left, n_total, pos_total):
    n_right = n_total - n_left
    pos_right = pos_total - pos_left
    neg_left = n_left - pos_left
    neg_right = n_right - pos_right
    left = n_left - (pos_left * pos_left + neg_left * neg_left) / n_left
    right = n_right - (pos_right * pos_right + neg_right * neg_right) / n_right
    return left + right


@numba.njit(cache=True)
def _build_tree(X, y, idx, k_features, random_cut, state,
                feature, threshold, left, right, value):
    n, d = X.shape
    n_samples = idx.shape[0]
    stack_lo = np.empty(2 * n_samples + 2, dtype=np.int64)
    stack_hi = np.empty(2 * n_samples + 2, dtype=np.int64)
    stack_node = np.empty(2 * n_samples + 2, dtype=np.int64)
    perm = np.arange(d).astype(np.int64)
    scratch = np.empty(n_samples, dtype=np.int64)

    top = 0
    stack_lo[0], stack_hi[0], stack_node[0] = 0, n_samples, 0
    top = 1
    next_node = 1

    while top > 0:
        top -= 1
        lo, hi, node = stack_lo[top], stack_hi[top], stack_node[top]
        n_node = hi - lo
        pos = 0
        for i in range(lo, hi):
            pos += y[idx[i]]

        if pos == 0 or pos == n_node or n_node < 2:
            feature[node] = _LEAF
            value[node] = pos / n_node
            continue

        best_imp = np.inf
        best_f = -1
        best_thr = np.float32(0.0)
        for j in range(k_features):
            state, z = _mix64(state)
            swap = j + np.int64(z % numba.uint64(d - j))
            perm[j], perm[swap] = perm[swap], perm[j]
            f = perm[j]

            vals = np.empty(n_node, dtype=np.float32)
            for i in range(n_node):
                vals[i] = X[idx[lo + i], f]

            if random_cut:
                vmin = vals[0]
                vmax = vals[0]
                for i in range(1, n_node):
                    if vals[i] < vmin:
                        vmin = vals[i]
                    if vals[i] > vmax:
                        vmax = vals[i]
                if vmin == vmax:
                    continue
                state, z = _mix64(state)
                u = (z >> numba.uint64(11)) * 1.1102230246251565e-16  # [0, 1)
                thr = np.float32(vmin + (vmax - vmin) * u)
                if thr >= vmax:  # keep both children non-empty
                    thr = np.float32(vmin)
                n_left = 0
                pos_left = 0
                for i in range(n_node):
                    if vals[i] <= thr:
                        n_left += 1
                        pos_left += y[idx[lo + i]]
                if n_left == 0 or n_left == n_node:
                    continue
                imp = _impurity_pair(n_left, pos_left, n_node, pos)
                if imp < best_imp or (imp == best_imp and
                                      (f < best_f or (f == best_f and thr < best_thr))):
                    best_imp, best_f, best_thr = imp, f, thr
            else:
                order = np.argsort(vals)
                pos_left = 0
                for i in range(n_node - 1):
                    pos_left += y[idx[lo + order[i]]]
                    vi = vals[order[i]]
                    vn = vals[order[i + 1]]
                    if vi == vn:
                        continue
                    imp = _impurity_pair(i + 1, pos_left, n_node, pos)
                    thr = np.float32(0.5 * (vi + vn))
                    if thr >= vn:  # adjacent float32 values: midpoint rounds up
                        thr = vi
                    if imp < best_imp or (imp == best_imp and
                                          (f < best_f or (f == best_f and thr < best_thr))):
                        best_imp, best_f, best_thr = imp, f, thr

        if best_f < 0:
            feature[node] = _LEAF
            value[node] = pos / n_node
            continue

        # stable partition: left block keeps relative order, then right
        w = 0
        for i in range(lo, hi):
            if X[idx[i], best_f] <= best_thr:
                scratch[w] = idx[i]
                w += 1
        split_at = lo + w
        for i in range(lo, hi):
            if X[idx[i], best_f] > best_thr:
                scratch[w] = idx[i]
                w += 1
        for i in range(n_node):
            idx[lo + i] = scratch[i]

        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = next_node
        right[node] = next_node + 1
        stack_lo[top], stack_hi[top], stack_node[top] = lo, split_at, next_node
        top += 1
        stack_lo[top], stack_hi[top], stack_node[top] = split_at, hi, next_node + 1
        top += 1
        next_node += 2

    return next_node, state


@numba.njit(cache=True)
def _predict_tree(X, feature, threshold, left, right, value, out):
    for i in range(X.shape[0]):
        node = 0
        while feature[node] != _LEAF:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]


@dataclass
class _Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict_p1(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0], dtype=np.float32)
        _predict_tree(X, self.feature, self.threshold, self.left,
                      self.right, self.value, out)
        return out


def _grow_tree(X, y, sample_idx, k_features, random_cut, seed) -> _Tree:
    cap = 2 * len(sample_idx) + 2
    feature = np.full(cap, _LEAF, dtype=np.int32)
    threshold = np.zeros(cap, dtype=np.float32)
    left = np.zeros(cap, dtype=np.int32)
    right = np.zeros(cap, dtype=np.int32)
    value = np.zeros(cap, dtype=np.float32)
    n_nodes, _ = _build_tree(
        X, y, sample_idx.copy(), k_features, random_cut,
        numba.uint64(seed), feature, threshold, left, right, value,
    )
    sl = slice(0, n_nodes)
    return _Tree(feature[sl].copy(), threshold[sl].copy(), left[sl].copy(),
                 right[sl].copy(), value[sl].copy())


class TrainedForest:
    """Bagged trees with vote-fraction probabilities."""

    kind = "forest"

    def __init__(self, trees, n_features, bootstrap_idx, class_prior):
        self.trees = trees
        self.n_features = n_features
        self.bootstrap_idx = bootstrap_idx
        self.class_prior = class_prior

    def _check(self, X):
        X = np.asarray(X, dtype=np.float32)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimMismatch(f"expected {self.n_features} features, "
                              f"got {X.shape}")
        return np.ascontiguousarray(X)

    def votes(self, X) -> np.ndarray:
        X = self._check(X)
        votes = np.zeros(X.shape[0], dtype=np.float64)
        for tree in self.trees:
            votes += (tree.predict_p1(X) > 0.5).astype(np.float64)
        return votes / len(self.trees)

    def predict(self, X) -> np.ndarray:
        return (self.votes(X) > 0.5).astype(np.int64)

    def predict_score(self, X) -> np.ndarray:
        return self.votes(X)

    def predict_proba(self, X) -> np.ndarray:
        p1 = self.votes(X)
        return np.column_stack([1.0 - p1, p1])


def _validate_training(X, y):
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float32))
    y = np.asarray(y, dtype=np.int8)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DataError(f"bad training shapes {X.shape} vs {y.shape}")
    if not np.isfinite(X).all():
        raise DataError("training matrix contains NaN/inf")
    if X.shape[1] < 1:
        raise DataError("no features")
    classes = np.unique(y)
    if len(classes) < 2:
        raise SingleClassTrainingSet(f"only class {classes.tolist()} present")
    if not set(classes.tolist()) <= {0, 1}:
        raise DataError("labels must be 0/1")
    return X, y


def fit_forest(X, y, n_trees: int = 500, seed: int = 0,
               bootstrap: bool = True, random_cut: bool = False) -> TrainedForest:
    """Grow a forest: bootstrap+exhaustive cuts (RF) or full-sample+random
    cuts (ET), sqrt(d) random candidate features per split either way."""
    X, y = _validate_training(X, y)
    n, d = X.shape
    k = max(1, int(round(np.sqrt(d))))
    trees = []
    boot_all = []
    for t in range(n_trees):
        tree_seed = child_seed(seed, "tree", t)
        if bootstrap:
            rng = np.random.default_rng(tree_seed)
            sample_idx = np.sort(rng.integers(0, n, size=n)).astype(np.int64)
        else:
            sample_idx = np.arange(n, dtype=np.int64)
        boot_all.append(sample_idx)
        trees.append(_grow_tree(X, y, sample_idx, k, random_cut,
                                child_seed(tree_seed, "splits")))
    prior = float(y.mean())
    return TrainedForest(trees, d, boot_all, class_prior=prior)
