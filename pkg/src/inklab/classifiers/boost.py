"""AdaBoost over depth-1 stumps (binary, SAMME-style weighting).

The base learner is an exhaustive weighted-Gini stump: every feature,
every cut point between distinct consecutive sorted values (threshold =
midpoint), ties broken by lower feature index then lower threshold.
Boosting stops early when the weighted error reaches 0.5 or 0.

`fit_stump` is also the single-split decision tree used for the
exhaustive-enumeration equivalence checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError, DimMismatch, SingleClassTrainingSet


@dataclass(frozen=True)
class Stump:
    feature: int          # -1 when no split improves (constant prediction)
    threshold: float
    left_label: int       # prediction for x[feature] <= threshold
    right_label: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        if self.feature < 0:
            return np.full(X.shape[0], self.left_label, dtype=np.int64)
        go_left = X[:, self.feature] <= self.threshold
        return np.where(go_left, self.left_label, self.right_label).astype(np.int64)


class _SortedColumns:
    """Per-fit presorted view of X: boosting re-splits the same matrix
    hundreds of times with new weights, so sort once."""

    def __init__(self, X, y):
        self.X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.int64)
        self.n, self.d = self.X.shape
        self.order = np.argsort(self.X, axis=0, kind="stable")
        self.xs = np.take_along_axis(self.X, self.order, axis=0)
        self.pos_sorted = self.y[self.order] == 1
        self.distinct = self.xs[:-1] != self.xs[1:]


def _best_split(sorted_cols: _SortedColumns, w: np.ndarray) -> Stump:
    n = sorted_cols.n
    w_total = w.sum()
    w_pos_total = w[sorted_cols.y == 1].sum()

    ws = w[sorted_cols.order]
    wpos = np.where(sorted_cols.pos_sorted, ws, 0.0)
    cum_w = np.cumsum(ws, axis=0)[:-1]
    cum_pos = np.cumsum(wpos, axis=0)[:-1]

    wl, pl = cum_w, cum_pos
    wr, pr = w_total - wl, w_pos_total - pl
    nl_neg, nr_neg = wl - pl, wr - pr
    with np.errstate(divide="ignore", invalid="ignore"):
        imp = (wl - (pl ** 2 + nl_neg ** 2) / wl) + \
              (wr - (pr ** 2 + nr_neg ** 2) / wr)
    imp = np.where((wl > 0) & (wr > 0), imp, np.inf)
    imp = np.where(sorted_cols.distinct, imp, np.inf)

    flat = imp.T.reshape(-1)  # feature-major: argmin == lexicographic tie rule
    best = int(np.argmin(flat))
    if not np.isfinite(flat[best]):
        label = int(w_pos_total > w_total - w_pos_total)
        return Stump(-1, 0.0, label, label)
    f, i = divmod(best, n - 1)
    xs = sorted_cols.xs
    threshold = 0.5 * (xs[i, f] + xs[i + 1, f])
    if threshold >= xs[i + 1, f]:  # adjacent floats: midpoint rounds up
        threshold = xs[i, f]
    left_label = int(cum_pos[i, f] > cum_w[i, f] - cum_pos[i, f])
    right_pos = w_pos_total - cum_pos[i, f]
    right_neg = (w_total - cum_w[i, f]) - right_pos
    right_label = int(right_pos > right_neg)
    return Stump(int(f), float(threshold), left_label, right_label)


def fit_stump(X, y, sample_weight=None) -> Stump:
    """Best single split by weighted Gini.

    Tie rule (documented contract): lowest weighted child impurity wins;
    exact ties prefer the lower feature index, then the lower threshold.
    Unit default weights keep all impurity arithmetic exact in float64,
    so equal-quality splits tie exactly and the lexicographic rule decides.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    w = (np.ones(n) if sample_weight is None
         else np.asarray(sample_weight, dtype=np.float64))
    return _best_split(_SortedColumns(X, y), w)


class TrainedBoost:
    kind = "adaboost"

    def __init__(self, stumps, alphas, n_features, train_error_path):
        self.stumps = stumps
        self.alphas = alphas
        self.n_features = n_features
        self.train_error_path = train_error_path

    def _check(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimMismatch(f"expected {self.n_features} features, got {X.shape}")
        return X

    def decision(self, X) -> np.ndarray:
        X = self._check(X)
        margin = np.zeros(X.shape[0])
        for stump, alpha in zip(self.stumps, self.alphas):
            margin += alpha * (2.0 * stump.predict(X) - 1.0)
        return margin

    def predict(self, X) -> np.ndarray:
        return (self.decision(X) > 0).astype(np.int64)

    def predict_score(self, X) -> np.ndarray:
        return self.decision(X)

    def predict_proba(self, X) -> np.ndarray:
        # logistic transform of the boosted margin (additive-model estimate)
        p1 = 1.0 / (1.0 + np.exp(np.clip(-2.0 * self.decision(X), -500, 500)))
        return np.column_stack([1.0 - p1, p1])


def fit_adaboost(X, y, n_estimators: int = 500) -> TrainedBoost:
    """Binary AdaBoost: alpha_t = 0.5 ln((1-err)/err) over Gini stumps."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DataError(f"bad training shapes {X.shape} vs {y.shape}")
    if not np.isfinite(X).all():
        raise DataError("training matrix contains NaN/inf")
    classes = np.unique(y)
    if len(classes) < 2:
        raise SingleClassTrainingSet(f"only class {classes.tolist()} present")

    n = X.shape[0]
    y_signed = 2.0 * y - 1.0
    w = np.full(n, 1.0 / n)
    sorted_cols = _SortedColumns(X, y)
    stumps, alphas, error_path = [], [], []
    margin = np.zeros(n)
    for _ in range(n_estimators):
        stump = _best_split(sorted_cols, w)
        pred = stump.predict(X)
        err = float(w[pred != y].sum() / w.sum())
        if err >= 0.5:
            break
        if err == 0.0:
            stumps.append(stump)
            alphas.append(0.5 * np.log((1.0 - 1e-10) / 1e-10))
            margin += alphas[-1] * (2.0 * pred - 1.0)
            error_path.append(float((np.sign(margin) != y_signed).mean()))
            break
        alpha = 0.5 * np.log((1.0 - err) / err)
        stumps.append(stump)
        alphas.append(alpha)
        margin += alpha * (2.0 * pred - 1.0)
        error_path.append(float((np.sign(margin) != y_signed).mean()))
        w = w * np.exp(-alpha * y_signed * (2.0 * pred - 1.0))
        w /= w.sum()

    if not stumps:  # first stump already at chance: constant majority model
        stump = _best_split(sorted_cols, w)
        stumps, alphas = [stump], [0.0]
        error_path = [float((stump.predict(X) != y).mean())]
    return TrainedBoost(stumps, np.asarray(alphas), X.shape[1], error_path)
