"""Support vector machine trained with sequential minimal optimization.

Dual soft-margin SVM, linear or RBF kernel, solved by Platt-style SMO
with an error cache and the usual two-heuristic working-set selection,
made deterministic by sweeping candidates in fixed index order. The
fitted duals satisfy the KKT conditions within `tol` (checked by
`kkt_residual`). Probabilities come from a Platt sigmoid fitted on the
training margins by damped Newton (at most 100 iterations).
"""

from __future__ import annotations

import numpy as np

from ..errors import DataError, DimMismatch, DimTooSmall, SingleClassTrainingSet

_ALPHA_EPS = 1e-12


def _linear_kernel(A, B):
    return A @ B.T


def _rbf_kernel(A, B, gamma):
    sq = (np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :]
          - 2.0 * (A @ B.T))
    return np.exp(-gamma * np.maximum(sq, 0.0))


class TrainedSvm:
    kind = "svm"

    def __init__(self, X, y_signed, alpha, b, kernel, gamma, C, tol,
                 platt_ab=None):
        keep = alpha > _ALPHA_EPS
        self.sv_x = X[keep]
        self.sv_coef = (alpha * y_signed)[keep]
        self.b = b
        self.kernel = kernel
        self.gamma = gamma
        self.C = C
        self.tol = tol
        self.n_features = X.shape[1]
        self.platt_ab = platt_ab
        # full dual state kept for KKT auditing
        self.alpha = alpha
        self.train_x = X
        self.train_y = y_signed

    def _check(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimMismatch(f"expected {self.n_features} features, got {X.shape}")
        return X

    def _gram(self, X):
        if self.kernel == "linear":
            return _linear_kernel(X, self.sv_x)
        return _rbf_kernel(X, self.sv_x, self.gamma)

    def decision(self, X) -> np.ndarray:
        X = self._check(X)
        if len(self.sv_x) == 0:
            return np.full(X.shape[0], self.b)
        return self._gram(X) @ self.sv_coef + self.b

    def predict(self, X) -> np.ndarray:
        return (self.decision(X) > 0).astype(np.int64)

    def predict_score(self, X) -> np.ndarray:
        return self.decision(X)

    def predict_proba(self, X) -> np.ndarray:
        a, b = self.platt_ab
        p1 = 1.0 / (1.0 + np.exp(np.clip(a * self.decision(X) + b, -500, 500)))
        return np.column_stack([1.0 - p1, p1])


def _smo(K, y, C, tol, max_sweeps=400):
    """Platt SMO on a precomputed kernel matrix; returns (alpha, b)."""
    n = len(y)
    alpha = np.zeros(n)
    b = 0.0
    errors = -y.astype(np.float64)  # f(x) = 0 initially

    def take_step(i1, i2):
        nonlocal b
        if i1 == i2:
            return False
        a1, a2 = alpha[i1], alpha[i2]
        y1, y2 = y[i1], y[i2]
        e1, e2 = errors[i1], errors[i2]
        s = y1 * y2
        if s > 0:
            lo, hi = max(0.0, a1 + a2 - C), min(C, a1 + a2)
        else:
            lo, hi = max(0.0, a2 - a1), min(C, C + a2 - a1)
        if lo >= hi:
            return False
        k11, k12, k22 = K[i1, i1], K[i1, i2], K[i2, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            a2_new = a2 + y2 * (e1 - e2) / eta
            a2_new = min(max(a2_new, lo), hi)
        else:
            # degenerate curvature: evaluate objective at both clip ends
            f1 = y1 * e1 - a1 * k11 - s * a2 * k12
            f2 = y2 * e2 - a2 * k22 - s * a1 * k12
            l1 = a1 + s * (a2 - lo)
            h1 = a1 + s * (a2 - hi)
            obj_lo = (l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11
                      + 0.5 * lo * lo * k22 + s * lo * l1 * k12)
            obj_hi = (h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11
                      + 0.5 * hi * hi * k22 + s * hi * h1 * k12)
            if obj_lo < obj_hi - 1e-12:
                a2_new = lo
            elif obj_lo > obj_hi + 1e-12:
                a2_new = hi
            else:
                return False
        if abs(a2_new - a2) < 1e-12 * (a2_new + a2 + 1e-12):
            return False
        a1_new = a1 + s * (a2 - a2_new)

        b1 = e1 + y1 * (a1_new - a1) * k11 + y2 * (a2_new - a2) * k12 + b
        b2 = e2 + y1 * (a1_new - a1) * k12 + y2 * (a2_new - a2) * k22 + b
        if 0 < a1_new < C:
            b_new = b1
        elif 0 < a2_new < C:
            b_new = b2
        else:
            b_new = 0.5 * (b1 + b2)

        delta = (y1 * (a1_new - a1) * K[i1] + y2 * (a2_new - a2) * K[i2]
                 + (b - b_new))
        errors[:] += delta
        alpha[i1], alpha[i2] = a1_new, a2_new
        b = b_new
        return True

    def examine(i2):
        y2, a2, e2 = y[i2], alpha[i2], errors[i2]
        r2 = e2 * y2
        if (r2 < -tol and a2 < C) or (r2 > tol and a2 > 0):
            non_bound = np.nonzero((alpha > _ALPHA_EPS) & (alpha < C - _ALPHA_EPS))[0]
            if len(non_bound) > 1:
                i1 = non_bound[np.argmax(np.abs(errors[non_bound] - e2))]
                if take_step(int(i1), i2):
                    return True
            for i1 in non_bound:
                if take_step(int(i1), i2):
                    return True
            for i1 in range(n):
                if take_step(i1, i2):
                    return True
        return False

    examine_all = True
    for _ in range(max_sweeps):
        changed = 0
        targets = range(n) if examine_all else \
            np.nonzero((alpha > _ALPHA_EPS) & (alpha < C - _ALPHA_EPS))[0]
        for i2 in targets:
            changed += examine(int(i2))
        if examine_all:
            if changed == 0:
                break
            examine_all = False
        elif changed == 0:
            examine_all = True
    return alpha, b


def _fit_platt(decision, y_signed, max_iter=100):
    """Platt sigmoid A, B on training margins (Lin-Huang-Weng Newton)."""
    t = np.where(y_signed > 0,
                 (np.sum(y_signed > 0) + 1.0) / (np.sum(y_signed > 0) + 2.0),
                 1.0 / (np.sum(y_signed < 0) + 2.0))
    f = decision
    a, b = 0.0, np.log((np.sum(y_signed < 0) + 1.0) / (np.sum(y_signed > 0) + 1.0))
    sigma = 1e-12
    for _ in range(max_iter):
        z = a * f + b
        p = 1.0 / (1.0 + np.exp(np.clip(z, -500, 500)))
        # gradient of cross-entropy wrt (a, b); d = p - (1 - t)... careful:
        # P(y=1|f) = 1/(1+exp(a f + b)); loss = -sum t log p + (1-t) log(1-p)
        d1 = p - t
        g1 = np.sum(f * d1)
        g2 = np.sum(d1)
        if abs(g1) < 1e-10 and abs(g2) < 1e-10:
            break
        w = p * (1.0 - p)
        h11 = np.sum(f * f * w) + sigma
        h22 = np.sum(w) + sigma
        h12 = np.sum(f * w)
        det = h11 * h22 - h12 * h12
        if det <= 0:
            break
        # Newton step -H^-1 grad, with grad F = -(g1, g2) as computed above
        da = (h22 * g1 - h12 * g2) / det
        db = (-h12 * g1 + h11 * g2) / det
        a, b = a + da, b + db
        if max(abs(da), abs(db)) < 1e-12:
            break
    # note sign convention: P(y=1) = 1/(1+exp(a f + b)) needs a <= 0
    return a, b


def fit_svm(X, y, kernel: str = "linear", C: float = 1.0,
            gamma: float | None = None, tol: float = 1e-4) -> TrainedSvm:
    """Train via SMO. gamma = 1 / n_features when left unset (RBF only)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DataError(f"bad training shapes {X.shape} vs {y.shape}")
    if not np.isfinite(X).all():
        raise DataError("training matrix contains NaN/inf")
    if C <= 0:
        raise DataError("C must be positive")
    classes = np.unique(y)
    if len(classes) < 2:
        raise SingleClassTrainingSet(f"only class {classes.tolist()} present")
    if X.shape[1] < 1:
        raise DimTooSmall("gamma = 1/n undefined for 0 features")
    y_signed = np.where(y == 1, 1.0, -1.0)

    if kernel == "linear":
        K = _linear_kernel(X, X)
        gamma_val = 0.0
    elif kernel == "rbf":
        gamma_val = float(gamma) if gamma is not None else 1.0 / X.shape[1]
        if gamma_val <= 0:
            raise DataError("gamma must be positive")
        K = _rbf_kernel(X, X, gamma_val)
    else:
        raise DataError(f"unknown kernel {kernel!r}")

    alpha, b_raw = _smo(K, y_signed, C, tol)
    # decision uses f(x) = sum coef K + b with Platt's b sign folded in
    decision_train = K @ (alpha * y_signed) - b_raw
    platt_ab = _fit_platt(decision_train, y_signed)
    return TrainedSvm(X, y_signed, alpha, -b_raw, kernel, gamma_val, C, tol,
                      platt_ab=platt_ab)


def kkt_residual(model: TrainedSvm) -> float:
    """Largest violation of the dual KKT conditions on the training set."""
    K = (_linear_kernel(model.train_x, model.train_x)
         if model.kernel == "linear"
         else _rbf_kernel(model.train_x, model.train_x, model.gamma))
    margins = model.train_y * (K @ (model.alpha * model.train_y) + model.b)
    res = np.zeros_like(margins)
    at_zero = model.alpha <= _ALPHA_EPS
    at_c = model.alpha >= model.C - _ALPHA_EPS
    interior = ~at_zero & ~at_c
    res[at_zero] = np.maximum(0.0, 1.0 - margins[at_zero])
    res[interior] = np.abs(1.0 - margins[interior])
    res[at_c] = np.maximum(0.0, margins[at_c] - 1.0)
    return float(res.max()) if len(res) else 0.0


def dual_feasibility(model: TrainedSvm) -> tuple[float, float]:
    """(max box violation, |sum alpha_i y_i|) for the fitted duals."""
    box = float(np.maximum(-model.alpha, model.alpha - model.C).max())
    balance = float(abs(np.sum(model.alpha * model.train_y)))
    return max(box, 0.0), balance
