"""The five classifier configurations with a uniform fit/predict surface.

Specs carry the fixed hyperparameters (C = 1, gamma = 1/n_features, 500
base trees) and a seed where the family is randomized. `fit` returns a
trained model exposing predict / predict_score / predict_proba; the
module-level wrappers mirror that surface for callers that prefer
functions. Binary labels are 0/1 with 1 the positive class.
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataError, EmptyVoters, ModelError, NoVoters
from .boost import Stump, TrainedBoost, fit_adaboost, fit_stump
from .svm import TrainedSvm, dual_feasibility, fit_svm, kkt_residual
from .trees import TrainedForest, fit_forest

_MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class SvmLinear:
    C: float = 1.0
    name = "svm_linear"
    display = "SVM lin."


@dataclass(frozen=True)
class SvmRbf:
    C: float = 1.0
    gamma: float | None = None  # None -> 1 / n_features at fit time
    name = "svm_rbf"
    display = "SVM RBF"


@dataclass(frozen=True)
class RandomForest:
    trees: int = 500
    seed: int = 0
    name = "random_forest"
    display = "RF"


@dataclass(frozen=True)
class ExtraTrees:
    trees: int = 500
    seed: int = 0
    name = "extra_trees"
    display = "ET"


@dataclass(frozen=True)
class AdaBoost:
    estimators: int = 500
    base_depth: int = 1
    seed: int = 0
    name = "adaboost"
    display = "ADA"


CLASSIFIER_ORDER = ("svm_linear", "svm_rbf", "random_forest", "extra_trees",
                    "adaboost")


def default_specs(seed: int = 0) -> dict:
    """The paper-protocol classifier battery, keyed by name."""
    return {
        "svm_linear": SvmLinear(),
        "svm_rbf": SvmRbf(),
        "random_forest": RandomForest(seed=seed),
        "extra_trees": ExtraTrees(seed=seed),
        "adaboost": AdaBoost(seed=seed),
    }


def fit(spec, X, y):
    """Train `spec` on (X, y); returns an immutable trained model."""
    if isinstance(spec, SvmLinear):
        return fit_svm(X, y, kernel="linear", C=spec.C)
    if isinstance(spec, SvmRbf):
        return fit_svm(X, y, kernel="rbf", C=spec.C, gamma=spec.gamma)
    if isinstance(spec, RandomForest):
        return fit_forest(X, y, n_trees=spec.trees, seed=spec.seed,
                          bootstrap=True, random_cut=False)
    if isinstance(spec, ExtraTrees):
        return fit_forest(X, y, n_trees=spec.trees, seed=spec.seed,
                          bootstrap=False, random_cut=True)
    if isinstance(spec, AdaBoost):
        if spec.base_depth != 1:
            raise DataError("only depth-1 stumps are supported")
        return fit_adaboost(X, y, n_estimators=spec.estimators)
    raise DataError(f"unknown classifier spec {spec!r}")


def predict(model, X) -> np.ndarray:
    return model.predict(X)


def predict_score(model, X) -> np.ndarray:
    return model.predict_score(X)


def predict_proba(model, X) -> np.ndarray:
    return model.predict_proba(X)


# --- vote pooling ---------------------------------------------------------

def majority_vote(labels, probas=None) -> int:
    """Most frequent label; ties fall back to mean probabilities, then 0."""
    labels = list(labels)
    if not labels:
        raise NoVoters("no voters")
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=2)
    if counts[0] != counts[1]:
        return int(np.argmax(counts))
    if probas is not None:
        mean = np.mean(np.asarray(probas, dtype=np.float64), axis=0)
        if mean[1] > mean[0]:
            return 1
        if mean[0] > mean[1]:
            return 0
    return 0


def soft_vote(probas) -> np.ndarray:
    """Unweighted mean of voter probabilities, renormalized."""
    probas = [np.asarray(p, dtype=np.float64) for p in probas]
    if not probas:
        raise EmptyVoters("no voters")
    mean = np.mean(probas, axis=0)
    total = mean.sum()
    if total <= 0:
        return np.full_like(mean, 1.0 / len(mean))
    return mean / total


# --- serialization ----------------------------------------------------------

def save_model(model, path) -> None:
    """Versioned binary dump (not a stability-guaranteed format)."""
    payload = {"format": "inklab-model", "version": _MODEL_FORMAT_VERSION,
               "model": model}
    Path(path).write_bytes(pickle.dumps(payload, protocol=4))


def load_model(path):
    payload = pickle.loads(Path(path).read_bytes())
    if not isinstance(payload, dict) or payload.get("format") != "inklab-model":
        raise ModelError(f"{path} is not an inklab model file")
    if payload.get("version") != _MODEL_FORMAT_VERSION:
        raise ModelError(f"unsupported model format version "
                         f"{payload.get('version')}")
    return payload["model"]


__all__ = [
    "SvmLinear", "SvmRbf", "RandomForest", "ExtraTrees", "AdaBoost",
    "CLASSIFIER_ORDER", "default_specs", "fit", "predict", "predict_score",
    "predict_proba", "majority_vote", "soft_vote", "save_model", "load_model",
    "fit_stump", "Stump", "kkt_residual", "dual_feasibility",
    "TrainedSvm", "TrainedForest", "TrainedBoost",
]
