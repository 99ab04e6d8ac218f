"""Stratified 10-fold cross-validation harness and experiment runners.

Protocol (mirrored from the classification workflow this package
reproduces): per fold, features are selected on the training rows only
(nested), dynamic columns are z-scored with training statistics, five
classifiers are fitted per task, and the best five tasks by accuracy are
pooled by majority vote. Accuracy / sensitivity / specificity are
averaged per fold; AUC is the Mann-Whitney statistic pooled over all
test predictions. A deliberately leaky mode ranks features once on the
full dataset before CV, existing only to demonstrate selection bias.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import classifiers as clf
from .dynamics import Scaler, zscore_apply, zscore_fit
from .errors import DataError, SingleClass, TooFewSubjects, TooFewTasks
from .folding import stratified_assignment
from .seeding import child_seed
from .selection import SelectionPlan, apply_selection, rank_features

PD_POSITIVE = "PD"
TASK_IDS = tuple(range(1, 9))


# --- folds ---------------------------------------------------------------

@dataclass(frozen=True)
class FoldPlan:
    k: int
    seed: int
    assignment: dict  # subject_id -> fold index

    def fold_of(self, subjects) -> np.ndarray:
        return np.array([self.assignment[s] for s in subjects], dtype=np.int64)


def make_folds(labels: dict, k: int = 10, seed: int = 0) -> FoldPlan:
    """Deterministic stratified fold assignment from subject -> label."""
    subjects = sorted(labels)
    if k > len(subjects):
        raise TooFewSubjects(f"k={k} folds but {len(subjects)} subjects")
    y = np.array([labels[s] for s in subjects])
    rng = np.random.default_rng(child_seed(seed, "folds"))
    assignment = stratified_assignment(y, k, rng)
    return FoldPlan(k=k, seed=seed,
                    assignment={s: int(f) for s, f in zip(subjects, assignment)})


# --- metrics ---------------------------------------------------------------

def auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(tie)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs both classes")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum_pos = ranks[labels == 1].sum()
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    auc: float
    sensitivity: float
    specificity: float
    per_fold: tuple = ()

    def __post_init__(self):
        for name in ("accuracy", "auc", "sensitivity", "specificity"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0 or np.isnan(v)):
                raise DataError(f"{name}={v} outside [0, 1]")


def _fold_rates(y_true, y_pred):
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    tn = int(np.sum((y_true == 0) & (y_pred == 0)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    n = tp + tn + fp + fn
    return {
        "tp": tp, "tn": tn, "fp": fp, "fn": fn,
        "accuracy": (tp + tn) / n if n else np.nan,
        "sensitivity": tp / (tp + fn) if tp + fn else np.nan,
        "specificity": tn / (tn + fp) if tn + fp else np.nan,
    }


def metrics_from_predictions(y_true, y_pred, fold_of, scores) -> Metrics:
    """Per-fold averaged rates plus pooled Mann-Whitney AUC."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    per_fold = []
    for f in sorted(set(fold_of.tolist())):
        sel = fold_of == f
        rates = _fold_rates(y_true[sel], y_pred[sel])
        rates["fold"] = int(f)
        try:
            rates["auc"] = auc(np.asarray(scores)[sel], y_true[sel])
        except SingleClass:
            rates["auc"] = np.nan
        per_fold.append(rates)
    return Metrics(
        accuracy=float(np.mean([r["accuracy"] for r in per_fold])),
        auc=auc(scores, y_true),
        sensitivity=float(np.nanmean([r["sensitivity"] for r in per_fold])),
        specificity=float(np.nanmean([r["specificity"] for r in per_fold])),
        per_fold=tuple(per_fold),
    )


# --- feature bundles ----------------------------------------------------------

@dataclass
class TaskMatrix:
    """Feature rows for one task under one modality."""

    task_id: int
    modality_key: str
    X: np.ndarray                   # (n_subjects, d)
    dim_names: tuple
    scale_cols: Optional[np.ndarray] = None   # bool per column: fold z-scoring
    valid_mask: Optional[np.ndarray] = None   # bool per cell: observed values

    def __post_init__(self):
        if self.X.ndim != 2 or len(self.dim_names) != self.X.shape[1]:
            raise DataError("TaskMatrix shape/dim_names mismatch")


@dataclass
class FeatureBundle:
    """All per-task matrices for one cohort, keyed by modality."""

    subjects: tuple
    y: np.ndarray                  # 0/1, 1 = PD
    matrices: dict                 # modality_key -> {task_id: TaskMatrix}

    def labels_by_subject(self) -> dict:
        return {s: (PD_POSITIVE if v == 1 else "HC")
                for s, v in zip(self.subjects, self.y)}

    def tasks(self, modality_key) -> tuple:
        return tuple(sorted(self.matrices[modality_key]))


@dataclass(frozen=True)
class RunSettings:
    master_seed: int = 0
    k_folds: int = 10
    m_best: int = 5
    n_keep_cnn: int = 50
    n_keep_dynamic: int = 30
    ensemble_classifier: Optional[str] = None  # None -> best per task
    fusion_classifier: str = "random_forest"
    jobs: int = 1

    def n_keep_for(self, modality_key: str) -> int:
        return self.n_keep_dynamic if modality_key == "dynamic" \
            else self.n_keep_cnn


# --- per-task CV core ----------------------------------------------------------

@dataclass
class TaskCvResult:
    task_id: int
    modality_key: str
    fold_of: np.ndarray                    # per subject
    y: np.ndarray
    predictions: dict                      # clf name -> (n,) labels
    probas: dict                           # clf name -> (n, 2)
    scores: dict                           # clf name -> (n,)
    metrics: dict                          # clf name -> Metrics
    selection_plans: dict                  # fold -> SelectionPlan
    scalers: dict                          # fold -> Scaler | None

    def accuracy_of(self, name) -> float:
        return self.metrics[name].accuracy

    def best_classifier(self) -> str:
        return max(clf.CLASSIFIER_ORDER,
                   key=lambda name: (self.accuracy_of(name),
                                     -clf.CLASSIFIER_ORDER.index(name)))


def _seeded_specs(settings: RunSettings, modality_key, task_id, fold):
    specs = {}
    for name, spec in clf.default_specs().items():
        if hasattr(spec, "seed"):
            seed = child_seed(settings.master_seed, "clf", name,
                              modality_key, task_id, fold)
            spec = replace(spec, seed=seed)
        specs[name] = spec
    return specs


def _fold_transform(tm: TaskMatrix, train_idx: np.ndarray):
    """Fit fold scaler on training rows; return transform fn + scaler."""
    if tm.scale_cols is None or not tm.scale_cols.any():
        return (lambda X, rows: X[rows]), None
    cols = tm.scale_cols
    mask = tm.valid_mask if tm.valid_mask is not None else \
        np.ones(tm.X.shape, dtype=bool)
    scaler = zscore_fit(tm.X[np.ix_(train_idx, np.nonzero(cols)[0])],
                        mask[np.ix_(train_idx, np.nonzero(cols)[0])])

    col_idx = np.nonzero(cols)[0]

    def transform(X, rows):
        out = X[rows].astype(np.float64, copy=True)
        out[:, col_idx] = zscore_apply(scaler, X[np.ix_(rows, col_idx)],
                                       mask[np.ix_(rows, col_idx)])
        return out

    return transform, scaler


def run_task_cv(bundle: FeatureBundle, task_id: int, modality_key: str,
                fold_plan: FoldPlan, settings: RunSettings,
                nested: bool = True,
                specs: Optional[dict] = None) -> TaskCvResult:
    """Full CV pass for one task: per fold, scale -> select -> fit -> test.

    With nested=False the selection plan is computed once on the entire
    dataset (test labels included) before CV; that mode exists solely to
    demonstrate the optimism it causes and is flagged in reports.
    """
    tm = bundle.matrices[modality_key][task_id]
    y = bundle.y
    fold_of = fold_plan.fold_of(bundle.subjects)
    n_keep = settings.n_keep_for(modality_key)

    leaky_plan = None
    if not nested:
        transform_all, _ = _fold_transform(tm, np.arange(len(y)))
        X_all = transform_all(tm.X, np.arange(len(y)))
        leaky_plan = rank_features(
            X_all, y, dim_names=tm.dim_names, n_keep=n_keep,
            seed=child_seed(settings.master_seed, "select", modality_key,
                            task_id, "leaky"),
            fitted_on=f"task{task_id}_full_dataset_LEAKY")

    names = list((specs or clf.default_specs()).keys())
    predictions = {n: np.full(len(y), -1, dtype=np.int64) for n in names}
    probas = {n: np.zeros((len(y), 2)) for n in names}
    scores = {n: np.zeros(len(y)) for n in names}
    selection_plans = {}
    scalers = {}

    for f in range(fold_plan.k):
        test_idx = np.nonzero(fold_of == f)[0]
        train_idx = np.nonzero(fold_of != f)[0]
        if len(test_idx) == 0:
            continue
        transform, scaler = _fold_transform(tm, train_idx)
        X_train = transform(tm.X, train_idx)
        X_test = transform(tm.X, test_idx)
        scalers[f] = scaler

        if nested:
            plan = rank_features(
                X_train, y[train_idx], dim_names=tm.dim_names, n_keep=n_keep,
                seed=child_seed(settings.master_seed, "select", modality_key,
                                task_id, f),
                fitted_on=f"task{task_id}_fold{f}")
        else:
            plan = leaky_plan
        selection_plans[f] = plan

        X_tr = apply_selection(plan, X_train, tm.dim_names)
        X_te = apply_selection(plan, X_test, tm.dim_names)

        fold_specs = specs or _seeded_specs(settings, modality_key, task_id, f)
        for name in names:
            model = clf.fit(fold_specs[name], X_tr, y[train_idx])
            predictions[name][test_idx] = model.predict(X_te)
            probas[name][test_idx] = model.predict_proba(X_te)
            scores[name][test_idx] = model.predict_score(X_te)

    metrics = {
        n: metrics_from_predictions(y, predictions[n], fold_of, scores[n])
        for n in names
    }
    return TaskCvResult(task_id, modality_key, fold_of, y, predictions,
                        probas, scores, metrics, selection_plans, scalers)


def run_single_task(bundle: FeatureBundle, task_id: int, modality_key: str,
                    spec, fold_plan: FoldPlan,
                    settings: RunSettings) -> Metrics:
    """One classifier on one task (thin wrapper over run_task_cv)."""
    result = run_task_cv(bundle, task_id, modality_key, fold_plan, settings,
                         specs={"only": spec})
    return result.metrics["only"]


# --- ensembles -----------------------------------------------------------------

def select_best_tasks(per_task_accuracy: dict, m: int = 5) -> tuple:
    """Top-m task ids by accuracy; ties prefer the lower task id."""
    if len(per_task_accuracy) < m:
        raise TooFewTasks(f"need >= {m} tasks, have {len(per_task_accuracy)}")
    ranked = sorted(per_task_accuracy.items(), key=lambda kv: (-kv[1], kv[0]))
    return tuple(task for task, _ in ranked[:m])


@dataclass
class EnsembleResult:
    best_tasks: tuple
    chosen_classifier: dict        # task -> classifier name
    metrics: Metrics
    per_task: dict                 # task -> TaskCvResult


def ensemble_from_results(results: dict, settings: RunSettings) -> EnsembleResult:
    """Majority vote over the best-m tasks' per-subject test predictions.

    Task selection uses accuracies from the same CV pass it then pools,
    matching the published protocol; the optimism this induces is noted
    in the report footer. Ensemble AUC comes from soft-voted probabilities.
    """
    chosen = {}
    per_task_acc = {}
    for task, res in results.items():
        name = (settings.ensemble_classifier or res.best_classifier())
        chosen[task] = name
        per_task_acc[task] = res.accuracy_of(name)
    best = select_best_tasks(per_task_acc, settings.m_best)

    any_res = next(iter(results.values()))
    n = len(any_res.y)
    votes = np.stack([results[t].predictions[chosen[t]] for t in best])
    probas = np.stack([results[t].probas[chosen[t]] for t in best])
    soft = probas.mean(axis=0)
    soft = soft / soft.sum(axis=1, keepdims=True)
    pred = np.array([
        clf.majority_vote(votes[:, i], probas[:, i, :]) for i in range(n)
    ])
    metrics = metrics_from_predictions(any_res.y, pred, any_res.fold_of,
                                       soft[:, 1])
    return EnsembleResult(best, chosen, metrics, results)


def run_task_ensemble(bundle: FeatureBundle, modality_key: str,
                      fold_plan: FoldPlan, settings: RunSettings,
                      nested: bool = True,
                      task_runner=run_task_cv) -> EnsembleResult:
    results = {
        task: task_runner(bundle, task, modality_key, fold_plan, settings,
                          nested=nested)
        for task in bundle.tasks(modality_key)
    }
    return ensemble_from_results(results, settings)


# --- fusion and modality combination ---------------------------------------------

def run_task_fusion(bundle: FeatureBundle, modality_key: str,
                    fold_plan: FoldPlan, settings: RunSettings) -> Metrics:
    """Concatenate all tasks' selected features, one classifier per fold."""
    tasks = bundle.tasks(modality_key)
    y = bundle.y
    fold_of = fold_plan.fold_of(bundle.subjects)
    spec_proto = clf.default_specs()[settings.fusion_classifier]

    pred = np.full(len(y), -1, dtype=np.int64)
    proba1 = np.zeros(len(y))
    for f in range(fold_plan.k):
        test_idx = np.nonzero(fold_of == f)[0]
        train_idx = np.nonzero(fold_of != f)[0]
        if len(test_idx) == 0:
            continue
        blocks_train, blocks_test = [], []
        for task in tasks:
            tm = bundle.matrices[modality_key][task]
            transform, _ = _fold_transform(tm, train_idx)
            X_train = transform(tm.X, train_idx)
            X_test = transform(tm.X, test_idx)
            plan = rank_features(
                X_train, y[train_idx], dim_names=tm.dim_names,
                n_keep=settings.n_keep_for(modality_key),
                seed=child_seed(settings.master_seed, "select", modality_key,
                                task, f),
                fitted_on=f"task{task}_fold{f}")
            blocks_train.append(apply_selection(plan, X_train, tm.dim_names))
            blocks_test.append(apply_selection(plan, X_test, tm.dim_names))
        X_tr = np.concatenate(blocks_train, axis=1)
        X_te = np.concatenate(blocks_test, axis=1)
        spec = spec_proto
        if hasattr(spec, "seed"):
            spec = replace(spec, seed=child_seed(settings.master_seed, "clf",
                                                 "fusion", f))
        model = clf.fit(spec, X_tr, y[train_idx])
        pred[test_idx] = model.predict(X_te)
        proba1[test_idx] = model.predict_proba(X_te)[:, 1]
    return metrics_from_predictions(y, pred, fold_of, proba1)


def combined_feature_bundle(bundle: FeatureBundle, cnn_key: str,
                            combined_key: str = "feature_combo") -> FeatureBundle:
    """Per task, concatenate CNN and dynamic columns into one matrix."""
    matrices = {}
    for task in bundle.tasks(cnn_key):
        cnn_tm = bundle.matrices[cnn_key][task]
        dyn_tm = bundle.matrices["dynamic"][task]
        n = cnn_tm.X.shape[0]
        X = np.concatenate([cnn_tm.X, dyn_tm.X], axis=1)
        scale_cols = np.concatenate([
            np.zeros(cnn_tm.X.shape[1], dtype=bool),
            np.ones(dyn_tm.X.shape[1], dtype=bool),
        ])
        valid = np.concatenate([
            np.ones(cnn_tm.X.shape, dtype=bool),
            dyn_tm.valid_mask if dyn_tm.valid_mask is not None
            else np.ones(dyn_tm.X.shape, dtype=bool),
        ], axis=1)
        matrices[task] = TaskMatrix(
            task_id=task, modality_key=combined_key, X=X,
            dim_names=tuple(cnn_tm.dim_names) + tuple(dyn_tm.dim_names),
            scale_cols=scale_cols, valid_mask=valid)
    return FeatureBundle(bundle.subjects, bundle.y,
                         {**bundle.matrices, combined_key: matrices})


@dataclass
class ScoreComboResult:
    best_tasks: tuple
    chosen: dict          # task -> (cnn clf, dynamic clf)
    metrics: Metrics


def run_score_combo(bundle: FeatureBundle, cnn_key: str, fold_plan: FoldPlan,
                    settings: RunSettings,
                    cnn_results: Optional[dict] = None,
                    dyn_results: Optional[dict] = None) -> ScoreComboResult:
    """Per task, soft-vote the CNN and dynamic classifiers' probabilities;
    majority-vote the best tasks' decisions."""
    tasks = bundle.tasks(cnn_key)
    cnn_results = cnn_results or {
        t: run_task_cv(bundle, t, cnn_key, fold_plan, settings) for t in tasks}
    dyn_results = dyn_results or {
        t: run_task_cv(bundle, t, "dynamic", fold_plan, settings) for t in tasks}

    y = bundle.y
    fold_of = fold_plan.fold_of(bundle.subjects)
    task_pred, task_proba, task_acc, chosen = {}, {}, {}, {}
    for t in tasks:
        c_name = cnn_results[t].best_classifier()
        d_name = dyn_results[t].best_classifier()
        chosen[t] = (c_name, d_name)
        fused = np.stack([cnn_results[t].probas[c_name],
                          dyn_results[t].probas[d_name]]).mean(axis=0)
        fused = fused / fused.sum(axis=1, keepdims=True)
        pred = (fused[:, 1] > 0.5).astype(np.int64)
        task_pred[t], task_proba[t] = pred, fused
        task_acc[t] = metrics_from_predictions(y, pred, fold_of,
                                               fused[:, 1]).accuracy

    best = select_best_tasks(task_acc, settings.m_best)
    votes = np.stack([task_pred[t] for t in best])
    probas = np.stack([task_proba[t] for t in best])
    soft = probas.mean(axis=0)
    soft = soft / soft.sum(axis=1, keepdims=True)
    pred = np.array([clf.majority_vote(votes[:, i], probas[:, i, :])
                     for i in range(len(y))])
    metrics = metrics_from_predictions(y, pred, fold_of, soft[:, 1])
    return ScoreComboResult(best, chosen, metrics)


# --- leakage demonstration --------------------------------------------------------

@dataclass
class LeakageDemo:
    nested: Metrics
    leaky: Metrics
    gap: float


def run_leakage_demo(bundle: FeatureBundle, modality_key: str,
                     fold_plan: FoldPlan, settings: RunSettings,
                     task_runner=run_task_cv) -> LeakageDemo:
    """Identical ensemble pipeline twice, differing only in nesting."""
    nested = run_task_ensemble(bundle, modality_key, fold_plan, settings,
                               nested=True, task_runner=task_runner)
    leaky = run_task_ensemble(bundle, modality_key, fold_plan, settings,
                              nested=False, task_runner=task_runner)
    return LeakageDemo(nested=nested.metrics, leaky=leaky.metrics,
                       gap=leaky.metrics.accuracy - nested.metrics.accuracy)
