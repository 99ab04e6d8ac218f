"""Report bundle emission: machine CSV, human Markdown, config echo and
per-fold selection audit files.

Output is byte-deterministic: rows follow canonical (experiment, task,
classifier, fold) order and every float is fixed-format. When the run is
marked as the reference cohort, tables append deltas against the
published PaHaW results so reproduction gaps are visible at a glance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import classifiers as clf
from .errors import DataError
from .evaluate import EnsembleResult, LeakageDemo, Metrics, TaskCvResult

TASK_LABELS = {
    1: "1) Spiral",
    2: "2) Repeated glyph",
    3: "3) Bigram x3",
    4: "4) Trigram x3",
    5: "5) Word A",
    6: "6) Word B",
    7: "7) Word C",
    8: "8) Sentence",
}

MODALITY_LABELS = {
    "cnn_linked": "Static (linked strokes)",
    "cnn_velocity": "Enhanced static (velocity)",
    "cnn_enhanced": "Enhanced static (velocity and in-air)",
    "cnn_enhanced_raw_only": "Enhanced static, raw images only",
    "dynamic": "Dynamic (hand-crafted)",
    "feature_combo": "Feature-level combination",
}

#: Published results on the PaHaW cohort (reference deltas mode). Keyed the
#: same way as this package's experiments; accuracy figures are fractions.
PAHAW_REFERENCE = {
    "ensemble": {
        "cnn_linked": {"accuracy": 0.7250, "auc": 0.6583,
                       "sensitivity": 0.7833, "specificity": 0.6417},
        "dynamic": {"accuracy": 0.8167, "auc": 0.8729,
                    "sensitivity": 0.7167, "specificity": 0.9167},
        "cnn_velocity": {"accuracy": 0.8125, "auc": 0.8632,
                         "sensitivity": 0.7583, "specificity": 0.8667},
        "cnn_enhanced": {"accuracy": 0.8667, "auc": 0.8333,
                         "sensitivity": 0.8917, "specificity": 0.8083},
    },
    "recombination": {
        "template_ensemble": {"accuracy": 0.8667, "auc": 0.8333,
                              "sensitivity": 0.8917, "specificity": 0.8083},
        "raw_only_ensemble": {"accuracy": 0.7375, "auc": 0.7806,
                              "sensitivity": 0.7167, "specificity": 0.7583},
        "fusion": {"accuracy": 0.5792, "auc": 0.6389,
                   "sensitivity": 0.5417, "specificity": 0.6167},
        "feature_level": {"accuracy": 0.8083, "auc": 0.7924,
                          "sensitivity": 0.7917, "specificity": 0.7750},
        "score_level": {"accuracy": 0.7292, "auc": 0.7450,
                        "sensitivity": 0.7100, "specificity": 0.7567},
    },
    "leakage": {"non_nested_accuracy": 0.9458, "non_nested_auc": 1.0},
    "single_task_best": {
        # best per-task accuracy, enhanced static pipeline
        1: 0.7500, 2: 0.6416, 3: 0.5833, 4: 0.7167,
        5: 0.7541, 6: 0.6375, 7: 0.7000, 8: 0.6708,
    },
}


@dataclass
class ExperimentReport:
    experiment_id: str
    modality_key: str
    config_echo: dict
    single_task: dict = field(default_factory=dict)   # task -> TaskCvResult
    ensemble: EnsembleResult | None = None
    fusion_metrics: Metrics | None = None
    combo_metrics: Metrics | None = None
    leakage: LeakageDemo | None = None
    leaky: bool = False
    notes: tuple = ()


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return "nan"
    return f"{v:.6f}"


def _pct(v) -> str:
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return "--"
    return f"{100 * v:.2f}%"


def _csv_rows(report: ExperimentReport):
    base = [report.experiment_id, report.modality_key]
    for task in sorted(report.single_task):
        res = report.single_task[task]
        for name in clf.CLASSIFIER_ORDER:
            if name not in res.metrics:
                continue
            m = res.metrics[name]
            for fold_rates in m.per_fold:
                yield base + [str(task), name, str(fold_rates["fold"]),
                              _fmt(fold_rates["accuracy"]),
                              _fmt(fold_rates.get("auc")),
                              _fmt(fold_rates["sensitivity"]),
                              _fmt(fold_rates["specificity"]),
                              str(int(report.leaky))]
            yield base + [str(task), name, "mean", _fmt(m.accuracy),
                          _fmt(m.auc), _fmt(m.sensitivity),
                          _fmt(m.specificity), str(int(report.leaky))]
    for label, metrics in (("ensemble", report.ensemble.metrics
                            if report.ensemble else None),
                           ("fusion", report.fusion_metrics),
                           ("combo", report.combo_metrics)):
        if metrics is None:
            continue
        for fold_rates in metrics.per_fold:
            yield base + [label, "vote", str(fold_rates["fold"]),
                          _fmt(fold_rates["accuracy"]),
                          _fmt(fold_rates.get("auc")),
                          _fmt(fold_rates["sensitivity"]),
                          _fmt(fold_rates["specificity"]),
                          str(int(report.leaky))]
        yield base + [label, "vote", "mean", _fmt(metrics.accuracy),
                      _fmt(metrics.auc), _fmt(metrics.sensitivity),
                      _fmt(metrics.specificity), str(int(report.leaky))]
    if report.leakage is not None:
        for tag, metrics in (("nested", report.leakage.nested),
                             ("non_nested", report.leakage.leaky)):
            yield base + [f"leakage_{tag}", "vote", "mean",
                          _fmt(metrics.accuracy), _fmt(metrics.auc),
                          _fmt(metrics.sensitivity), _fmt(metrics.specificity),
                          str(int(tag == "non_nested"))]


def render_csv(reports) -> str:
    header = "experiment,modality,task,classifier,fold,accuracy,auc,sensitivity,specificity,leaky"
    lines = [header]
    for report in reports:
        for row in _csv_rows(report):
            lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _single_task_table(report: ExperimentReport) -> list:
    lines = [
        f"### Single task accuracy: {MODALITY_LABELS.get(report.modality_key, report.modality_key)}",
        "",
        "| Task | " + " | ".join(clf.default_specs()[n].display
                                 for n in clf.CLASSIFIER_ORDER) + " |",
        "|" + "---|" * (len(clf.CLASSIFIER_ORDER) + 1),
    ]
    best_tasks = set(report.ensemble.best_tasks) if report.ensemble else set()
    for task in sorted(report.single_task):
        res = report.single_task[task]
        accs = {n: res.metrics[n].accuracy for n in clf.CLASSIFIER_ORDER
                if n in res.metrics}
        best = max(accs.values())
        cells = []
        for n in clf.CLASSIFIER_ORDER:
            if n not in accs:
                cells.append("--")
                continue
            text = _pct(accs[n])
            cells.append(f"**{text}**" if accs[n] == best else text)
        label = TASK_LABELS.get(task, str(task))
        if task in best_tasks:
            label = f"{label} *"
        lines.append("| " + label + " | " + " | ".join(cells) + " |")
    lines += ["", "Bold marks the best accuracy per task; * marks tasks "
              "pooled into the best-5 ensemble.", ""]
    return lines


def _metrics_row(label, m: Metrics, reference=None) -> str:
    cells = [label, _pct(m.accuracy), _pct(m.auc), _pct(m.sensitivity),
             _pct(m.specificity)]
    if reference is not None:
        delta = 100 * (m.accuracy - reference["accuracy"])
        cells.append(f"{delta:+.2f}pp")
    return "| " + " | ".join(cells) + " |"


def render_markdown(reports, config_echo: dict,
                    reference_deltas: bool = False) -> str:
    by_id = {r.experiment_id: r for r in reports}
    lines = ["# Experiment report", ""]
    if any(r.leaky for r in reports):
        lines += ["> **LEAKY**: at least one experiment below used non-nested "
                  "feature selection. Its figures are deliberately "
                  "overoptimistic and exist only as a demonstration.", ""]

    for report in reports:
        if report.single_task:
            lines += _single_task_table(report)

    ensemble_rows = [(r.modality_key, r) for r in reports
                     if r.ensemble is not None and r.single_task]
    if ensemble_rows:
        header = "| Handwriting features | Accuracy | AUC | Sensitivity | Specificity |"
        if reference_deltas:
            header += " dAcc vs reference |"
        lines += ["## Ensemble of tasks", "", header,
                  "|" + "---|" * (6 if reference_deltas else 5)]
        for key, r in ensemble_rows:
            ref = (PAHAW_REFERENCE["ensemble"].get(key)
                   if reference_deltas else None)
            lines.append(_metrics_row(MODALITY_LABELS.get(key, key),
                                      r.ensemble.metrics, ref))
            lines.append(
                f"| &nbsp;&nbsp;best tasks: "
                f"{', '.join(str(t) for t in r.ensemble.best_tasks)} "
                + "| | | | |" + (" |" if reference_deltas else ""))
        lines.append("")

    recomb = []
    if "single:enhanced" in by_id and by_id["single:enhanced"].ensemble:
        recomb.append(("Template level, with extra representations, ensemble",
                       by_id["single:enhanced"].ensemble.metrics,
                       "template_ensemble"))
    if "ablation:raw" in by_id and by_id["ablation:raw"].ensemble:
        recomb.append(("Template level, raw images only, ensemble",
                       by_id["ablation:raw"].ensemble.metrics,
                       "raw_only_ensemble"))
    if "fusion" in by_id and by_id["fusion"].fusion_metrics:
        recomb.append(("Template level, fusion of all tasks",
                       by_id["fusion"].fusion_metrics, "fusion"))
    if "combo:feature" in by_id and by_id["combo:feature"].ensemble:
        recomb.append(("Feature level, ensemble",
                       by_id["combo:feature"].ensemble.metrics,
                       "feature_level"))
    if "combo:score" in by_id and by_id["combo:score"].combo_metrics:
        recomb.append(("Score level, ensemble",
                       by_id["combo:score"].combo_metrics, "score_level"))
    if recomb:
        header = "| Recombination method | Accuracy | AUC | Sensitivity | Specificity |"
        if reference_deltas:
            header += " dAcc vs reference |"
        lines += ["## Recombination methods", "", header,
                  "|" + "---|" * (6 if reference_deltas else 5)]
        for label, metrics, ref_key in recomb:
            ref = (PAHAW_REFERENCE["recombination"].get(ref_key)
                   if reference_deltas else None)
            lines.append(_metrics_row(label, metrics, ref))
        lines.append("")

    leak = next((r.leakage for r in reports if r.leakage is not None), None)
    if leak is not None:
        lines += [
            "## Feature-selection nesting",
            "",
            "| Mode | Accuracy | AUC | Sensitivity | Specificity |",
            "|---|---|---|---|---|",
            _metrics_row("Nested (honest)", leak.nested),
            _metrics_row("**Non-nested (LEAKY)**", leak.leaky),
            "",
            f"Selection leakage inflates accuracy by "
            f"{100 * leak.gap:+.2f} percentage points on this data.",
            "",
        ]

    lines += ["## Configuration", "", "```json",
              json.dumps(config_echo, indent=2, sort_keys=True), "```", "",
              "Notes: best-task selection reuses the same CV pass it pools "
              "(protocol-faithful, mildly optimistic); AUC is pooled over "
              "test folds while the rate metrics are per-fold means.", ""]
    return "\n".join(lines)


def emit_report(reports, out_dir, config_echo: dict,
                reference_deltas: bool = False) -> dict:
    """Write report.csv / report.md / config.json / selection audit files."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.csv").write_text(render_csv(reports))
        (out_dir / "report.md").write_text(
            render_markdown(reports, config_echo, reference_deltas))
        (out_dir / "config.json").write_text(
            json.dumps(config_echo, indent=2, sort_keys=True) + "\n")
        for report in reports:
            sel_dir = out_dir / "selection" / report.experiment_id.replace(":", "_")
            for task, res in sorted(report.single_task.items()):
                task_dir = sel_dir / f"task{task}"
                task_dir.mkdir(parents=True, exist_ok=True)
                for fold, plan in sorted(res.selection_plans.items()):
                    (task_dir / f"selection_fold{fold}.json").write_text(
                        plan.to_json())
    except OSError as exc:
        raise DataError(f"cannot write report bundle: {exc}") from exc
    return {
        "csv": out_dir / "report.csv",
        "md": out_dir / "report.md",
        "config": out_dir / "config.json",
    }
