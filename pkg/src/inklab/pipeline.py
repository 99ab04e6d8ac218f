"""End-to-end orchestration: recordings to report bundles.

Heavy stages (rasterization + extraction, per-task CV) fan out over a
process pool and merge in canonical order, so results are identical for
any worker count. Feature matrices are cached on disk keyed by a
fingerprint of the dataset manifest and all relevant settings; reruns
reuse caches unless forced.
"""

from __future__ import annotations

import hashlib
import json
import multiprocessing as mp
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, dynamics
from .cnn import (
    CNN_MODALITIES,
    OUTPUT_DIM,
    PretrainedBackbone,
    StubHash,
    extract_batch,
    load_extractor,
)
from .errors import ConfigError, DataError
from .evaluate import (
    FeatureBundle,
    LeakageDemo,
    RunSettings,
    TaskMatrix,
    combined_feature_bundle,
    ensemble_from_results,
    make_folds,
    run_score_combo,
    run_task_cv,
    run_task_fusion,
)
from .ingest import load_manifest, load_trajectory, normalize_coords
from .render import (
    GrayImage,
    RenderConfig,
    RenderMode,
    edge_image,
    median_residual,
    render,
    resize_to_model,
    save_png,
)
from .report import ExperimentReport, emit_report
from .vectors import default_dim_names

MODE_KEYS = {
    "linked": RenderMode.LINKED_STATIC,
    "velocity": RenderMode.VELOCITY_POINTS,
    "enhanced": RenderMode.ENHANCED_POINTS,
}

ALL_EXPERIMENTS = ("single:linked", "single:velocity", "single:enhanced",
                   "single:dynamic", "ablation:raw", "fusion",
                   "combo:feature", "combo:score", "leakage")


@dataclass(frozen=True)
class PipelineConfig:
    dataset_dir: Path
    out_dir: Path
    backend: str = "stub"                  # "stub" | "onnx-file"
    model_path: Optional[Path] = None
    stub_seed: int = 0
    in_air_intensity: int = 128
    point_radius: int = 1
    margin_fraction: float = 0.05
    canvas_w: int = 432
    canvas_h: int = 288
    master_seed: int = 0
    k_folds: int = 10
    m_best: int = 5
    n_keep_cnn: int = 50
    n_keep_dynamic: int = 30
    experiments: tuple = ALL_EXPERIMENTS
    jobs: int = 0                          # 0 -> cpu count
    force: bool = False
    leaky: bool = False
    reference_deltas: bool = False

    def resolved_jobs(self) -> int:
        return self.jobs if self.jobs > 0 else (mp.cpu_count() or 1)

    def render_config(self, mode: str) -> RenderConfig:
        return RenderConfig(
            canvas_w=self.canvas_w, canvas_h=self.canvas_h,
            mode=MODE_KEYS[mode], in_air_intensity=self.in_air_intensity,
            point_radius=self.point_radius,
            margin_fraction=self.margin_fraction)

    def backend_spec(self):
        if self.backend == "stub":
            return StubHash(seed=self.stub_seed)
        if self.backend == "onnx-file":
            if self.model_path is None:
                raise ConfigError("--backend onnx-file needs --model")
            return PretrainedBackbone(Path(self.model_path))
        raise ConfigError(f"unknown backend {self.backend!r}")

    def validate_paths(self) -> None:
        """Fail before any work starts if referenced paths are absent."""
        if not (Path(self.dataset_dir) / "manifest.json").exists():
            raise DataError(
                f"no manifest.json under dataset dir {self.dataset_dir}")
        if self.backend == "onnx-file":
            if self.model_path is None:
                raise ConfigError("--backend onnx-file needs --model")
            if not Path(self.model_path).exists():
                from .errors import ModelFileMissing
                raise ModelFileMissing(self.model_path)

    def echo(self) -> dict:
        doc = {
            "version": __version__,
            "dataset_dir": str(self.dataset_dir),
            "backend": self.backend,
            "model_path": str(self.model_path) if self.model_path else None,
            "stub_seed": self.stub_seed,
            "in_air_intensity": self.in_air_intensity,
            "point_radius": self.point_radius,
            "margin_fraction": self.margin_fraction,
            "canvas": [self.canvas_w, self.canvas_h],
            "master_seed": self.master_seed,
            "k_folds": self.k_folds,
            "m_best": self.m_best,
            "n_keep_cnn": self.n_keep_cnn,
            "n_keep_dynamic": self.n_keep_dynamic,
            "experiments": list(self.experiments),
            "leaky": self.leaky,
        }
        return doc


def _fingerprint(config: PipelineConfig, *extra) -> str:
    manifest = Path(config.dataset_dir) / "manifest.json"
    h = hashlib.sha256(manifest.read_bytes())
    knobs = (config.in_air_intensity, config.point_radius,
             config.margin_fraction, config.canvas_w, config.canvas_h,
             config.backend, config.stub_seed,
             str(config.model_path)) + extra
    h.update(repr(knobs).encode())
    if config.backend == "onnx-file" and config.model_path:
        h.update(hashlib.sha256(Path(config.model_path).read_bytes()).digest())
    return h.hexdigest()[:12]


def load_cohort(dataset_dir):
    manifest = Path(dataset_dir) / "manifest.json"
    if not manifest.exists():
        raise DataError(f"no manifest.json under dataset dir {dataset_dir}")
    records = load_manifest(manifest)
    if not records:
        raise DataError("manifest lists no subjects")
    missing = [r.subject_id for r in records if r.label not in ("PD", "HC")]
    if missing:
        raise DataError(f"subjects without PD/HC label: {missing[:5]}")
    return sorted(records, key=lambda r: r.subject_id)


# --- per-subject work (module level: picklable for worker pools) -------------

_WORKER = {}


def needs_dynamic(experiments) -> bool:
    return any(e in ("single:dynamic", "combo:feature", "combo:score")
               for e in experiments)


def _init_worker(config: PipelineConfig, need_dynamic: bool = True):
    _WORKER["config"] = config
    _WORKER["need_dynamic"] = need_dynamic
    _WORKER["handle"] = load_extractor(config.backend_spec())


def representations(img: GrayImage):
    """The three model inputs derived from one rendered image."""
    return {
        "raw": resize_to_model(img),
        "residual": resize_to_model(median_residual(img)),
        "edge": resize_to_model(edge_image(img)),
    }


def _extract_subject(record) -> dict:
    config: PipelineConfig = _WORKER["config"]
    handle = _WORKER["handle"]
    out = {"subject": record.subject_id, "cnn": {}, "dynamic": {}}
    for task in sorted(record.task_paths):
        traj = normalize_coords(load_trajectory(record, task))
        if _WORKER["need_dynamic"]:
            vec, mask = dynamics.assemble_dynamic_vector(traj)
            out["dynamic"][task] = (vec.values, mask)
        for mode in MODE_KEYS:
            img = render(traj, config.render_config(mode))
            reps = representations(img)
            feats = {
                name: extract_batch(handle, [rep], name)[0]
                for name, rep in reps.items()
            }
            out["cnn"].setdefault(mode, {})[task] = feats
    return out


def _map_subjects(config: PipelineConfig, records, need_dynamic: bool):
    jobs = min(config.resolved_jobs(), len(records))
    if jobs <= 1:
        _init_worker(config, need_dynamic)
        results = [_extract_subject(r) for r in records]
    else:
        ctx = mp.get_context("fork")
        with ctx.Pool(jobs, initializer=_init_worker,
                      initargs=(config, need_dynamic)) as pool:
            results = pool.map(_extract_subject, records)
    return sorted(results, key=lambda r: r["subject"])


# --- feature caches -------------------------------------------------------------

def _cache_dir(config: PipelineConfig) -> Path:
    d = Path(config.out_dir) / "features"
    d.mkdir(parents=True, exist_ok=True)
    return d


def compute_features(config: PipelineConfig, records,
                     need_dynamic: bool = True) -> dict:
    """Render + extract everything, or load it from cache."""
    config.validate_paths()
    fp = _fingerprint(config, "dyn" if need_dynamic else "nodyn")
    cache = _cache_dir(config) / f"features_{fp}.npz"
    subjects = [r.subject_id for r in records]
    tasks = sorted(records[0].task_paths)

    if cache.exists() and not config.force:
        data = np.load(cache, allow_pickle=False)
        if list(data["subjects"]) == subjects:
            return {"npz": data, "subjects": subjects, "tasks": tasks,
                    "path": cache}

    results = _map_subjects(config, records, need_dynamic)
    arrays = {"subjects": np.array(subjects), "tasks": np.array(tasks)}
    n = len(subjects)
    for mode in MODE_KEYS:
        for rep in CNN_MODALITIES:
            for task in tasks:
                mat = np.stack([res["cnn"][mode][task][rep]
                                for res in results]).astype(np.float32)
                arrays[f"cnn__{mode}__{rep}__task{task}"] = mat
    if need_dynamic:
        dyn_dim = dynamics.schema_size()
        for task in tasks:
            arrays[f"dynamic__task{task}"] = np.stack(
                [res["dynamic"][task][0] for res in results])
            arrays[f"dynamic_mask__task{task}"] = np.stack(
                [res["dynamic"][task][1] for res in results])
            assert arrays[f"dynamic__task{task}"].shape == (n, dyn_dim)
    np.savez(cache, **arrays)  # uncompressed: scratch cache, write speed wins
    if need_dynamic:
        _write_dynamic_csv(_cache_dir(config), subjects, tasks, arrays)
    data = np.load(cache, allow_pickle=False)
    return {"npz": data, "subjects": subjects, "tasks": tasks, "path": cache}


def _write_dynamic_csv(cache_dir: Path, subjects, tasks, arrays) -> None:
    names = default_dim_names("dynamic", dynamics.schema_size())
    lines = ["row," + ",".join(names)]
    mask_lines = ["row," + ",".join(names)]
    for task in tasks:
        X = arrays[f"dynamic__task{task}"]
        M = arrays[f"dynamic_mask__task{task}"]
        for i, subject in enumerate(subjects):
            key = f"{subject}__{task}"
            lines.append(key + "," + ",".join(f"{v:.9g}" for v in X[i]))
            mask_lines.append(key + "," + ",".join(str(int(v)) for v in M[i]))
    (cache_dir / "dynamic.csv").write_text("\n".join(lines) + "\n")
    (cache_dir / "dynamic_mask.csv").write_text("\n".join(mask_lines) + "\n")
    (cache_dir / "dynamic_schema.json").write_text(json.dumps(
        {f"dynamic:{i}": name for i, name in enumerate(dynamics.schema())},
        indent=1) + "\n")


def build_bundle(config: PipelineConfig, records) -> FeatureBundle:
    need_dyn = needs_dynamic(config.experiments)
    feats = compute_features(config, records, need_dynamic=need_dyn)
    data = feats["npz"]
    subjects = tuple(feats["subjects"])
    tasks = feats["tasks"]
    y = np.array([1 if r.label == "PD" else 0 for r in records])

    combined_names = tuple(n for rep in CNN_MODALITIES
                           for n in default_dim_names(rep, OUTPUT_DIM))
    matrices: dict = {}
    for mode in MODE_KEYS:
        per_task = {}
        for task in tasks:
            X = np.concatenate(
                [data[f"cnn__{mode}__{rep}__task{task}"]
                 for rep in CNN_MODALITIES], axis=1)
            per_task[int(task)] = TaskMatrix(
                task_id=int(task), modality_key=f"cnn_{mode}", X=X,
                dim_names=combined_names)
        matrices[f"cnn_{mode}"] = per_task

    raw_names = default_dim_names("raw", OUTPUT_DIM)
    matrices["cnn_enhanced_raw_only"] = {
        int(task): TaskMatrix(
            task_id=int(task), modality_key="cnn_enhanced_raw_only",
            X=data[f"cnn__enhanced__raw__task{task}"], dim_names=raw_names)
        for task in tasks
    }

    if need_dyn:
        dyn_names = default_dim_names("dynamic", dynamics.schema_size())
        matrices["dynamic"] = {
            int(task): TaskMatrix(
                task_id=int(task), modality_key="dynamic",
                X=data[f"dynamic__task{task}"], dim_names=dyn_names,
                scale_cols=np.ones(dynamics.schema_size(), dtype=bool),
                valid_mask=data[f"dynamic_mask__task{task}"].astype(bool))
            for task in tasks
        }
    return FeatureBundle(subjects=subjects, y=y, matrices=matrices)


# --- experiment driver -----------------------------------------------------------

_EXPERIMENT_MODALITY = {
    "single:linked": "cnn_linked",
    "single:velocity": "cnn_velocity",
    "single:enhanced": "cnn_enhanced",
    "single:dynamic": "dynamic",
    "ablation:raw": "cnn_enhanced_raw_only",
    "combo:feature": "feature_combo",
}


# Shared evaluation inputs: populated in the parent right before forking
# worker pools, so jobs carry only small keys instead of the feature bundle.
_EVAL_STATE: dict = {}


def _cv_job(args):
    task, modality, nested = args
    state = _EVAL_STATE
    return (modality, task, nested), run_task_cv(
        state["bundle"], task, modality, state["fold_plan"],
        state["settings"], nested=nested)


def run_experiments(bundle: FeatureBundle, config: PipelineConfig) -> list:
    experiments = list(config.experiments)
    unknown = [e for e in experiments if e not in ALL_EXPERIMENTS]
    if unknown:
        raise ConfigError(f"unknown experiments {unknown}; "
                          f"choose from {ALL_EXPERIMENTS}")
    if config.leaky and "leakage" not in experiments:
        experiments.append("leakage")

    settings = RunSettings(
        master_seed=config.master_seed, k_folds=config.k_folds,
        m_best=config.m_best, n_keep_cnn=config.n_keep_cnn,
        n_keep_dynamic=config.n_keep_dynamic, jobs=config.resolved_jobs())
    fold_plan = make_folds(bundle.labels_by_subject(), k=config.k_folds,
                           seed=config.master_seed)

    if "combo:feature" in experiments:
        bundle = combined_feature_bundle(bundle, "cnn_enhanced")

    needed = set()
    for exp in experiments:
        if exp in _EXPERIMENT_MODALITY:
            needed.add((_EXPERIMENT_MODALITY[exp], True))
        elif exp == "fusion":
            needed.add(("cnn_enhanced", True))
        elif exp == "combo:score":
            needed.add(("cnn_enhanced", True))
            needed.add(("dynamic", True))
        elif exp == "leakage":
            needed.add(("cnn_enhanced", True))
            needed.add(("cnn_enhanced", False))

    jobs = []
    for modality, nested in sorted(needed, key=str):
        for task in bundle.tasks(modality):
            jobs.append((task, modality, nested))

    _EVAL_STATE.update(bundle=bundle, fold_plan=fold_plan, settings=settings)
    try:
        n_workers = min(config.resolved_jobs(), len(jobs)) if jobs else 1
        if n_workers <= 1:
            done = dict(_cv_job(j) for j in jobs)
        else:
            ctx = mp.get_context("fork")
            with ctx.Pool(n_workers) as pool:
                # chunksize 1: unit costs are uneven (24k vs 260-dim rankings)
                done = dict(pool.map(_cv_job, jobs, chunksize=1))
    finally:
        _EVAL_STATE.clear()

    def results_for(modality, nested=True):
        return {task: done[(modality, task, nested)]
                for task in bundle.tasks(modality)}

    reports = []
    echo = config.echo()
    for exp in experiments:
        if exp in _EXPERIMENT_MODALITY:
            modality = _EXPERIMENT_MODALITY[exp]
            results = results_for(modality)
            reports.append(ExperimentReport(
                experiment_id=exp, modality_key=modality, config_echo=echo,
                single_task=results,
                ensemble=ensemble_from_results(results, settings)))
        elif exp == "fusion":
            reports.append(ExperimentReport(
                experiment_id=exp, modality_key="cnn_enhanced",
                config_echo=echo,
                fusion_metrics=run_task_fusion(bundle, "cnn_enhanced",
                                               fold_plan, settings)))
        elif exp == "combo:score":
            combo = run_score_combo(
                bundle, "cnn_enhanced", fold_plan, settings,
                cnn_results=results_for("cnn_enhanced"),
                dyn_results=results_for("dynamic"))
            reports.append(ExperimentReport(
                experiment_id=exp, modality_key="score_combo",
                config_echo=echo, combo_metrics=combo.metrics))
        elif exp == "leakage":
            nested_ens = ensemble_from_results(results_for("cnn_enhanced"),
                                               settings)
            leaky_results = results_for("cnn_enhanced", nested=False)
            leaky_ens = ensemble_from_results(leaky_results, settings)
            reports.append(ExperimentReport(
                experiment_id=exp, modality_key="cnn_enhanced",
                config_echo=echo, single_task=leaky_results,
                ensemble=leaky_ens, leaky=True,
                leakage=LeakageDemo(
                    nested=nested_ens.metrics, leaky=leaky_ens.metrics,
                    gap=leaky_ens.metrics.accuracy - nested_ens.metrics.accuracy)))
    return reports


def run_pipeline(config: PipelineConfig) -> dict:
    """Dataset -> features (cached) -> experiments -> report bundle."""
    records = load_cohort(config.dataset_dir)
    bundle = build_bundle(config, records)
    reports = run_experiments(bundle, config)
    out = emit_report(reports, Path(config.out_dir) / "reports",
                      config.echo(),
                      reference_deltas=config.reference_deltas)
    return {"reports": reports, "paths": out}


def export_images(config: PipelineConfig, records=None, modes=None) -> Path:
    """PNG per subject x task x mode x representation (resumable)."""
    records = records or load_cohort(config.dataset_dir)
    modes = tuple(modes) if modes else tuple(MODE_KEYS)
    unknown = [m for m in modes if m not in MODE_KEYS]
    if unknown:
        raise ConfigError(f"unknown render modes {unknown}")
    img_dir = Path(config.out_dir) / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    for record in records:
        for task in sorted(record.task_paths):
            traj = normalize_coords(load_trajectory(record, task))
            for mode in modes:
                base = f"{record.subject_id}__{task}__{mode}"
                raw_path = img_dir / f"{base}__full.png"
                if raw_path.exists() and not config.force:
                    continue
                img = render(traj, config.render_config(mode))
                save_png(img, raw_path)
                for rep, rep_img in representations(img).items():
                    save_png(rep_img, img_dir / f"{base}__{rep}.png")
    return img_dir
