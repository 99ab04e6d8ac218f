"""Command-line entry point.

Subcommands drive the pipeline end to end:

    inklab fixture  --out data/ --n-per-class 36 --profile planted
    inklab render   --dataset data/ --out run/
    inklab extract  --dataset data/ --out run/ --backend stub
    inklab evaluate --dataset data/ --out run/ --experiments all

Config files (JSON or TOML) supply defaults; explicit CLI flags win.
Exit codes: 0 success, 2 config error, 3 data error, 4 model error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .errors import ConfigError, DataError, InklabError, ModelError
from .fixtures import HC_PARAMS, PD_PARAMS, synth_dataset
from .pipeline import (
    ALL_EXPERIMENTS,
    PipelineConfig,
    build_bundle,
    compute_features,
    export_images,
    load_cohort,
    run_pipeline,
)

_CONFIG_KEYS = {
    "dataset": str, "out": str, "backend": str, "model": str, "seed": int,
    "jobs": int, "n_keep_cnn": int, "n_keep_dynamic": int, "folds": int,
    "m_best": int, "experiments": list, "leaky": bool, "force": bool,
    "in_air_intensity": int, "point_radius": int, "stub_seed": int,
    "reference_deltas": bool, "n_per_class": int, "profile": str, "mode": str,
}


def _load_config_file(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    text = p.read_text()
    if p.suffix == ".toml":
        doc = tomllib.loads(text)
    elif p.suffix == ".json":
        doc = json.loads(text)
    else:
        # sniff: TOML accepts bare key tables; try JSON first
        try:
            doc = json.loads(text)
        except json.JSONDecodeError:
            try:
                doc = tomllib.loads(text)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{p} is neither JSON nor TOML: {exc}")
    unknown = set(doc) - set(_CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return doc


def _merged(args: argparse.Namespace, defaults: dict) -> dict:
    """File values fill in wherever the CLI flag was left at its default."""
    merged = dict(defaults)
    for key, value in vars(args).items():
        if value is not None and key in _CONFIG_KEYS:
            merged[key] = value
        elif value is not None:
            merged[key] = value
    return merged


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON or TOML config file")
    parser.add_argument("--dataset", help="dataset directory (manifest.json inside)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="master seed (default 0)")
    parser.add_argument("--jobs", type=int, help="worker processes (default: cores)")
    parser.add_argument("--force", action="store_true", default=None,
                        help="ignore existing caches")


def _pipeline_config(opts: dict, need_dataset: bool = True) -> PipelineConfig:
    if need_dataset and not opts.get("dataset"):
        raise ConfigError("--dataset is required")
    if not opts.get("out"):
        raise ConfigError("--out is required")
    experiments = opts.get("experiments") or ["all"]
    if isinstance(experiments, str):
        experiments = experiments.split(",")
    if experiments == ["all"]:
        experiments = list(ALL_EXPERIMENTS)
    return PipelineConfig(
        dataset_dir=Path(opts.get("dataset") or "."),
        out_dir=Path(opts["out"]),
        backend=opts.get("backend", "stub"),
        model_path=Path(opts["model"]) if opts.get("model") else None,
        stub_seed=int(opts.get("stub_seed", 0)),
        in_air_intensity=int(opts.get("in_air_intensity", 128)),
        point_radius=int(opts.get("point_radius", 1)),
        master_seed=int(opts.get("seed", 0)),
        k_folds=int(opts.get("folds", 10)),
        m_best=int(opts.get("m_best", 5)),
        n_keep_cnn=int(opts.get("n_keep_cnn", 50)),
        n_keep_dynamic=int(opts.get("n_keep_dynamic", 30)),
        experiments=tuple(experiments),
        jobs=int(opts.get("jobs", 0)),
        force=bool(opts.get("force", False)),
        leaky=bool(opts.get("leaky", False)),
        reference_deltas=bool(opts.get("reference_deltas", False)),
    )


def cmd_fixture(opts: dict) -> int:
    if not opts.get("out"):
        raise ConfigError("--out is required")
    profile = opts.get("profile", "planted")
    if profile == "planted":
        pd_params, hc_params = PD_PARAMS, HC_PARAMS
    elif profile == "null":
        pd_params, hc_params = HC_PARAMS, HC_PARAMS
    else:
        raise ConfigError(f"unknown profile {profile!r} (planted|null)")
    records = synth_dataset(pd_params, hc_params,
                            n_per_class=int(opts.get("n_per_class", 36)),
                            seed=int(opts.get("seed", 0)),
                            out_dir=Path(opts["out"]))
    print(f"wrote {len(records)} subjects x 8 tasks to {opts['out']}")
    return 0


def cmd_render(opts: dict) -> int:
    config = _pipeline_config(opts)
    records = load_cohort(config.dataset_dir)
    modes = opts.get("mode")
    if isinstance(modes, str):
        modes = modes.split(",")
    img_dir = export_images(config, records, modes=modes)
    print(f"rendered images under {img_dir}")
    return 0


def cmd_extract(opts: dict) -> int:
    config = _pipeline_config(opts)
    records = load_cohort(config.dataset_dir)
    feats = compute_features(config, records)
    print(f"feature cache ready: {feats['path']}")
    return 0


def cmd_evaluate(opts: dict) -> int:
    config = _pipeline_config(opts)
    result = run_pipeline(config)
    print(f"report bundle: {result['paths']['md'].parent}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="inklab",
        description="Pen-tablet handwriting analysis experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fix = sub.add_parser("fixture", help="generate a synthetic dataset")
    p_fix.add_argument("--config")
    p_fix.add_argument("--out")
    p_fix.add_argument("--seed", type=int)
    p_fix.add_argument("--n-per-class", dest="n_per_class", type=int)
    p_fix.add_argument("--profile", choices=("planted", "null"))

    p_render = sub.add_parser("render", help="export PNGs per subject/task/mode")
    _common_flags(p_render)
    p_render.add_argument("--mode", help="comma list of linked,velocity,enhanced "
                                         "(default: all)")
    p_render.add_argument("--in-air-intensity", dest="in_air_intensity", type=int)
    p_render.add_argument("--point-radius", dest="point_radius", type=int)

    p_extract = sub.add_parser("extract", help="build the feature caches")
    _common_flags(p_extract)
    p_extract.add_argument("--backend", choices=("stub", "onnx-file"))
    p_extract.add_argument("--model", help="ONNX backbone path")
    p_extract.add_argument("--stub-seed", dest="stub_seed", type=int)

    p_eval = sub.add_parser("evaluate", help="run experiments, emit reports")
    _common_flags(p_eval)
    p_eval.add_argument("--backend", choices=("stub", "onnx-file"))
    p_eval.add_argument("--model")
    p_eval.add_argument("--stub-seed", dest="stub_seed", type=int)
    p_eval.add_argument("--experiments",
                        help=f"comma list or 'all'; from {ALL_EXPERIMENTS}")
    p_eval.add_argument("--folds", type=int)
    p_eval.add_argument("--m-best", dest="m_best", type=int)
    p_eval.add_argument("--n-keep-cnn", dest="n_keep_cnn", type=int)
    p_eval.add_argument("--n-keep-dynamic", dest="n_keep_dynamic", type=int)
    p_eval.add_argument("--leaky", action="store_true", default=None,
                        help="add the non-nested selection demonstration")
    p_eval.add_argument("--reference-deltas", dest="reference_deltas",
                        action="store_true", default=None)
    return parser


_COMMANDS = {
    "fixture": cmd_fixture,
    "render": cmd_render,
    "extract": cmd_extract,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        defaults = _load_config_file(args.config) if getattr(args, "config", None) \
            else {}
        opts = _merged(args, defaults)
        return _COMMANDS[args.command](opts)
    except ConfigError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except ModelError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4
    except (DataError, InklabError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: IoError: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
