"""Deterministic synthetic pen recordings.

Two configurable subject populations stand in for real clinical data in
every test: templates mimic the eight tablet tasks (spiral, repeated
glyphs, words, a sentence), and population parameters control writing
speed, pen-up behaviour and tremor, the three channels the imaging
pipeline is supposed to pick up.

Geometry templates are parametric polylines, not letterforms; the
pipeline consumes geometry and timing, not legibility.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .ingest import SubjectRecord, Trajectory, task_filename, write_manifest, write_svc
from .seeding import child_seed, rng_for

SAMPLE_RATE_HZ = 200.0
_DT = 1.0 / SAMPLE_RATE_HZ
_TABLET_UNITS = 1500.0  # path units -> integer tablet counts
_X0, _Y0 = 2000.0, 4000.0  # keep raw coordinates positive

TASK_IDS = tuple(range(1, 9))


@dataclass(frozen=True)
class PopulationParams:
    """Writing-style knobs for one subject population."""

    mean_speed: float = 2.2      # path units per second along the pen-down path
    speed_cv: float = 0.12       # lognormal sigma of per-glyph speed multipliers
    pen_up_rate: float = 0.05    # hesitation pen-up probability per glyph boundary
    pen_up_duration: float = 0.12  # mean hover duration per hesitation (s)
    in_air_wander: float = 0.04  # hover / transition wiggle amplitude (path units)
    tremor_amp: float = 0.0      # sinusoidal perturbation amplitude (path units)
    tremor_hz: float = 5.0

    def __post_init__(self):
        for name in ("mean_speed", "speed_cv", "pen_up_rate", "pen_up_duration",
                     "in_air_wander", "tremor_amp", "tremor_hz"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.mean_speed <= 0:
            raise ValueError("mean_speed must be positive")


#: Baseline healthy-control population.
HC_PARAMS = PopulationParams()

#: Slower, more segmented, more tremulous population (planted signal).
PD_PARAMS = PopulationParams(
    mean_speed=1.25,
    speed_cv=0.22,
    pen_up_rate=0.45,
    pen_up_duration=0.35,
    in_air_wander=0.16,
    tremor_amp=0.012,
    tremor_hz=6.0,
)


# --- glyph / template geometry -------------------------------------------

def _glyph(kind: str, n: int = 48) -> np.ndarray:
    """Unit-width glyph polyline on the baseline, shape (n, 2)."""
    s = np.linspace(0.0, 1.0, n)
    if kind == "tall":       # narrow ascender loop
        x = s + 0.14 * np.sin(2 * np.pi * s)
        y = 1.0 * np.sin(np.pi * s)
    elif kind == "small":    # low arch
        x = s
        y = 0.38 * np.sin(np.pi * s)
    elif kind == "arch":     # medium arch
        x = s
        y = 0.6 * np.sin(np.pi * s)
    elif kind == "tail":     # descender hook
        x = s + 0.10 * np.sin(2 * np.pi * s)
        y = -0.5 * np.sin(np.pi * s)
    else:
        raise ValueError(f"unknown glyph kind {kind!r}")
    return np.column_stack([x, y])


_WORDS = {
    # task -> list of words, each word a list of glyph kinds
    2: [["tall", "tall", "tall"]],
    3: [["tall", "small"], ["tall", "small"], ["tall", "small"]],
    4: [["tall", "small", "tail"]] * 3,
    5: [["tall", "small", "arch", "small", "tail", "small", "arch", "small"]],
    6: [["small", "arch", "small", "tail", "arch", "small", "small", "tall"]],
    7: [["small", "small", "arch", "tall", "small", "arch", "small",
         "tail", "small", "small", "tall"]],
    8: [["tall", "small", "arch"], ["small", "tail", "small", "arch"],
        ["tall", "small"], ["small", "arch", "small", "tall", "small"]],
}

_GLYPH_WIDTH = 0.24
_WORD_GAP = 0.45


def _spiral_template() -> list[np.ndarray]:
    theta = np.linspace(0.5 * np.pi, 6.5 * np.pi, 900)
    r = 0.06 + 0.055 * theta
    pts = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    return [pts]


def _word_template(task_id: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Words as polylines with per-subject nuisance jitter (class-neutral)."""
    slant = rng.normal(0.0, 0.07)
    base_amp = rng.uniform(0.02, 0.06)
    base_phase = rng.uniform(0, 2 * np.pi)
    words = []
    x_cursor = 0.0
    for word in _WORDS[task_id]:
        pts_list = []
        for kind in word:
            g = _glyph(kind).copy()
            g[:, 0] = x_cursor + g[:, 0] * _GLYPH_WIDTH * rng.normal(1.0, 0.08)
            g[:, 1] *= rng.normal(1.0, 0.12)
            x_cursor = g[-1, 0]
            pts_list.append(g)
        pts = np.concatenate(pts_list)
        pts[:, 0] += slant * pts[:, 1]  # global shear
        pts[:, 1] += base_amp * np.sin(2 * np.pi * pts[:, 0] / 3.0 + base_phase)
        words.append(pts)
        x_cursor += _WORD_GAP
    return words


def _template(task_id: int, rng: np.random.Generator) -> list[np.ndarray]:
    if task_id == 1:
        pts = _spiral_template()[0] * rng.normal(1.0, 0.06)
        return [pts]
    return _word_template(task_id, rng)


# --- arc-length sampling ---------------------------------------------------

def _arclength_resample(path: np.ndarray, step_lengths: np.ndarray) -> np.ndarray:
    """Positions along `path` at cumulative arc lengths given by steps."""
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    targets = np.cumsum(step_lengths)
    targets = targets[targets <= cum[-1] + 1e-12]
    targets = np.clip(targets, 0.0, cum[-1])
    x = np.interp(targets, cum, path[:, 0])
    y = np.interp(targets, cum, path[:, 1])
    return np.column_stack([x, y])


def _pen_down_samples(path: np.ndarray, params: PopulationParams,
                      rng: np.random.Generator) -> np.ndarray:
    """Sample a pen-down polyline at 200 Hz with per-glyph speed jitter."""
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    total = float(seg.sum())
    # one lognormal speed multiplier per ~glyph-sized chunk of path
    n_chunks = max(1, int(round(total / (_GLYPH_WIDTH * 2.4))))
    mult = np.exp(rng.normal(0.0, params.speed_cv, size=n_chunks)
                  - 0.5 * params.speed_cv**2)
    n_steps = int(np.ceil(total / (params.mean_speed * _DT))) + n_chunks + 2
    chunk_of = np.minimum((np.arange(n_steps) * n_chunks
                           * (params.mean_speed * _DT) / total).astype(int),
                          n_chunks - 1)
    steps = params.mean_speed * _DT * mult[chunk_of]
    pts = _arclength_resample(path, steps)
    if len(pts) == 0:
        pts = path[:1]
    return np.vstack([path[:1], pts])


def _hover(center: np.ndarray, duration_s: float, wander: float,
           rng: np.random.Generator) -> np.ndarray:
    """In-air dwell near a point: smoothed random walk, returns near start."""
    n = max(2, int(round(duration_s / _DT)))
    walk = np.cumsum(rng.normal(0.0, 1.0, size=(n, 2)), axis=0)
    walk -= np.linspace(0, 1, n)[:, None] * walk[-1]  # pin both ends near 0
    scale = wander / (np.abs(walk).max() + 1e-9)
    return center[None, :] + walk * scale


def _transition(p0: np.ndarray, p1: np.ndarray, params: PopulationParams,
                rng: np.random.Generator) -> np.ndarray:
    """In-air move between pen-down paths: lifted arc plus wander."""
    dist = float(np.linalg.norm(p1 - p0))
    speed = 1.3 * params.mean_speed
    n = max(2, int(round((dist / speed + 0.05) / _DT)))
    s = np.linspace(0.0, 1.0, n)
    arc = np.outer(1 - s, p0) + np.outer(s, p1)
    arc[:, 1] += 0.35 * np.sin(np.pi * s) * max(dist, 0.3)
    if params.in_air_wander > 0:
        walk = np.cumsum(rng.normal(0.0, 1.0, size=(n, 2)), axis=0)
        walk -= np.linspace(0, 1, n)[:, None] * walk[-1]
        arc += walk * (params.in_air_wander / (np.abs(walk).max() + 1e-9))
    return arc


def synth_trajectory(params: PopulationParams, subject_seed: int, task_id: int,
                     subject_id: str = "", label: str | None = None) -> Trajectory:
    """Deterministically synthesize one subject x task recording."""
    rng = rng_for(subject_seed, "task", task_id)
    words = _template(task_id, rng)

    xy_parts: list[np.ndarray] = []
    button_parts: list[np.ndarray] = []

    def emit(pts: np.ndarray, down: bool):
        xy_parts.append(pts)
        button_parts.append(np.full(len(pts), 1 if down else 0, dtype=np.int64))

    for w, word in enumerate(words):
        # split the word into glyph-boundary chunks for hesitation pen-ups
        n_glyphs = max(1, int(round((word[-1, 0] - word[0, 0]) / _GLYPH_WIDTH)))
        bounds = np.linspace(0, len(word), n_glyphs + 1).astype(int)
        for g in range(n_glyphs):
            chunk = word[bounds[g]:bounds[g + 1] + 1]
            if len(chunk) < 2:
                continue
            emit(_pen_down_samples(chunk, params, rng), down=True)
            is_last = g == n_glyphs - 1
            if not is_last and rng.random() < params.pen_up_rate:
                dur = rng.exponential(params.pen_up_duration)
                dur = float(np.clip(dur, 0.04, 4 * params.pen_up_duration))
                emit(_hover(chunk[-1], dur, params.in_air_wander, rng), down=False)
        if w + 1 < len(words):
            emit(_transition(word[-1], words[w + 1][0], params, rng), down=False)

    xy = np.concatenate(xy_parts)
    button = np.concatenate(button_parts)
    n = len(xy)
    t_seconds = np.arange(n) * _DT

    if params.tremor_amp > 0:
        phase = rng.uniform(0, 2 * np.pi, size=2)
        xy = xy + params.tremor_amp * np.column_stack([
            np.sin(2 * np.pi * params.tremor_hz * t_seconds + phase[0]),
            np.sin(2 * np.pi * params.tremor_hz * 1.07 * t_seconds + phase[1]),
        ])

    pressure_base = rng.uniform(350, 450)
    pressure = pressure_base + 60 * np.sin(2 * np.pi * 0.8 * t_seconds
                                           + rng.uniform(0, 2 * np.pi))
    pressure = pressure + rng.normal(0, 8, size=n)
    pressure = np.where(button == 1, np.maximum(1, np.rint(pressure)), 0)

    azimuth = 900 + 200 * np.sin(2 * np.pi * 0.05 * t_seconds + rng.uniform(0, 6))
    altitude = 550 + 90 * np.sin(2 * np.pi * 0.07 * t_seconds + rng.uniform(0, 6))

    return Trajectory(
        x=np.rint(_X0 + xy[:, 0] * _TABLET_UNITS).astype(np.int64),
        y=np.rint(_Y0 + xy[:, 1] * _TABLET_UNITS).astype(np.int64),
        t=np.arange(n, dtype=np.int64),
        button=button,
        azimuth=np.rint(azimuth).astype(np.int64),
        altitude=np.rint(altitude).astype(np.int64),
        pressure=pressure.astype(np.int64),
        subject_id=subject_id,
        task_id=task_id,
        label=label,
        sample_rate_hz=SAMPLE_RATE_HZ,
    )


def synth_subject(params: PopulationParams, subject_seed: int,
                  subject_id: str = "", label: str | None = None) -> dict:
    """All eight task recordings for one subject, keyed by task id."""
    return {
        task: synth_trajectory(params, subject_seed, task, subject_id, label)
        for task in TASK_IDS
    }


def synth_dataset(params_pd: PopulationParams, params_hc: PopulationParams,
                  n_per_class: int, seed: int, out_dir) -> list[SubjectRecord]:
    """Write 2n subjects x 8 tasks as SVC files plus a manifest.

    Returns the subject records; the manifest lands in out_dir/manifest.json.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for label, params in (("PD", params_pd), ("HC", params_hc)):
        for i in range(n_per_class):
            subject_id = f"{label.lower()}{i + 1:03d}"
            subject_seed = child_seed(seed, label, i)
            paths = {}
            for task, traj in synth_subject(params, subject_seed,
                                            subject_id, label).items():
                p = out_dir / task_filename(subject_id, task)
                p.write_text(write_svc(traj))
                paths[task] = p
            records.append(SubjectRecord(subject_id, label, paths))
    records.sort(key=lambda r: r.subject_id)
    write_manifest(out_dir / "manifest.json", records)
    return records


def null_params() -> tuple[PopulationParams, PopulationParams]:
    """Identical populations for both classes (no signal)."""
    return HC_PARAMS, HC_PARAMS


def planted_params() -> tuple[PopulationParams, PopulationParams]:
    """Clearly separated populations (strong planted signal)."""
    return PD_PARAMS, HC_PARAMS
