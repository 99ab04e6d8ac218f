"""Pen-tablet recording ingestion.

Parses SVC-style text files (one per subject x task) into Trajectory
values, normalizes coordinates and segments button-status runs into
on-surface / in-air strokes. File layout is column-mapped because the
column order varies between dataset dumps.
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    CountMismatch,
    DataError,
    EmptyFile,
    EmptyTrajectory,
    MalformedLine,
    NonMonotoneTime,
)

# Canonical channel order used internally; files may permute it.
FIELDS = ("x", "y", "t", "button", "azimuth", "altitude", "pressure")

#: Common SVC-family column layout; override per dataset if it differs.
DEFAULT_COLUMN_ORDER = ("y", "x", "t", "button", "azimuth", "altitude", "pressure")

PD, HC = "PD", "HC"

#: Filename pattern for directory ingestion: <subject>__<task>.svc
FILE_PATTERN = re.compile(r"^(?P<subject>.+)__(?P<task>[1-8])\.svc$")


class NonMonotoneTimeWarning(UserWarning):
    pass


class StrokeKind(Enum):
    ON_SURFACE = "on_surface"
    IN_AIR = "in_air"


@dataclass(frozen=True)
class PenSample:
    x: float
    y: float
    t: int
    button: int
    azimuth: int
    altitude: int
    pressure: int


@dataclass(frozen=True)
class ColumnMap:
    """Bijective mapping file column index -> PenSample field name."""

    order: tuple = DEFAULT_COLUMN_ORDER

    def __post_init__(self):
        if sorted(self.order) != sorted(FIELDS):
            raise DataError(f"column map must cover exactly {FIELDS}, got {self.order}")

    def column_of(self, fieldname: str) -> int:
        return self.order.index(fieldname)


@dataclass
class Trajectory:
    """One recording: channel arrays plus identity metadata.

    Channels are kept as parallel numpy arrays (x/y float64 once
    normalized, int64 when raw) because every downstream consumer is
    vectorized. `samples` offers a per-sample view for convenience.
    """

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    button: np.ndarray
    azimuth: np.ndarray
    altitude: np.ndarray
    pressure: np.ndarray
    subject_id: str = ""
    task_id: int = 1
    label: str | None = None
    sample_rate_hz: float = 200.0
    normalized: bool = False

    def __post_init__(self):
        n = len(self.x)
        for name in FIELDS:
            if len(getattr(self, name)) != n:
                raise DataError(f"channel {name} length differs from x")
        if not 1 <= int(self.task_id) <= 8:
            raise DataError(f"task_id must be 1..8, got {self.task_id}")
        if self.label is not None and self.label not in (PD, HC):
            raise DataError(f"label must be PD/HC/None, got {self.label!r}")
        if self.sample_rate_hz <= 0:
            raise DataError("sample_rate_hz must be positive")

    def __len__(self) -> int:
        return len(self.x)

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate_hz

    @property
    def samples(self) -> list[PenSample]:
        return [
            PenSample(*(getattr(self, f)[i].item() for f in FIELDS))
            for i in range(len(self))
        ]


@dataclass(frozen=True)
class Stroke:
    """Maximal run of constant button status; half-open sample range."""

    kind: StrokeKind
    start: int
    stop: int

    def __len__(self) -> int:
        return self.stop - self.start

    @property
    def sample_range(self) -> range:
        return range(self.start, self.stop)


def parse_svc(
    data,
    column_map: ColumnMap | None = None,
    subject_id: str = "",
    task_id: int = 1,
    label: str | None = None,
    sample_rate_hz: float = 200.0,
    on_nonmonotone: str = "warn",
) -> Trajectory:
    """Parse SVC text (bytes or str) into a Trajectory.

    An optional first line holding a single integer is a sample count and
    must match the number of sample lines. Every sample line must hold
    exactly 7 whitespace-separated integers. Non-decreasing timestamps are
    expected; violations warn (default) or raise per `on_nonmonotone`.
    """
    if column_map is None:
        column_map = ColumnMap()
    if on_nonmonotone not in ("warn", "raise"):
        raise DataError(f"on_nonmonotone must be warn|raise, got {on_nonmonotone}")
    if isinstance(data, bytes):
        data = data.decode("ascii")

    lines = [(i + 1, ln.strip()) for i, ln in enumerate(data.splitlines())]
    lines = [(no, ln) for no, ln in lines if ln]
    if not lines:
        raise EmptyFile("no sample lines")

    declared = None
    first_tokens = lines[0][1].split()
    if len(first_tokens) == 1:
        try:
            declared = int(first_tokens[0])
        except ValueError as exc:
            raise MalformedLine(lines[0][0], "expected integer count header") from exc
        lines = lines[1:]

    rows = np.empty((len(lines), len(FIELDS)), dtype=np.int64)
    for r, (no, ln) in enumerate(lines):
        tokens = ln.split()
        if len(tokens) != len(FIELDS):
            raise MalformedLine(no, f"expected {len(FIELDS)} integers, got {len(tokens)}")
        try:
            rows[r] = [int(tok) for tok in tokens]
        except ValueError as exc:
            raise MalformedLine(no, "non-integer token") from exc

    if declared is not None and declared != len(lines):
        raise CountMismatch(declared, len(lines))
    if len(lines) == 0:
        raise EmptyFile("header only, no sample lines")

    channels = {f: rows[:, column_map.column_of(f)].copy() for f in FIELDS}
    if np.any((channels["button"] != 0) & (channels["button"] != 1)):
        bad = int(np.argmax((channels["button"] != 0) & (channels["button"] != 1)))
        raise MalformedLine(lines[bad][0], "button status must be 0 or 1")
    if np.any(channels["pressure"] < 0):
        bad = int(np.argmax(channels["pressure"] < 0))
        raise MalformedLine(lines[bad][0], "negative pressure")

    drops = np.nonzero(np.diff(channels["t"]) < 0)[0]
    if drops.size:
        line_no = lines[int(drops[0]) + 1][0]
        if on_nonmonotone == "raise":
            raise NonMonotoneTime(line_no)
        warnings.warn(
            f"timestamp decreases at line {line_no}; keeping sample order",
            NonMonotoneTimeWarning,
            stacklevel=2,
        )

    return Trajectory(
        subject_id=subject_id,
        task_id=task_id,
        label=label,
        sample_rate_hz=sample_rate_hz,
        **channels,
    )


def write_svc(traj: Trajectory, column_map: ColumnMap | None = None,
              include_header: bool = True) -> str:
    """Serialize a Trajectory back to SVC text (inverse of parse_svc)."""
    if column_map is None:
        column_map = ColumnMap()
    if len(traj) == 0:
        raise EmptyTrajectory("nothing to serialize")
    cols = [np.asarray(getattr(traj, f)) for f in column_map.order]
    out = [str(len(traj))] if include_header else []
    for i in range(len(traj)):
        out.append(" ".join(str(int(round(float(c[i])))) for c in cols))
    return "\n".join(out) + "\n"


def normalize_coords(traj: Trajectory) -> Trajectory:
    """Shift x to start at 0 and center y on its mean (all samples count)."""
    if len(traj) == 0:
        raise EmptyTrajectory("cannot normalize an empty trajectory")
    x = traj.x.astype(np.float64)
    y = traj.y.astype(np.float64)
    return replace(traj, x=x - x.min(), y=y - y.mean(), normalized=True)


def segment_strokes(traj: Trajectory) -> list[Stroke]:
    """Split into maximal runs of constant button status, in order."""
    if len(traj) == 0:
        raise EmptyTrajectory("cannot segment an empty trajectory")
    button = np.asarray(traj.button)
    boundaries = np.nonzero(np.diff(button) != 0)[0] + 1
    edges = np.concatenate(([0], boundaries, [len(button)]))
    return [
        Stroke(
            kind=StrokeKind.ON_SURFACE if button[a] == 1 else StrokeKind.IN_AIR,
            start=int(a),
            stop=int(b),
        )
        for a, b in zip(edges[:-1], edges[1:])
    ]


def strokes_of_kind(strokes: list[Stroke], kind: StrokeKind) -> list[Stroke]:
    return [s for s in strokes if s.kind == kind]


# --- dataset manifest ----------------------------------------------------

@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    label: str
    task_paths: dict  # task_id -> Path


def task_filename(subject_id: str, task_id: int) -> str:
    return f"{subject_id}__{task_id}.svc"


def write_manifest(path, records: list[SubjectRecord]) -> None:
    doc = {
        "subjects": [
            {
                "subject_id": r.subject_id,
                "label": r.label,
                "tasks": {str(t): str(p) for t, p in sorted(r.task_paths.items())},
            }
            for r in records
        ]
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_manifest(path) -> list[SubjectRecord]:
    path = Path(path)
    doc = json.loads(path.read_text())
    records = []
    for entry in doc["subjects"]:
        records.append(
            SubjectRecord(
                subject_id=entry["subject_id"],
                label=entry["label"],
                task_paths={
                    int(t): (path.parent / p if not Path(p).is_absolute() else Path(p))
                    for t, p in entry["tasks"].items()
                },
            )
        )
    return records


def scan_directory(root) -> list[SubjectRecord]:
    """Build subject records from <subject>__<task>.svc files (no labels)."""
    by_subject: dict[str, dict[int, Path]] = {}
    for p in sorted(Path(root).iterdir()):
        m = FILE_PATTERN.match(p.name)
        if m:
            by_subject.setdefault(m["subject"], {})[int(m["task"])] = p
    return [
        SubjectRecord(subject_id=s, label="", task_paths=tasks)
        for s, tasks in sorted(by_subject.items())
    ]


def load_trajectory(record: SubjectRecord, task_id: int,
                    column_map: ColumnMap | None = None) -> Trajectory:
    path = record.task_paths[task_id]
    return parse_svc(
        path.read_bytes(),
        column_map=column_map,
        subject_id=record.subject_id,
        task_id=task_id,
        label=record.label or None,
    )
