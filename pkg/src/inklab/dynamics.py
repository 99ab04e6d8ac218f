"""Hand-crafted dynamic handwriting features.

The battery covers kinematics (displacement/velocity/acceleration/jerk,
per on-surface and in-air scope), spatio-temporal stroke measures,
pressure, entropy (Shannon and Renyi), signal-to-noise ratio and
empirical mode decomposition. Vector-valued features are reduced to six
summary statistics; the full assembled vector follows a fixed, documented
schema so every subject shares identical dimensions.

Derivatives assume uniform sampling at the trajectory sample rate and
never cross stroke boundaries. Interior stencils are 5-point (4th order)
wherever strokes are long enough, falling back to low-order forms on
short strokes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    DataError,
    EmptyVector,
    InsufficientSamples,
    NoOnSurfaceStrokes,
)
from .ingest import StrokeKind, Trajectory, normalize_coords, segment_strokes
from .vectors import FeatureVector

SNR_CAP_DB = 120.0
DEFAULT_ENTROPY_BINS = 16
DEFAULT_RENYI_ALPHA = 2.0
EMD_MAX_IMFS = 6
EMD_SD_THRESHOLD = 0.3
EMD_MAX_SIFTS = 30


@dataclass(frozen=True)
class TimeSeries:
    values: np.ndarray
    dt: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if self.dt <= 0:
            raise DataError("dt must be positive")
        if not np.all(np.isfinite(values)):
            raise DataError("time series contains non-finite values")


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    median: float
    std: float
    p01: float
    p99: float
    range_robust: float

    FIELDS = ("mean", "median", "std", "p01", "p99", "range_robust")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in self.FIELDS], dtype=np.float64)


def summarize(values) -> SummaryStats:
    """Six summary statistics; percentiles interpolate order statistics."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise EmptyVector("cannot summarize an empty vector")
    p01, p99 = np.percentile(values, [1, 99])
    return SummaryStats(
        mean=float(values.mean()),
        median=float(np.median(values)),
        std=float(values.std()),
        p01=float(p01),
        p99=float(p99),
        range_robust=float(p99 - p01),
    )


# --- derivatives -------------------------------------------------------------

def _derivative(values: np.ndarray, dt: float) -> np.ndarray:
    """First derivative on a uniform grid, 4th-order where possible."""
    v = np.asarray(values, dtype=np.float64)
    n = len(v)
    if n == 1:
        return np.zeros(1)
    if n < 5:
        if n == 2:
            d = (v[1] - v[0]) / dt
            return np.array([d, d])
        out = np.empty(n)
        out[1:-1] = (v[2:] - v[:-2]) / (2 * dt)
        out[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * dt)
        out[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * dt)
        return out
    out = np.empty(n)
    out[2:-2] = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * dt)
    out[0] = (-25 * v[0] + 48 * v[1] - 36 * v[2] + 16 * v[3] - 3 * v[4]) / (12 * dt)
    out[1] = (-3 * v[0] - 10 * v[1] + 18 * v[2] - 6 * v[3] + v[4]) / (12 * dt)
    out[-2] = (3 * v[-1] + 10 * v[-2] - 18 * v[-3] + 6 * v[-4] - v[-5]) / (12 * dt)
    out[-1] = (25 * v[-1] - 48 * v[-2] + 36 * v[-3] - 16 * v[-4] + 3 * v[-5]) / (12 * dt)
    return out


_KINEMATIC_ORDERS = ("displacement", "velocity", "acceleration", "jerk")
_COMPONENTS = ("horizontal", "vertical", "resultant")


def kinematics(traj: Trajectory, strokes, scope: StrokeKind) -> dict:
    """Per-scope kinematic series, differenced within strokes only.

    Returns `{"<order>_<component>": TimeSeries}` for displacement,
    velocity, acceleration and jerk in horizontal / vertical / resultant
    form. Requires at least 4 samples in scope (jerk needs them).
    """
    picked = [s for s in strokes if s.kind == scope and len(s) >= 2]
    total = sum(len(s) for s in strokes if s.kind == scope)
    if total < 4:
        raise InsufficientSamples(f"kinematics[{scope.value}]", 4, total)

    dt = traj.dt
    x = np.asarray(traj.x, dtype=np.float64)
    y = np.asarray(traj.y, dtype=np.float64)

    parts = {(q, c): [] for q in _KINEMATIC_ORDERS for c in _COMPONENTS}
    for s in picked:
        sx, sy = x[s.start:s.stop], y[s.start:s.stop]
        dx, dy = np.abs(np.diff(sx)), np.abs(np.diff(sy))
        parts[("displacement", "horizontal")].append(dx)
        parts[("displacement", "vertical")].append(dy)
        parts[("displacement", "resultant")].append(np.hypot(np.diff(sx), np.diff(sy)))
        hx, hy = sx, sy
        for order in ("velocity", "acceleration", "jerk"):
            hx, hy = _derivative(hx, dt), _derivative(hy, dt)
            parts[(order, "horizontal")].append(hx)
            parts[(order, "vertical")].append(hy)
            parts[(order, "resultant")].append(np.hypot(hx, hy))

    return {
        f"{order}_{comp}": TimeSeries(
            np.concatenate(parts[(order, comp)]) if parts[(order, comp)]
            else np.zeros(0),
            dt,
        )
        for order in _KINEMATIC_ORDERS
        for comp in _COMPONENTS
    }


# --- spatio-temporal ---------------------------------------------------------

def _stroke_length(traj: Trajectory, stroke) -> float:
    x = np.asarray(traj.x, dtype=np.float64)[stroke.start:stroke.stop]
    y = np.asarray(traj.y, dtype=np.float64)[stroke.start:stroke.stop]
    return float(np.hypot(np.diff(x), np.diff(y)).sum())


def spatio_temporal(traj: Trajectory, strokes) -> dict:
    """Stroke counts, times, sizes and speeds.

    Scalars: stroke counts per kind, on-surface / in-air time, their
    ratio, and global speed (total on-surface path length over on-surface
    time). Vectors: per-stroke duration, length and speed (strokes with a
    single sample have zero duration and are skipped in vectors).
    """
    on = [s for s in strokes if s.kind == StrokeKind.ON_SURFACE]
    air = [s for s in strokes if s.kind == StrokeKind.IN_AIR]
    if not on:
        raise NoOnSurfaceStrokes("trajectory has no on-surface strokes")

    dt = traj.dt
    out = {
        "stroke_count_on_surface": float(len(on)),
        "stroke_count_in_air": float(len(air)),
    }
    time_on = sum((len(s) - 1) * dt for s in on)
    time_air = sum((len(s) - 1) * dt for s in air)
    out["time_on_surface"] = time_on
    out["time_in_air"] = time_air
    out["time_ratio_air_surface"] = time_air / time_on if time_on > 0 else 0.0
    length_on = sum(_stroke_length(traj, s) for s in on)
    out["speed_on_surface"] = length_on / time_on if time_on > 0 else 0.0

    for kind, group in (("on_surface", on), ("in_air", air)):
        multi = [s for s in group if len(s) >= 2]
        durations = np.array([(len(s) - 1) * dt for s in multi])
        lengths = np.array([_stroke_length(traj, s) for s in multi])
        out[f"stroke_duration_{kind}"] = durations
        out[f"stroke_length_{kind}"] = lengths
        out[f"stroke_speed_{kind}"] = (
            lengths / durations if len(multi) else np.zeros(0)
        )
    return out


def pressure_features(traj: Trajectory, strokes) -> dict:
    """On-surface pressure series and its within-stroke rate of change."""
    dt = traj.dt
    p = np.asarray(traj.pressure, dtype=np.float64)
    series, rates = [], []
    for s in strokes:
        if s.kind != StrokeKind.ON_SURFACE:
            continue
        chunk = p[s.start:s.stop]
        series.append(chunk)
        if len(chunk) >= 2:
            rates.append(_derivative(chunk, dt))
    return {
        "pressure": np.concatenate(series) if series else np.zeros(0),
        "pressure_rate": np.concatenate(rates) if rates else np.zeros(0),
    }


# --- entropy / SNR -----------------------------------------------------------

def _bin_probabilities(series: np.ndarray, n_bins: int) -> np.ndarray | None:
    series = np.asarray(series, dtype=np.float64)
    if series.size == 0:
        raise EmptyVector("entropy of an empty series")
    if n_bins < 2:
        raise DataError("n_bins must be >= 2")
    lo, hi = series.min(), series.max()
    if lo == hi:
        return None  # degenerate: entropy 0 by convention
    counts, _ = np.histogram(series, bins=n_bins, range=(lo, hi))
    return counts / counts.sum()


def shannon_entropy(series, n_bins: int = DEFAULT_ENTROPY_BINS) -> float:
    """Histogram Shannon entropy, natural log, 0*log0 = 0."""
    p = _bin_probabilities(series, n_bins)
    if p is None:
        return 0.0
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def renyi_entropy(series, alpha: float = DEFAULT_RENYI_ALPHA,
                  n_bins: int = DEFAULT_ENTROPY_BINS) -> float:
    """Histogram Renyi entropy of the given order (alpha > 0, != 1)."""
    if alpha <= 0 or alpha == 1.0:
        raise DataError("Renyi order must be positive and != 1")
    p = _bin_probabilities(series, n_bins)
    if p is None:
        return 0.0
    p = p[p > 0]
    return float(np.log((p ** alpha).sum()) / (1.0 - alpha))


def snr(series, window: int = 7) -> float:
    """10*log10 of low-pass power over residual power.

    The signal estimate is a centered moving average (edge-replicated);
    the noise is what remains. Zero noise is capped at +120 dB, zero
    signal floored at -120 dB.
    """
    series = np.asarray(series, dtype=np.float64)
    if window < 2:
        raise DataError("window must be >= 2")
    if series.size < max(8, window + 1):
        raise InsufficientSamples("snr", max(8, window + 1), series.size)
    half = window // 2
    padded = np.pad(series, half, mode="edge")
    kernel = np.ones(window) / window
    smooth = np.convolve(padded, kernel, mode="valid")[:series.size]
    noise = series - smooth
    p_sig = float((smooth ** 2).mean())
    p_noise = float((noise ** 2).mean())
    if p_noise == 0.0:
        return SNR_CAP_DB
    if p_sig == 0.0:
        return -SNR_CAP_DB
    return float(np.clip(10.0 * np.log10(p_sig / p_noise), -SNR_CAP_DB, SNR_CAP_DB))


# --- empirical mode decomposition -------------------------------------------

@dataclass(frozen=True)
class EmdResult:
    imfs: list
    residual: np.ndarray


def _local_extrema(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Indices of strict local maxima / minima; plateaus use their middle."""
    d = np.diff(v)
    sign = np.sign(d)
    # propagate the previous non-zero slope over plateaus
    for i in range(1, len(sign)):
        if sign[i] == 0:
            sign[i] = sign[i - 1]
    turn = np.diff(sign)
    maxima = np.nonzero(turn < 0)[0] + 1
    minima = np.nonzero(turn > 0)[0] + 1
    return maxima, minima


def _envelope(idx: np.ndarray, vals: np.ndarray, n: int) -> np.ndarray:
    """Spline envelope through extrema, mirror-extended at both ends."""
    k = min(2, len(idx) - 1)
    left_i = -idx[1:k + 1][::-1]
    right_i = 2 * (n - 1) - idx[-k - 1:-1][::-1]
    xi = np.concatenate([left_i, idx, right_i]).astype(np.float64)
    yi = np.concatenate([vals[1:k + 1][::-1], vals, vals[-k - 1:-1][::-1]])
    grid = np.arange(n, dtype=np.float64)
    if len(xi) < 4:
        return np.interp(grid, xi, yi)
    return CubicSpline(xi, yi, bc_type="natural")(grid)


def emd(series, max_imfs: int = EMD_MAX_IMFS,
        sd_threshold: float = EMD_SD_THRESHOLD,
        max_sifts: int = EMD_MAX_SIFTS) -> EmdResult:
    """Standard sifting with cubic-spline envelopes.

    Sifting of one mode stops when the standard-deviation criterion
    between consecutive sift iterations drops below `sd_threshold`;
    extraction stops when the residual is monotone (too few extrema) or
    `max_imfs` is reached. The identity sum(imfs) + residual == input
    holds to floating-point accuracy by construction.
    """
    series = np.asarray(series, dtype=np.float64)
    n = series.size
    if n < 16:
        raise InsufficientSamples("emd", 16, n)

    residual = series.copy()
    imfs: list[np.ndarray] = []
    for _ in range(max_imfs):
        maxima, minima = _local_extrema(residual)
        if len(maxima) < 2 or len(minima) < 2:
            break  # monotone-ish: no more oscillatory modes
        h = residual.copy()
        for _ in range(max_sifts):
            maxima, minima = _local_extrema(h)
            if len(maxima) < 2 or len(minima) < 2:
                break
            upper = _envelope(maxima, h[maxima], n)
            lower = _envelope(minima, h[minima], n)
            mean_env = 0.5 * (upper + lower)
            h_new = h - mean_env
            sd = float((((h - h_new) ** 2) / (h ** 2 + 1e-12)).sum())
            h = h_new
            if sd < sd_threshold:
                break
        imfs.append(h)
        residual = residual - h
    return EmdResult(imfs=imfs, residual=residual)


def imf_energy(imf: np.ndarray) -> float:
    return float((np.asarray(imf) ** 2).mean())


def zero_crossing_rate(values: np.ndarray, dt: float) -> float:
    """Dominant-frequency estimate: crossings / (2 * duration)."""
    v = np.asarray(values, dtype=np.float64)
    crossings = int((np.diff(np.signbit(v)) != 0).sum())
    duration = (len(v) - 1) * dt
    return crossings / (2.0 * duration) if duration > 0 else 0.0


# --- z-score normalization ----------------------------------------------------

@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    def to_json(self) -> str:
        return json.dumps({"mean": self.mean.tolist(), "std": self.std.tolist()})

    @staticmethod
    def from_json(text: str) -> "Scaler":
        doc = json.loads(text)
        return Scaler(np.asarray(doc["mean"], dtype=np.float64),
                      np.asarray(doc["std"], dtype=np.float64))


def zscore_fit(train: np.ndarray, valid_mask: np.ndarray | None = None) -> Scaler:
    """Per-column mean/std over the training rows only.

    `valid_mask` marks observed cells; imputed cells are excluded from
    the statistics so that, after `zscore_apply`, they sit exactly at the
    training mean (i.e. at 0).
    """
    train = np.asarray(train, dtype=np.float64)
    if valid_mask is None:
        valid_mask = np.ones(train.shape, dtype=bool)
    counts = valid_mask.sum(axis=0)
    safe = np.maximum(counts, 1)
    masked = np.where(valid_mask, train, 0.0)
    mean = masked.sum(axis=0) / safe
    var = (np.where(valid_mask, (train - mean) ** 2, 0.0)).sum(axis=0) / safe
    std = np.sqrt(var)
    mean = np.where(counts > 0, mean, 0.0)
    std = np.where(counts > 0, std, 0.0)
    return Scaler(mean=mean, std=std)


def zscore_apply(scaler: Scaler, X: np.ndarray,
                 valid_mask: np.ndarray | None = None) -> np.ndarray:
    """(x - mean) / std with zero-variance columns and imputed cells at 0."""
    X = np.asarray(X, dtype=np.float64)
    std = np.where(scaler.std > 0, scaler.std, 1.0)
    out = (X - scaler.mean) / std
    out = np.where(scaler.std > 0, out, 0.0)
    if valid_mask is not None:
        out = np.where(valid_mask, out, 0.0)
    return out


# --- full battery -------------------------------------------------------------

_SCOPE_NAMES = (("on_surface", StrokeKind.ON_SURFACE), ("in_air", StrokeKind.IN_AIR))


@lru_cache(maxsize=None)
def schema() -> tuple:
    """Ordered semantic names of every assembled dynamic dimension."""
    names: list[str] = []
    names += [
        "stroke_count_on_surface", "stroke_count_in_air",
        "time_on_surface", "time_in_air",
        "time_ratio_air_surface", "speed_on_surface",
    ]
    vector_feats: list[str] = []
    for scope, _ in _SCOPE_NAMES:
        for order in _KINEMATIC_ORDERS:
            for comp in _COMPONENTS:
                vector_feats.append(f"{scope}_{order}_{comp}")
    for kind in ("on_surface", "in_air"):
        vector_feats += [f"stroke_duration_{kind}", f"stroke_length_{kind}",
                         f"stroke_speed_{kind}"]
    vector_feats += ["pressure", "pressure_rate"]
    for feat in vector_feats:
        names += [f"{feat}_{stat}" for stat in SummaryStats.FIELDS]
    for sig in ("x", "y", "vx", "vy", "speed"):
        names += [f"shannon_{sig}", f"renyi_{sig}"]
    names += ["snr_x", "snr_y"]
    for sig in ("x", "y"):
        names.append(f"emd_{sig}_imf_count")
        names += [f"emd_{sig}_imf{k}_energy" for k in range(1, EMD_MAX_IMFS + 1)]
        for k in (1, 2, 3):
            names += [f"emd_{sig}_imf{k}_{stat}" for stat in SummaryStats.FIELDS]
    return tuple(names)


def schema_size() -> int:
    return len(schema())


def describe_schema() -> str:
    """Human-readable schema doc: index, dim name, semantic name."""
    lines = ["index\tdim_name\tsemantic_name"]
    for i, name in enumerate(schema()):
        lines.append(f"{i}\tdynamic:{i}\t{name}")
    return "\n".join(lines) + "\n"


def assemble_dynamic_vector(traj: Trajectory) -> tuple[FeatureVector, np.ndarray]:
    """Full dynamic vector plus a validity mask.

    Features whose inputs are absent (e.g. no in-air strokes) are imputed
    as 0 and flagged False in the mask; the z-score step later maps them
    to the training mean. Output ordering follows `schema()` exactly.
    """
    if not traj.normalized:
        traj = normalize_coords(traj)
    strokes = segment_strokes(traj)
    names = schema()
    values = dict.fromkeys(names, 0.0)
    valid = dict.fromkeys(names, False)

    def put(name, value):
        if np.isfinite(value):
            values[name] = float(value)
            valid[name] = True

    def put_stats(prefix, vector):
        vector = np.asarray(vector, dtype=np.float64)
        if vector.size == 0:
            return
        stats = summarize(vector)
        for stat in SummaryStats.FIELDS:
            put(f"{prefix}_{stat}", getattr(stats, stat))

    try:
        st_feats = spatio_temporal(traj, strokes)
    except NoOnSurfaceStrokes:
        st_feats = {}
    for name in ("stroke_count_on_surface", "stroke_count_in_air",
                 "time_on_surface", "time_in_air",
                 "time_ratio_air_surface", "speed_on_surface"):
        if name in st_feats:
            put(name, st_feats[name])
    for kind in ("on_surface", "in_air"):
        for base in ("stroke_duration", "stroke_length", "stroke_speed"):
            put_stats(f"{base}_{kind}", st_feats.get(f"{base}_{kind}", np.zeros(0)))

    speed_series = np.zeros(0)
    vx_series = np.zeros(0)
    vy_series = np.zeros(0)
    for scope_name, scope in _SCOPE_NAMES:
        try:
            kin = kinematics(traj, strokes, scope)
        except InsufficientSamples:
            continue
        for key, ts in kin.items():
            put_stats(f"{scope_name}_{key}", ts.values)
        if scope == StrokeKind.ON_SURFACE:
            speed_series = kin["velocity_resultant"].values
            vx_series = kin["velocity_horizontal"].values
            vy_series = kin["velocity_vertical"].values

    pressure = pressure_features(traj, strokes)
    put_stats("pressure", pressure["pressure"])
    put_stats("pressure_rate", pressure["pressure_rate"])

    x = np.asarray(traj.x, dtype=np.float64)
    y = np.asarray(traj.y, dtype=np.float64)
    for sig, series in (("x", x), ("y", y), ("vx", vx_series),
                        ("vy", vy_series), ("speed", speed_series)):
        if series.size > 0:
            put(f"shannon_{sig}", shannon_entropy(series))
            put(f"renyi_{sig}", renyi_entropy(series))
    for sig, series in (("x", x), ("y", y)):
        try:
            put(f"snr_{sig}", snr(series))
        except InsufficientSamples:
            pass

    for sig, series in (("x", x), ("y", y)):
        try:
            decomp = emd(series)
        except InsufficientSamples:
            continue
        put(f"emd_{sig}_imf_count", float(len(decomp.imfs)))
        for k, imf in enumerate(decomp.imfs[:EMD_MAX_IMFS], start=1):
            put(f"emd_{sig}_imf{k}_energy", imf_energy(imf))
            if k <= 3:
                put_stats(f"emd_{sig}_imf{k}", imf)

    vec = FeatureVector(
        values=np.array([values[n] for n in names], dtype=np.float64),
        modality="dynamic",
    )
    mask = np.array([valid[n] for n in names], dtype=bool)
    return vec, mask
