"""Trajectory rasterization and derived image representations.

Three render modes:

* ``LINKED_STATIC``  - line segments between consecutive on-surface
  samples (a conventional static reconstruction); in-air ignored.
* ``VELOCITY_POINTS`` - each on-surface sample plotted as a small disc;
  sample density then encodes writing speed (slow = dense = dark).
* ``ENHANCED_POINTS`` - velocity discs plus in-air samples as gray
  discs; darker always wins where they overlap.

All pixel math is specified to fixed rounding (half away from zero) so
identical inputs produce byte-identical images everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError, EmptyTrajectory
from .ingest import StrokeKind, Trajectory, segment_strokes


class RenderMode(Enum):
    LINKED_STATIC = "linked"
    VELOCITY_POINTS = "velocity"
    ENHANCED_POINTS = "enhanced"


@dataclass(frozen=True)
class GrayImage:
    """8-bit grayscale raster, background white (255)."""

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 2 or p.dtype != np.uint8:
            raise DataError(f"GrayImage wants 2-D uint8 pixels, got {p.shape} {p.dtype}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class RgbImage:
    """8-bit three-channel raster."""

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3 or p.dtype != np.uint8:
            raise DataError(f"RgbImage wants (h, w, 3) uint8 pixels, got {p.shape} {p.dtype}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class RenderConfig:
    canvas_w: int = 432
    canvas_h: int = 288
    mode: RenderMode = RenderMode.ENHANCED_POINTS
    on_surface_intensity: int = 0
    in_air_intensity: int = 128
    point_radius: int = 1
    margin_fraction: float = 0.05
    stroke_width: int = 1

    def __post_init__(self):
        if self.canvas_w <= 0 or self.canvas_h <= 0:
            raise DataError("canvas dimensions must be positive")
        if not 0 <= self.on_surface_intensity < self.in_air_intensity < 255:
            raise DataError("need 0 <= on_surface < in_air < 255 intensity")
        if self.point_radius < 0 or self.stroke_width < 1:
            raise DataError("bad point_radius/stroke_width")
        if not 0.0 <= self.margin_fraction < 0.5:
            raise DataError("margin_fraction must be in [0, 0.5)")


def round_half_away(v: np.ndarray) -> np.ndarray:
    """Round half away from zero (numpy rounds half to even)."""
    v = np.asarray(v, dtype=np.float64)
    return np.trunc(v + np.copysign(0.5, v))


def fit_to_canvas(traj: Trajectory, cfg: RenderConfig) -> np.ndarray:
    """Map trajectory coordinates to integer pixel centers, shape (n, 2).

    Uniform (aspect-preserving) scale + translation takes the bounding
    box of the samples the mode draws (on-surface only for linked /
    velocity, everything for enhanced) into the canvas minus margins,
    centered. The y axis is flipped so larger y sits higher on the page.
    A degenerate bounding box lands at the canvas center.
    """
    if len(traj) == 0:
        raise EmptyTrajectory("nothing to fit")
    x = np.asarray(traj.x, dtype=np.float64)
    y = np.asarray(traj.y, dtype=np.float64)

    if cfg.mode is RenderMode.ENHANCED_POINTS:
        drawn = np.ones(len(traj), dtype=bool)
    else:
        drawn = np.asarray(traj.button) == 1
    if not drawn.any():
        drawn = np.ones(len(traj), dtype=bool)

    xmin, xmax = x[drawn].min(), x[drawn].max()
    ymin, ymax = y[drawn].min(), y[drawn].max()
    bw, bh = xmax - xmin, ymax - ymin

    mx = cfg.margin_fraction * (cfg.canvas_w - 1)
    my = cfg.margin_fraction * (cfg.canvas_h - 1)
    usable_w = (cfg.canvas_w - 1) - 2 * mx
    usable_h = (cfg.canvas_h - 1) - 2 * my

    scales = []
    if bw > 0:
        scales.append(usable_w / bw)
    if bh > 0:
        scales.append(usable_h / bh)
    scale = min(scales) if scales else 0.0

    fx = mx + (usable_w - scale * bw) / 2 + (x - xmin) * scale
    fy = my + (usable_h - scale * bh) / 2 + (y - ymin) * scale
    px = round_half_away(fx)
    py = round_half_away((cfg.canvas_h - 1) - fy)
    return np.column_stack([px, py]).astype(np.int64)


def _disc_offsets(radius: int) -> np.ndarray:
    span = np.arange(-radius, radius + 1)
    dx, dy = np.meshgrid(span, span)
    keep = dx * dx + dy * dy <= radius * radius
    return np.column_stack([dx[keep], dy[keep]])


def _stamp_discs(canvas: np.ndarray, centers: np.ndarray, radius: int,
                 intensity: int) -> None:
    """Darken disc footprints in place; darker pixels always survive."""
    if len(centers) == 0:
        return
    h, w = canvas.shape
    for ox, oy in _disc_offsets(radius):
        xs = centers[:, 0] + ox
        ys = centers[:, 1] + oy
        ok = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
        np.minimum.at(canvas, (ys[ok], xs[ok]), np.uint8(intensity))


def _line_pixels(p0: np.ndarray, p1: np.ndarray) -> np.ndarray:
    """Integer pixels of the segment p0-p1 (DDA with fixed rounding)."""
    n = int(max(abs(p1[0] - p0[0]), abs(p1[1] - p0[1]))) + 1
    ts = np.linspace(0.0, 1.0, n)
    xs = round_half_away(p0[0] + ts * (p1[0] - p0[0]))
    ys = round_half_away(p0[1] + ts * (p1[1] - p0[1]))
    return np.column_stack([xs, ys]).astype(np.int64)


def render(traj: Trajectory, cfg: RenderConfig) -> GrayImage:
    """Rasterize a normalized trajectory per the configured mode."""
    if len(traj) == 0:
        raise EmptyTrajectory("nothing to render")
    if not traj.normalized:
        raise DataError("render expects a normalized trajectory")

    coords = fit_to_canvas(traj, cfg)
    canvas = np.full((cfg.canvas_h, cfg.canvas_w), 255, dtype=np.uint8)
    on_surface = np.asarray(traj.button) == 1

    if cfg.mode is RenderMode.LINKED_STATIC:
        radius = cfg.stroke_width // 2
        for stroke in segment_strokes(traj):
            if stroke.kind is not StrokeKind.ON_SURFACE:
                continue
            pts = coords[stroke.start:stroke.stop]
            if len(pts) == 1:
                _stamp_discs(canvas, pts, radius, cfg.on_surface_intensity)
                continue
            for i in range(len(pts) - 1):
                line = _line_pixels(pts[i], pts[i + 1])
                _stamp_discs(canvas, line, radius, cfg.on_surface_intensity)
        return GrayImage(canvas)

    if cfg.mode is RenderMode.ENHANCED_POINTS:
        _stamp_discs(canvas, coords[~on_surface], cfg.point_radius,
                     cfg.in_air_intensity)
    _stamp_discs(canvas, coords[on_surface], cfg.point_radius,
                 cfg.on_surface_intensity)
    return GrayImage(canvas)


# --- derived representations ----------------------------------------------

_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)


def _shifted_windows(padded: np.ndarray, h: int, w: int):
    for dy in range(3):
        for dx in range(3):
            yield dy, dx, padded[dy:dy + h, dx:dx + w]


def median_residual(img: GrayImage) -> GrayImage:
    """|median3x3(img) - img| per pixel, borders replicated."""
    h, w = img.pixels.shape
    padded = np.pad(img.pixels, 1, mode="edge")
    stack = np.stack([win for _, _, win in _shifted_windows(padded, h, w)])
    med = np.median(stack, axis=0)
    residual = np.abs(med - img.pixels.astype(np.float64))
    return GrayImage(np.clip(round_half_away(residual), 0, 255).astype(np.uint8))


def edge_image(img: GrayImage, kernel_x: np.ndarray = _SOBEL_X) -> GrayImage:
    """Gradient magnitude from a horizontal/vertical filter pair.

    Defaults to the 3x3 Sobel pair; magnitude is rescaled so the maximum
    maps to 255 (an all-zero gradient stays all zero). Borders replicate.
    """
    kernel_x = np.asarray(kernel_x, dtype=np.float64)
    if kernel_x.shape != (3, 3):
        raise DataError("edge kernel must be 3x3")
    kernel_y = kernel_x.T
    h, w = img.pixels.shape
    padded = np.pad(img.pixels.astype(np.float64), 1, mode="edge")
    gx = np.zeros((h, w))
    gy = np.zeros((h, w))
    for dy, dx, win in _shifted_windows(padded, h, w):
        if kernel_x[dy, dx] != 0.0:
            gx += kernel_x[dy, dx] * win
        if kernel_y[dy, dx] != 0.0:
            gy += kernel_y[dy, dx] * win
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak > 0:
        mag = mag * (255.0 / peak)
    return GrayImage(np.clip(round_half_away(mag), 0, 255).astype(np.uint8))


def resize_to_model(img: GrayImage, side: int = 150) -> RgbImage:
    """Bilinear resample to side x side then replicate gray into RGB.

    Plain resize: aspect is intentionally not preserved. Sampling uses
    half-pixel centers, so resizing to the same size is the identity.
    """
    src = img.pixels.astype(np.float64)
    h, w = src.shape
    out = np.empty((side, side), dtype=np.float64)

    def grid(n_dst, n_src):
        pos = (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5
        pos = np.clip(pos, 0.0, n_src - 1)
        lo = np.floor(pos).astype(np.int64)
        hi = np.minimum(lo + 1, n_src - 1)
        frac = pos - lo
        return lo, hi, frac

    ylo, yhi, fy = grid(side, h)
    xlo, xhi, fx = grid(side, w)
    top = src[ylo][:, xlo] * (1 - fx) + src[ylo][:, xhi] * fx
    bot = src[yhi][:, xlo] * (1 - fx) + src[yhi][:, xhi] * fx
    out = top * (1 - fy)[:, None] + bot * fy[:, None]
    gray = np.clip(round_half_away(out), 0, 255).astype(np.uint8)
    return RgbImage(np.repeat(gray[:, :, None], 3, axis=2))


# --- PNG export / import ----------------------------------------------------

def save_png(img, path) -> None:
    pixels = img.pixels
    mode = "L" if pixels.ndim == 2 else "RGB"
    Image.fromarray(pixels, mode=mode).save(Path(path), format="PNG")


def load_png(path):
    with Image.open(Path(path)) as im:
        if im.mode == "L":
            return GrayImage(np.asarray(im, dtype=np.uint8))
        if im.mode == "RGB":
            return RgbImage(np.asarray(im, dtype=np.uint8))
        raise DataError(f"unsupported PNG mode {im.mode}")
