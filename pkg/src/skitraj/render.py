"""Trajectory overlay drawing with coverage-blended (anti-aliased) lines."""

from __future__ import annotations

import math
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bbox import BBox
from .image import ColorFrame
from .trajectory import smooth_for_render


@dataclass(frozen=True)
class RenderStyle:
    line_color: tuple[int, int, int] = (75, 142, 209)
    line_width: float = 2.0
    point_radius: float = 2.0
    draw_box: bool = True
    box_color: tuple[int, int, int] = (240, 90, 60)
    smooth: bool = False
    smooth_window: int = 9
    smooth_order: int = 2
    hide_points_in_box: bool = False

    def __post_init__(self):
        if self.line_width < 1:
            raise ValueError("line_width must be >= 1")
        if self.point_radius < 0:
            raise ValueError("point_radius must be >= 0")


def _segment_coverage(alpha: np.ndarray, p, q, width: float) -> None:
    """Max-accumulate coverage of a capsule of the given width around segment pq."""
    H, W = alpha.shape
    half = width / 2.0
    pad = half + 1.0
    x0 = max(int(math.floor(min(p[0], q[0]) - pad)), 0)
    x1 = min(int(math.ceil(max(p[0], q[0]) + pad)) + 1, W)
    y0 = max(int(math.floor(min(p[1], q[1]) - pad)), 0)
    y1 = min(int(math.ceil(max(p[1], q[1]) + pad)) + 1, H)
    if x1 <= x0 or y1 <= y0:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1].astype(np.float64)
    dx, dy = q[0] - p[0], q[1] - p[1]
    L2 = dx * dx + dy * dy
    if L2 > 0:
        s = np.clip(((xx - p[0]) * dx + (yy - p[1]) * dy) / L2, 0.0, 1.0)
    else:
        s = 0.0
    d = np.hypot(xx - (p[0] + s * dx), yy - (p[1] + s * dy))
    cov = np.clip(half + 0.5 - d, 0.0, 1.0)
    np.maximum(alpha[y0:y1, x0:x1], cov, out=alpha[y0:y1, x0:x1])


def _blend(img: np.ndarray, alpha: np.ndarray, color) -> None:
    hit = alpha > 0
    if not hit.any():
        return
    a = alpha[hit][:, None]
    img[hit] = (1.0 - a) * img[hit] + a * np.asarray(color, dtype=np.float64)


def _draw_box(img: np.ndarray, box: BBox, color) -> None:
    alpha = np.zeros(img.shape[:2])
    x0, y0, x1, y1 = box.x, box.y, box.x + box.w, box.y + box.h
    for p, q in (((x0, y0), (x1, y0)), ((x1, y0), (x1, y1)), ((x1, y1), (x0, y1)), ((x0, y1), (x0, y0))):
        _segment_coverage(alpha, p, q, 1.0)
    _blend(img, alpha, color)


def render_frame(f: ColorFrame, traj, box: BBox | None, style: RenderStyle = RenderStyle()) -> ColorFrame:
    """Copy of f with the trajectory polyline, its points and (optionally) the box."""
    img = f.data.astype(np.float64)
    xy = np.asarray(traj.xy if hasattr(traj, "xy") else [[p[0], p[1]] for p in traj], dtype=np.float64).reshape(-1, 2)
    if style.smooth and len(xy) >= style.smooth_window:
        xy = np.array([[p.x, p.y] for p in smooth_for_render(xy, style.smooth_window, style.smooth_order)])
    if style.hide_points_in_box and box is not None and len(xy):
        xy = xy[~box.contains(xy)]
    alpha = np.zeros(img.shape[:2])
    for i in range(len(xy) - 1):
        _segment_coverage(alpha, xy[i], xy[i + 1], style.line_width)
    if style.point_radius > 0:
        for p in xy:
            # a dot is a zero-length capsule
            _segment_coverage(alpha, p, p, 2.0 * style.point_radius)
    _blend(img, alpha, style.line_color)
    if style.draw_box and box is not None:
        _draw_box(img, box, style.box_color)
    if not np.any(alpha) and not (style.draw_box and box is not None):
        return f.copy()
    return ColorFrame(np.clip(np.rint(img), 0, 255).astype(np.uint8))


def copy_frames(src_dir, out_dir) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = 0
    for p in sorted(Path(src_dir).iterdir()):
        if p.is_file() and p.suffix.lower() in (".png", ".ppm"):
            shutil.copyfile(p, out / p.name)
            n += 1
    return n
