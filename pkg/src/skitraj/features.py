"""Shi-Tomasi corner detection with exclusion rectangles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .bbox import BBox
from .errors import InvalidParams, NoFeatures
from .geometry import Point2
from .image import GrayFrame, gradients


@dataclass(frozen=True)
class DetectorParams:
    max_corners: int = 1500
    quality_level: float = 0.01
    min_distance: float = 8.0
    window: int = 5

    def __post_init__(self):
        if not 0.0 < self.quality_level < 1.0:
            raise InvalidParams("quality_level must be in (0, 1)")
        if self.window < 3 or self.window % 2 == 0:
            raise InvalidParams("window must be odd and >= 3")
        if self.max_corners < 1:
            raise InvalidParams("max_corners must be >= 1")
        if self.min_distance < 0:
            raise InvalidParams("min_distance must be >= 0")


@dataclass(frozen=True)
class ExclusionMask:
    rects: tuple[BBox, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "rects", tuple(self.rects))

    def clipped(self, width: float, height: float) -> "ExclusionMask":
        return ExclusionMask(tuple(c for c in (r.clip(width, height) for r in self.rects) if c is not None))

    def contains(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        hit = np.zeros(len(pts), dtype=bool)
        for r in self.rects:
            hit |= r.contains(pts)
        return hit

    def __add__(self, other: "ExclusionMask") -> "ExclusionMask":
        return ExclusionMask(self.rects + other.rects)


@dataclass(frozen=True)
class CornerSet:
    points: np.ndarray  # (N, 2) x, y
    responses: np.ndarray  # (N,) non-increasing

    def __len__(self):
        return len(self.points)

    def as_points(self) -> list[Point2]:
        return [Point2(float(x), float(y)) for x, y in self.points]


@njit(cache=True, fastmath=True)
def _min_eig_kernel(gx, gy, r):
    h, w = gx.shape
    # horizontal running sums of the tensor entries, replicate border
    ha = np.empty((h, w), dtype=np.float32)
    hb = np.empty((h, w), dtype=np.float32)
    hc = np.empty((h, w), dtype=np.float32)
    for y in range(h):
        sa = np.float32(0.0)
        sb = np.float32(0.0)
        sc = np.float32(0.0)
        for k in range(-r, r + 1):
            x = min(max(k, 0), w - 1)
            a = gx[y, x]
            b = gy[y, x]
            sa += a * a
            sb += a * b
            sc += b * b
        ha[y, 0] = sa
        hb[y, 0] = sb
        hc[y, 0] = sc
        for x in range(1, w):
            xi = min(x + r, w - 1)
            xo = max(x - r - 1, 0)
            a = gx[y, xi]
            b = gy[y, xi]
            a2 = gx[y, xo]
            b2 = gy[y, xo]
            sa += a * a - a2 * a2
            sb += a * b - a2 * b2
            sc += b * b - b2 * b2
            ha[y, x] = sa
            hb[y, x] = sb
            hc[y, x] = sc
    resp = np.empty((h, w), dtype=np.float32)
    sa_row = np.zeros(w, dtype=np.float32)
    sb_row = np.zeros(w, dtype=np.float32)
    sc_row = np.zeros(w, dtype=np.float32)
    for k in range(-r, r + 1):
        y = min(max(k, 0), h - 1)
        for x in range(w):
            sa_row[x] += ha[y, x]
            sb_row[x] += hb[y, x]
            sc_row[x] += hc[y, x]
    for y in range(h):
        if y > 0:
            yi = min(y + r, h - 1)
            yo = max(y - r - 1, 0)
            for x in range(w):
                sa_row[x] += ha[yi, x] - ha[yo, x]
                sb_row[x] += hb[yi, x] - hb[yo, x]
                sc_row[x] += hc[yi, x] - hc[yo, x]
        for x in range(w):
            a = sa_row[x]
            b = sb_row[x]
            c = sc_row[x]
            d = np.float32(0.5) * (a - c)
            v = np.float32(0.5) * (a + c) - np.sqrt(d * d + b * b)
            resp[y, x] = v if v > 0 else np.float32(0.0)
    return resp


def min_eigen_response(g: GrayFrame, window: int = 5, grads=None) -> np.ndarray:
    """Per-pixel smallest eigenvalue of the windowed structure tensor.

    grads, when given, are per-pixel derivatives (Sobel / 8) of g.
    """
    if grads is None:
        gx, gy = gradients(g)
        grads = (gx / np.float32(8.0), gy / np.float32(8.0))
    gx, gy = grads
    return _min_eig_kernel(np.ascontiguousarray(gx, dtype=np.float32), np.ascontiguousarray(gy, dtype=np.float32), window // 2)


@njit(cache=True)
def _candidates(resp, thr):
    # pixels above thr that are 3x3 local maxima (ties kept), raster order
    h, w = resp.shape
    hmax = np.empty((h, w), dtype=resp.dtype)
    for y in range(h):
        for x in range(w):
            m = resp[y, x]
            if x > 0 and resp[y, x - 1] > m:
                m = resp[y, x - 1]
            if x < w - 1 and resp[y, x + 1] > m:
                m = resp[y, x + 1]
            hmax[y, x] = m
    n = 0
    ys = np.empty(4096, dtype=np.int64)
    xs = np.empty(4096, dtype=np.int64)
    for y in range(h):
        ya = max(y - 1, 0)
        yb = min(y + 1, h - 1)
        for x in range(w):
            v = resp[y, x]
            if v <= thr or v < hmax[y, x] or v < hmax[ya, x] or v < hmax[yb, x]:
                continue
            if n == ys.shape[0]:
                ys2 = np.empty(2 * n, dtype=np.int64)
                xs2 = np.empty(2 * n, dtype=np.int64)
                ys2[:n] = ys
                xs2[:n] = xs
                ys = ys2
                xs = xs2
            ys[n] = y
            xs[n] = x
            n += 1
    return ys[:n], xs[:n]


def _apply_mask(resp: np.ndarray, mask: ExclusionMask, dilate: int) -> None:
    h, w = resp.shape
    for rect in mask.rects:
        x0 = max(int(math.ceil(rect.x - dilate)), 0)
        y0 = max(int(math.ceil(rect.y - dilate)), 0)
        x1 = min(int(math.ceil(rect.x + rect.w + dilate)), w)
        y1 = min(int(math.ceil(rect.y + rect.h + dilate)), h)
        if x1 > x0 and y1 > y0:
            resp[y0:y1, x0:x1] = 0.0


@njit(cache=True)
def _greedy_select(xy, max_corners, min_distance, width, height):
    n = xy.shape[0]
    keep = np.zeros(n, dtype=np.bool_)
    if min_distance <= 0:
        m = min(n, max_corners)
        keep[:m] = True
        return keep
    cell = min_distance
    gw = int(width / cell) + 1
    gh = int(height / cell) + 1
    # per-cell lists stored as a fixed-capacity table
    cap = 16
    grid = np.full((gh, gw, cap), -1, dtype=np.int64)
    fill = np.zeros((gh, gw), dtype=np.int64)
    d2min = min_distance * min_distance
    taken = 0
    for i in range(n):
        if taken >= max_corners:
            break
        x = xy[i, 0]
        y = xy[i, 1]
        cx = int(x / cell)
        cy = int(y / cell)
        ok = True
        for yy in range(max(cy - 1, 0), min(cy + 2, gh)):
            if not ok:
                break
            for xx in range(max(cx - 1, 0), min(cx + 2, gw)):
                for k in range(fill[yy, xx]):
                    j = grid[yy, xx, k]
                    dx = xy[j, 0] - x
                    dy = xy[j, 1] - y
                    if dx * dx + dy * dy < d2min:
                        ok = False
                        break
                if not ok:
                    break
        if ok and fill[cy, cx] < cap:
            grid[cy, cx, fill[cy, cx]] = i
            fill[cy, cx] += 1
            keep[i] = True
            taken += 1
    return keep


def _subpixel(resp: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h, w = resp.shape
    c = resp[ys, xs].astype(np.float64)
    l = resp[ys, np.maximum(xs - 1, 0)]
    r = resp[ys, np.minimum(xs + 1, w - 1)]
    u = resp[np.maximum(ys - 1, 0), xs]
    d = resp[np.minimum(ys + 1, h - 1), xs]

    def offset(lo, hi):
        den = lo - 2.0 * c + hi
        with np.errstate(divide="ignore", invalid="ignore"):
            off = np.where(den < 0, 0.5 * (lo - hi) / den, 0.0)
        return np.clip(off, -0.5, 0.5)

    return np.clip(xs + offset(l, r), 0.0, w - 1.0), np.clip(ys + offset(u, d), 0.0, h - 1.0)


def detect_corners(
    g: GrayFrame,
    mask: ExclusionMask | None = None,
    max_corners: int = 1500,
    quality_level: float = 0.01,
    min_distance: float = 8.0,
    window: int = 5,
    grads=None,
) -> CornerSet:
    """Strongest minimum-eigenvalue corners, at least min_distance apart.

    Pixels inside any exclusion rect (grown by window // 2) score zero.
    Raises NoFeatures when nothing passes the quality threshold.
    """
    DetectorParams(max_corners, quality_level, min_distance, window)
    resp = min_eigen_response(g, window, grads)
    if mask is not None and mask.rects:
        _apply_mask(resp, mask, window // 2)
    peak = float(resp.max())
    if peak <= 0.0:
        raise NoFeatures("no corner response above zero")
    ys, xs = _candidates(resp, np.float32(quality_level * peak))
    if len(xs) == 0:
        raise NoFeatures("no pixel passed the quality threshold")
    vals = resp[ys, xs]
    order = np.argsort(-vals, kind="stable")
    ys, xs, vals = ys[order], xs[order], vals[order]
    fx, fy = _subpixel(resp, ys, xs)
    xy = np.ascontiguousarray(np.stack([fx, fy], axis=1))
    keep = _greedy_select(xy, max_corners, float(min_distance), float(g.width), float(g.height))
    return CornerSet(xy[keep], vals[keep].astype(np.float64))


def detect_with(g: GrayFrame, mask: ExclusionMask | None, params: DetectorParams, grads=None) -> CornerSet:
    return detect_corners(g, mask, params.max_corners, params.quality_level, params.min_distance, params.window, grads)
