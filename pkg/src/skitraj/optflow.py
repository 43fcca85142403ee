"""Pyramidal Lucas-Kanade sparse optical flow with a forward-backward gate."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, uintp

from .errors import InvalidParams
from .geometry import Correspondence, Point2
from .image import Pyramid

MIN_EIG_THRESH = 1e-4


@dataclass(frozen=True)
class FlowParams:
    window: int = 21
    pyramid_levels: int = 3
    max_iters: int = 30
    eps: float = 0.01
    fb_thresh: float = 1.0

    def __post_init__(self):
        if self.window < 5 or self.window % 2 == 0:
            raise InvalidParams("window must be odd and >= 5")
        if self.max_iters < 1:
            raise InvalidParams("max_iters must be >= 1")
        if self.eps <= 0:
            raise InvalidParams("eps must be positive")
        if self.pyramid_levels < 1:
            raise InvalidParams("pyramid_levels must be >= 1")


@njit(cache=True, fastmath=True)
def _sample_patch(A, x0, y0, w00, w01, w10, w11, half, out):
    h, w = A.shape
    win = 2 * half + 1
    if x0 - half >= 0 and y0 - half >= 0 and x0 + half + 1 < w and y0 + half + 1 < h:
        # unsigned indices skip numba's negative-index wraparound so the row loop vectorizes
        xs = uintp(x0 - half)
        one = uintp(1)
        for r in range(win):
            ya = uintp(y0 - half + r)
            ra = A[ya]
            rb = A[ya + one]
            base = uintp(r * win)
            for j in range(uintp(win)):
                out[base + j] = w00 * ra[xs + j] + w01 * ra[xs + j + one] + w10 * rb[xs + j] + w11 * rb[xs + j + one]
        return
    for r in range(win):
        ya = min(max(y0 - half + r, 0), h - 1)
        yb = min(max(y0 - half + r + 1, 0), h - 1)
        for j in range(win):
            xa = min(max(x0 - half + j, 0), w - 1)
            xb = min(max(x0 - half + j + 1, 0), w - 1)
            out[r * win + j] = w00 * A[ya, xa] + w01 * A[ya, xb] + w10 * A[yb, xa] + w11 * A[yb, xb]


@njit(cache=True, fastmath=True)
def _mismatch(J, x1, y1, v00, v01, v10, v11, half, pI, pX, pY, pJ):
    # image mismatch vector sum((I - J) * grad I) over the window
    h, w = J.shape
    win = 2 * half + 1
    if x1 - half >= 0 and y1 - half >= 0 and x1 + half + 1 < w and y1 + half + 1 < h:
        # sample J and reduce in one pass
        xs = uintp(x1 - half)
        one = uintp(1)
        ex = np.float32(0.0)
        ey = np.float32(0.0)
        for r in range(win):
            ya = uintp(y1 - half + r)
            ra = J[ya]
            rb = J[ya + one]
            base = uintp(r * win)
            for j in range(uintp(win)):
                v = v00 * ra[xs + j] + v01 * ra[xs + j + one] + v10 * rb[xs + j] + v11 * rb[xs + j + one]
                diff = pI[base + j] - v
                ex += diff * pX[base + j]
                ey += diff * pY[base + j]
        return ex, ey
    _sample_patch(J, x1, y1, v00, v01, v10, v11, half, pJ)
    ex = np.float32(0.0)
    ey = np.float32(0.0)
    for k in range(uintp(pJ.shape[0])):
        diff = pI[k] - pJ[k]
        ex += diff * pX[k]
        ey += diff * pY[k]
    return ex, ey


@njit(cache=True, fastmath=True)
def _lk_level(I, Ix, Iy, J, pts, guess, status, half, max_iters, eps, check_eig, min_eig):
    """One pyramid level of iterative LK for every live point.

    pts are feature positions in I at this level, guess the displacement
    carried down from coarser levels. Returns the refined displacement.
    """
    h, w = I.shape
    n = pts.shape[0]
    win = 2 * half + 1
    area = win * win
    pI = np.empty(area, dtype=np.float32)
    pX = np.empty(area, dtype=np.float32)
    pY = np.empty(area, dtype=np.float32)
    pJ = np.empty(area, dtype=np.float32)
    out = guess.copy()
    eps2 = eps * eps
    for i in range(n):
        if not status[i]:
            continue
        px = pts[i, 0]
        py = pts[i, 1]
        if px < 0.0 or py < 0.0 or px >= w or py >= h:
            status[i] = False
            continue
        x0 = int(math.floor(px))
        y0 = int(math.floor(py))
        ax = np.float32(px - x0)
        ay = np.float32(py - y0)
        one = np.float32(1.0)
        w00 = (one - ax) * (one - ay)
        w01 = ax * (one - ay)
        w10 = (one - ax) * ay
        w11 = ax * ay
        _sample_patch(I, x0, y0, w00, w01, w10, w11, half, pI)
        _sample_patch(Ix, x0, y0, w00, w01, w10, w11, half, pX)
        _sample_patch(Iy, x0, y0, w00, w01, w10, w11, half, pY)
        gxx = 0.0
        gxy = 0.0
        gyy = 0.0
        for k in range(uintp(area)):
            gxx += pX[k] * pX[k]
            gxy += pX[k] * pY[k]
            gyy += pY[k] * pY[k]
        det = gxx * gyy - gxy * gxy
        lam = (gxx + gyy - math.sqrt((gxx - gyy) ** 2 + 4.0 * gxy * gxy)) / (2.0 * area)
        if check_eig and lam <= min_eig:
            status[i] = False
            continue
        if det <= 1e-12 * (gxx + gyy + 1e-30) ** 2 or det <= 0.0:
            if check_eig:
                status[i] = False
            continue
        dx = guess[i, 0]
        dy = guess[i, 1]
        for _ in range(max_iters):
            qx = px + dx
            qy = py + dy
            if qx < 0.0 or qy < 0.0 or qx >= w or qy >= h:
                status[i] = False
                break
            x1 = int(math.floor(qx))
            y1 = int(math.floor(qy))
            bx_ = np.float32(qx - x1)
            by_ = np.float32(qy - y1)
            ex, ey = _mismatch(
                J, x1, y1, (one - bx_) * (one - by_), bx_ * (one - by_), (one - bx_) * by_, bx_ * by_,
                half, pI, pX, pY, pJ,
            )
            sx = (gyy * ex - gxy * ey) / det
            sy = (gxx * ey - gxy * ex) / det
            dx += sx
            dy += sy
            if sx * sx + sy * sy < eps2:
                break
        if status[i]:
            qx = px + dx
            qy = py + dy
            if qx < 0.0 or qy < 0.0 or qx >= w or qy >= h:
                status[i] = False
        out[i, 0] = dx
        out[i, 1] = dy
    return out


def _track(prev: Pyramid, nxt: Pyramid, pts: np.ndarray, params: FlowParams, status: np.ndarray) -> np.ndarray:
    n_levels = min(params.pyramid_levels, len(prev), len(nxt))
    half = params.window // 2
    disp = np.zeros_like(pts)
    for lev in range(n_levels - 1, -1, -1):
        I = prev.levels[lev].data
        J = nxt.levels[lev].data
        if I.shape != J.shape:
            raise ValueError("pyramids differ in shape")
        Ix, Iy = prev.level_gradients(lev)
        scale = 0.5**lev
        disp = _lk_level(
            I, Ix, Iy, J, np.ascontiguousarray(pts * scale), disp, status,
            half, params.max_iters, params.eps, lev == 0, MIN_EIG_THRESH,
        )
        if lev > 0:
            disp = disp * 2.0
    return pts + disp


def track_arrays(prev: Pyramid, nxt: Pyramid, pts, params: FlowParams = FlowParams()) -> tuple[np.ndarray, np.ndarray]:
    """Track (N, 2) points from prev into nxt; returns (positions, valid)."""
    pts = np.ascontiguousarray(np.asarray(pts, dtype=np.float64).reshape(-1, 2))
    if len(pts) == 0:
        return pts.copy(), np.zeros(0, dtype=bool)
    if prev.levels[0].data.shape != nxt.levels[0].data.shape:
        raise ValueError("frames must have identical dimensions")
    # visit points in raster order of 16-px bands for cache locality
    order = np.lexsort((pts[:, 0], np.floor(pts[:, 1] / 16.0)))
    sp = np.ascontiguousarray(pts[order])
    status = np.ones(len(sp), dtype=np.bool_)
    fwd = _track(prev, nxt, sp, params, status)
    live = np.flatnonzero(status)
    if len(live):
        back_status = np.ones(len(live), dtype=np.bool_)
        back = _track(nxt, prev, np.ascontiguousarray(fwd[live]), params, back_status)
        err = np.hypot(back[:, 0] - sp[live, 0], back[:, 1] - sp[live, 1])
        status[live] = back_status & (err <= params.fb_thresh)
    out = np.empty_like(fwd)
    ok = np.empty_like(status)
    out[order] = fwd
    ok[order] = status
    return out, ok


def track_points(prev: Pyramid, nxt: Pyramid, pts, params: FlowParams = FlowParams()) -> list[Correspondence]:
    """Correspondences for each input point, in input order."""
    src = np.asarray([[float(p[0]), float(p[1])] for p in pts], dtype=np.float64).reshape(-1, 2)
    dst, valid = track_arrays(prev, nxt, src, params)
    out = []
    for (sx, sy), (dx, dy), ok in zip(src, dst, valid):
        ok = bool(ok) and math.isfinite(dx) and math.isfinite(dy)
        out.append(Correspondence(Point2(sx, sy), Point2(dx, dy) if ok else Point2(sx, sy), ok))
    return out
