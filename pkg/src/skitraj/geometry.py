"""Projective geometry: homographies, normalized DLT and RANSAC."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .errors import DegenerateConfiguration, InvalidParams, NoConsensus, ParseError, PointAtInfinity

# |s| below this means the point left the projective chart
INFINITY_EPS = 1e-9
DET_EPS = 1e-12


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        x, y = float(self.x), float(self.y)
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValueError(f"non-finite point ({x}, {y})")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __iter__(self):
        yield self.x
        yield self.y

    def __getitem__(self, i):
        return (self.x, self.y)[i]


@dataclass(frozen=True)
class Correspondence:
    src: Point2
    dst: Point2
    valid: bool = True


def canonicalize(m) -> np.ndarray:
    """Scale a 3x3 matrix so m[2,2] == 1, or to unit Frobenius norm when m[2,2] ~ 0."""
    m = np.array(m, dtype=np.float64).reshape(3, 3)
    if not np.all(np.isfinite(m)):
        raise DegenerateConfiguration("homography has non-finite coefficients")
    if abs(m[2, 2]) > 1e-9:
        return m / m[2, 2]
    norm = np.linalg.norm(m)
    if norm == 0.0:
        raise DegenerateConfiguration("zero matrix is not a homography")
    m = m / norm
    # fix the sign so the representation is unique
    flat = m.ravel()
    if flat[np.argmax(np.abs(flat))] < 0:
        m = -m
    return m


class Homography:
    """Invertible 3x3 pixel-to-pixel projective map, stored in canonical scale."""

    __slots__ = ("m",)

    def __init__(self, m):
        m = canonicalize(m)
        if abs(np.linalg.det(m)) <= DET_EPS:
            raise DegenerateConfiguration("homography is singular")
        m.setflags(write=False)
        self.m = m

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, tx: float, ty: float) -> "Homography":
        return cls([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]])

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.m))

    def __matmul__(self, other: "Homography") -> "Homography":
        # (self @ other) applies other first
        return Homography(self.m @ other.m)

    def __eq__(self, other):
        return isinstance(other, Homography) and np.array_equal(self.m, other.m)

    def __hash__(self):
        return hash(self.m.tobytes())

    def __repr__(self):
        rows = ", ".join("[" + ", ".join(f"{v:.6g}" for v in r) + "]" for r in self.m)
        return f"Homography([{rows}])"

    def apply_array(self, pts) -> tuple[np.ndarray, np.ndarray]:
        """Map an (N, 2) array; returns (mapped, finite_mask).

        Rows whose homogeneous scale falls below the chart threshold come back
        as NaN with mask False.
        """
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        return _project(self.m, pts)

    def to_line(self) -> str:
        # shortest round-trip repr keeps file round-trips exact
        return " ".join(repr(float(v)) for v in self.m.ravel())

    @classmethod
    def from_line(cls, line: str) -> "Homography":
        vals = [float(v) for v in line.split()]
        if len(vals) != 9:
            raise ValueError(f"expected 9 coefficients, got {len(vals)}")
        return cls(vals)


def _project(m: np.ndarray, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    u = m[0, 0] * pts[:, 0] + m[0, 1] * pts[:, 1] + m[0, 2]
    v = m[1, 0] * pts[:, 0] + m[1, 1] * pts[:, 1] + m[1, 2]
    s = m[2, 0] * pts[:, 0] + m[2, 1] * pts[:, 1] + m[2, 2]
    ok = np.abs(s) >= INFINITY_EPS
    out = np.full(pts.shape, np.nan)
    out[ok, 0] = u[ok] / s[ok]
    out[ok, 1] = v[ok] / s[ok]
    return out, ok


def apply(h: Homography, p) -> Point2:
    x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError("point must be finite")
    m = h.m
    s = m[2, 0] * x + m[2, 1] * y + m[2, 2]
    if abs(s) < INFINITY_EPS:
        raise PointAtInfinity(f"({x}, {y}) maps to infinity")
    return Point2((m[0, 0] * x + m[0, 1] * y + m[0, 2]) / s, (m[1, 0] * x + m[1, 1] * y + m[1, 2]) / s)


# --- linear algebra kernels ---------------------------------------------------


@njit(cache=True)
def jacobi_eigh(a, max_sweeps=60):
    """Cyclic Jacobi eigen-decomposition of a symmetric matrix.

    Returns (eigenvalues ascending, eigenvectors as columns).
    """
    n = a.shape[0]
    a = a.copy()
    v = np.eye(n)
    total = 0.0
    for i in range(n):
        for j in range(n):
            total += a[i, j] * a[i, j]
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off += a[i, j] * a[i, j]
        if off <= 1e-32 * total or off == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    w = np.empty(n)
    for i in range(n):
        w[i] = a[i, i]
    order = np.argsort(w)
    return w[order], v[:, order]


@njit(cache=True)
def _hartley(pts):
    n = pts.shape[0]
    cx = 0.0
    cy = 0.0
    for i in range(n):
        cx += pts[i, 0]
        cy += pts[i, 1]
    cx /= n
    cy /= n
    d = 0.0
    for i in range(n):
        d += math.sqrt((pts[i, 0] - cx) ** 2 + (pts[i, 1] - cy) ** 2)
    d /= n
    t = np.eye(3)
    if d < 1e-12:
        return t, False
    s = math.sqrt(2.0) / d
    t[0, 0] = s
    t[1, 1] = s
    t[0, 2] = -s * cx
    t[1, 2] = -s * cy
    return t, True


@njit(cache=True)
def _spread_ok(pts, t):
    # second moment of the normalized points; collinear sets have a null direction
    sxx = 0.0
    syy = 0.0
    sxy = 0.0
    for i in range(pts.shape[0]):
        x = t[0, 0] * pts[i, 0] + t[0, 2]
        y = t[1, 1] * pts[i, 1] + t[1, 2]
        sxx += x * x
        syy += y * y
        sxy += x * y
    tr = sxx + syy
    det = sxx * syy - sxy * sxy
    return det > 1e-10 * tr * tr


@njit(cache=True)
def _inv3(m):
    a, b, c = m[0, 0], m[0, 1], m[0, 2]
    d, e, f = m[1, 0], m[1, 1], m[1, 2]
    g, h, i = m[2, 0], m[2, 1], m[2, 2]
    co00 = e * i - f * h
    co01 = -(d * i - f * g)
    co02 = d * h - e * g
    det = a * co00 + b * co01 + c * co02
    out = np.empty((3, 3))
    if det == 0.0:
        out[:, :] = np.nan
        return out, 0.0
    out[0, 0] = co00 / det
    out[1, 0] = co01 / det
    out[2, 0] = co02 / det
    out[0, 1] = -(b * i - c * h) / det
    out[1, 1] = (a * i - c * g) / det
    out[2, 1] = -(a * h - b * g) / det
    out[0, 2] = (b * f - c * e) / det
    out[1, 2] = -(a * f - c * d) / det
    out[2, 2] = (a * e - b * d) / det
    return out, det


@njit(cache=True)
def dlt_kernel(src, dst):
    """Normalized DLT. Returns (3x3 matrix, ok flag)."""
    n = src.shape[0]
    out = np.eye(3)
    if n < 4:
        return out, False
    t1, ok1 = _hartley(src)
    t2, ok2 = _hartley(dst)
    if not (ok1 and ok2):
        return out, False
    if not (_spread_ok(src, t1) and _spread_ok(dst, t2)):
        return out, False
    ata = np.zeros((9, 9))
    r = np.empty(9)
    for i in range(n):
        x = t1[0, 0] * src[i, 0] + t1[0, 2]
        y = t1[1, 1] * src[i, 1] + t1[1, 2]
        u = t2[0, 0] * dst[i, 0] + t2[0, 2]
        v = t2[1, 1] * dst[i, 1] + t2[1, 2]
        # row for u: [x y 1 0 0 0 -ux -uy -u]
        r[0] = x
        r[1] = y
        r[2] = 1.0
        r[3] = 0.0
        r[4] = 0.0
        r[5] = 0.0
        r[6] = -u * x
        r[7] = -u * y
        r[8] = -u
        for a in range(9):
            for b in range(9):
                ata[a, b] += r[a] * r[b]
        r[0] = 0.0
        r[1] = 0.0
        r[2] = 0.0
        r[3] = x
        r[4] = y
        r[5] = 1.0
        r[6] = -v * x
        r[7] = -v * y
        r[8] = -v
        for a in range(9):
            for b in range(9):
                ata[a, b] += r[a] * r[b]
    w, vecs = jacobi_eigh(ata)
    # a second (near-)null direction means the system is rank-deficient
    if w[1] <= 1e-12 * max(w[8], 1e-300):
        return out, False
    hn = np.empty((3, 3))
    for k in range(9):
        hn[k // 3, k % 3] = vecs[k, 0]
    t2inv, _ = _inv3(t2)
    h = t2inv @ hn @ t1
    if abs(h[2, 2]) > 1e-9:
        h = h / h[2, 2]
    else:
        h = h / math.sqrt(np.sum(h * h))
    _, det = _inv3(h)
    if not math.isfinite(det) or abs(det) <= DET_EPS:
        return out, False
    return h, True


@njit(cache=True)
def symmetric_transfer_error(m, src, dst):
    """Mean of forward and backward reprojection distances per match (inf at infinity)."""
    minv, det = _inv3(m)
    n = src.shape[0]
    err = np.empty(n)
    if det == 0.0:
        err[:] = np.inf
        return err
    for i in range(n):
        x = src[i, 0]
        y = src[i, 1]
        s = m[2, 0] * x + m[2, 1] * y + m[2, 2]
        u = dst[i, 0]
        v = dst[i, 1]
        s2 = minv[2, 0] * u + minv[2, 1] * v + minv[2, 2]
        if abs(s) < INFINITY_EPS or abs(s2) < INFINITY_EPS:
            err[i] = np.inf
            continue
        fx = (m[0, 0] * x + m[0, 1] * y + m[0, 2]) / s - u
        fy = (m[1, 0] * x + m[1, 1] * y + m[1, 2]) / s - v
        bx = (minv[0, 0] * u + minv[0, 1] * v + minv[0, 2]) / s2 - x
        by = (minv[1, 0] * u + minv[1, 1] * v + minv[1, 2]) / s2 - y
        err[i] = 0.5 * (math.sqrt(fx * fx + fy * fy) + math.sqrt(bx * bx + by * by))
    return err


# --- public estimation API ------------------------------------------------------


def _as_arrays(matches) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Accept a sequence of Correspondence or an (src, dst[, valid]) tuple of arrays."""
    if isinstance(matches, tuple) and len(matches) in (2, 3) and not isinstance(matches[0], Correspondence):
        src = np.asarray(matches[0], dtype=np.float64).reshape(-1, 2)
        dst = np.asarray(matches[1], dtype=np.float64).reshape(-1, 2)
        if len(matches) == 3:
            valid = np.asarray(matches[2], dtype=bool).reshape(-1)
        else:
            valid = np.ones(len(src), dtype=bool)
        if not (len(src) == len(dst) == len(valid)):
            raise ValueError("src, dst and valid must have equal length")
        return src, dst, valid
    matches = list(matches)
    src = np.array([[c.src.x, c.src.y] for c in matches], dtype=np.float64).reshape(-1, 2)
    dst = np.array([[c.dst.x, c.dst.y] for c in matches], dtype=np.float64).reshape(-1, 2)
    valid = np.array([bool(c.valid) for c in matches], dtype=bool)
    return src, dst, valid


def fit_dlt(matches) -> Homography:
    """Least-squares homography from >= 4 valid matches (normalized DLT)."""
    src, dst, valid = _as_arrays(matches)
    src = np.ascontiguousarray(src[valid])
    dst = np.ascontiguousarray(dst[valid])
    if len(src) < 4:
        raise DegenerateConfiguration(f"need at least 4 valid matches, got {len(src)}")
    if not (np.all(np.isfinite(src)) and np.all(np.isfinite(dst))):
        raise ValueError("matches must be finite")
    m, ok = dlt_kernel(src, dst)
    if not ok:
        raise DegenerateConfiguration("rank-deficient point configuration")
    return Homography(m)


@dataclass(frozen=True)
class RansacParams:
    max_iters: int = 2000
    inlier_thresh: float = 3.0
    confidence: float = 0.999
    seed: int = 0
    min_inliers: int = 30  # pipeline floor: thinner support falls back to identity

    def __post_init__(self):
        if self.min_inliers < 4:
            raise InvalidParams("min_inliers must be >= 4")
        if self.max_iters < 1:
            raise InvalidParams("max_iters must be >= 1")
        if self.inlier_thresh <= 0:
            raise InvalidParams("inlier_thresh must be positive")
        if not 0.0 < self.confidence < 1.0:
            raise InvalidParams("confidence must be in (0, 1)")


def adaptive_iterations(inlier_ratio: float, confidence: float = 0.999, sample_size: int = 4) -> float:
    """Iterations needed to draw one all-inlier sample with the given confidence."""
    p_good = inlier_ratio**sample_size
    if p_good >= 1.0:
        return 0.0
    if p_good <= 0.0:
        return math.inf
    return math.log(1.0 - confidence) / math.log(1.0 - p_good)


def ransac_homography(
    matches,
    max_iters: int = 2000,
    inlier_thresh: float = 3.0,
    seed: int = 0,
    confidence: float = 0.999,
) -> tuple[Homography, np.ndarray]:
    """Robust homography by random sample consensus.

    The inlier mask is aligned with the input matches; invalid matches are
    never inliers.
    """
    src_all, dst_all, valid = _as_arrays(matches)
    idx = np.flatnonzero(valid)
    n = len(idx)
    if n < 4:
        raise NoConsensus(f"only {n} valid matches")
    src = np.ascontiguousarray(src_all[idx])
    dst = np.ascontiguousarray(dst_all[idx])

    rng = np.random.default_rng(seed)
    best_count = 0
    best_cost = math.inf
    best_mask = None
    best_m = None
    bound = math.inf
    it = 0
    while it < max_iters and it < bound:
        it += 1
        sample = rng.choice(n, 4, replace=False)
        m, ok = dlt_kernel(src[sample], dst[sample])
        if not ok:
            continue
        err = symmetric_transfer_error(m, src, dst)
        mask = err <= inlier_thresh
        count = int(mask.sum())
        if count < best_count:
            continue
        cost = float(err[mask].sum())
        if count > best_count or cost < best_cost:
            best_count, best_cost, best_mask, best_m = count, cost, mask, m
            bound = adaptive_iterations(count / n, confidence)

    if best_mask is None or best_count < 4 or best_count < 0.1 * n:
        raise NoConsensus(f"best consensus {best_count} of {n} valid matches")

    # least-squares refit on the consensus set, repeated while the set changes;
    # a refit that sheds more than 5% of the consensus is rejected
    m, mask = best_m, best_mask
    for _ in range(5):
        m2, ok = dlt_kernel(np.ascontiguousarray(src[mask]), np.ascontiguousarray(dst[mask]))
        if not ok:
            break
        mask2 = symmetric_transfer_error(m2, src, dst) <= inlier_thresh
        if mask2.sum() < 0.95 * best_count:
            break
        m, same, mask = m2, np.array_equal(mask2, mask), mask2
        if same:
            break
    final_mask = mask
    mask_out = np.zeros(len(valid), dtype=bool)
    mask_out[idx] = final_mask
    return Homography(m), mask_out


# --- .homog files ----------------------------------------------------------------


def write_homographies(path, homographies: Iterable[Homography]) -> None:
    with open(path, "w") as fh:
        for h in homographies:
            fh.write(h.to_line() + "\n")


def read_homographies(path) -> list[Homography]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                out.append(Homography.from_line(line))
            except (ValueError, DegenerateConfiguration) as exc:
                raise ParseError(str(exc), line=lineno, path=Path(path)) from exc
    return out


def to_points(pts: Sequence) -> np.ndarray:
    """Coerce Point2 objects / pairs to an (N, 2) float array."""
    return np.array([[float(p[0]), float(p[1])] for p in pts], dtype=np.float64).reshape(-1, 2)
