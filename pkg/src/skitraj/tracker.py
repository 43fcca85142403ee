"""Target tracking: MOSSE correlation filter and a track-file box source."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Protocol

import numpy as np

from .bbox import BBox
from .errors import BoxOutOfBounds, MissingFrame, ParseError
from .image import GrayFrame, sample_bilinear

__all__ = [
    "BBox",
    "MosseConfig",
    "TrackerState",
    "tracker_init",
    "tracker_update",
    "MosseTracker",
    "TrackFile",
    "track_source_from_file",
    "read_track_file",
    "write_track_file",
]


class BoxSource(Protocol):
    """Anything that yields one box per frame, in stream order."""

    def init(self, frame: GrayFrame, box: BBox | None) -> BBox: ...

    def update(self, frame: GrayFrame) -> tuple[BBox, float | None]: ...


@dataclass(frozen=True)
class MosseConfig:
    template_size: int = 64
    learning_rate: float = 0.125
    reg: float = 1e-5
    n_perturb: int = 8
    padding: float = 1.0
    psr_threshold: float = 5.0
    seed: int = 0

    def __post_init__(self):
        t = self.template_size
        if t < 8 or t & (t - 1):
            raise ValueError("template_size must be a power of two >= 8")
        if not 0.0 < self.learning_rate < 1.0:
            raise ValueError("learning_rate must be in (0, 1)")

    @property
    def sigma(self) -> float:
        return self.template_size / 16.0


@dataclass
class TrackerState:
    A: np.ndarray
    B: np.ndarray
    template_size: int
    learning_rate: float
    last_box: BBox
    psr: float
    cfg: MosseConfig
    frame_size: tuple[int, int]  # (width, height)
    window: np.ndarray
    target: np.ndarray  # FFT of the desired response

    @property
    def low_confidence(self) -> bool:
        return self.psr < self.cfg.psr_threshold


def _cosine_window(n: int) -> np.ndarray:
    w = np.hanning(n)
    return np.outer(w, w)


def _gaussian_target(n: int, sigma: float) -> np.ndarray:
    c = n // 2
    yy, xx = np.mgrid[0:n, 0:n]
    return np.exp(-((xx - c) ** 2 + (yy - c) ** 2) / (2.0 * sigma**2))


def _crop(img: np.ndarray, box: BBox, n: int, padding: float, affine: np.ndarray | None = None) -> np.ndarray:
    """Resample the (padded) box region onto an n x n grid centered on the box center."""
    cx, cy = box.center
    sx = box.w * padding / n
    sy = box.h * padding / n
    off = np.arange(n) - n // 2
    ox, oy = np.meshgrid(off * sx, off * sy)
    if affine is not None:
        ox, oy = affine[0, 0] * ox + affine[0, 1] * oy, affine[1, 0] * ox + affine[1, 1] * oy
    return sample_bilinear(img, cx + ox, cy + oy)


def _preprocess(patch: np.ndarray, window: np.ndarray) -> np.ndarray:
    # log transform on the 8-bit intensity scale, then normalize
    p = np.log1p(patch * 255.0)
    p = (p - p.mean()) / (p.std() + 1e-5)
    return p * window


def _psr(resp: np.ndarray, py: int, px: int, exclude: int = 5) -> float:
    n = resp.shape[0]
    mask = np.ones_like(resp, dtype=bool)
    rows = np.arange(py - exclude, py + exclude + 1) % n
    cols = np.arange(px - exclude, px + exclude + 1) % n
    mask[np.ix_(rows, cols)] = False
    side = resp[mask]
    std = side.std()
    if std <= 0:
        return 0.0
    return max(0.0, float((resp[py, px] - side.mean()) / std))


def _parabolic(lo: float, c: float, hi: float) -> float:
    den = lo - 2.0 * c + hi
    if den >= 0:
        return 0.0
    return float(np.clip(0.5 * (lo - hi) / den, -0.5, 0.5))


def _validate_box(g: GrayFrame, b0) -> BBox:
    vals = b0.as_tuple() if isinstance(b0, BBox) else tuple(float(v) for v in b0)
    x, y, w, h = vals
    if not all(math.isfinite(v) for v in vals) or w <= 0 or h <= 0:
        raise BoxOutOfBounds(f"box {vals} has no area")
    if w * h < 16:
        raise BoxOutOfBounds(f"box {vals} is smaller than 16 px^2")
    tol = 1e-6
    if x < -tol or y < -tol or x + w > g.width + tol or y + h > g.height + tol:
        raise BoxOutOfBounds(f"box {vals} exceeds the {g.width}x{g.height} frame")
    return BBox(x, y, w, h)


def tracker_init(g: GrayFrame, b0, cfg: MosseConfig = MosseConfig()) -> TrackerState:
    """Train the initial filter on random affine perturbations of the target patch."""
    box = _validate_box(g, b0)
    n = cfg.template_size
    window = _cosine_window(n)
    target = np.fft.fft2(_gaussian_target(n, cfg.sigma))
    rng = np.random.default_rng(cfg.seed)
    A = np.zeros((n, n), dtype=np.complex128)
    B = np.zeros((n, n), dtype=np.complex128)
    for _ in range(cfg.n_perturb):
        ang = rng.uniform(-0.1, 0.1)
        sc = rng.uniform(0.95, 1.05, size=2)
        rot = np.array([[math.cos(ang), -math.sin(ang)], [math.sin(ang), math.cos(ang)]])
        aff = rot @ np.diag(sc)
        F = np.fft.fft2(_preprocess(_crop(g.data, box, n, cfg.padding, aff), window))
        A += target * np.conj(F)
        B += F * np.conj(F)
    state = TrackerState(A, B, n, cfg.learning_rate, box, 0.0, cfg, (g.width, g.height), window, target)
    resp = _response(state, g.data, box)
    py, px = np.unravel_index(np.argmax(resp), resp.shape)
    state.psr = _psr(resp, py, px)
    return state


def _response(state: TrackerState, img: np.ndarray, box: BBox) -> np.ndarray:
    F = np.fft.fft2(_preprocess(_crop(img, box, state.template_size, state.cfg.padding), state.window))
    H = state.A / (state.B + state.cfg.reg)
    return np.real(np.fft.ifft2(H * F))


def tracker_update(state: TrackerState, g: GrayFrame) -> tuple[BBox, float]:
    """Locate the target in g, adapt the filter, return (box, psr).

    Box size never changes; the box is shifted back inside the frame when the
    peak would push it out.
    """
    n = state.template_size
    box = state.last_box
    resp = _response(state, g.data, box)
    py, px = np.unravel_index(np.argmax(resp), resp.shape)
    psr = _psr(resp, py, px)
    ox = _parabolic(resp[py, (px - 1) % n], resp[py, px], resp[py, (px + 1) % n])
    oy = _parabolic(resp[(py - 1) % n, px], resp[py, px], resp[(py + 1) % n, px])
    if not np.isfinite(resp).all() or np.ptp(resp) <= 1e-12:
        # flat response (e.g. a featureless frame): stay put
        dx = dy = 0.0
    else:
        # the desired response peaks at the template center
        dx = px + ox - n // 2
        dy = py + oy - n // 2
    dx *= box.w * state.cfg.padding / n
    dy *= box.h * state.cfg.padding / n
    w, h = state.frame_size
    new_box = replace(box, x=box.x + dx, y=box.y + dy).clamp_into(w, h)

    F = np.fft.fft2(_preprocess(_crop(g.data, new_box, n, state.cfg.padding), state.window))
    eta = state.learning_rate
    state.A = (1 - eta) * state.A + eta * state.target * np.conj(F)
    state.B = (1 - eta) * state.B + eta * F * np.conj(F)
    state.last_box = new_box
    state.psr = psr
    return new_box, psr


class MosseTracker:
    def __init__(self, cfg: MosseConfig = MosseConfig()):
        self.cfg = cfg
        self.state: TrackerState | None = None

    def init(self, frame: GrayFrame, box: BBox | None) -> BBox:
        if box is None:
            raise BoxOutOfBounds("MOSSE needs an initial box")
        self.state = tracker_init(frame, box, self.cfg)
        return self.state.last_box

    def update(self, frame: GrayFrame) -> tuple[BBox, float | None]:
        if self.state is None:
            raise RuntimeError("tracker not initialized")
        return tracker_update(self.state, frame)


# --- track files ----------------------------------------------------------------


def read_track_file(path) -> dict[int, BBox]:
    """Parse `frame_index,x,y,w,h` lines; `#` starts a comment."""
    boxes: dict[int, BBox] = {}
    path = Path(path)
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 5:
                raise ParseError(f"expected 5 comma-separated fields, got {len(parts)}", line=lineno, path=path)
            try:
                idx = int(parts[0])
                box = BBox(*(float(v) for v in parts[1:]))
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno, path=path) from exc
            if idx < 0:
                raise ParseError("negative frame index", line=lineno, path=path)
            if idx in boxes:
                raise ParseError(f"duplicate frame index {idx}", line=lineno, path=path)
            boxes[idx] = box
    return boxes


def write_track_file(path, boxes) -> None:
    """boxes: iterable of BBox (indexed from 0) or mapping index -> BBox."""
    items = sorted(boxes.items()) if isinstance(boxes, dict) else enumerate(boxes)
    with open(path, "w") as fh:
        for i, b in items:
            fh.write(f"{i},{b.x!r},{b.y!r},{b.w!r},{b.h!r}\n")


class TrackFile:
    """Per-frame boxes read from a track file, behind the same contract as MosseTracker."""

    def __init__(self, path):
        self.path = Path(path)
        self.boxes = read_track_file(self.path)
        self.t = -1

    def __len__(self):
        return len(self.boxes)

    def box(self, index: int) -> BBox:
        try:
            return self.boxes[index]
        except KeyError:
            raise MissingFrame(f"{self.path}: no box for frame {index}") from None

    def init(self, frame: GrayFrame, box: BBox | None = None) -> BBox:
        self.t = 0
        return self.box(0)

    def update(self, frame: GrayFrame) -> tuple[BBox, float | None]:
        self.t += 1
        return self.box(self.t), None


def track_source_from_file(path) -> TrackFile:
    return TrackFile(path)
