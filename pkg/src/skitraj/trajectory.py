"""Anchor extraction and per-frame trajectory propagation, clipping and append."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bbox import BBox
from .errors import InvalidK, InvalidParams, OutOfBounds, ParseError
from .geometry import Homography, Point2

# anchors are clamped this far inside the right/bottom border so the
# 3-decimal record files never print a coordinate equal to the frame size
EDGE_MARGIN = 1e-3


def extract_anchor(b: BBox, k: float = 0.9) -> Point2:
    """Horizontal center of the box at fraction k of its height (0 = top)."""
    if not 0.0 <= k <= 1.0:
        raise InvalidK(f"k must be in [0, 1], got {k}")
    return Point2(b.x + 0.5 * b.w, b.y + k * b.h)


def clamp_to_frame(p: Point2, width: float, height: float) -> Point2:
    return Point2(
        min(max(p.x, 0.0), width - EDGE_MARGIN),
        min(max(p.y, 0.0), height - EDGE_MARGIN),
    )


def _in_frame(xy: np.ndarray, width: float, height: float) -> np.ndarray:
    return (xy[:, 0] >= 0) & (xy[:, 0] < width) & (xy[:, 1] >= 0) & (xy[:, 1] < height)


class Trajectory:
    """Retained anchor points, all expressed in the current frame.

    origins[i] is the frame where point i was created; xy[i] its position now.
    Instances are treated as immutable: every operation returns a new one.
    """

    __slots__ = ("origins", "xy", "frame_index", "frame_w", "frame_h")

    def __init__(self, origins, xy, frame_index: int, frame_w: float, frame_h: float):
        origins = np.asarray(origins, dtype=np.int64).reshape(-1)
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        if len(origins) != len(xy):
            raise ValueError("origins and xy differ in length")
        if len(origins):
            if np.any(np.diff(origins) <= 0):
                raise ValueError("origin frames must be strictly increasing")
            if origins[-1] > frame_index:
                raise ValueError("origin frame beyond current frame")
            if not (np.all(np.isfinite(xy)) and np.all(_in_frame(xy, frame_w, frame_h))):
                raise OutOfBounds(f"trajectory point outside [0, {frame_w}) x [0, {frame_h})")
        origins.setflags(write=False)
        xy.setflags(write=False)
        self.origins = origins
        self.xy = xy
        self.frame_index = int(frame_index)
        self.frame_w = frame_w
        self.frame_h = frame_h

    @classmethod
    def empty(cls, frame_w: float, frame_h: float, frame_index: int = 0) -> "Trajectory":
        return cls(np.zeros(0, np.int64), np.zeros((0, 2)), frame_index, frame_w, frame_h)

    def __len__(self):
        return len(self.origins)

    @property
    def points(self) -> list[tuple[int, Point2]]:
        return [(int(o), Point2(float(x), float(y))) for o, (x, y) in zip(self.origins, self.xy)]

    def __repr__(self):
        return f"Trajectory(frame={self.frame_index}, n={len(self)})"

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.frame_index == other.frame_index
            and np.array_equal(self.origins, other.origins)
            and np.array_equal(self.xy, other.xy)
        )


def propagate(traj: Trajectory, h: Homography, new_w: float | None = None, new_h: float | None = None) -> Trajectory:
    """Map every point through h and drop those leaving the new frame."""
    new_w = traj.frame_w if new_w is None else new_w
    new_h = traj.frame_h if new_h is None else new_h
    if len(traj):
        mapped, ok = h.apply_array(traj.xy)
        ok &= _in_frame(np.where(ok[:, None], mapped, -1.0), new_w, new_h)
        origins, xy = traj.origins[ok], mapped[ok]
    else:
        origins, xy = traj.origins, traj.xy
    return Trajectory(origins, xy, traj.frame_index + 1, new_w, new_h)


def append_current(traj: Trajectory, p: Point2) -> Trajectory:
    """Append p with origin = current frame index."""
    x, y = float(p[0]), float(p[1])
    if not (0.0 <= x < traj.frame_w and 0.0 <= y < traj.frame_h):
        raise OutOfBounds(f"anchor ({x}, {y}) outside the {traj.frame_w}x{traj.frame_h} frame")
    if len(traj) and traj.origins[-1] >= traj.frame_index:
        raise ValueError(f"frame {traj.frame_index} already has its anchor")
    return Trajectory(
        np.append(traj.origins, traj.frame_index),
        np.vstack([traj.xy, [[x, y]]]),
        traj.frame_index,
        traj.frame_w,
        traj.frame_h,
    )


def step(traj: Trajectory, h: Homography, box: BBox, k: float = 0.9) -> Trajectory:
    """One frame of the update: propagate, then append the clamped anchor of box."""
    nxt = propagate(traj, h)
    return append_current(nxt, clamp_to_frame(extract_anchor(box, k), nxt.frame_w, nxt.frame_h))


def start(box: BBox, frame_w: float, frame_h: float, k: float = 0.9) -> Trajectory:
    t0 = Trajectory.empty(frame_w, frame_h, 0)
    return append_current(t0, clamp_to_frame(extract_anchor(box, k), frame_w, frame_h))


# --- display smoothing -------------------------------------------------------------


def _sg_center_weights(half: int, order: int) -> np.ndarray:
    # least-squares polynomial fit over offsets -half..half, evaluated at 0
    offs = np.arange(-half, half + 1, dtype=np.float64)
    V = np.vander(offs, order + 1, increasing=True)
    return np.linalg.pinv(V)[0]


def smooth_for_render(traj, window: int = 9, poly_order: int = 2) -> list[Point2]:
    """Savitzky-Golay smoothing of x and y separately, for display only.

    Near the ends the window shrinks symmetrically (down to the point itself),
    and the polynomial order drops with it when needed.
    """
    if window < 1 or window % 2 == 0:
        raise InvalidParams("window must be a positive odd count")
    if poly_order < 0 or poly_order >= window:
        raise InvalidParams("poly_order must be in [0, window)")
    xy = traj.xy if isinstance(traj, Trajectory) else np.asarray([[p[0], p[1]] for p in traj], dtype=np.float64)
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    n = len(xy)
    if n < window:
        return [Point2(float(x), float(y)) for x, y in xy]
    out = np.empty_like(xy)
    half_full = window // 2
    cache: dict[int, np.ndarray] = {}
    for i in range(n):
        half = min(half_full, i, n - 1 - i)
        if half not in cache:
            cache[half] = _sg_center_weights(half, min(poly_order, 2 * half))
        out[i] = cache[half] @ xy[i - half : i + half + 1]
    return [Point2(float(x), float(y)) for x, y in out]


# --- record files --------------------------------------------------------------------

_TRIPLE = re.compile(r"^\(?\s*(-?\d+)\s*:\s*([^:()]+?)\s*:\s*([^:()]+?)\s*\)?$")


@dataclass(frozen=True)
class FrameRecord:
    """One line of a trajectory record file."""

    frame: int
    origins: np.ndarray
    xy: np.ndarray

    def __len__(self):
        return len(self.origins)


def to_record(traj: Trajectory) -> FrameRecord:
    return FrameRecord(traj.frame_index, np.asarray(traj.origins), np.asarray(traj.xy))


def format_record(traj) -> str:
    pts = ";".join(f"({int(o)}:{x:.3f}:{y:.3f})" for o, (x, y) in zip(traj.origins, traj.xy))
    return f"{traj.frame_index if isinstance(traj, Trajectory) else traj.frame}\t{pts}"


def format_record_json(traj) -> str:
    frame = traj.frame_index if isinstance(traj, Trajectory) else traj.frame
    pts = [{"origin": int(o), "x": round(float(x), 3), "y": round(float(y), 3)} for o, (x, y) in zip(traj.origins, traj.xy)]
    return json.dumps({"frame": frame, "points": pts}, separators=(",", ":"))


def parse_record(line: str, lineno: int = 0, path=None) -> FrameRecord:
    head, _, rest = line.rstrip("\n").partition("\t")
    if not _:
        head, _, rest = line.strip().partition(" ")
    try:
        frame = int(head)
    except ValueError:
        raise ParseError(f"bad frame index {head!r}", line=lineno, path=path) from None
    origins, xy = [], []
    rest = rest.strip()
    if rest:
        for item in rest.split(";"):
            m = _TRIPLE.match(item.strip())
            if not m:
                raise ParseError(f"bad point {item!r}", line=lineno, path=path)
            try:
                x, y = float(m.group(2)), float(m.group(3))
            except ValueError:
                raise ParseError(f"bad coordinate in {item!r}", line=lineno, path=path) from None
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ParseError(f"non-finite coordinate in {item!r}", line=lineno, path=path)
            origins.append(int(m.group(1)))
            xy.append((x, y))
    return FrameRecord(frame, np.asarray(origins, dtype=np.int64), np.asarray(xy, dtype=np.float64).reshape(-1, 2))


def write_records(path, trajs) -> None:
    with open(path, "w") as fh:
        for t in trajs:
            fh.write(format_record(t) + "\n")


def read_records(path) -> list[FrameRecord]:
    """Read a .traj (text) or .jsonl (structured) record file."""
    path = Path(path)
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            if path.suffix == ".jsonl":
                try:
                    obj = json.loads(line)
                    pts = obj["points"]
                    rec = FrameRecord(
                        int(obj["frame"]),
                        np.asarray([p["origin"] for p in pts], dtype=np.int64),
                        np.asarray([[p["x"], p["y"]] for p in pts], dtype=np.float64).reshape(-1, 2),
                    )
                except (ValueError, KeyError, TypeError) as exc:
                    raise ParseError(f"bad record: {exc}", line=lineno, path=path) from None
            else:
                rec = parse_record(line, lineno, path)
            out.append(rec)
    for i, rec in enumerate(out):
        if rec.frame != i:
            raise ParseError(f"expected frame {i}, found {rec.frame}", line=i + 1, path=path)
    return out
