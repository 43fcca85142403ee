"""Trajectory, homography, box and timing measures."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .bbox import BBox, iou
from .errors import EmptyTrajectory, FrameCountMismatch, LengthMismatch
from .geometry import Homography

SUCCESS_THRESHOLDS = np.round(np.arange(0.0, 1.0 + 1e-9, 0.05), 2)
CSV_COLUMNS = ["clip_id", "mppte", "dtw", "mse", "auc", "ms", "fps", "delta_t"]


# --- MPPTE -------------------------------------------------------------------------


def _frame_error(pred, ref, penalty: float | None) -> float | None:
    n_ref = len(ref.origins)
    if n_ref == 0:
        return None
    pos = {int(o): i for i, o in enumerate(pred.origins)}
    total = 0.0
    used = 0
    for o, (qx, qy) in zip(ref.origins, ref.xy):
        j = pos.get(int(o))
        if j is None:
            if penalty is None:
                continue
            total += penalty
        else:
            total += math.hypot(pred.xy[j, 0] - qx, pred.xy[j, 1] - qy)
        used += 1
    if used == 0:
        return None
    return total / used


def mppte_per_frame(pred, ref, frame_size=None, clipped: str = "diagonal") -> np.ndarray:
    """Per-frame mean distance between reference points and same-origin predictions.

    A reference point whose prediction was clipped costs the frame diagonal
    (clipped="diagonal") or is left out (clipped="skip"). Frames with nothing
    to compare are NaN.
    """
    if len(pred) != len(ref):
        raise FrameCountMismatch(f"{len(pred)} predicted frames vs {len(ref)} reference frames")
    if clipped not in ("diagonal", "skip"):
        raise ValueError("clipped must be 'diagonal' or 'skip'")
    penalty = None
    if clipped == "diagonal":
        if frame_size is None:
            raise ValueError("frame_size is needed for the diagonal penalty")
        penalty = math.hypot(*frame_size)
    out = np.full(len(ref), np.nan)
    for t, (p, r) in enumerate(zip(pred, ref)):
        v = _frame_error(p, r, penalty)
        if v is not None:
            out[t] = v
    return out


def mppte(pred, ref, frame_size=None, clipped: str = "diagonal") -> float:
    per = mppte_per_frame(pred, ref, frame_size, clipped)
    per = per[np.isfinite(per)]
    return float(per.mean()) if len(per) else 0.0


# --- DTW ---------------------------------------------------------------------------


@njit(cache=True)
def _dtw_cost(a, b):
    n = a.shape[0]
    m = b.shape[0]
    prev = np.full(m + 1, np.inf)
    cur = np.full(m + 1, np.inf)
    prev[0] = 0.0
    for i in range(1, n + 1):
        cur[0] = np.inf
        for j in range(1, m + 1):
            dx = a[i - 1, 0] - b[j - 1, 0]
            dy = a[i - 1, 1] - b[j - 1, 1]
            c = math.sqrt(dx * dx + dy * dy)
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = c + best
        prev, cur = cur, prev
    return prev[m]


def _xy(seq) -> np.ndarray:
    if hasattr(seq, "xy"):
        return np.ascontiguousarray(seq.xy, dtype=np.float64)
    return np.ascontiguousarray(np.asarray([[p[0], p[1]] for p in seq], dtype=np.float64).reshape(-1, 2))


def dtw(a, b) -> float:
    """Accumulated Euclidean cost of the optimal monotone alignment of a and b."""
    a, b = _xy(a), _xy(b)
    if len(a) == 0 or len(b) == 0:
        raise EmptyTrajectory("dtw needs two non-empty point sequences")
    return float(_dtw_cost(a, b))


def dtw_per_frame(pred, ref) -> np.ndarray:
    if len(pred) != len(ref):
        raise FrameCountMismatch(f"{len(pred)} predicted frames vs {len(ref)} reference frames")
    return np.array([dtw(p, r) for p, r in zip(pred, ref)], dtype=np.float64)


def dtw_clip(pred, ref) -> float:
    per = dtw_per_frame(pred, ref)
    return float(per.mean()) if len(per) else 0.0


# --- homographies ------------------------------------------------------------------


def homography_mse(h: Homography, h_ref: Homography) -> float:
    d = np.asarray(h.m) - np.asarray(h_ref.m)
    return float(np.sum(d * d) / 9.0)


def homography_mse_clip(hs, refs) -> float:
    if len(hs) != len(refs):
        raise LengthMismatch(f"{len(hs)} homographies vs {len(refs)} references")
    if not hs:
        return 0.0
    return float(np.mean([homography_mse(a, b) for a, b in zip(hs, refs)]))


# --- boxes -------------------------------------------------------------------------


def _ious(pred, gt) -> np.ndarray:
    if len(pred) != len(gt):
        raise LengthMismatch(f"{len(pred)} predicted boxes vs {len(gt)} ground-truth boxes")
    return np.array([iou(p, g) for p, g in zip(pred, gt)], dtype=np.float64)


def success_curve(pred, gt, thresholds=SUCCESS_THRESHOLDS) -> tuple[np.ndarray, np.ndarray]:
    """Fraction of frames whose IoU exceeds each threshold."""
    ov = _ious(pred, gt)
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if len(ov) == 0:
        return thresholds, np.zeros(len(thresholds))
    return thresholds, np.array([(ov > t).mean() for t in thresholds])


def success_auc(pred, gt) -> float:
    """Mean IoU in percent (the area under the success curve)."""
    ov = _ious(pred, gt)
    return float(ov.mean() * 100.0) if len(ov) else 0.0


# --- timing ------------------------------------------------------------------------


def timing(samples_ms, clip_duration: float) -> tuple[float, float, float]:
    """(mean ms per frame, fps, delay in seconds past the end of the clip)."""
    s = np.asarray(samples_ms, dtype=np.float64)
    if s.size == 0:
        raise ValueError("timing needs at least one sample")
    ms = float(s.mean())
    fps = 1000.0 / ms if ms > 0 else math.inf
    delta_t = max(0.0, float(s.sum()) / 1000.0 - clip_duration)
    return ms, fps, delta_t


# --- reports -----------------------------------------------------------------------


@dataclass
class ClipScore:
    clip_id: str
    mppte: float
    dtw: float
    mse: float = math.nan
    auc: float = math.nan
    ms: float = math.nan
    fps: float = math.nan
    delta_t: float = math.nan
    per_frame_mppte: np.ndarray | None = field(default=None, repr=False)
    per_frame_dtw: np.ndarray | None = field(default=None, repr=False)
    success: tuple | None = field(default=None, repr=False)
    mean_traj_len: float = math.nan


@dataclass
class EvalReport:
    clips: list[ClipScore]

    def _avg(self, name: str) -> float:
        vals = [getattr(c, name) for c in self.clips]
        vals = [v for v in vals if math.isfinite(v)]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def mppte(self):
        return self._avg("mppte")

    @property
    def dtw(self):
        return self._avg("dtw")

    @property
    def homography_mse(self):
        return self._avg("mse")

    @property
    def auc(self):
        return self._avg("auc")

    @property
    def mean_ms_per_frame(self):
        return self._avg("ms")

    @property
    def fps(self):
        ms = self.mean_ms_per_frame
        return 1000.0 / ms if ms > 0 else math.nan

    @property
    def delta_t(self):
        return self._avg("delta_t")

    def rows(self, with_timing: bool = True) -> list[list[str]]:
        def fmt(v):
            return "nan" if not math.isfinite(v) else f"{v:.6f}"

        out = []
        summary = ClipScore("ALL", self.mppte, self.dtw, self.homography_mse, self.auc,
                            self.mean_ms_per_frame, self.fps, self.delta_t)
        for c in [*self.clips, summary]:
            row = [c.clip_id, fmt(c.mppte), fmt(c.dtw), fmt(c.mse), fmt(c.auc)]
            row += [fmt(c.ms), fmt(c.fps), fmt(c.delta_t)] if with_timing else ["", "", ""]
            out.append(row)
        return out

    def write_csv(self, path, with_timing: bool = True) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            w.writerows(self.rows(with_timing))

    def text(self, with_timing: bool = True) -> str:
        head = f"{'clip':<16}{'MPPTE':>10}{'DTW':>10}{'MSE':>12}{'AUC':>8}"
        if with_timing:
            head += f"{'ms':>10}{'FPS':>8}{'dt[s]':>8}"
        lines = [head]
        summary = ClipScore("ALL", self.mppte, self.dtw, self.homography_mse, self.auc,
                            self.mean_ms_per_frame, self.fps, self.delta_t)
        for c in [*self.clips, summary]:
            line = f"{c.clip_id[:15]:<16}{c.mppte:>10.3f}{c.dtw:>10.2f}{c.mse:>12.3g}{c.auc:>8.1f}"
            if with_timing:
                line += f"{c.ms:>10.1f}{c.fps:>8.1f}{c.delta_t:>8.2f}"
            lines.append(line)
        return "\n".join(lines) + "\n"


def read_csv_report(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def score_clip(clip_id, pred_records, ref_records, frame_size, *, pred_h=None, ref_h=None,
               pred_boxes=None, gt_boxes=None, samples_ms=None, clip_duration=None,
               clipped: str = "diagonal") -> ClipScore:
    per_m = mppte_per_frame(pred_records, ref_records, frame_size, clipped)
    per_d = dtw_per_frame(pred_records, ref_records)
    fin = per_m[np.isfinite(per_m)]
    score = ClipScore(
        str(clip_id),
        float(fin.mean()) if len(fin) else 0.0,
        float(per_d.mean()) if len(per_d) else 0.0,
        per_frame_mppte=per_m,
        per_frame_dtw=per_d,
        mean_traj_len=float(np.mean([len(r.origins) for r in pred_records])) if pred_records else 0.0,
    )
    if pred_h is not None and ref_h is not None:
        score.mse = homography_mse_clip(pred_h, ref_h)
    if pred_boxes is not None and gt_boxes is not None:
        score.auc = success_auc(pred_boxes, gt_boxes)
        score.success = success_curve(pred_boxes, gt_boxes)
    if samples_ms is not None and len(samples_ms) and clip_duration is not None:
        score.ms, score.fps, score.delta_t = timing(samples_ms, clip_duration)
    return score


__all__ = [
    "BBox",
    "ClipScore",
    "EvalReport",
    "dtw",
    "dtw_clip",
    "dtw_per_frame",
    "homography_mse",
    "homography_mse_clip",
    "mppte",
    "mppte_per_frame",
    "read_csv_report",
    "score_clip",
    "success_auc",
    "success_curve",
    "timing",
]
