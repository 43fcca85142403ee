"""Directory-level evaluation: find clips, score them, write the report and figures."""

from __future__ import annotations

import json
from pathlib import Path

from .errors import LengthMismatch, MissingFrame
from .geometry import read_homographies
from .image import FrameDirectory
from .metrics import EvalReport, score_clip
from .tracker import read_track_file
from .trajectory import read_records

PRED_NAMES = ("trajectory.traj", "trajectory.jsonl", "reference.traj")
REF_NAMES = ("reference.traj", "trajectory.traj", "trajectory.jsonl")


def _first(d: Path, names) -> Path | None:
    for n in names:
        if (d / n).is_file():
            return d / n
    return None


def find_clips(root, names) -> dict[str, Path]:
    """A directory holding records is one clip; otherwise each such subdirectory is."""
    root = Path(root)
    if not root.is_dir():
        raise MissingFrame(f"directory not found: {root}")
    if _first(root, names):
        return {root.name: root}
    clips = {p.name: p for p in sorted(root.iterdir()) if p.is_dir() and _first(p, names)}
    if not clips:
        raise MissingFrame(f"no trajectory records under {root}")
    return clips


def _json(p: Path) -> dict:
    return json.loads(p.read_text()) if p.is_file() else {}


def _frame_info(pred: Path, ref: Path) -> tuple[tuple[int, int] | None, float]:
    size, fps = None, 30.0
    for d in (ref, pred):
        for name in ("scene.json", "run.json"):
            info = _json(d / name)
            if "width" in info and size is None:
                size = (int(info["width"]), int(info["height"]))
            if "fps" in info:
                fps = float(info["fps"])
                break
    if size is None and (ref / "frames").is_dir():
        fd = FrameDirectory(ref / "frames")
        if len(fd):
            f = fd[0]
            size = (f.width, f.height)
    return size, fps


def _samples(d: Path) -> list[float] | None:
    p = d / "meta.jsonl"
    if not p.is_file():
        return None
    out = []
    for line in p.read_text().splitlines():
        if line.strip():
            ms = json.loads(line).get("ms", {})
            if "total" in ms:
                out.append(float(ms["total"]))
    return out or None


def evaluate_clip(clip_id: str, pred: Path, ref: Path, clipped: str = "diagonal"):
    pred_rec = read_records(_first(pred, PRED_NAMES))
    ref_rec = read_records(_first(ref, REF_NAMES))
    size, fps = _frame_info(pred, ref)
    ph = _first(pred, ("homographies.homog", "gt.homog"))
    rh = _first(ref, ("gt.homog", "homographies.homog"))
    pb = _first(pred, ("boxes.csv", "gt_boxes.csv"))
    gb = _first(ref, ("gt_boxes.csv", "boxes.csv"))

    def boxes(p):
        d = read_track_file(p)
        return [d[i] for i in sorted(d)]

    samples = _samples(pred)
    return score_clip(
        clip_id,
        pred_rec,
        ref_rec,
        size,
        pred_h=read_homographies(ph) if ph and rh else None,
        ref_h=read_homographies(rh) if ph and rh else None,
        pred_boxes=boxes(pb) if pb and gb else None,
        gt_boxes=boxes(gb) if pb and gb else None,
        samples_ms=samples,
        clip_duration=len(ref_rec) / fps,
        clipped=clipped,
    )


def evaluate_dirs(pred_root, ref_root, clipped: str = "diagonal") -> EvalReport:
    pred = find_clips(pred_root, PRED_NAMES)
    ref = find_clips(ref_root, REF_NAMES)
    if len(pred) == 1 and len(ref) == 1:
        (pid, pdir), (rid, rdir) = next(iter(pred.items())), next(iter(ref.items()))
        return EvalReport([evaluate_clip(rid, pdir, rdir, clipped)])
    if set(pred) != set(ref):
        raise LengthMismatch(
            f"clip sets differ: {len(pred)} predicted vs {len(ref)} reference "
            f"(only predicted: {sorted(set(pred) - set(ref))}, only reference: {sorted(set(ref) - set(pred))})"
        )
    return EvalReport([evaluate_clip(c, pred[c], ref[c], clipped) for c in sorted(ref)])


def write_report(report: EvalReport, out_csv, with_timing: bool = True, figures: bool = True) -> list[Path]:
    """CSV at out_csv, plus report.txt and PNG figures next to it."""
    out_csv = Path(out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    report.write_csv(out_csv, with_timing)
    stem = out_csv.with_suffix("")
    txt = stem.with_name(stem.name + ".txt")
    txt.write_text(report.text(with_timing))
    written = [out_csv, txt]
    if figures:
        from .plots import error_curves, success_plot

        for fn, suffix in ((success_plot, "_success.png"), (error_curves, "_errors.png")):
            p = fn(report, stem.with_name(stem.name + suffix))
            if p is not None:
                written.append(p)
    return written
