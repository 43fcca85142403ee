"""The streaming loop: tracker box, camera homography, trajectory update, per frame."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bbox import BBox
from .config import PipelineConfig
from .errors import DegenerateConfiguration, ImageTooSmall, MissingFrame, NoConsensus, NoFeatures
from .features import DetectorParams, ExclusionMask, detect_with
from .geometry import Homography, RansacParams, read_homographies, ransac_homography
from .image import FrameDirectory, GrayFrame, Pyramid, build_pyramid, sharpen, to_gray, write_frame
from .optflow import FlowParams, track_arrays
from .render import render_frame
from .tracker import MosseTracker, TrackFile
from .trajectory import format_record, format_record_json, start, step

log = logging.getLogger(__name__)


@dataclass
class CameraStep:
    h: Homography
    corners: int = 0
    valid_matches: int = 0
    inliers: int = 0
    fallback: str | None = None  # reason the identity was used
    ms: dict = field(default_factory=dict)


def estimate_camera(
    prev: Pyramid,
    cur: Pyramid,
    prev_mask: ExclusionMask,
    cur_mask: ExclusionMask,
    det: DetectorParams = DetectorParams(),
    flow: FlowParams = FlowParams(),
    ransac: RansacParams = RansacParams(),
) -> CameraStep:
    """Homography F_{t-1} -> F_t from corners tracked outside the excluded regions.

    Soft failures fall back to the identity and say why.
    """
    ms = {}
    t0 = time.perf_counter()
    try:
        grads = prev.level_gradients(0)
        corners = detect_with(prev.levels[0], prev_mask, det, grads=grads)
    except (NoFeatures, ImageTooSmall) as exc:
        ms["detect"] = 1000 * (time.perf_counter() - t0)
        return CameraStep(Homography.identity(), fallback=f"no_features: {exc}", ms=ms)
    t1 = time.perf_counter()
    ms["detect"] = 1000 * (t1 - t0)
    dst, ok = track_arrays(prev, cur, corners.points, flow)
    # key-points landing on the target or on graphics are not static scene
    ok &= np.isfinite(dst).all(axis=1)
    ok &= ~cur_mask.contains(np.where(ok[:, None], dst, -1.0))
    t2 = time.perf_counter()
    ms["flow"] = 1000 * (t2 - t1)
    step = CameraStep(Homography.identity(), corners=len(corners), valid_matches=int(ok.sum()), ms=ms)
    try:
        h, inl = ransac_homography(
            (corners.points, dst, ok), ransac.max_iters, ransac.inlier_thresh, ransac.seed, ransac.confidence
        )
        step.inliers = int(inl.sum())
        if step.inliers < ransac.min_inliers:
            step.fallback = f"weak_consensus: {step.inliers} inliers < {ransac.min_inliers}"
        else:
            step.h = h
    except (NoConsensus, DegenerateConfiguration) as exc:
        step.fallback = f"no_consensus: {exc}"
    ms["ransac"] = 1000 * (time.perf_counter() - t2)
    return step


def warmup(cfg: PipelineConfig) -> None:
    """Exercise the compiled kernels once on a tiny frame pair so timings exclude JIT loading."""
    rng = np.random.default_rng(0)
    a = rng.random((64, 64)).astype(np.float32)
    g0 = GrayFrame(a)
    g1 = GrayFrame(np.roll(a, 1, axis=1))
    p0, p1 = build_pyramid(g0, cfg.flow.pyramid_levels), build_pyramid(g1, cfg.flow.pyramid_levels)
    estimate_camera(p0, p1, ExclusionMask(), ExclusionMask(), cfg.detector, cfg.flow, cfg.ransac)


@dataclass
class RunResult:
    frames: int
    width: int
    height: int
    fallbacks: int
    low_confidence: int
    events: list
    geometry_ms: list
    total_ms: list
    out: Path


class _Writers:
    def __init__(self, out: Path):
        out.mkdir(parents=True, exist_ok=True)
        self.traj = open(out / "trajectory.traj", "w")
        self.jsonl = open(out / "trajectory.jsonl", "w")
        self.homog = open(out / "homographies.homog", "w")
        self.boxes = open(out / "boxes.csv", "w")
        self.meta = open(out / "meta.jsonl", "w")

    def emit(self, t: int, traj, box: BBox, h: Homography | None, meta: dict) -> None:
        self.traj.write(format_record(traj) + "\n")
        self.jsonl.write(format_record_json(traj) + "\n")
        if h is not None:
            self.homog.write(h.to_line() + "\n")
        self.boxes.write(f"{t},{box.x!r},{box.y!r},{box.w!r},{box.h!r}\n")
        self.meta.write(json.dumps(meta, sort_keys=True) + "\n")
        for fh in (self.traj, self.jsonl, self.homog, self.boxes, self.meta):
            fh.flush()

    def close(self):
        for fh in (self.traj, self.jsonl, self.homog, self.boxes, self.meta):
            fh.close()


def _gray(frame, cfg: PipelineConfig) -> GrayFrame:
    g = to_gray(frame)
    return sharpen(g) if cfg.sharpen and g.width >= 3 and g.height >= 3 else g


def run(cfg: PipelineConfig) -> RunResult:
    """Process the frame directory online; frame t + 1 is read only after record t is written."""
    cfg.check()
    out = Path(cfg.output)
    events: list = []
    frames = FrameDirectory(cfg.input, log=events)
    if len(frames) == 0:
        raise MissingFrame(f"no frames in {cfg.input}")
    homs = read_homographies(cfg.homfile) if cfg.homfile else None
    if homs is not None and len(homs) < len(frames) - 1:
        raise MissingFrame(f"{cfg.homfile}: {len(homs)} homographies for {len(frames)} frames")
    source = TrackFile(cfg.trackfile) if cfg.trackfile else MosseTracker(cfg.mosse)
    need_gray = homs is None or not cfg.trackfile
    need_pyr = homs is None
    # with both oracles and no rendering the pixels are never used
    need_pixels = need_gray or cfg.render
    if cfg.render:
        (out / "frames").mkdir(parents=True, exist_ok=True)

    if need_pyr:
        warmup(cfg)
    writers = _Writers(out)
    graphics = ExclusionMask(cfg.graphics)
    geometry_ms, total_ms = [], []
    fallbacks = low_conf = 0
    try:
        t_start = time.perf_counter()
        f0 = frames[0] if need_pixels else None
        W, H = (f0.width, f0.height) if need_pixels else frames.size(0)
        g0 = _gray(f0, cfg) if need_gray else None
        box = source.init(g0, cfg.init_box)
        traj = start(box, W, H, cfg.k)
        pyr = build_pyramid(g0, cfg.flow.pyramid_levels) if need_pyr else None
        total_ms.append(1000 * (time.perf_counter() - t_start))
        meta0 = {"frame": 0, "psr": None, "ms": {"total": round(total_ms[-1], 3)}}
        writers.emit(0, traj, box, None, meta0)
        events.append(("emit", 0))
        if cfg.render:
            write_frame(out / "frames" / f"{0:06d}.png", render_frame(f0, traj, box, cfg.style))

        for t in range(1, len(frames)):
            t_start = time.perf_counter()
            f = frames[t] if need_pixels else None
            fw, fh = (f.width, f.height) if need_pixels else frames.size(t)
            if (fw, fh) != (W, H):
                raise MissingFrame(f"{frames.path(t)}: size {fw}x{fh} differs from {W}x{H}")
            g = _gray(f, cfg) if need_gray else None
            prev_box = box
            t_trk = time.perf_counter()
            box, psr = source.update(g)
            ms = {"tracker": 1000 * (time.perf_counter() - t_trk)}
            meta = {"frame": t, "psr": None if psr is None else round(float(psr), 4)}
            if psr is not None and psr < cfg.mosse.psr_threshold:
                meta["low_confidence"] = True
                low_conf += 1

            if homs is not None:
                h = homs[t - 1]
                meta["camera"] = "file"
            else:
                t_geo = time.perf_counter()
                cur = build_pyramid(g, cfg.flow.pyramid_levels)
                ms["pyramid"] = 1000 * (time.perf_counter() - t_geo)
                cs = estimate_camera(
                    pyr,
                    cur,
                    ExclusionMask((prev_box,)) + graphics,
                    ExclusionMask((box,)) + graphics,
                    cfg.detector,
                    cfg.flow,
                    cfg.ransac,
                )
                ms.update(cs.ms)
                ms["geometry"] = sum(cs.ms.values())
                geometry_ms.append(ms["geometry"])
                h = cs.h
                pyr = cur
                meta.update(corners=cs.corners, valid_matches=cs.valid_matches, inliers=cs.inliers)
                meta["ransac_fallback"] = cs.fallback is not None
                if cs.fallback:
                    meta["fallback_reason"] = cs.fallback
                    fallbacks += 1
                    log.info("frame %d: identity camera (%s)", t, cs.fallback)

            traj = step(traj, h, box, cfg.k)
            total_ms.append(1000 * (time.perf_counter() - t_start))
            ms["total"] = total_ms[-1]
            meta["ms"] = {k: round(v, 3) for k, v in ms.items()}
            meta["points"] = len(traj)
            writers.emit(t, traj, box, h, meta)
            events.append(("emit", t))
            if cfg.render:
                write_frame(out / "frames" / f"{t:06d}.png", render_frame(f, traj, box, cfg.style))
    finally:
        writers.close()

    summary = {
        "frames": len(frames),
        "width": W,
        "height": H,
        "fps": cfg.fps,
        "k": cfg.k,
        "tracker": "trackfile" if cfg.trackfile else "mosse",
        "camera": "file" if homs is not None else "estimate",
        "ransac_fallbacks": fallbacks,
        "low_confidence_frames": low_conf,
        "mean_ms_per_frame": float(np.mean(total_ms)),
        "mean_geometry_ms": float(np.mean(geometry_ms)) if geometry_ms else None,
    }
    (out / "run.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return RunResult(len(frames), W, H, fallbacks, low_conf, events, geometry_ms, total_ms, out)
