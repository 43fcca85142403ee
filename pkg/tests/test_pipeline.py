import json

import numpy as np
import pytest

from skitraj.bbox import BBox
from skitraj.config import PipelineConfig, load_config
from skitraj.errors import ConfigError, MissingFrame
from skitraj.features import ExclusionMask
from skitraj.geometry import Homography, read_homographies
from skitraj.image import ColorFrame, GrayFrame, build_pyramid, write_frame
from skitraj.metrics import homography_mse_clip, mppte
from skitraj.pipeline import estimate_camera, run
from skitraj.synthgen import CameraSpec, SceneSpec, TargetSpec, generate, write_scene
from skitraj.tracker import write_track_file
from skitraj.trajectory import read_records

W, H = 320, 240


@pytest.fixture(scope="module")
def scene(tmp_path_factory):
    d = tmp_path_factory.mktemp("scene")
    spec = SceneSpec(width=W, height=H, frames=12, camera=CameraSpec((1.5, -0.5), 0.15, 1.001, 1e-5),
                     target=TargetSpec((30.0, 60.0), ((60.0, 180.0), (260.0, 150.0)), 3.0), seed=5)
    frames, gt = generate(spec)
    write_scene(d, spec, frames, gt, check_suitability=False)
    return d, spec, gt


def oracle_cfg(d, out, **kw):
    return PipelineConfig(d / "frames", out, tracker=f"trackfile:{d / 'gt_boxes.csv'}",
                          camera=f"homfile:{d / 'gt.homog'}", **kw)


def test_oracle_run_reproduces_reference(scene, tmp_path):
    d, spec, gt = scene
    res = run(oracle_cfg(d, tmp_path / "o", render=False))
    assert (tmp_path / "o" / "trajectory.traj").read_bytes() == (d / "reference.traj").read_bytes()
    assert mppte(read_records(tmp_path / "o" / "trajectory.jsonl"), read_records(d / "reference.traj"), (W, H)) < 1e-9
    assert read_homographies(tmp_path / "o" / "homographies.homog") == gt.homographies
    assert res.frames == 12 and res.fallbacks == 0


def test_estimated_run(scene, tmp_path):
    d, spec, gt = scene
    cfg = PipelineConfig(d / "frames", tmp_path / "e", tracker=f"trackfile:{d / 'gt_boxes.csv'}", render=True)
    res = run(cfg)
    out = tmp_path / "e"
    pred = read_records(out / "trajectory.traj")
    assert mppte(pred, read_records(d / "reference.traj"), (W, H)) < 2.0
    assert homography_mse_clip(read_homographies(out / "homographies.homog"), gt.homographies) < 1e-2
    assert len(list((out / "frames").glob("*.png"))) == 12
    meta = [json.loads(l) for l in (out / "meta.jsonl").read_text().splitlines()]
    assert [m["frame"] for m in meta] == list(range(12))
    for m in meta[1:]:
        assert m["ransac_fallback"] is False
        assert m["inliers"] >= cfg.ransac.min_inliers
        assert {"detect", "flow", "ransac", "geometry", "total"} <= set(m["ms"])
    summary = json.loads((out / "run.json").read_text())
    assert summary["frames"] == 12 and summary["camera"] == "estimate"
    assert len(res.geometry_ms) == 11


def test_online_discipline(scene, tmp_path):
    d, spec, gt = scene
    for cfg in (oracle_cfg(d, tmp_path / "a", render=False),
                PipelineConfig(d / "frames", tmp_path / "b", init_box=gt.boxes[0], render=False)):
        ev = run(cfg).events
        for t in range(11):
            # frame t+1 is opened only after record t went out
            assert ev.index(("emit", t)) < ev.index(("open", t + 1))
        assert [e for e in ev if e[0] == "open"] == [("open", t) for t in range(12)]


def test_records_flushed_before_next_frame(scene, tmp_path, monkeypatch):
    d, spec, gt = scene
    import skitraj.image as image

    seen = []
    orig = image.FrameDirectory.__getitem__

    def spy(self, i):
        p = tmp_path / "f" / "trajectory.traj"
        seen.append((i, len(p.read_text().splitlines()) if p.exists() else 0))
        return orig(self, i)

    monkeypatch.setattr(image.FrameDirectory, "__getitem__", spy)
    run(PipelineConfig(d / "frames", tmp_path / "f", tracker=f"trackfile:{d / 'gt_boxes.csv'}", render=False))
    assert seen[1:] == [(i, i) for i in range(1, 12)]


def test_missing_frame_names_path(scene, tmp_path):
    d, spec, gt = scene
    frames = tmp_path / "frames"
    frames.mkdir()
    for p in sorted((d / "frames").iterdir()):
        if p.name != "000005.png":
            (frames / p.name).write_bytes(p.read_bytes())
    with pytest.raises(MissingFrame, match="000005.png"):
        run(PipelineConfig(frames, tmp_path / "o", tracker=f"trackfile:{d / 'gt_boxes.csv'}", render=False))
    # records for frames before the gap were already written
    assert len((tmp_path / "o" / "trajectory.traj").read_text().splitlines()) == 5


def _fuzz_scene(tmp_path, arrays):
    fr = tmp_path / "frames"
    fr.mkdir()
    for i, a in enumerate(arrays):
        write_frame(fr / f"{i:06d}.png", ColorFrame(np.repeat(a[:, :, None], 3, axis=2)))
    h, w = arrays[0].shape
    boxes = [BBox(0, 0, w, h)] * len(arrays)
    write_track_file(tmp_path / "boxes.csv", boxes)
    return fr


@pytest.mark.parametrize("kind", ["constant", "noise", "single_pixel"])
def test_degenerate_frames_do_not_crash(tmp_path, kind):
    rng = np.random.default_rng(0)
    if kind == "constant":
        arrays = [np.full((48, 64), 128, np.uint8)] * 4
    elif kind == "noise":
        arrays = [rng.integers(0, 256, (48, 64), dtype=np.uint8) for _ in range(4)]
    else:
        arrays = [np.full((1, 1), 200, np.uint8)] * 4
    fr = _fuzz_scene(tmp_path, arrays)
    res = run(PipelineConfig(fr, tmp_path / "o", tracker=f"trackfile:{tmp_path / 'boxes.csv'}", render=False))
    assert res.frames == 4
    meta = [json.loads(l) for l in (tmp_path / "o" / "meta.jsonl").read_text().splitlines()]
    if kind != "noise":
        assert all(m["ransac_fallback"] and m["fallback_reason"] for m in meta[1:])
    assert len(read_records(tmp_path / "o" / "trajectory.traj")) == 4


def test_mosse_pipeline_on_constant_frames(tmp_path):
    fr = _fuzz_scene(tmp_path, [np.full((48, 64), 90, np.uint8)] * 3)
    res = run(PipelineConfig(fr, tmp_path / "o", init_box=BBox(10, 10, 20, 20), render=False))
    assert res.fallbacks == 2 and res.low_confidence == 2


def test_estimate_camera_weak_consensus():
    rng = np.random.default_rng(0)
    a = np.full((120, 160), 0.5, np.float32)
    # a handful of isolated dots: too few matches to trust a homography
    for _ in range(6):
        y, x = rng.integers(10, 110), rng.integers(10, 150)
        a[y - 1 : y + 2, x - 1 : x + 2] = 0.9
    p = build_pyramid(GrayFrame(a), 3)
    step = estimate_camera(p, p, ExclusionMask(), ExclusionMask())
    assert step.h == Homography.identity()
    assert step.fallback.startswith(("weak_consensus", "no_consensus"))


def test_graphics_and_target_excluded(scene):
    d, spec, gt = scene
    from skitraj.synthgen import generate as gen

    frames, _ = gen(spec)
    p0 = build_pyramid(GrayFrame(frames.gray(0)), 3)
    p1 = build_pyramid(GrayFrame(frames.gray(1)), 3)
    full = estimate_camera(p0, p1, ExclusionMask(), ExclusionMask())
    half = ExclusionMask((BBox(0, 0, W / 2, H),))
    masked = estimate_camera(p0, p1, half, half)
    assert masked.corners < full.corners


def test_config_file(scene, tmp_path):
    d, spec, gt = scene
    ini = tmp_path / "run.ini"
    ini.write_text(f"[run]\ninput = {d / 'frames'}\noutput = out\ninit_box = 1,2,30,40\nk = 0.5\n"
                   "graphics = 0,0,50,20; 10,200,80,30\n\n[ransac]\nseed = 4\nmin_inliers = 12\n\n[render]\nsmooth = true\n")
    cfg = load_config(ini)
    assert cfg.output == tmp_path / "out"
    assert cfg.init_box == BBox(1, 2, 30, 40) and cfg.k == 0.5
    assert len(cfg.graphics) == 2
    assert cfg.ransac.seed == 4 and cfg.ransac.min_inliers == 12 and cfg.style.smooth
    over = load_config(ini, {"render": "false"})
    assert over.render is False


@pytest.mark.parametrize("body", [
    "[run]\ninput = {frames}\noutput = o\n",  # mosse without init_box
    "[run]\ninput = {frames}\noutput = o\ninit_box = 1,2,3\n",
    "[run]\ninput = {frames}\noutput = o\ntracker = trackfile:nope.csv\n",
    "[run]\ninput = {frames}\noutput = o\ninit_box = 1,2,30,40\nk = 2\n",
    "[run]\ninput = {frames}\noutput = o\ninit_box = 1,2,30,40\nspeed = 3\n",
    "[run]\ninput = {frames}\noutput = o\ninit_box = 1,2,30,40\n[flow]\nwindow = 4\n",
    "[run]\ninput = /no/such/dir\noutput = o\ninit_box = 1,2,30,40\n",
    "[other]\nx = 1\n",
])
def test_config_errors(scene, tmp_path, body):
    d, spec, gt = scene
    ini = tmp_path / "bad.ini"
    ini.write_text(body.format(frames=d / "frames"))
    with pytest.raises(ConfigError):
        load_config(ini)
