import numpy as np
import pytest
from conftest import random_homography
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import savgol_filter

from skitraj.bbox import BBox
from skitraj.errors import InvalidK, InvalidParams, OutOfBounds, ParseError
from skitraj.geometry import Homography, Point2
from skitraj.image import GrayFrame
from skitraj.trajectory import (
    EDGE_MARGIN,
    Trajectory,
    append_current,
    clamp_to_frame,
    extract_anchor,
    format_record,
    format_record_json,
    parse_record,
    propagate,
    read_records,
    smooth_for_render,
    start,
    step,
    write_records,
)

W, H = 1280, 720


def test_anchor_examples():
    assert extract_anchor(BBox(100, 200, 50, 100), 0.9) == Point2(125, 290)
    assert extract_anchor(BBox(0, 0, 10, 10), 0.0) == Point2(5, 0)
    assert extract_anchor(BBox(0, 0, 10, 10), 0.5) == Point2(5, 5)
    with pytest.raises(InvalidK):
        extract_anchor(BBox(0, 0, 10, 10), 1.5)


def test_identity_propagation_keeps_points():
    t = append_current(Trajectory.empty(W, H), Point2(10, 20))
    p = propagate(t, Homography.identity())
    np.testing.assert_array_equal(p.xy, t.xy)
    assert p.frame_index == 1


def test_big_translation_empties():
    t = start(BBox(600, 300, 40, 80), W, H)
    assert len(propagate(t, Homography.translation(-2000, 0))) == 0


def test_bootstrap_two_points():
    b0, b1 = BBox(100, 100, 40, 80), BBox(120, 110, 40, 80)
    h1 = Homography.translation(-5, 2)
    t0 = start(b0, W, H)
    t1 = step(t0, h1, b1)
    assert list(t1.origins) == [0, 1]
    p0 = extract_anchor(b0)
    np.testing.assert_allclose(t1.xy[0], [p0.x - 5, p0.y + 2])
    np.testing.assert_allclose(t1.xy[1], list(extract_anchor(b1)))


def test_append_counting():
    t = append_current(Trajectory.empty(W, H), Point2(5, 5))
    assert len(t) == 1
    for _ in range(10):
        t = append_current(propagate(t, Homography.identity()), Point2(5, 5))
    assert len(t) == 11
    assert list(t.origins) == list(range(11))


def test_append_rules():
    t = append_current(Trajectory.empty(W, H), Point2(5, 5))
    with pytest.raises(ValueError):
        append_current(t, Point2(6, 6))
    with pytest.raises(OutOfBounds):
        append_current(Trajectory.empty(W, H), Point2(W, 5))
    with pytest.raises(OutOfBounds):
        Trajectory([0], [[-0.1, 3.0]], 0, W, H)


def test_anchor_clamped_into_frame():
    # box hanging off the bottom right: anchor lands just inside the half-open frame
    t = start(BBox(1270, 700, 40, 80), W, H)
    assert t.xy[0, 0] < W and t.xy[0, 1] < H
    assert t.xy[0, 1] == H - EDGE_MARGIN
    assert float(format_record(t).split(":")[-1].rstrip(")")) < H
    assert clamp_to_frame(Point2(-3, -4), W, H) == Point2(0, 0)


def test_identity_chain_reproduces_anchor_list():
    anchors = [BBox(100 + 3 * i, 200, 40, 80) for i in range(12)]
    t = start(anchors[0], W, H)
    for b in anchors[1:]:
        t = step(t, Homography.identity(), b)
    np.testing.assert_array_equal(t.xy, [list(extract_anchor(b)) for b in anchors])


def test_clipped_points_never_reappear():
    rng = np.random.default_rng(0)
    t = start(BBox(600, 300, 40, 80), W, H)
    seen_dropped = set()
    for i in range(1, 60):
        # alternate pushing content out and pulling it back
        h = Homography.translation(150.0 if (i // 5) % 2 == 0 else -150.0, rng.uniform(-5, 5))
        before = set(t.origins.tolist())
        t = step(t, h, BBox(600, 300, 40, 80))
        after = set(t.origins.tolist())
        seen_dropped |= before - after
        assert not (seen_dropped & after)
        assert len(t) <= len(before) + 1
    assert seen_dropped


def test_smoothing_examples():
    line = [Point2(2.0 * i, 3.0 + 0.5 * i) for i in range(20)]
    out = smooth_for_render(line, 9, 2)
    np.testing.assert_allclose([list(p) for p in out], [list(p) for p in line], atol=1e-9)
    short = [Point2(1, 2), Point2(3, 1), Point2(7, 7)]
    assert smooth_for_render(short, 5, 2) == short
    with pytest.raises(InvalidParams):
        smooth_for_render(line, 8, 2)


def test_smoothing_interior_matches_scipy():
    rng = np.random.default_rng(3)
    xy = rng.normal(size=(40, 2)).cumsum(axis=0)
    got = np.array([list(p) for p in smooth_for_render(xy, 9, 2)])
    ref = savgol_filter(xy, 9, 2, axis=0)
    np.testing.assert_allclose(got[4:-4], ref[4:-4], atol=1e-9)


def test_smoothing_edges_match_polyfit():
    rng = np.random.default_rng(4)
    xy = rng.normal(size=(15, 2)).cumsum(axis=0)
    got = np.array([list(p) for p in smooth_for_render(xy, 9, 2)])
    for i, half in [(1, 1), (2, 2), (13, 1)]:
        # symmetric shrunken window, fit evaluated at its center
        seg = xy[i - half : i + half + 1]
        u = np.arange(-half, half + 1)
        for d in range(2):
            c = np.polyfit(u, seg[:, d], min(2, 2 * half))
            assert got[i, d] == pytest.approx(np.polyval(c, 0.0), abs=1e-9)
    np.testing.assert_array_equal(got[0], xy[0])
    np.testing.assert_array_equal(got[-1], xy[-1])


def test_smoothing_reduces_noise():
    rng = np.random.default_rng(5)
    t = np.arange(200)
    clean = 100 + 40 * np.sin(t / 15.0)
    noisy = clean + rng.normal(0, 2.0, len(t))
    pts = np.stack([t.astype(float), noisy], axis=1)
    sm = np.array([p.y for p in smooth_for_render(pts, 9, 2)])
    rms = lambda v: np.sqrt(np.mean((v - clean) ** 2))
    assert rms(sm) <= 0.6 * rms(noisy)


def test_smoothing_is_display_only():
    t = start(BBox(100, 100, 40, 80), W, H)
    for i in range(12):
        t = step(t, Homography.translation(1, 0), BBox(100 + 2 * i, 100, 40, 80))
    before = t.xy.copy()
    smooth_for_render(t)
    np.testing.assert_array_equal(t.xy, before)


def test_record_round_trip(tmp_path):
    t = start(BBox(100, 100, 40, 80), W, H)
    trajs = [t]
    for i in range(5):
        t = step(t, Homography.translation(-3.3333, 1.25), BBox(100 + i, 100, 40, 80))
        trajs.append(t)
    write_records(tmp_path / "a.traj", trajs)
    (tmp_path / "a.jsonl").write_text("".join(format_record_json(x) + "\n" for x in trajs))
    for name in ("a.traj", "a.jsonl"):
        recs = read_records(tmp_path / name)
        assert [r.frame for r in recs] == list(range(6))
        for r, x in zip(recs, trajs):
            np.testing.assert_array_equal(r.origins, x.origins)
            np.testing.assert_allclose(r.xy, x.xy, atol=5e-4)
    assert format_record(recs[3]) == format_record(trajs[3])


def test_record_format():
    t = Trajectory([0, 2], [[1.0, 2.5], [3.25, 4.0]], 2, W, H)
    assert format_record(t) == "2\t(0:1.000:2.500);(2:3.250:4.000)"
    assert format_record(Trajectory.empty(W, H, 4)) == "4\t"


def test_record_parse_errors(tmp_path):
    with pytest.raises(ParseError):
        parse_record("x\t(0:1:2)")
    with pytest.raises(ParseError):
        parse_record("0\t(0:1)")
    p = tmp_path / "gap.traj"
    p.write_text("0\t(0:1.0:2.0)\n2\t(0:1.0:2.0)\n")
    with pytest.raises(ParseError) as ei:
        read_records(p)
    assert ei.value.line == 2


def test_mosse_anchor_gap():
    # anchors from a MOSSE box stay within a few pixels of the true anchors
    from skitraj.synthgen import SceneSpec, TargetSpec, generate
    from skitraj.tracker import MosseTracker

    spec = SceneSpec(width=480, height=360, frames=60, target=TargetSpec(path=((80.0, 150.0), (400.0, 300.0)), speed=3.0))
    frames, gt = generate(spec)
    tr = MosseTracker()
    tr.init(GrayFrame(frames.gray(0)), gt.boxes[0])
    gaps = []
    for t in range(1, 60):
        box, _ = tr.update(GrayFrame(frames.gray(t)))
        a, b = extract_anchor(box), extract_anchor(gt.boxes[t])
        gaps.append(np.hypot(a.x - b.x, a.y - b.y))
    assert np.mean(gaps) <= 6.0


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_composition(seed):
    rng = np.random.default_rng(seed)
    h1, h2 = random_homography(rng, cx=W / 2, cy=H / 2), random_homography(rng, cx=W / 2, cy=H / 2)
    xy = rng.uniform([0, 0], [W, H], size=(20, 2))
    t = Trajectory(np.arange(20), xy, 19, W, H)
    two = propagate(propagate(t, h1), h2)
    one = propagate(t, h2 @ h1)
    common, i, j = np.intersect1d(two.origins, one.origins, return_indices=True)
    np.testing.assert_allclose(two.xy[i], one.xy[j], atol=1e-6)
    # bounds hold after every operation
    for x in (two, one):
        assert np.all((x.xy >= 0) & (x.xy < [W, H]))
