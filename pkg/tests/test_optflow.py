import numpy as np
import pytest
from conftest import textured
from hypothesis import given, settings
from hypothesis import strategies as st

from skitraj.errors import InvalidParams
from skitraj.features import detect_corners
from skitraj.geometry import Point2
from skitraj.image import GrayFrame, build_pyramid
from skitraj.optflow import FlowParams, track_arrays, track_points


def shifted_pair(h, w, dx, dy, seed=0):
    """prev and next crops of one texture; content moves by (dx, dy)."""
    big = textured(h + 40, w + 40, seed=seed)
    prev = big[20 : 20 + h, 20 : 20 + w]
    nxt = big[20 - dy : 20 - dy + h, 20 - dx : 20 - dx + w]
    return build_pyramid(GrayFrame(prev), 3), build_pyramid(GrayFrame(nxt), 3)


def test_zero_motion():
    p, _ = shifted_pair(120, 160, 0, 0)
    pts = detect_corners(p.levels[0], max_corners=100).points
    dst, ok = track_arrays(p, p, pts)
    assert ok.all()
    assert np.abs(dst - pts).max() <= 0.01


def test_translation_7_minus_3():
    p, n = shifted_pair(240, 320, 7, -3, seed=1)
    pts = detect_corners(p.levels[0]).points
    # drop corners whose content or window leaves the frame after the shift
    half = FlowParams().window // 2
    to = pts + [7, -3]
    pts = pts[np.all((pts >= half) & (to >= half) & (pts < [320 - half, 240 - half]) & (to < [320 - half, 240 - half]), axis=1)]
    dst, ok = track_arrays(p, n, pts)
    assert ok.mean() >= 0.9
    err = np.hypot(*(dst[ok] - pts[ok] - [7, -3]).T)
    assert err.max() < 0.1


def test_fb_residual_on_translation():
    p, n = shifted_pair(200, 240, 3, 2, seed=2)
    pts = detect_corners(p.levels[0]).points
    fwd, ok = track_arrays(p, n, pts)
    back, ok2 = track_arrays(n, p, fwd[ok])
    assert np.median(np.hypot(*(back[ok2] - pts[ok][ok2]).T)) < 0.05


def test_textureless_point_invalid():
    a = np.full((100, 100), 0.5, np.float32)
    a[:10, :10] = textured(10, 10)
    p = build_pyramid(GrayFrame(a), 3)
    _, ok = track_arrays(p, p, np.array([[60.0, 60.0]]))
    assert not ok[0]


def test_output_order_matches_input():
    p, n = shifted_pair(160, 200, 2, 1, seed=3)
    pts = detect_corners(p.levels[0], max_corners=60).points
    rev = pts[::-1].copy()
    a, oka = track_arrays(p, n, pts)
    b, okb = track_arrays(p, n, rev)
    np.testing.assert_array_equal(a[::-1], b)
    np.testing.assert_array_equal(oka[::-1], okb)


def test_track_points_correspondences():
    p, n = shifted_pair(120, 160, 1, 1, seed=4)
    pts = [Point2(*q) for q in detect_corners(p.levels[0], max_corners=20).points]
    cs = track_points(p, n, pts)
    assert [c.src for c in cs] == pts
    assert all(c.valid for c in cs)


def test_size_mismatch():
    a = build_pyramid(GrayFrame(textured(40, 40)), 1)
    b = build_pyramid(GrayFrame(textured(40, 41)), 1)
    with pytest.raises(ValueError):
        track_arrays(a, b, np.array([[5.0, 5.0]]))


def test_params_validation():
    with pytest.raises(InvalidParams):
        FlowParams(window=4)
    with pytest.raises(InvalidParams):
        FlowParams(eps=0)


@settings(max_examples=12, deadline=None)
@given(dx=st.floats(-6, 6), dy=st.floats(-6, 6), seed=st.integers(0, 50))
def test_subpixel_translation(dx, dy, seed):
    # sub-pixel content shift by resampling a smooth texture
    from skitraj.image import sample_bilinear

    big = textured(200, 240, seed=seed, sigma=2.5)
    yy, xx = np.mgrid[20:180, 20:220].astype(float)
    prev = sample_bilinear(big, xx, yy).astype(np.float32)
    nxt = sample_bilinear(big, xx - dx, yy - dy).astype(np.float32)
    p, n = build_pyramid(GrayFrame(prev), 3), build_pyramid(GrayFrame(nxt), 3)
    pts = detect_corners(p.levels[0], max_corners=80).points
    inner = (pts[:, 0] > 12) & (pts[:, 0] < 188) & (pts[:, 1] > 12) & (pts[:, 1] < 148)
    dst, ok = track_arrays(p, n, pts[inner])
    assert ok.mean() > 0.8
    assert np.all((dst[ok] >= 0) & (dst[ok] <= [199, 159]))
    err = np.hypot(*(dst[ok] - pts[inner][ok] - [dx, dy]).T)
    assert np.median(err) < 0.1
