import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skitraj.bbox import BBox
from skitraj.image import ColorFrame, write_frame
from skitraj.render import RenderStyle, copy_frames, render_frame
from skitraj.trajectory import Trajectory

W, H = 60, 40
THIN = RenderStyle(line_width=1, point_radius=0, draw_box=False)


def blank(v=0):
    return ColorFrame(np.full((H, W, 3), v, np.uint8))


def changed_rows(a, b):
    return sorted(set(np.nonzero(np.any(a.data != b.data, axis=2))[0].tolist()))


def test_empty_trajectory():
    f = blank(30)
    out = render_frame(f, Trajectory.empty(W, H), None)
    np.testing.assert_array_equal(out.data, f.data)
    out = render_frame(f, Trajectory.empty(W, H), BBox(10, 10, 20, 15))
    # only the box outline changes
    diff = np.any(out.data != f.data, axis=2)
    assert diff.any()
    assert not diff[14:22, 14:26].any()


def test_horizontal_line_on_integer_row():
    f = blank()
    t = Trajectory([0, 1], [[5.0, 10.0], [40.0, 10.0]], 1, W, H)
    out = render_frame(f, t, None, THIN)
    assert changed_rows(f, out) == [10]
    np.testing.assert_array_equal(out.data[10, 5:41], np.tile(THIN.line_color, (36, 1)))
    assert not np.any(out.data[10, :5]) and not np.any(out.data[10, 42:])


def test_horizontal_line_subpixel_band():
    f = blank()
    t = Trajectory([0, 1], [[5.0, 10.3], [40.0, 10.3]], 1, W, H)
    assert set(changed_rows(f, render_frame(f, t, None, THIN))) <= {9, 10, 11}


def test_hide_points_in_box():
    f = blank()
    box = BBox(10, 10, 20, 20)
    t = Trajectory([0, 1, 2], [[12.0, 12.0], [20.0, 20.0], [25.0, 15.0]], 2, W, H)
    style = RenderStyle(hide_points_in_box=True)
    out = render_frame(f, t, box, style)
    box_only = render_frame(f, Trajectory.empty(W, H), box, style)
    np.testing.assert_array_equal(out.data, box_only.data)


def test_render_is_pure():
    f = blank(100)
    before = f.data.copy()
    t = Trajectory([0, 1], [[5.0, 5.0], [30.0, 30.0]], 1, W, H)
    a = render_frame(f, t, BBox(1, 1, 10, 10))
    b = render_frame(f, t, BBox(1, 1, 10, 10))
    np.testing.assert_array_equal(f.data, before)
    np.testing.assert_array_equal(a.data, b.data)


def test_smoothing_style_changes_only_drawing():
    f = blank()
    rng = np.random.default_rng(0)
    xy = np.stack([np.linspace(5, 55, 20), 20 + rng.normal(0, 3, 20)], axis=1)
    t = Trajectory(np.arange(20), xy, 19, W, H)
    a = render_frame(f, t, None, RenderStyle(smooth=True))
    b = render_frame(f, t, None, RenderStyle(smooth=False))
    assert not np.array_equal(a.data, b.data)
    np.testing.assert_array_equal(t.xy, xy)


def test_style_validation():
    with pytest.raises(ValueError):
        RenderStyle(line_width=0.5)


def test_copy_frames(tmp_path):
    src = tmp_path / "in"
    src.mkdir()
    for i in range(3):
        write_frame(src / f"{i:06d}.png", blank(i))
    (src / "notes.txt").write_text("x")
    assert copy_frames(src, tmp_path / "out") == 3
    assert (tmp_path / "out" / "000002.png").read_bytes() == (src / "000002.png").read_bytes()


@settings(max_examples=30, deadline=None)
@given(x0=st.floats(0, W - 1), y0=st.floats(0, H - 1), x1=st.floats(0, W - 1), y1=st.floats(0, H - 1))
def test_drawing_stays_near_segment(x0, y0, x1, y1):
    f = blank()
    t = Trajectory([0, 1], [[x0, y0], [x1, y1]], 1, W, H)
    out = render_frame(f, t, None, THIN)
    ys, xs = np.nonzero(np.any(out.data != 0, axis=2))
    p, q = np.array([x0, y0]), np.array([x1, y1])
    d = q - p
    L2 = max(d @ d, 1e-12)
    for x, y in zip(xs, ys):
        s = np.clip(((x - x0) * d[0] + (y - y0) * d[1]) / L2, 0, 1)
        assert np.hypot(x - (x0 + s * d[0]), y - (y0 + s * d[1])) < 1.0
