"""Synthetic scenes with exactly known camera motion, target boxes and reference trajectories."""

from __future__ import annotations

import configparser
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numba import njit
from scipy.ndimage import gaussian_filter

from .bbox import BBox
from .errors import InvalidSpec, LengthMismatch, NoFeatures
from .features import detect_corners
from .geometry import Homography, write_homographies
from .image import FRAME_RE, ColorFrame, GrayFrame, sample_bilinear, to_gray, write_frame
from .tracker import write_track_file
from .trajectory import Trajectory, start, step, write_records

SUITABLE_CORNERS = 800
CANVAS_FACTOR = 3


@dataclass(frozen=True)
class TextureSpec:
    blob_count: int = 400
    blob_scale: float = 12.0
    noise_sigma: float = 0.08
    contrast: float = 1.0


@dataclass(frozen=True)
class CameraSpec:
    translation: tuple[float, float] = (0.0, 0.0)  # camera pan, px/frame
    rotation: float = 0.0  # deg/frame about the image center
    zoom: float = 1.0  # scale factor/frame about the image center
    perspective: float = 0.0  # jitter amplitude for h31, h32


@dataclass(frozen=True)
class TargetSpec:
    size: tuple[float, float] = (40.0, 80.0)  # w, h in image pixels
    path: tuple[tuple[float, float], ...] = ()  # anchor waypoints in frame-0 pixels
    speed: float = 0.0  # px/frame along the path
    intensity: float = 1.0


@dataclass(frozen=True)
class SceneSpec:
    width: int = 1280
    height: int = 720
    frames: int = 100
    texture: TextureSpec = field(default_factory=TextureSpec)
    camera: CameraSpec = field(default_factory=CameraSpec)
    target: TargetSpec = field(default_factory=TargetSpec)
    graphics: tuple[BBox, ...] = ()  # static overlays in image space
    seed: int = 0
    k: float = 0.9
    fps: float = 30.0

    def validate(self) -> None:
        if self.frames < 2:
            raise InvalidSpec("a scene needs at least 2 frames")
        if self.width < 32 or self.height < 32:
            raise InvalidSpec("frame size must be at least 32x32")
        tx = self.texture
        if not 0.0 < tx.contrast <= 1.0:
            raise InvalidSpec("contrast must be in (0, 1]")
        if tx.blob_count < 0 or tx.blob_scale <= 0 or tx.noise_sigma < 0:
            raise InvalidSpec("texture parameters out of range")
        c = self.camera
        vals = [*c.translation, c.rotation, c.zoom, c.perspective, self.target.speed, *self.target.size]
        if not all(math.isfinite(v) for v in vals):
            raise InvalidSpec("motion magnitudes must be finite")
        if c.zoom <= 0:
            raise InvalidSpec("zoom must be positive")
        if self.target.size[0] <= 0 or self.target.size[1] <= 0:
            raise InvalidSpec("target size must be positive")
        if not 0.0 <= self.k <= 1.0:
            raise InvalidSpec("k must be in [0, 1]")
        if self.fps <= 0:
            raise InvalidSpec("fps must be positive")


@dataclass
class GroundTruth:
    homographies: list[Homography]  # frame t-1 -> frame t, length frames - 1
    boxes: list[BBox]
    reference: list[Trajectory]
    cumulative: list[Homography]  # canvas -> frame t
    anchors_world: np.ndarray  # (T, 2) canvas coordinates


# --- canvas and camera -----------------------------------------------------------


def _canvas(spec: SceneSpec) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    t = spec.texture
    H, W = CANVAS_FACTOR * spec.height, CANVAS_FACTOR * spec.width
    c = np.zeros((H, W), dtype=np.float64)
    # band-limited noise scaled to unit std
    noise = gaussian_filter(rng.standard_normal((H, W)), 1.5)
    noise /= noise.std() + 1e-12
    c += t.noise_sigma * noise
    for _ in range(t.blob_count):
        s = t.blob_scale * rng.uniform(0.5, 1.5)
        amp = rng.choice([-1.0, 1.0]) * rng.uniform(0.1, 0.3)
        cx, cy = rng.uniform(0, W), rng.uniform(0, H)
        r = int(math.ceil(3 * s))
        x0, x1 = max(int(cx) - r, 0), min(int(cx) + r + 1, W)
        y0, y1 = max(int(cy) - r, 0), min(int(cy) + r + 1, H)
        if x1 <= x0 or y1 <= y0:
            continue
        yy, xx = np.mgrid[y0:y1, x0:x1]
        c[y0:y1, x0:x1] += amp * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * s * s))
    c = 0.5 + t.contrast * c
    return np.clip(c, 0.0, 1.0).astype(np.float32)


def _about_center(m: np.ndarray, cx: float, cy: float) -> np.ndarray:
    T = np.array([[1, 0, cx], [0, 1, cy], [0, 0, 1]], dtype=np.float64)
    Ti = np.array([[1, 0, -cx], [0, 1, -cy], [0, 0, 1]], dtype=np.float64)
    return T @ m @ Ti


def camera_motions(spec: SceneSpec) -> list[Homography]:
    """Per-frame image motion: frame t-1 pixel coordinates -> frame t."""
    c = spec.camera
    rng = np.random.default_rng([spec.seed, 1])
    cx, cy = spec.width / 2.0, spec.height / 2.0
    th = math.radians(c.rotation)
    sim = np.array(
        [[c.zoom * math.cos(th), -c.zoom * math.sin(th), 0.0], [c.zoom * math.sin(th), c.zoom * math.cos(th), 0.0], [0, 0, 1]]
    )
    # panning the camera by (tx, ty) moves the image content by (-tx, -ty)
    pan = np.array([[1, 0, -c.translation[0]], [0, 1, -c.translation[1]], [0, 0, 1]], dtype=np.float64)
    base = _about_center(sim, cx, cy) @ pan

    def jitter():
        # bounded perspective state, re-drawn every frame so it never accumulates
        m = np.eye(3)
        if c.perspective > 0:
            m[2, 0], m[2, 1] = rng.uniform(-0.5, 0.5, size=2) * c.perspective
        return _about_center(m, cx, cy)

    out = []
    prev = jitter()
    for _ in range(spec.frames - 1):
        cur = jitter()
        out.append(Homography(cur @ base @ np.linalg.inv(prev)))
        prev = cur
    return out


def _path_positions(spec: SceneSpec) -> np.ndarray:
    """Anchor position in frame-0 pixel coordinates for every frame (world motion)."""
    tg = spec.target
    pts = np.asarray(tg.path if tg.path else [(spec.width / 2.0, spec.height * 0.6)], dtype=np.float64).reshape(-1, 2)
    seg = np.diff(pts, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    out = np.empty((spec.frames, 2))
    if len(seg) == 0 or cum[-1] == 0:
        out[:] = pts[0]
        return out
    for t in range(spec.frames):
        s = min(tg.speed * t, cum[-1])
        i = min(int(np.searchsorted(cum, s, side="right")) - 1, len(seg) - 1)
        f = (s - cum[i]) / seg_len[i] if seg_len[i] > 0 else 0.0
        out[t] = pts[i] + f * seg[i]
    return out


def _sprite(spec: SceneSpec) -> tuple[np.ndarray, np.ndarray]:
    """Textured high-contrast target patch plus its alpha, both padded by one texel."""
    rng = np.random.default_rng([spec.seed, 2])
    w = max(int(round(spec.target.size[0])), 2)
    h = max(int(round(spec.target.size[1])), 2)
    pat = gaussian_filter(rng.random((h, w)), 1.5)
    pat = np.where(pat > np.median(pat), 0.92, 0.08)
    pat = 0.5 + spec.target.intensity * (pat - 0.5)
    img = np.pad(pat, 1, mode="edge").astype(np.float32)
    alpha = np.pad(np.ones((h, w), np.float32), 1)
    return img, alpha


def _graphic_patch(b: BBox, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 3])
    h, w = max(int(math.ceil(b.h)), 1), max(int(math.ceil(b.w)), 1)
    return np.clip(gaussian_filter(rng.random((h, w)), 1.0) * 2 - 0.5, 0.0, 1.0).astype(np.float32)


@njit(cache=True)
def _warp(canvas, inv, h, w):
    """Pull-back of the canvas through inv for an h x w frame; bilinear, replicate border."""
    ch, cw = canvas.shape
    out = np.empty((h, w), np.float32)
    for v in range(h):
        for u in range(w):
            s = inv[2, 0] * u + inv[2, 1] * v + inv[2, 2]
            x = (inv[0, 0] * u + inv[0, 1] * v + inv[0, 2]) / s
            y = (inv[1, 0] * u + inv[1, 1] * v + inv[1, 2]) / s
            x = min(max(x, 0.0), cw - 1.0)
            y = min(max(y, 0.0), ch - 1.0)
            x0 = min(int(math.floor(x)), cw - 2)
            y0 = min(int(math.floor(y)), ch - 2)
            ax = x - x0
            ay = y - y0
            top = canvas[y0, x0] * (1 - ax) + canvas[y0, x0 + 1] * ax
            bot = canvas[y0 + 1, x0] * (1 - ax) + canvas[y0 + 1, x0 + 1] * ax
            out[v, u] = top * (1 - ay) + bot * ay
    return out


class SceneFrames:
    """Lazily rendered frames of a scene; behaves like a read-only list."""

    def __init__(self, spec: SceneSpec, canvas: np.ndarray, cumulative: list[Homography], boxes: list[BBox]):
        self.spec = spec
        self.canvas = canvas
        self.cumulative = cumulative
        self.boxes = boxes
        self.sprite, self.alpha = _sprite(spec)
        self._graphics = [(g, _graphic_patch(g, spec.seed)) for g in spec.graphics]

    def __len__(self):
        return self.spec.frames

    def gray(self, t: int) -> np.ndarray:
        if not 0 <= t < len(self):
            raise IndexError(t)
        spec = self.spec
        inv = np.asarray(self.cumulative[t].inverse().m, dtype=np.float64)
        img = _warp(self.canvas, inv, spec.height, spec.width)
        self._draw_target(img, self.boxes[t])
        for g, patch in self._graphics:
            x0, y0 = max(int(g.x), 0), max(int(g.y), 0)
            x1, y1 = min(x0 + patch.shape[1], spec.width), min(y0 + patch.shape[0], spec.height)
            if x1 > x0 and y1 > y0:
                img[y0:y1, x0:x1] = patch[: y1 - y0, : x1 - x0]
        return img

    def _draw_target(self, img: np.ndarray, b: BBox) -> None:
        H, W = img.shape
        x0, y0 = max(int(math.floor(b.x)) - 1, 0), max(int(math.floor(b.y)) - 1, 0)
        x1, y1 = min(int(math.ceil(b.x + b.w)) + 2, W), min(int(math.ceil(b.y + b.h)) + 2, H)
        if x1 <= x0 or y1 <= y0:
            return
        yy, xx = np.mgrid[y0:y1, x0:x1]
        # texel c covers [b.x + c, b.x + c + 1); padded sprite index is c + 1
        sx = (xx - b.x - 0.5) * (self.sprite.shape[1] - 2) / b.w + 1.0
        sy = (yy - b.y - 0.5) * (self.sprite.shape[0] - 2) / b.h + 1.0
        hs, ws = self.alpha.shape
        inside = (sx > -0.5) & (sx < ws - 0.5) & (sy > -0.5) & (sy < hs - 0.5)
        a = np.where(inside, sample_bilinear(self.alpha, sx, sy), 0.0)
        val = sample_bilinear(self.sprite, sx, sy)
        img[y0:y1, x0:x1] = (1 - a) * img[y0:y1, x0:x1] + a * val

    def __getitem__(self, t: int) -> ColorFrame:
        g = np.rint(self.gray(t) * 255.0).astype(np.uint8)
        return ColorFrame(np.repeat(g[:, :, None], 3, axis=2))

    def __iter__(self):
        for t in range(len(self)):
            yield self[t]


# --- generation ----------------------------------------------------------------------


def reference_from_gt(boxes, homographies, frame_w: float, frame_h: float, k: float = 0.9) -> list[Trajectory]:
    """Replay anchor extraction, propagation, clipping and append with exact homographies."""
    if len(homographies) != len(boxes) - 1:
        raise LengthMismatch(f"{len(boxes)} boxes need {len(boxes) - 1} homographies, got {len(homographies)}")
    if not boxes:
        return []
    traj = start(boxes[0], frame_w, frame_h, k)
    out = [traj]
    for h, b in zip(homographies, boxes[1:]):
        traj = step(traj, h, b, k)
        out.append(traj)
    return out


def _check_canvas(spec: SceneSpec, cumulative: list[Homography]) -> None:
    W, H = CANVAS_FACTOR * spec.width, CANVAS_FACTOR * spec.height
    corners = np.array([[0, 0], [spec.width - 1, 0], [0, spec.height - 1], [spec.width - 1, spec.height - 1]], float)
    for t, c in enumerate(cumulative):
        back, ok = c.inverse().apply_array(corners)
        if not ok.all() or back.min() < 0 or back[:, 0].max() > W - 1 or back[:, 1].max() > H - 1:
            raise InvalidSpec(f"camera leaves the canvas at frame {t}; reduce the motion budget")


def generate(spec: SceneSpec) -> tuple[SceneFrames, GroundTruth]:
    spec.validate()
    motions = camera_motions(spec)
    c0 = Homography.translation(-float(spec.width), -float(spec.height))
    cumulative = [c0]
    for m in motions:
        cumulative.append(m @ cumulative[-1])
    _check_canvas(spec, cumulative)

    # target anchor in world (canvas) coordinates, then through the camera
    path0 = _path_positions(spec)
    world, _ = c0.inverse().apply_array(path0)
    w, h = float(spec.target.size[0]), float(spec.target.size[1])
    boxes = []
    for t in range(spec.frames):
        a, ok = cumulative[t].apply_array(world[t : t + 1])
        if not ok[0]:
            raise InvalidSpec(f"target projects to infinity at frame {t}")
        boxes.append(BBox(float(a[0, 0]) - 0.5 * w, float(a[0, 1]) - spec.k * h, w, h))
    reference = reference_from_gt(boxes, motions, spec.width, spec.height, spec.k)
    frames = SceneFrames(spec, _canvas(spec), cumulative, boxes)
    return frames, GroundTruth(motions, boxes, reference, cumulative, world)


def corner_counts(frames: SceneFrames, which=None) -> list[int]:
    n = len(frames)
    which = which if which is not None else sorted({0, n // 2, n - 1})
    out = []
    for t in which:
        try:
            out.append(len(detect_corners(GrayFrame(frames.gray(t)))))
        except NoFeatures:
            out.append(0)
    return out


def suitability(frames: SceneFrames) -> tuple[bool, list[int]]:
    """Scenes whose mean corner count falls below the floor are unsuitable for camera tracking."""
    counts = corner_counts(frames)
    return float(np.mean(counts)) >= SUITABLE_CORNERS, counts


# --- spec files ----------------------------------------------------------------------


def _pair(s: str) -> tuple[float, float]:
    a, b = (float(v) for v in s.split(","))
    return (a, b)


def spec_from_ini(path_or_text) -> SceneSpec:
    cp = configparser.ConfigParser()
    p = Path(path_or_text) if not str(path_or_text).lstrip().startswith("[") else None
    try:
        if p is not None:
            if not p.is_file():
                raise InvalidSpec(f"spec file not found: {p}")
            cp.read(p)
        else:
            cp.read_string(str(path_or_text))
        sc = cp["scene"] if cp.has_section("scene") else {}
        tx = cp["texture"] if cp.has_section("texture") else {}
        cam = cp["camera"] if cp.has_section("camera") else {}
        tg = cp["target"] if cp.has_section("target") else {}
        gr = cp["graphics"] if cp.has_section("graphics") else {}
        d = SceneSpec()
        texture = TextureSpec(
            int(tx.get("blob_count", d.texture.blob_count)),
            float(tx.get("blob_scale", d.texture.blob_scale)),
            float(tx.get("noise_sigma", d.texture.noise_sigma)),
            float(tx.get("contrast", d.texture.contrast)),
        )
        camera = CameraSpec(
            _pair(cam["translation"]) if "translation" in cam else d.camera.translation,
            float(cam.get("rotation", d.camera.rotation)),
            float(cam.get("zoom", d.camera.zoom)),
            float(cam.get("perspective", d.camera.perspective)),
        )
        path = tuple(_pair(s) for s in tg.get("path", "").split(";") if s.strip())
        target = TargetSpec(
            _pair(tg["size"]) if "size" in tg else d.target.size,
            path,
            float(tg.get("speed", d.target.speed)),
            float(tg.get("intensity", d.target.intensity)),
        )
        graphics = tuple(BBox(*(float(v) for v in s.split(","))) for s in gr.get("rects", "").split(";") if s.strip())
        spec = SceneSpec(
            int(sc.get("width", d.width)),
            int(sc.get("height", d.height)),
            int(sc.get("frames", d.frames)),
            texture,
            camera,
            target,
            graphics,
            int(sc.get("seed", d.seed)),
            float(sc.get("k", d.k)),
            float(sc.get("fps", d.fps)),
        )
    except (ValueError, KeyError, configparser.Error) as exc:
        raise InvalidSpec(f"bad scene spec: {exc}") from exc
    spec.validate()
    return spec


def spec_to_ini(spec: SceneSpec) -> str:
    def pair(v):
        return f"{v[0]!r},{v[1]!r}"

    lines = [
        "[scene]",
        f"width = {spec.width}",
        f"height = {spec.height}",
        f"frames = {spec.frames}",
        f"seed = {spec.seed}",
        f"k = {spec.k!r}",
        f"fps = {spec.fps!r}",
        "",
        "[texture]",
        *(f"{k} = {v!r}" for k, v in asdict(spec.texture).items()),
        "",
        "[camera]",
        f"translation = {pair(spec.camera.translation)}",
        f"rotation = {spec.camera.rotation!r}",
        f"zoom = {spec.camera.zoom!r}",
        f"perspective = {spec.camera.perspective!r}",
        "",
        "[target]",
        f"size = {pair(spec.target.size)}",
        f"path = {'; '.join(pair(p) for p in spec.target.path)}",
        f"speed = {spec.target.speed!r}",
        f"intensity = {spec.target.intensity!r}",
    ]
    if spec.graphics:
        lines += ["", "[graphics]", "rects = " + "; ".join(f"{g.x!r},{g.y!r},{g.w!r},{g.h!r}" for g in spec.graphics)]
    return "\n".join(lines) + "\n"


def write_scene(out, spec: SceneSpec, frames: SceneFrames, gt: GroundTruth, ext: str = "png", check_suitability: bool = True) -> dict:
    """Write frames/, gt.homog, gt_boxes.csv, reference.traj, spec.ini and scene.json."""
    out = Path(out)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    for old in (out / "frames").iterdir():
        if FRAME_RE.match(old.name):
            old.unlink()
    for t in range(len(frames)):
        write_frame(out / "frames" / f"{t:06d}.{ext}", frames[t])
    write_homographies(out / "gt.homog", gt.homographies)
    write_track_file(out / "gt_boxes.csv", gt.boxes)
    write_records(out / "reference.traj", gt.reference)
    (out / "spec.ini").write_text(spec_to_ini(spec))
    meta = {"width": spec.width, "height": spec.height, "frames": spec.frames, "fps": spec.fps, "k": spec.k}
    if check_suitability:
        ok, counts = suitability(frames)
        meta.update(suitable=ok, corner_counts=counts, corner_floor=SUITABLE_CORNERS)
    (out / "scene.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return meta


def gray_of(frame: ColorFrame) -> GrayFrame:
    return to_gray(frame)
