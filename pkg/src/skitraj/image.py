"""Frame buffers, grayscale conversion, pyramids, gradients and frame I/O."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
from numba import njit
from PIL import Image

from .errors import ImageTooSmall, MissingFrame

LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)
MIN_PYRAMID_SIZE = 16

SHARPEN_KERNEL = np.array([[-1, -1, -1], [-1, 9, -1], [-1, -1, -1]], dtype=np.float32)


@dataclass(frozen=True)
class ColorFrame:
    """Row-major RGB image, shape (height, width, 3), uint8."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if d.ndim != 3 or d.shape[2] != 3 or d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError(f"ColorFrame needs shape (h, w, 3), got {d.shape}")
        if d.dtype != np.uint8:
            object.__setattr__(self, "data", np.clip(np.rint(d), 0, 255).astype(np.uint8))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def copy(self) -> "ColorFrame":
        return ColorFrame(self.data.copy())


@dataclass(frozen=True)
class GrayFrame:
    """Row-major intensities in [0, 1], shape (height, width), float32."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float32)
        if d.ndim != 2 or d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError(f"GrayFrame needs shape (h, w), got {d.shape}")
        if d.size and (d.min() < 0.0 or d.max() > 1.0):
            raise ValueError("GrayFrame intensities must lie in [0, 1]")
        object.__setattr__(self, "data", d)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass
class Pyramid:
    levels: list[GrayFrame]
    _grads: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self):
        return len(self.levels)

    def level_gradients(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-pixel intensity derivatives of level k (Sobel / 8), cached."""
        if k not in self._grads:
            a = self.levels[k].data
            if a.shape[0] < 3 or a.shape[1] < 3:
                raise ImageTooSmall(f"gradients need at least 3x3, got {a.shape[1]}x{a.shape[0]}")
            self._grads[k] = _sobel(a, np.float32(0.125))
        return self._grads[k]


def to_gray(f: ColorFrame) -> GrayFrame:
    g = f.data.astype(np.float32) @ LUMA
    g *= np.float32(1.0 / 255.0)
    np.clip(g, 0.0, 1.0, out=g)
    return GrayFrame(g)


def _pad(a: np.ndarray, r: int) -> np.ndarray:
    return np.pad(a, r, mode="edge")


@njit(cache=True)
def _blur_decimate(a, h2, w2):
    # [1, 4, 6, 4, 1] / 16 separable blur evaluated only at even pixels
    h, w = a.shape
    k = (1.0, 4.0, 6.0, 4.0, 1.0)
    rows = np.empty((h, w2), dtype=np.float32)
    for y in range(h):
        for x in range(w2):
            acc = 0.0
            for j in range(5):
                xx = min(max(2 * x + j - 2, 0), w - 1)
                acc += k[j] * a[y, xx]
            rows[y, x] = acc / 16.0
    out = np.empty((h2, w2), dtype=np.float32)
    for y in range(h2):
        for x in range(w2):
            acc = 0.0
            for j in range(5):
                yy = min(max(2 * y + j - 2, 0), h - 1)
                acc += k[j] * rows[yy, x]
            out[y, x] = min(max(acc / 16.0, 0.0), 1.0)
    return out


def build_pyramid(g: GrayFrame, max_levels: int) -> Pyramid:
    if max_levels < 1:
        raise ValueError("max_levels must be >= 1")
    levels = [g]
    while len(levels) < max_levels:
        cur = levels[-1].data
        h2, w2 = cur.shape[0] // 2, cur.shape[1] // 2
        if h2 < MIN_PYRAMID_SIZE or w2 < MIN_PYRAMID_SIZE:
            break
        levels.append(GrayFrame(_blur_decimate(np.ascontiguousarray(cur), h2, w2)))
    return Pyramid(levels)


def _conv3(a: np.ndarray, k: np.ndarray) -> np.ndarray:
    h, w = a.shape
    p = _pad(a, 1)
    out = np.zeros((h, w), dtype=np.float32)
    for dy in range(3):
        for dx in range(3):
            c = k[dy, dx]
            if c != 0:
                out += c * p[dy : dy + h, dx : dx + w]
    return out


@njit(cache=True, fastmath=True)
def _sobel(a, scale):
    h, w = a.shape
    gx = np.empty((h, w), dtype=np.float32)
    gy = np.empty((h, w), dtype=np.float32)
    two = np.float32(2.0)
    for y in range(h):
        r0 = a[max(y - 1, 0)]
        r1 = a[y]
        r2 = a[min(y + 1, h - 1)]
        ox = gx[y]
        oy = gy[y]
        # interior columns without clamping so the loop vectorizes
        for x in range(1, w - 1):
            ox[x] = scale * ((r0[x + 1] + two * r1[x + 1] + r2[x + 1]) - (r0[x - 1] + two * r1[x - 1] + r2[x - 1]))
            oy[x] = scale * ((r2[x - 1] + two * r2[x] + r2[x + 1]) - (r0[x - 1] + two * r0[x] + r0[x + 1]))
        for x in (0, w - 1):
            xa = max(x - 1, 0)
            xb = min(x + 1, w - 1)
            ox[x] = scale * ((r0[xb] + two * r1[xb] + r2[xb]) - (r0[xa] + two * r1[xa] + r2[xa]))
            oy[x] = scale * ((r2[xa] + two * r2[x] + r2[xb]) - (r0[xa] + two * r0[x] + r0[xb]))
    return gx, gy


def gradients(g: GrayFrame) -> tuple[np.ndarray, np.ndarray]:
    """3x3 Sobel derivatives (unnormalized, replicate border)."""
    a = g.data
    if a.shape[0] < 3 or a.shape[1] < 3:
        raise ImageTooSmall(f"gradients need at least 3x3, got {a.shape[1]}x{a.shape[0]}")
    return _sobel(np.ascontiguousarray(a), np.float32(1.0))


def sharpen(g: GrayFrame) -> GrayFrame:
    a = g.data
    if a.shape[0] < 3 or a.shape[1] < 3:
        raise ImageTooSmall(f"sharpen needs at least 3x3, got {a.shape[1]}x{a.shape[0]}")
    return GrayFrame(np.clip(_conv3(a, SHARPEN_KERNEL), 0.0, 1.0))


def sample_bilinear(a: np.ndarray, xs, ys) -> np.ndarray:
    """Bilinear samples of a 2-D (or HxWxC) array at float coordinates, replicate border."""
    h, w = a.shape[:2]
    xs = np.clip(np.asarray(xs, dtype=np.float64), 0.0, w - 1.0)
    ys = np.clip(np.asarray(ys, dtype=np.float64), 0.0, h - 1.0)
    x0 = np.minimum(np.floor(xs).astype(np.intp), max(w - 2, 0))
    y0 = np.minimum(np.floor(ys).astype(np.intp), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    ax = xs - x0
    ay = ys - y0
    if a.ndim == 3:
        ax = ax[..., None]
        ay = ay[..., None]
    top = a[y0, x0] * (1 - ax) + a[y0, x1] * ax
    bot = a[y1, x0] * (1 - ax) + a[y1, x1] * ax
    return top * (1 - ay) + bot * ay


# --- frame files ------------------------------------------------------------------

FRAME_RE = re.compile(r"^(\d{6})\.(png|ppm)$")


def read_frame(path) -> ColorFrame:
    path = Path(path)
    if not path.is_file():
        raise MissingFrame(f"frame file not found: {path}")
    with Image.open(path) as im:
        return ColorFrame(np.asarray(im.convert("RGB"), dtype=np.uint8))


def write_frame(path, frame: ColorFrame) -> None:
    path = Path(path)
    im = Image.fromarray(frame.data, mode="RGB")
    if path.suffix.lower() == ".png":
        im.save(path, compress_level=1)
    else:
        im.save(path)


class FrameDirectory:
    """A directory of %06d.png / %06d.ppm frames indexed from 0.

    Frames are read lazily, one at a time, so a consumer never touches frame
    t + 1 before it asks for it.
    """

    def __init__(self, root, ext: str | None = None, count: int | None = None, log: list | None = None):
        self.root = Path(root)
        if not self.root.is_dir():
            raise MissingFrame(f"frame directory not found: {self.root}")
        found: dict[int, str] = {}
        for p in self.root.iterdir():
            m = FRAME_RE.match(p.name)
            if m:
                found.setdefault(int(m.group(1)), m.group(2))
        if ext is None:
            exts = sorted(set(found.values()))
            ext = exts[0] if exts else "png"
        self.ext = ext
        if count is None:
            count = max(found) + 1 if found else 0
        self.count = count
        self.opened: list[int] = []
        # optional shared event log, gets ("open", index) entries
        self.log = log

    def path(self, index: int) -> Path:
        return self.root / f"{index:06d}.{self.ext}"

    def __len__(self):
        return self.count

    def __getitem__(self, index: int) -> ColorFrame:
        if not 0 <= index < self.count:
            raise IndexError(index)
        self.opened.append(index)
        if self.log is not None:
            self.log.append(("open", index))
        return read_frame(self.path(index))

    def size(self, index: int) -> tuple[int, int]:
        """(width, height) of frame index from the file header, without decoding pixels."""
        if not 0 <= index < self.count:
            raise IndexError(index)
        self.opened.append(index)
        if self.log is not None:
            self.log.append(("open", index))
        path = self.path(index)
        if not path.is_file():
            raise MissingFrame(f"frame file not found: {path}")
        with Image.open(path) as im:
            return im.size

    def __iter__(self) -> Iterator[ColorFrame]:
        for i in range(self.count):
            yield self[i]
