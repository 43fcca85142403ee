from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box: top-left (x, y), width w, height h, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"non-finite box {self}")
            object.__setattr__(self, name, v)
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box needs positive size, got w={self.w} h={self.h}")

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + 0.5 * self.w, self.y + 0.5 * self.h)

    @property
    def area(self) -> float:
        return self.w * self.h

    def contains(self, pts) -> np.ndarray:
        """Half-open containment test for an (N, 2) array of points."""
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        return (
            (pts[:, 0] >= self.x)
            & (pts[:, 0] < self.x + self.w)
            & (pts[:, 1] >= self.y)
            & (pts[:, 1] < self.y + self.h)
        )

    def clip(self, width: float, height: float) -> "BBox | None":
        x0, y0 = max(self.x, 0.0), max(self.y, 0.0)
        x1, y1 = min(self.x + self.w, width), min(self.y + self.h, height)
        if x1 <= x0 or y1 <= y0:
            return None
        return BBox(x0, y0, x1 - x0, y1 - y0)

    def clamp_into(self, width: float, height: float) -> "BBox":
        """Shift (not resize) the box so it lies inside the frame where possible."""
        x = min(max(self.x, 0.0), max(width - self.w, 0.0))
        y = min(max(self.y, 0.0), max(height - self.h, 0.0))
        return BBox(x, y, self.w, self.h)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


def iou(a: BBox, b: BBox) -> float:
    ix = max(0.0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0.0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0
