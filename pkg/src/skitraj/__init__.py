"""Online target trajectories under a moving camera.

A tracker supplies the target box per frame; key-points matched between
consecutive frames give the camera homography; past anchor points are
carried forward through it and clipped to the frame.
"""

from .bbox import BBox, iou
from .geometry import Correspondence, Homography, Point2, apply, fit_dlt, ransac_homography
from .trajectory import Trajectory, append_current, extract_anchor, propagate, smooth_for_render

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "Correspondence",
    "Homography",
    "Point2",
    "Trajectory",
    "append_current",
    "apply",
    "extract_anchor",
    "fit_dlt",
    "iou",
    "propagate",
    "ransac_homography",
    "smooth_for_render",
]
