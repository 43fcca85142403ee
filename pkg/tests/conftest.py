import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from skitraj.geometry import Homography


def textured(h, w, seed=0, sigma=1.5):
    """Band-limited noise in [0, 1] with plenty of corners."""
    rng = np.random.default_rng(seed)
    a = gaussian_filter(rng.standard_normal((h, w)), sigma)
    a = (a - a.min()) / (a.max() - a.min())
    return a.astype(np.float32)


def random_homography(rng, persp=1e-4, cx=320.0, cy=240.0):
    """Mild similarity plus perspective about (cx, cy)."""
    th = rng.uniform(-0.2, 0.2)
    s = rng.uniform(0.8, 1.2)
    m = np.array([[s * np.cos(th), -s * np.sin(th), rng.uniform(-30, 30)],
                  [s * np.sin(th), s * np.cos(th), rng.uniform(-30, 30)],
                  [rng.uniform(-persp, persp), rng.uniform(-persp, persp), 1.0]])
    T = np.array([[1, 0, cx], [0, 1, cy], [0, 0, 1.0]])
    return Homography(T @ m @ np.linalg.inv(T))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
