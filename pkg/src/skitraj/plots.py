"""Figures for evaluation reports (matplotlib, file output only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import EvalReport  # noqa: E402

BLUE = "#4B8ED1"


def success_plot(report: EvalReport, path) -> Path | None:
    clips = [c for c in report.clips if c.success is not None]
    if not clips:
        return None
    fig, ax = plt.subplots(figsize=(5, 4))
    for c in clips:
        thr, rate = c.success
        ax.plot(thr, rate, label=f"{c.clip_id} [{c.auc:.1f}]")
    ax.set_xlabel("overlap threshold")
    ax.set_ylabel("success rate")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.set_title("Success plot")
    ax.legend(fontsize=7, loc="lower left")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)


def error_curves(report: EvalReport, path) -> Path | None:
    clips = [c for c in report.clips if c.per_frame_mppte is not None]
    if not clips:
        return None
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    for c in clips:
        t = np.arange(len(c.per_frame_mppte))
        a1.plot(t, c.per_frame_mppte, lw=1, label=c.clip_id)
        a2.plot(t, c.per_frame_dtw, lw=1, label=c.clip_id)
    a1.set_ylabel("MPPTE [px]")
    a2.set_ylabel("DTW [px]")
    a2.set_xlabel("frame")
    if len(clips) <= 10:
        a1.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)


def trajectory_plot(pred_xy, ref_xy, size, path) -> Path:
    """Last-frame predicted vs reference trajectory in image coordinates."""
    fig, ax = plt.subplots(figsize=(6, 6 * size[1] / size[0] + 0.5))
    ref_xy = np.asarray(ref_xy).reshape(-1, 2)
    pred_xy = np.asarray(pred_xy).reshape(-1, 2)
    ax.plot(ref_xy[:, 0], ref_xy[:, 1], "k.-", lw=1, ms=3, label="reference")
    ax.plot(pred_xy[:, 0], pred_xy[:, 1], ".-", color=BLUE, lw=1, ms=3, label="predicted")
    ax.set_xlim(0, size[0])
    ax.set_ylim(size[1], 0)
    ax.set_aspect("equal")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)
