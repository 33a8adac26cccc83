"""File outputs for reports: ROC curve and saliency heatmap as CSV + SVG."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import RocReport  # noqa: E402
from .saliency import SaliencyMap  # noqa: E402

# fixed ids and no timestamp, so identical inputs give identical SVG bytes
plt.rcParams["svg.hashsalt"] = "outerface"
_SVG_META = {"Date": None, "Creator": None}


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def write_roc(report: RocReport, csv_path, svg_path=None, title: str = "") -> None:
    Path(csv_path).write_text(report.curve_csv(), encoding="utf-8")
    if svg_path is None:
        return
    fpr, tpr = np.array(report.curve).T
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.plot(fpr, tpr, lw=1.5, label=f"AUC = {report.auc:.4f}")
    ax.plot([0, 1], [0, 1], ls=":", c="gray", lw=1)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("false positive rate (real flagged fake)")
    ax.set_ylabel("true positive rate (fake flagged fake)")
    ax.set_title(title or f"ROC, {report.n_real} real / {report.n_fake} fake")
    ax.legend(loc="lower right")
    fig.tight_layout()
    _save(fig, svg_path)


def write_saliency(smap: SaliencyMap, csv_path, svg_path=None, image: np.ndarray | None = None) -> None:
    """Raw values go to CSV; the SVG is normalized to the map's own maximum."""
    Path(csv_path).write_text(smap.to_csv(), encoding="utf-8")
    if svg_path is None:
        return
    vals = smap.values
    peak = vals.max()
    norm = vals / peak if peak > 0 else vals
    fig, ax = plt.subplots(figsize=(4, 4))
    if image is not None:
        h, w = image.shape[:2]
        rows, cols = vals.shape
        extent = (-0.5, (cols - 1) * smap.stride + smap.patch - 0.5, (rows - 1) * smap.stride + smap.patch - 0.5, -0.5)
        ax.imshow(np.asarray(image, dtype=np.uint8), extent=(-0.5, w - 0.5, h - 0.5, -0.5))
        ax.imshow(norm, cmap="inferno", alpha=0.55, extent=extent, vmin=0, vmax=1, interpolation="nearest")
    else:
        ax.imshow(norm, cmap="inferno", vmin=0, vmax=1, interpolation="nearest")
    ax.set_title(f"occlusion saliency (patch {smap.patch}, stride {smap.stride})")
    ax.axis("off")
    fig.tight_layout()
    _save(fig, svg_path)
