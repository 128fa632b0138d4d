"""Residual-trajectory panels with threshold bands and onset markers.

Rendering is pinned for byte-stable SVG output: fixed hash salt, text kept
as text, no creation-date metadata.  Golden-file tests compare the SVG
bytes directly.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .artifacts import (  # noqa: E402
    MODES,
    SchemaError,
    read_manifest,
    read_residuals,
    read_thresholds,
    residual_files,
    estimator_labels,
)

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#17becf", "#7f7f7f")

_RC = {
    "svg.hashsalt": "report-plots",
    "svg.fonttype": "none",
    "figure.dpi": 100,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def label_color(label: str) -> str:
    """Deterministic color from the estimator label (stable across runs)."""
    digest = hashlib.sha256(label.encode()).digest()
    return _PALETTE[digest[0] % len(_PALETTE)]


@dataclass
class PlotSpec:
    """What to draw and where to put it."""

    run_dir: str
    modes: tuple[str, ...] = MODES
    labels: tuple[str, ...] = ()      # empty: every estimator in the manifest
    run_index: int = 0
    threshold_overlay: bool = True
    out_path: str = "residuals.svg"

    def __post_init__(self):
        if not self.modes:
            raise ValueError("empty channel selection")
        bad = [m for m in self.modes if m not in MODES]
        if bad:
            raise ValueError(f"unknown modes {bad}")


def _save(fig, out_path: str) -> str:
    fig.savefig(out_path, format=os.path.splitext(out_path)[1][1:] or "svg",
                metadata={"Date": None})
    plt.close(fig)
    return out_path


def plot_residuals(spec: PlotSpec) -> str:
    """One panel per selected mode; returns the written file path."""
    labels = tuple(spec.labels) or tuple(estimator_labels(spec.run_dir))
    if not labels:
        raise SchemaError("no estimator labels found in the manifest")
    manifest = read_manifest(spec.run_dir)
    thresholds = read_thresholds(spec.run_dir) if spec.threshold_overlay else {}
    onsets = manifest.get("fault_onsets", {})

    series = {}
    for label in labels:
        path = residual_files(spec.run_dir, label)[spec.run_index]
        series[label] = read_residuals(path)

    n = len(spec.modes)
    ncols = 2 if n > 1 else 1
    nrows = math.ceil(n / ncols)
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(nrows, ncols, squeeze=False,
                                 figsize=(4.0 * ncols, 2.2 * nrows),
                                 sharex=True)
        for k, mode in enumerate(spec.modes):
            ax = axes[k // ncols][k % ncols]
            for label in labels:
                data = series[label]
                ax.plot(data["t"], data[f"r_{mode}"], lw=1.0,
                        color=label_color(label), label=label)
            if spec.threshold_overlay and thresholds:
                j = MODES.index(mode)
                for label in labels:
                    if label in thresholds:
                        th = thresholds[label][j]
                        c = label_color(label)
                        ax.axhline(th, ls="--", lw=0.8, color=c, alpha=0.7)
                        ax.axhline(-th, ls="--", lw=0.8, color=c, alpha=0.7)
            if mode in onsets:
                ax.axvline(onsets[mode], color="k", ls=":", lw=1.0)
            ax.set_title(mode)
            ax.set_ylabel("residual")
        for k in range(n, nrows * ncols):
            axes[k // ncols][k % ncols].set_axis_off()
        for ax in axes[-1]:
            ax.set_xlabel("t [s]")
        handles, lg_labels = axes[0][0].get_legend_handles_labels()
        fig.legend(handles, lg_labels, loc="upper center",
                   ncol=min(len(labels), 4), frameon=False)
        fig.suptitle(manifest.get("scenario", ""), y=1.02)
        fig.tight_layout(rect=(0, 0, 1, 0.93))
        return _save(fig, spec.out_path)
