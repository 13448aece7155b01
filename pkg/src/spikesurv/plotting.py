"""Figures written as standalone SVG files.

Figures are built on a bare :class:`~matplotlib.figure.Figure` (no pyplot state),
with a fixed SVG id salt and no date metadata so identical inputs give
byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

from .interpret import ImportanceReport
from .variational import SurvivalPrediction

STYLE = {
    "svg.hashsalt": "spikesurv",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
}

CURVE_COLOR = "#1f4e79"
BAND_COLOR = "#9ecae1"
BAR_COLOR = "#b2182b"


def _save(fig: Figure, path):
    FigureCanvasSVG(fig)
    with matplotlib.rc_context(STYLE):
        fig.savefig(Path(path), format="svg", metadata={"Date": None})


@dataclass(frozen=True, eq=False)
class CurveGeometry:
    """Plotted coordinates (display-clipped) of one survival figure."""

    times: np.ndarray
    mean: np.ndarray
    band_lower: np.ndarray
    band_upper: np.ndarray
    bar_lower: np.ndarray
    bar_upper: np.ndarray


def curve_geometry(prediction: SurvivalPrediction) -> CurveGeometry:
    """Anchor S(0) = 1 and clip the uncertainty band and bars to [0, 1]."""
    if prediction.mean.ndim != 1:
        raise ValueError("plot a single patient's prediction")
    times = np.concatenate([[0.0], prediction.grid.points])
    mean = np.concatenate([[1.0], prediction.mean])
    spread = np.concatenate([[0.0], prediction.model_std])
    return CurveGeometry(
        times=times,
        mean=mean,
        band_lower=np.clip(mean - spread, 0.0, 1.0),
        band_upper=np.clip(mean + spread, 0.0, 1.0),
        bar_lower=np.clip(prediction.mean - prediction.data_std, 0.0, 1.0),
        bar_upper=np.clip(prediction.mean + prediction.data_std, 0.0, 1.0),
    )


def plot_survival(prediction: SurvivalPrediction, path, title: str | None = None) -> CurveGeometry:
    """Mean curve, shaded +-1 model std band and +-1 data std bars at grid points."""
    geo = curve_geometry(prediction)
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(5.0, 3.2))
        ax = fig.add_subplot()
        ax.axhline(1.0, color="0.8", lw=0.6, ls=":", gid="unit-line")
        ax.fill_between(
            geo.times, geo.band_lower, geo.band_upper, color=BAND_COLOR, alpha=0.6, lw=0, gid="model-band"
        )
        ax.vlines(prediction.grid.points, geo.bar_lower, geo.bar_upper, color=BAR_COLOR, lw=1.2, gid="data-bars")
        ax.plot(geo.times, geo.mean, color=CURVE_COLOR, lw=1.6, gid="mean-curve")
        ax.set_xlim(0.0, geo.times[-1])
        ax.set_ylim(0.0, 1.05)
        ax.set_xlabel("time")
        ax.set_ylabel("survival probability")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)
    return geo


def plot_importance(report: ImportanceReport, path, top: int = 20):
    feats = report.features[:top]
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(5.0, 0.25 * len(feats) + 1.0))
        ax = fig.add_subplot()
        y = np.arange(len(feats))[::-1]
        ax.barh(y, [f.snr for f in feats], color=CURVE_COLOR, gid="snr-bars")
        ax.set_yticks(y, [f.name for f in feats])
        ax.set_xlabel("|mu| / (sigma * gamma)")
        fig.tight_layout()
        _save(fig, path)


def plot_uncertainty_hist(scores, path, reference_mean: float | None = None):
    scores = np.asarray(scores, dtype=float)
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(5.0, 3.0))
        ax = fig.add_subplot()
        ax.hist(scores, bins=min(30, max(5, scores.size // 5)), color=BAND_COLOR, edgecolor=CURVE_COLOR)
        ax.axvline(float(scores.mean()), color=CURVE_COLOR, lw=1.2, gid="cohort-mean")
        if reference_mean is not None:
            ax.axvline(reference_mean, color=BAR_COLOR, lw=1.2, ls="--", gid="reference-mean")
        ax.set_xlabel("mean uncertainty score")
        ax.set_ylabel("records")
        fig.tight_layout()
        _save(fig, path)
