"""Censoring-aware evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedMetricError


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous step function equal to ``initial`` before the first jump."""

    times: np.ndarray
    values: np.ndarray
    initial: float = 1.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right")
        vals = np.concatenate([[self.initial], self.values])
        return vals[idx]

    def left(self, t):
        """Left limit f(t-)."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="left")
        vals = np.concatenate([[self.initial], self.values])
        return vals[idx]


def kaplan_meier(times, events) -> StepFunction:
    """Product-limit estimate; jumps only at distinct event times."""
    times = np.asarray(times, dtype=float).reshape(-1)
    events = np.asarray(events, dtype=bool).reshape(-1)
    if times.size == 0:
        raise ValueError("kaplan_meier needs at least one observation")
    uniq, inverse = np.unique(times, return_inverse=True)
    deaths = np.bincount(inverse, weights=events.astype(float), minlength=uniq.size)
    leaving = np.bincount(inverse, minlength=uniq.size)
    at_risk = times.size - np.concatenate([[0], np.cumsum(leaving)[:-1]])
    factors = (at_risk - deaths) / at_risk
    surv = np.cumprod(factors)
    jump = deaths > 0
    return StepFunction(uniq[jump], surv[jump])


def censoring_survival(times, events) -> StepFunction:
    """Kaplan-Meier estimate of the censoring distribution G(t)."""
    return kaplan_meier(times, ~np.asarray(events, dtype=bool))


def c_index(risk, times, events) -> float:
    """Harrell's concordance: pairs with t_i < t_j and an event at t_i are comparable."""
    risk = np.asarray(risk, dtype=float).reshape(-1)
    times = np.asarray(times, dtype=float).reshape(-1)
    events = np.asarray(events, dtype=bool).reshape(-1)
    if not risk.size == times.size == events.size:
        raise ValueError("risk, times and events differ in length")
    if risk.size < 2:
        raise UndefinedMetricError("C-index needs at least two patients")
    concordant = 0.0
    comparable = 0
    for i in np.flatnonzero(events):
        later = times > times[i]
        n_pairs = int(later.sum())
        if not n_pairs:
            continue
        r = risk[later]
        comparable += n_pairs
        concordant += np.sum(risk[i] > r) + 0.5 * np.sum(risk[i] == r)
    if comparable == 0:
        raise UndefinedMetricError("C-index undefined: no comparable pairs (all censored or tied times)")
    return float(concordant / comparable)


def brier(t: float, surv_at_t, times, events, G: StepFunction) -> float:
    """IPCW Brier score at time ``t`` for predicted survival probabilities ``surv_at_t``."""
    s = np.asarray(surv_at_t, dtype=float).reshape(-1)
    times = np.asarray(times, dtype=float).reshape(-1)
    events = np.asarray(events, dtype=bool).reshape(-1)
    if not s.size == times.size == events.size:
        raise ValueError("predictions, times and events differ in length")
    dead = events & (times <= t)
    alive = times > t
    g_dead = G.left(times[dead])
    g_t = float(G(t))
    if np.any(g_dead <= 0) or (np.any(alive) and g_t <= 0):
        raise UndefinedMetricError(f"censoring weights degenerate (G = 0) at t = {t}")
    total = np.sum(s[dead] ** 2 / g_dead)
    if np.any(alive):
        total += np.sum((1.0 - s[alive]) ** 2) / g_t
    return float(total / s.size)


def integrated_brier(surv, grid_points, times, events, return_curve: bool = False):
    """Trapezoid integral of the Brier score over the grid, divided by its span.

    ``surv`` has shape (n, m): predicted S(t_j) per patient. The censoring
    distribution is estimated on the evaluation cohort itself.
    """
    grid_points = np.asarray(grid_points, dtype=float).reshape(-1)
    surv = np.asarray(surv, dtype=float)
    if grid_points.size < 2:
        raise UndefinedMetricError("integrated Brier score needs at least two grid points")
    G = censoring_survival(times, events)
    scores = np.array([brier(t, surv[:, j], times, events, G) for j, t in enumerate(grid_points)])
    widths = np.diff(grid_points)
    ibs = float(np.sum(widths * (scores[1:] + scores[:-1]) / 2.0) / (grid_points[-1] - grid_points[0]))
    return (ibs, scores) if return_curve else ibs


def risk_score(prediction) -> float:
    """Negative discrete survival mass; higher means earlier expected death."""
    mean = prediction.mean if hasattr(prediction, "model_std") else prediction
    return -np.sum(np.asarray(mean, dtype=float), axis=-1)


@dataclass(frozen=True, eq=False)
class MetricReport:
    c_index: float
    ibs: float
    brier: np.ndarray
    grid: np.ndarray

    def as_dict(self):
        out = {"c_index": self.c_index, "ibs": self.ibs}
        for t, b in zip(self.grid, self.brier):
            out[f"brier@{t:.6g}"] = float(b)
        return out


def evaluate_predictions(surv, grid_points, times, events, risk=None) -> MetricReport:
    """C-index (from ``risk`` or the curve mass) and IBS for predicted curves."""
    surv = np.asarray(surv, dtype=float)
    risk = risk_score(surv) if risk is None else np.asarray(risk, dtype=float)
    ci = c_index(risk, times, events)
    ibs, curve = integrated_brier(surv, grid_points, times, events, return_curve=True)
    return MetricReport(ci, ibs, curve, np.asarray(grid_points, dtype=float))
