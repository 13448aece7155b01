"""Cox proportional-hazards baseline (Breslow ties, Newton-Raphson)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Standardizer, SurvivalDataset, TimeGrid, fit_standardizer
from .errors import ConvergenceError, DivergenceError
from .metrics import StepFunction

MAX_HALVINGS = 30
DIVERGENCE_BOUND = 50.0


@dataclass(frozen=True, eq=False)
class CoxModel:
    """Coefficients act on standardized covariates."""

    beta: np.ndarray
    baseline_cumhaz: StepFunction
    standardizer: Standardizer
    iterations: int = 0
    grad_norm: float = 0.0

    @property
    def beta_original_scale(self) -> np.ndarray:
        return self.beta / self.standardizer.stds


def _risk_set_sums(eta, X, time, event):
    """Risk-set statistics {j : t_j >= t_i} at each event row.

    Returns (eta_i, x_i, log S0, S1/S0, S2/S0) for the event rows. Sums are
    accumulated from the latest time backwards and rescaled whenever the running
    maximum of eta grows, so no risk set underflows.
    """
    order = np.argsort(-time, kind="stable")
    t_sorted, e_sorted, xs = time[order], eta[order], X[order]
    n, d = xs.shape
    log_s0 = np.empty(n)
    mean1 = np.empty((n, d))
    mean2 = np.empty((n, d, d))
    acc0, acc1, acc2, top = 0.0, np.zeros(d), np.zeros((d, d)), -np.inf
    for r in range(n):
        if e_sorted[r] > top:
            scale = np.exp(top - e_sorted[r])
            acc0, acc1, acc2, top = acc0 * scale, acc1 * scale, acc2 * scale, e_sorted[r]
        w = np.exp(e_sorted[r] - top)
        acc0 += w
        acc1 = acc1 + w * xs[r]
        acc2 = acc2 + w * np.outer(xs[r], xs[r])
        log_s0[r] = top + np.log(acc0)
        mean1[r] = acc1 / acc0
        mean2[r] = acc2 / acc0
    # A row's risk set includes every row with an equal time: use the last tied position.
    last = np.searchsorted(-t_sorted, -t_sorted, side="right") - 1
    ev = event[order]
    return e_sorted[ev], xs[ev], log_s0[last][ev], mean1[last][ev], mean2[last][ev]


def partial_loglik(beta, X, time, event, hessian: bool = True):
    """Breslow log partial likelihood with its gradient and (optionally) Hessian."""
    beta = np.asarray(beta, dtype=float)
    X = np.asarray(X, dtype=float)
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=bool)
    eta_ev, x_ev, log_s0, xbar, x2bar = _risk_set_sums(X @ beta, X, time, event)
    value = float(np.sum(eta_ev - log_s0))
    grad = np.sum(x_ev - xbar, axis=0)
    if not hessian:
        return value, grad
    hess = -np.sum(x2bar - xbar[:, :, None] * xbar[:, None, :], axis=0)
    return value, grad, hess


def breslow_cumhaz(beta, X, time, event) -> StepFunction:
    """Breslow estimate of the baseline cumulative hazard at distinct event times."""
    eta = X @ beta
    w = np.exp(eta)
    ev_times = np.unique(time[event])
    increments = np.array([np.sum(event & (time == t)) / np.sum(w[time >= t]) for t in ev_times])
    return StepFunction(ev_times, np.cumsum(increments), initial=0.0)


def cox_fit(dataset: SurvivalDataset, max_iter: int = 50, tol: float = 1e-8) -> CoxModel:
    if not np.any(dataset.event):
        raise ValueError("Cox fit needs at least one uncensored record")
    standardizer = fit_standardizer(dataset)
    X = standardizer.apply(dataset.X)
    time, event = dataset.time, dataset.event
    beta = np.zeros(dataset.d)
    value, grad, hess = partial_loglik(beta, X, time, event)
    for it in range(1, max_iter + 1):
        if np.max(np.abs(grad)) < tol:
            return CoxModel(beta, breslow_cumhaz(beta, X, time, event), standardizer, it - 1, float(np.max(np.abs(grad))))
        try:
            direction = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            direction = np.linalg.lstsq(-hess, grad, rcond=None)[0]
        step = 1.0
        for _ in range(MAX_HALVINGS + 1):
            candidate = beta + step * direction
            cand_value, cand_grad, cand_hess = partial_loglik(candidate, X, time, event)
            if cand_value >= value:
                break
            step *= 0.5
        else:
            raise ConvergenceError(
                f"Cox fit: no ascent after {MAX_HALVINGS} step halvings (gradient norm {np.max(np.abs(grad)):.3g})"
            )
        beta, value, grad, hess = candidate, cand_value, cand_grad, cand_hess
        if np.max(np.abs(beta)) > DIVERGENCE_BOUND:
            raise DivergenceError(
                f"Cox fit diverging (|beta| > {DIVERGENCE_BOUND}); covariates likely separate the outcome"
            )
    gnorm = float(np.max(np.abs(grad)))
    if gnorm < tol:
        return CoxModel(beta, breslow_cumhaz(beta, X, time, event), standardizer, max_iter, gnorm)
    raise ConvergenceError(f"Cox fit did not converge in {max_iter} iterations (gradient norm {gnorm:.3g})")


def cox_survival(model: CoxModel, x, grid: TimeGrid | np.ndarray, standardized: bool = False) -> np.ndarray:
    """S(t_j | x) = exp(-H0(t_j) exp(beta . x)); ``x`` raw unless ``standardized``."""
    x = np.asarray(x, dtype=float)
    z = x if standardized else model.standardizer.apply(x)
    points = grid.points if isinstance(grid, TimeGrid) else np.asarray(grid, dtype=float)
    H0 = model.baseline_cumhaz(points)
    lp = z @ model.beta
    return np.exp(-np.multiply.outer(np.exp(lp), H0))
