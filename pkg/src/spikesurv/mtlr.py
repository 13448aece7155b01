"""MTLR sequence model: interval scores to death-sequence probabilities.

With interval scores ``a_1..a_m`` the m+1 monotone death sequences have
log-potentials ``log_f[k] = a_{k+1} + ... + a_m`` (k = death interval index,
``log_f[m] = 0`` for the all-alive sequence). Everything here stays in log space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .errors import DimensionError


def logsumexp(x, axis=-1):
    x = np.asarray(x, dtype=float)
    shift = np.max(x, axis=axis, keepdims=True)
    out = shift + np.log(np.sum(np.exp(x - shift), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


@dataclass(frozen=True, eq=False)
class SequenceDistribution:
    log_f: np.ndarray
    log_Z: float

    @property
    def m(self) -> int:
        return self.log_f.size - 1


def cumulative_scores(a) -> SequenceDistribution:
    a = np.asarray(a, dtype=float).reshape(-1)
    if not np.all(np.isfinite(a)):
        raise ValueError("interval scores must be finite")
    m = a.size
    log_f = np.zeros(m + 1)
    acc = 0.0
    for i in range(m - 1, -1, -1):
        acc += a[i]
        log_f[i] = acc
    return SequenceDistribution(log_f, float(logsumexp(log_f)))


def _check_index(k, m, name):
    if int(k) != k or not 0 <= k <= m:
        raise IndexError(f"{name}={k} outside [0, {m}]")


def exact_log_prob(dist: SequenceDistribution, k: int) -> float:
    _check_index(k, dist.m, "k")
    return float(dist.log_f[int(k)] - dist.log_Z)


def censored_log_prob(dist: SequenceDistribution, k_min: int) -> float:
    _check_index(k_min, dist.m, "k_min")
    return float(logsumexp(dist.log_f[int(k_min) :]) - dist.log_Z)


def survival_curve(dist: SequenceDistribution) -> np.ndarray:
    """S(t_j) = P(death index >= j) for j = 1..m."""
    tail = np.logaddexp.accumulate(dist.log_f[::-1])[::-1]
    # tail[0] rather than log_Z: the same accumulation keeps S <= 1 exactly
    return np.exp(tail[1:] - tail[0])


def survival_curves(a) -> np.ndarray:
    """Batched survival curves for scores of shape (..., m)."""
    a = np.asarray(a, dtype=float)
    log_f = np.concatenate([np.cumsum(a[..., ::-1], axis=-1)[..., ::-1], np.zeros(a.shape[:-1] + (1,))], axis=-1)
    tail = np.logaddexp.accumulate(log_f[..., ::-1], axis=-1)[..., ::-1]
    return np.exp(tail[..., 1:] - tail[..., :1])


def suffix_matrix(m: int) -> np.ndarray:
    """(m, m+1) matrix U with ``a @ U == log_f``; U[i, k] = 1 when i >= k."""
    return np.tril(np.ones((m, m + 1)))


def target_mask(k, exact, m: int) -> np.ndarray:
    """Boolean (n, m+1) mask of sequences consistent with each target.

    Exact targets select only index k; censored targets select k..m.
    """
    k = np.asarray(k, dtype=int).reshape(-1, 1)
    exact = np.asarray(exact, dtype=bool).reshape(-1, 1)
    idx = np.arange(m + 1)[None, :]
    return np.where(exact, idx == k, idx >= k)


def sequence_log_likelihood(a, mask):
    """Log-likelihood of consistent sequences for scores ``a`` (..., m).

    Works on Vars (differentiable) and arrays. ``mask`` broadcasts against (..., m+1).
    """
    m = ag.value(a).shape[-1]
    log_f = a @ suffix_matrix(m)
    return ag.logsumexp(log_f, axis=-1, mask=mask) - ag.logsumexp(log_f, axis=-1)


def mtlr_loss(theta, b, X, k, exact, C1: float, C2: float):
    """Regularised negative log-likelihood of linear MTLR.

    ``theta`` is (m, d), ``b`` is (m,), ``X`` is (n, d) standardized covariates and
    (``k``, ``exact``) the encoded targets. ``theta``/``b`` may be Vars.
    """
    if C1 < 0 or C2 < 0:
        raise ValueError("C1 and C2 must be non-negative")
    th, bv = ag.value(theta), ag.value(b)
    if th.ndim != 2 or bv.shape != (th.shape[0],):
        raise DimensionError(f"theta {th.shape} and b {bv.shape} are inconsistent")
    m, d = th.shape
    X = np.asarray(X, dtype=float)
    if X.size == 0 and X.ndim < 2:
        X = np.zeros((0, d))
    if X.ndim != 2 or X.shape[1] != d:
        raise DimensionError(f"covariates have shape {X.shape}, theta expects {d} columns")
    k = np.asarray(k, dtype=int).reshape(-1)
    if k.size != X.shape[0]:
        raise DimensionError("number of targets differs from number of rows")
    loss = 0.5 * C1 * ag.sum_(theta * theta)
    if m > 1:
        diff = theta[1:] - theta[:-1]
        loss = loss + 0.5 * C2 * ag.sum_(diff * diff)
    if X.shape[0]:
        a = X @ ag.transpose(theta) + b
        ll = sequence_log_likelihood(a, target_mask(k, exact, m))
        loss = loss - ag.sum_(ll)
    return loss


def brute_force_sequence_probs(a) -> np.ndarray:
    """Probabilities of the m+1 monotone sequences, enumerated directly.

    Sequence k is zeros up to position k then ones; its potential is
    ``exp(sum_i y_i a_i)``.
    """
    a = [float(v) for v in np.asarray(a, dtype=float).reshape(-1)]
    m = len(a)
    if m > 20:
        raise ValueError("brute-force enumeration limited to m <= 20")
    potentials = []
    for k in range(m + 1):
        y = [0] * k + [1] * (m - k)
        potentials.append(sum(yi * ai for yi, ai in zip(y, a)))
    top = max(potentials)
    weights = [np.exp(p - top) for p in potentials]
    total = sum(weights)
    return np.array([w / total for w in weights])
