"""Optimisation: variational free-energy training and point-estimate baselines."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import TextIO

import numpy as np
from scipy.optimize import minimize

from . import autograd as ag
from .autograd import ParamVector
from .dataset import Standardizer, SurvivalDataset, TimeGrid, encode_targets, fit_standardizer
from .errors import NonFiniteError, TrainingError
from .mtlr import mtlr_loss, sequence_log_likelihood, target_mask
from .variational import (
    INIT_GATE_MU,
    INIT_MU_SCALE,
    BayesNetConfig,
    NetworkParams,
    WeightNoise,
    forward,
    network_kl,
    sample_network,
    sample_scores,
)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-8
    C1: float = 0.0
    C2: float = 0.1
    alpha: float | None = None  # overrides BayesNetConfig.alpha when set
    seed: int = 0
    validation_fraction: float = 0.0
    patience: int | None = None
    optimizer: str = "adam"  # or "gd": plain full-step gradient descent

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")
        if self.C1 < 0 or self.C2 < 0:
            raise ValueError("C1 and C2 must be non-negative")
        if self.optimizer not in ("adam", "gd"):
            raise ValueError(f"unknown optimizer '{self.optimizer}'")

    def to_dict(self):
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    free_energy: float
    nll: float
    kl: float
    val_nll: float | None = None


@dataclass
class LossTrace:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def to_tsv(self) -> str:
        lines = ["epoch\tfree_energy\tnll\tkl\tval_nll"]
        for r in self.records:
            val = "" if r.val_nll is None else repr(r.val_nll)
            lines.append(f"{r.epoch}\t{r.free_energy!r}\t{r.nll!r}\t{r.kl!r}\t{val}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# optimiser


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(params, grads, state: AdamState, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected adaptive-moment update; returns (new_params, new_state)."""
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grads
    v = beta2 * state.v + (1.0 - beta2) * (grads * grads)
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps), AdamState(m, v, t)


class _Optimizer:
    def __init__(self, config: TrainConfig, size: int):
        self.config = config
        self.state = AdamState.zeros(size)

    def step(self, values, grads):
        c = self.config
        if c.optimizer == "gd":
            return values - c.learning_rate * grads
        values, self.state = adam_step(values, grads, self.state, c.learning_rate, c.beta1, c.beta2, c.eps_opt)
        return values


# ---------------------------------------------------------------------------
# free energy


@dataclass(frozen=True, eq=False)
class BatchNoise:
    weights: WeightNoise
    scores: np.ndarray  # (batch, T, m)

    @classmethod
    def draw(cls, config: BayesNetConfig, batch_size: int, rng: np.random.Generator) -> "BatchNoise":
        weights = WeightNoise.draw(config.d, config.m, rng)
        scores = rng.standard_normal((batch_size, config.data_noise_samples, config.m))
        return cls(weights, scores)


@dataclass(frozen=True)
class FreeEnergy:
    total: float
    nll: float
    kl: float
    smooth: float


def smoothness_penalty(p, m: int, C1: float, C2: float):
    """Eq.-1 style penalties on the means of the score weights (first m output columns)."""
    w = p["out_mu"][:, :m]
    total = 0.0
    if C1:
        total = total + 0.5 * C1 * ag.sum_(w * w)
    if C2 and m > 1:
        diff = w[:, 1:] - w[:, :-1]
        total = total + 0.5 * C2 * ag.sum_(diff * diff)
    return total


def _noisy_log_likelihood(p, X, mask, noise: BatchNoise, config: BayesNetConfig):
    """Per-example log of the noise-averaged sequence likelihood (log-mean-exp over T)."""
    weights = sample_network(p, noise.weights, config)
    scores, sigma_hat = forward(X, weights)
    B, T, m = noise.scores.shape
    a = sample_scores(ag.reshape(scores, (B, 1, m)), ag.reshape(sigma_hat, (B, 1, m)), noise.scores)
    ll = sequence_log_likelihood(a, mask[:, None, :])
    return ag.logsumexp(ll, axis=1) - math.log(T)


def free_energy_terms(p, X, mask, noise: BatchNoise, config: BayesNetConfig, M: int, C1=0.0, C2=0.0):
    """(total, nll, kl, smooth) for one minibatch; ``p`` maps names to Vars or arrays.

    The KL and the smoothness penalty are divided by ``M`` so that one pass over
    all minibatches counts each exactly once.
    """
    nll = -ag.sum_(_noisy_log_likelihood(p, X, mask, noise, config))
    kl = network_kl(p, config.alpha, M)
    smooth = smoothness_penalty(p, config.m, C1, C2) / M
    return nll + kl + smooth, nll, kl, smooth


def free_energy_minibatch(
    params: NetworkParams | ParamVector,
    X,
    targets,
    config: BayesNetConfig,
    M: int,
    rng: np.random.Generator,
    C1: float = 0.0,
    C2: float = 0.0,
) -> FreeEnergy:
    """Evaluate the minibatch free energy with one fresh weight sample from ``rng``.

    ``targets`` is a pair (k, exact) of encoded targets for the rows of ``X``.
    """
    pv = params.to_vector() if isinstance(params, NetworkParams) else params
    X = np.asarray(X, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("minibatch is empty")
    mask = target_mask(*targets, config.m)
    noise = BatchNoise.draw(config, X.shape[0], rng)
    terms = free_energy_terms(pv.arrays(), X, mask, noise, config, M, C1, C2)
    return FreeEnergy(*(float(ag.value(t)) for t in terms))


def _split(n: int, fraction: float, rng: np.random.Generator):
    perm = rng.permutation(n)
    n_val = int(round(n * fraction))
    if fraction > 0 and n_val == 0:
        n_val = 1
    if n_val >= n:
        raise ValueError("validation split leaves no training data")
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def predictive_nll(params: NetworkParams, X, k, exact, config: BayesNetConfig, seed: int, samples: int = 10) -> float:
    """Mean per-example -log p(y|x) under the Monte Carlo predictive distribution."""
    p = params.arrays()
    mask = target_mask(k, exact, config.m)
    T = config.data_noise_samples
    lls = []
    for s in range(samples):
        rng = np.random.default_rng([seed, 7919, s])
        weights = sample_network(p, WeightNoise.draw(config.d, config.m, rng), config)
        scores, sigma_hat = forward(X, weights)
        eps = rng.standard_normal((T, config.m))
        a = sample_scores(scores[:, None, :], sigma_hat[:, None, :], eps[None])
        lls.append(sequence_log_likelihood(a, mask[:, None, :]))
    lls = np.concatenate(lls, axis=1)
    return float(-np.mean(ag.logsumexp(lls, axis=1) - math.log(lls.shape[1])))


def _progress(stream, record: EpochRecord):
    if stream is None:
        return
    val = "" if record.val_nll is None else f"{record.val_nll:.6g}"
    print(
        f"{record.epoch}\t{record.free_energy:.6g}\t{record.nll:.6g}\t{record.kl:.6g}\t{val}",
        file=stream,
        flush=True,
    )


def train(
    dataset: SurvivalDataset,
    grid: TimeGrid,
    net_config: BayesNetConfig,
    config: TrainConfig,
    progress: TextIO | None = None,
) -> tuple[NetworkParams, Standardizer, LossTrace]:
    """Minibatch free-energy minimisation of the spike-and-slab network.

    Fully deterministic given ``config.seed``. The batch size is capped at the
    number of training rows.
    """
    if not np.any(dataset.event):
        raise ValueError("training needs at least one uncensored record")
    if net_config.d != dataset.d or net_config.m != grid.m:
        raise ValueError("network config does not match dataset/grid dimensions")
    if config.alpha is not None and config.alpha != net_config.alpha:
        net_config = BayesNetConfig(**{**net_config.to_dict(), "alpha": config.alpha})
    rng = np.random.default_rng(config.seed)
    train_idx, val_idx = _split(dataset.n, config.validation_fraction, rng)
    standardizer = fit_standardizer(dataset.subset(train_idx))
    Xs = standardizer.apply(dataset.X)
    k, exact = encode_targets(dataset.time, dataset.event, grid)
    mask_all = target_mask(k, exact, grid.m)

    params = NetworkParams.init(net_config, rng)
    pv = params.to_vector()
    trace = LossTrace()
    if config.epochs == 0:
        return params, standardizer, trace

    n_train = train_idx.size
    batch_size = min(config.batch_size, n_train)
    M = math.ceil(n_train / batch_size)
    opt = _Optimizer(config, pv.values.size)
    best = (math.inf, pv, 0)
    for epoch in range(1, config.epochs + 1):
        order = train_idx[rng.permutation(n_train)]
        sums = np.zeros(3)
        for b in range(M):
            idx = order[b * batch_size : (b + 1) * batch_size]
            noise = BatchNoise.draw(net_config, idx.size, rng)
            parts = {}

            def loss_fn(p):
                total, nll, kl, _ = free_energy_terms(
                    p, Xs[idx], mask_all[idx], noise, net_config, M, config.C1, config.C2
                )
                parts["nll"], parts["kl"] = nll, kl
                return total

            try:
                result = ag.grad(loss_fn, pv)
            except NonFiniteError as exc:
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {b + 1} ({exc})",
                    epoch=epoch,
                    batch=b + 1,
                    last_good_epoch=epoch - 1,
                ) from exc
            if not np.all(np.isfinite(result.grad)):
                raise TrainingError(
                    f"non-finite gradient at epoch {epoch}, batch {b + 1}",
                    epoch=epoch,
                    batch=b + 1,
                    last_good_epoch=epoch - 1,
                )
            sums += (result.value, float(ag.value(parts["nll"])), float(ag.value(parts["kl"])))
            pv = pv.with_values(opt.step(pv.values, result.grad))
        val_nll = None
        if val_idx.size:
            val_nll = predictive_nll(
                NetworkParams.from_vector(pv), Xs[val_idx], k[val_idx], exact[val_idx], net_config, config.seed
            )
        record = EpochRecord(epoch, float(sums[0]), float(sums[1]), float(sums[2]), val_nll)
        trace.records.append(record)
        _progress(progress, record)
        if config.patience is not None and val_nll is not None:
            if val_nll < best[0]:
                best = (val_nll, pv, epoch)
            elif epoch - best[2] >= config.patience:
                pv = best[1]
                break
    return NetworkParams.from_vector(pv), standardizer, trace


# ---------------------------------------------------------------------------
# deterministic baselines


def fit_mtlr_arrays(X, k, exact, m: int, C1: float, C2: float, max_iter: int = 2000):
    """Minimise the regularised MTLR loss over (theta, b) with L-BFGS.

    Returns (theta of shape (m, d), b of shape (m,)).
    """
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    pv = ParamVector.from_arrays({"theta": np.zeros((m, d)), "b": np.zeros(m)})

    def objective(values):
        r = ag.grad(lambda p: mtlr_loss(p["theta"], p["b"], X, k, exact, C1, C2), pv.with_values(values))
        return r.value, r.grad

    res = minimize(objective, pv.values, jac=True, method="L-BFGS-B", options={"maxiter": max_iter, "gtol": 1e-9, "ftol": 1e-15})
    if not np.all(np.isfinite(res.x)):
        raise TrainingError("MTLR optimisation produced non-finite parameters")
    fitted = pv.with_values(res.x)
    return fitted["theta"].copy(), fitted["b"].copy()


def fit_mtlr(dataset: SurvivalDataset, grid: TimeGrid, C1: float, C2: float, config: TrainConfig | None = None):
    """Linear MTLR on standardized covariates; returns (theta, b, standardizer)."""
    if not np.any(dataset.event):
        raise ValueError("training needs at least one uncensored record")
    config = config or TrainConfig()
    standardizer = fit_standardizer(dataset)
    k, exact = encode_targets(dataset.time, dataset.event, grid)
    theta, b = fit_mtlr_arrays(standardizer.apply(dataset.X), k, exact, grid.m, C1, C2, max(config.epochs, 2000))
    return theta, b, standardizer


@dataclass(frozen=True, eq=False)
class PointNetwork:
    """Point-estimate network: gate (d,), weights (d, m), bias (m,)."""

    gate: np.ndarray
    weights: np.ndarray
    bias: np.ndarray

    def scores(self, X):
        return ag.relu(np.asarray(X, dtype=float) * self.gate) @ self.weights + self.bias

    def arrays(self):
        return {"gate": self.gate, "weights": self.weights, "bias": self.bias}


def neural_mtlr_loss(p, X, mask, M: int, C1: float, C2: float):
    a = ag.relu(X * p["gate"]) @ p["weights"] + p["bias"]
    nll = -ag.sum_(sequence_log_likelihood(a, mask))
    w = p["weights"]
    penalty = 0.0
    if C1:
        penalty = penalty + 0.5 * C1 * ag.sum_(w * w)
    if C2 and ag.value(w).shape[1] > 1:
        diff = w[:, 1:] - w[:, :-1]
        penalty = penalty + 0.5 * C2 * ag.sum_(diff * diff)
    return nll + penalty / M


def fit_neural_mtlr(
    dataset: SurvivalDataset, grid: TimeGrid, config: TrainConfig, progress: TextIO | None = None
) -> tuple[PointNetwork, Standardizer, LossTrace]:
    """Train the gated network as a point estimate (no sampling, no noise head)."""
    if not np.any(dataset.event):
        raise ValueError("training needs at least one uncensored record")
    rng = np.random.default_rng(config.seed)
    train_idx, val_idx = _split(dataset.n, config.validation_fraction, rng)
    standardizer = fit_standardizer(dataset.subset(train_idx))
    Xs = standardizer.apply(dataset.X)
    k, exact = encode_targets(dataset.time, dataset.event, grid)
    mask = target_mask(k, exact, grid.m)
    d, m = dataset.d, grid.m
    pv = ParamVector.from_arrays(
        {
            "gate": rng.normal(INIT_GATE_MU, INIT_MU_SCALE, d),
            "weights": rng.normal(0.0, INIT_MU_SCALE, (d, m)),
            "bias": np.zeros(m),
        }
    )
    trace = LossTrace()
    n_train = train_idx.size
    batch_size = min(config.batch_size, n_train)
    M = math.ceil(n_train / batch_size)
    opt = _Optimizer(config, pv.values.size)
    for epoch in range(1, config.epochs + 1):
        order = train_idx[rng.permutation(n_train)]
        total = 0.0
        for b in range(M):
            idx = order[b * batch_size : (b + 1) * batch_size]
            result = ag.grad(lambda p: neural_mtlr_loss(p, Xs[idx], mask[idx], M, config.C1, config.C2), pv)
            total += result.value
            pv = pv.with_values(opt.step(pv.values, result.grad))
        val_nll = None
        if val_idx.size:
            a = PointNetwork(pv["gate"], pv["weights"], pv["bias"]).scores(Xs[val_idx])
            val_nll = float(-np.mean(sequence_log_likelihood(a, mask[val_idx])))
        record = EpochRecord(epoch, total, total, 0.0, val_nll)
        trace.records.append(record)
        _progress(progress, record)
    net = PointNetwork(pv["gate"].copy(), pv["weights"].copy(), pv["bias"].copy())
    return net, standardizer, trace
