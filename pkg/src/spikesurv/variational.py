"""Spike-and-slab Bayesian network for MTLR survival prediction.

Architecture: each standardized covariate passes through its own gated weight
(one-to-one, no bias) and a ReLU; a dense layer then maps the d hidden units to
2m outputs. The first m outputs are interval scores, the last m are log-variances
of Gaussian noise added to those scores (the data-uncertainty head).

Every weight except the output biases carries a spike-and-slab posterior with
mean ``mu``, scale ``softplus(rho)`` and inclusion probability
``sigmoid(gate_logit)``. Gates are sampled with a temperature-relaxed threshold so
the sample stays differentiable in the inclusion probability.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping

import numpy as np

from . import autograd as ag
from .autograd import ParamVector
from .dataset import TimeGrid
from .errors import DimensionError, NumericalError
from .mtlr import survival_curves

GAMMA_MIN = 1e-6
GAMMA_MAX = 1.0 - 1e-6
LOGVAR_CLAMP = 10.0

INIT_RHO = -3.0
INIT_MU_SCALE = 0.1
INIT_GATE_MU = 1.0  # gates start as the identity on each covariate's positive part
INIT_GATE_LOGIT = 4.6


@dataclass(frozen=True)
class SpikeSlabParam:
    mu: float
    rho: float
    gate_logit: float

    @property
    def sigma(self) -> float:
        return float(ag.softplus(self.rho))

    @property
    def gamma(self) -> float:
        return float(inclusion_prob(self.gate_logit))


@dataclass(frozen=True)
class BayesNetConfig:
    d: int
    m: int
    alpha: float = 0.5
    gate_temperature: float = 10.0
    data_noise_samples: int = 10
    weight_samples: int = 50

    def __post_init__(self):
        if self.d < 1 or self.m < 1:
            raise ValueError("d and m must be positive")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.gate_temperature <= 0:
            raise ValueError("gate_temperature must be positive")
        if self.data_noise_samples < 1 or self.weight_samples < 1:
            raise ValueError("sample counts must be positive")

    @property
    def dense(self) -> bool:
        """alpha = 1: gates pinned open, plain Gaussian posterior."""
        return self.alpha == 1.0

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class NetworkParams:
    """Variational parameters; arrays are (d,), (d, 2m) and (2m,)."""

    gate_mu: np.ndarray
    gate_rho: np.ndarray
    gate_logit: np.ndarray
    out_mu: np.ndarray
    out_rho: np.ndarray
    out_logit: np.ndarray
    bias_mu: np.ndarray
    bias_rho: np.ndarray

    FIELDS = (
        "gate_mu",
        "gate_rho",
        "gate_logit",
        "out_mu",
        "out_rho",
        "out_logit",
        "bias_mu",
        "bias_rho",
    )

    def __post_init__(self):
        for name in self.FIELDS:
            arr = np.array(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(arr)):
                raise NumericalError(f"parameter '{name}' is not finite")
            object.__setattr__(self, name, arr)
        d = self.gate_mu.shape[0]
        two_m = self.bias_mu.shape[0]
        expected = {"gate": (d,), "out": (d, two_m), "bias": (two_m,)}
        for name in self.FIELDS:
            want = expected[name.split("_")[0]]
            if getattr(self, name).shape != want:
                raise DimensionError(f"parameter '{name}' has shape {getattr(self, name).shape}, expected {want}")
        if two_m % 2:
            raise DimensionError("output layer must have an even number of units")

    @property
    def d(self) -> int:
        return self.gate_mu.shape[0]

    @property
    def m(self) -> int:
        return self.bias_mu.shape[0] // 2

    @classmethod
    def init(cls, config: BayesNetConfig, rng: np.random.Generator) -> "NetworkParams":
        d, two_m = config.d, 2 * config.m
        return cls(
            gate_mu=rng.normal(INIT_GATE_MU, INIT_MU_SCALE, d),
            gate_rho=np.full(d, INIT_RHO),
            gate_logit=np.full(d, INIT_GATE_LOGIT),
            out_mu=rng.normal(0.0, INIT_MU_SCALE, (d, two_m)),
            out_rho=np.full((d, two_m), INIT_RHO),
            out_logit=np.full((d, two_m), INIT_GATE_LOGIT),
            bias_mu=np.zeros(two_m),
            bias_rho=np.full(two_m, INIT_RHO),
        )

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.FIELDS}

    def to_vector(self) -> ParamVector:
        return ParamVector.from_arrays(self.arrays())

    @classmethod
    def from_vector(cls, pv: ParamVector) -> "NetworkParams":
        return cls(**{name: pv[name].copy() for name in cls.FIELDS})

    def gate_params(self) -> list[SpikeSlabParam]:
        return [SpikeSlabParam(*map(float, t)) for t in zip(self.gate_mu, self.gate_rho, self.gate_logit)]

    def spike_slab_params(self) -> list[SpikeSlabParam]:
        """All gated weights: the gate layer then the output weights (row-major)."""
        out = zip(self.out_mu.ravel(), self.out_rho.ravel(), self.out_logit.ravel())
        return self.gate_params() + [SpikeSlabParam(*map(float, t)) for t in out]


def inclusion_prob(gate_logit):
    return ag.clip(ag.sigmoid(gate_logit), GAMMA_MIN, GAMMA_MAX)


def sample_weight(p: SpikeSlabParam, eta: float, eps: float, c: float, dense: bool = False) -> float:
    """One reparameterised draw: relaxed gate times slab sample."""
    if c <= 0:
        raise ValueError("gate temperature must be positive")
    return float(_sample(p.mu, p.rho, p.gate_logit, eta, eps, c, dense))


def _sample(mu, rho, gate_logit, eta, eps, c, dense):
    slab = mu + ag.softplus(rho) * eps
    if dense:
        return slab
    gate = ag.sigmoid(c * (eta - (1.0 - inclusion_prob(gate_logit))))
    return gate * slab


def kl_terms(mu, sigma, gamma, alpha):
    """Per-weight divergence terms, elementwise, as used in the free energy.

    ``gamma/2 (mu^2 + sigma^2 - log sigma^2) + (1-gamma) log((1-alpha)/(1-gamma))
    + gamma log(alpha/gamma)``. With alpha = 1 only the Gaussian part remains.
    """
    var = sigma * sigma
    gauss = 0.5 * (mu * mu + var - ag.log(var))
    if alpha == 1.0:
        return gauss
    return (
        gamma * gauss
        + (1.0 - gamma) * (np.log(1.0 - alpha) - ag.log(1.0 - gamma))
        + gamma * (np.log(alpha) - ag.log(gamma))
    )


def kl_spike_slab(params: Iterable[SpikeSlabParam], alpha: float, M: int = 1) -> float:
    """Sum of :func:`kl_terms` over ``params`` divided by ``M``."""
    params = list(params)
    if not params:
        return 0.0
    mu = np.array([p.mu for p in params])
    sigma = ag.softplus(np.array([p.rho for p in params]))
    gamma = np.ones_like(mu) if alpha == 1.0 else inclusion_prob(np.array([p.gate_logit for p in params]))
    return float(np.sum(kl_terms(mu, sigma, gamma, alpha)) / M)


def network_kl(p: Mapping, alpha: float, M: int = 1):
    """KL part of the free energy for a full parameter set (Vars or arrays).

    Output biases are never gated: they contribute the Gaussian term only.
    """
    dense = alpha == 1.0
    total = 0.0
    for prefix in ("gate", "out"):
        mu, sigma = p[f"{prefix}_mu"], ag.softplus(p[f"{prefix}_rho"])
        gamma = 1.0 if dense else inclusion_prob(p[f"{prefix}_logit"])
        total = total + ag.sum_(kl_terms(mu, sigma, gamma, alpha))
    total = total + ag.sum_(kl_terms(p["bias_mu"], ag.softplus(p["bias_rho"]), 1.0, 1.0))
    return total / M


@dataclass(frozen=True, eq=False)
class WeightNoise:
    """Uniform and normal draws for one weight sample of the whole network."""

    gate_eta: np.ndarray
    gate_eps: np.ndarray
    out_eta: np.ndarray
    out_eps: np.ndarray
    bias_eps: np.ndarray

    @classmethod
    def draw(cls, d: int, m: int, rng: np.random.Generator) -> "WeightNoise":
        return cls(
            gate_eta=rng.random(d),
            gate_eps=rng.standard_normal(d),
            out_eta=rng.random((d, 2 * m)),
            out_eps=rng.standard_normal((d, 2 * m)),
            bias_eps=rng.standard_normal(2 * m),
        )


@dataclass(frozen=True, eq=False)
class SampledWeights:
    gate: object  # (d,)
    out: object  # (d, 2m)
    bias: object  # (2m,)


def sample_network(p: Mapping, noise: WeightNoise, config: BayesNetConfig) -> SampledWeights:
    c, dense = config.gate_temperature, config.dense
    return SampledWeights(
        gate=_sample(p["gate_mu"], p["gate_rho"], p["gate_logit"], noise.gate_eta, noise.gate_eps, c, dense),
        out=_sample(p["out_mu"], p["out_rho"], p["out_logit"], noise.out_eta, noise.out_eps, c, dense),
        bias=p["bias_mu"] + ag.softplus(p["bias_rho"]) * noise.bias_eps,
    )


def forward(x, weights: SampledWeights):
    """Network pass for covariates ``x`` of shape (..., d).

    Returns interval scores and the noise scale of each score, both (..., m).
    """
    gate_v = ag.value(weights.gate)
    if np.shape(x)[-1] != gate_v.shape[0]:
        raise DimensionError(f"expected {gate_v.shape[0]} covariates, got {np.shape(x)[-1]}")
    hidden = ag.relu(x * weights.gate)
    out = hidden @ weights.out + weights.bias
    m = ag.value(weights.bias).shape[0] // 2
    scores = out[..., :m]
    logvar = ag.clip(out[..., m:], -LOGVAR_CLAMP, LOGVAR_CLAMP)
    return scores, ag.exp(0.5 * logvar)


def sample_scores(scores, sigma_hat, eps):
    """Noisy interval scores ``scores + sigma_hat * eps``."""
    return scores + sigma_hat * eps


@dataclass(frozen=True, eq=False)
class SurvivalPrediction:
    """Predictive survival curves with epistemic and aleatoric spreads.

    Arrays have shape (m,) for one patient or (n, m) for a cohort.
    """

    grid: TimeGrid
    mean: np.ndarray
    model_std: np.ndarray
    data_std: np.ndarray
    weight_samples: int = 1
    noise_samples: int = 1
    curves: np.ndarray | None = field(default=None, repr=False)

    def __len__(self):
        return 1 if self.mean.ndim == 1 else self.mean.shape[0]

    def __getitem__(self, i) -> "SurvivalPrediction":
        if self.mean.ndim == 1:
            raise IndexError("single-patient prediction is not indexable")
        return SurvivalPrediction(
            self.grid,
            self.mean[i],
            self.model_std[i],
            self.data_std[i],
            self.weight_samples,
            self.noise_samples,
            None if self.curves is None else self.curves[:, i],
        )


def check_monotone(curves, where="prediction"):
    """Raise if any curve increases across the grid."""
    if np.any(np.diff(curves, axis=-1) > 0):
        raise NumericalError(f"non-monotone survival curve in {where}")


def predict_mc(
    X,
    params: NetworkParams,
    config: BayesNetConfig,
    grid: TimeGrid,
    seed: int = 0,
    weight_samples: int | None = None,
    noise_samples: int | None = None,
    keep_curves: bool = False,
) -> SurvivalPrediction:
    """Monte Carlo predictive distribution for standardized covariates ``X``.

    For each weight sample s the network is drawn once (from the random stream
    seeded by ``(seed, s)``) and shared by every patient. One set of T score-noise
    draws (stream ``seed``) is shared by all weight samples, so finite-T noise
    error does not leak into the epistemic spread, and a patient's prediction does
    not depend on who else is in ``X``.
    The epistemic spread is the std over weight samples of the noise-averaged
    curves; the aleatoric spread is the mean over weight samples of the std over
    noise draws.
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != params.d:
        raise DimensionError(f"expected {params.d} covariates, got {X.shape[1]}")
    S = config.weight_samples if weight_samples is None else int(weight_samples)
    T = config.data_noise_samples if noise_samples is None else int(noise_samples)
    if S < 1 or T < 1:
        raise ValueError("sample counts must be positive")
    p = params.arrays()
    d, m = params.d, params.m
    per_sample = np.empty((S, X.shape[0], m))
    noise_std = np.zeros((X.shape[0], m))
    kept = []
    eps = np.random.default_rng([seed]).standard_normal((T, m))
    for s in range(S):
        rng = np.random.default_rng([seed, s])
        weights = sample_network(p, WeightNoise.draw(d, m, rng), config)
        scores, sigma_hat = forward(X, weights)
        a = sample_scores(scores[:, None, :], sigma_hat[:, None, :], eps[None, :, :])
        curves = survival_curves(a)
        check_monotone(curves, "predict_mc")
        per_sample[s] = curves.mean(axis=1)
        noise_std += curves.std(axis=1)
        if keep_curves:
            kept.append(curves)
    mean = per_sample.mean(axis=0)
    model_std = per_sample.std(axis=0)
    data_std = noise_std / S
    curves = np.stack(kept) if keep_curves else None
    if single:
        mean, model_std, data_std = mean[0], model_std[0], data_std[0]
        curves = None if curves is None else curves[:, 0]
    return SurvivalPrediction(grid, mean, model_std, data_std, S, T, curves)
