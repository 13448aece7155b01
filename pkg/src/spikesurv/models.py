"""A fitted model of any kind behind one prediction interface."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .cox import CoxModel, cox_fit, cox_survival
from .dataset import Standardizer, SurvivalDataset, TimeGrid
from .mtlr import survival_curves
from .training import PointNetwork, TrainConfig, fit_mtlr, fit_neural_mtlr, train
from .variational import BayesNetConfig, NetworkParams, SurvivalPrediction, check_monotone, predict_mc

KINDS = ("bayes_mtlr", "mtlr", "neural_mtlr", "cox")


@dataclass(frozen=True, eq=False)
class LinearMTLR:
    theta: np.ndarray  # (m, d)
    b: np.ndarray  # (m,)

    def scores(self, X):
        return np.asarray(X, dtype=float) @ self.theta.T + self.b


@dataclass(frozen=True, eq=False)
class SurvivalModel:
    kind: str
    feature_names: tuple[str, ...]
    grid: TimeGrid
    standardizer: Standardizer
    params: object  # NetworkParams | LinearMTLR | PointNetwork | CoxModel
    net_config: BayesNetConfig | None = None
    train_config: TrainConfig | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind '{self.kind}'")
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def stochastic(self) -> bool:
        return self.kind == "bayes_mtlr"

    def predict(self, X, seed: int = 0, weight_samples=None, noise_samples=None) -> SurvivalPrediction:
        """Predict from raw (unstandardized) covariates in ``feature_names`` order."""
        Z = self.standardizer.apply(np.atleast_2d(np.asarray(X, dtype=float)))
        if self.kind == "bayes_mtlr":
            return predict_mc(Z, self.params, self.net_config, self.grid, seed, weight_samples, noise_samples)
        if self.kind == "cox":
            mean = cox_survival(self.params, Z, self.grid, standardized=True)
        else:
            mean = survival_curves(self.params.scores(Z))
        check_monotone(mean, self.kind)
        zeros = np.zeros_like(mean)
        return SurvivalPrediction(self.grid, mean, zeros, zeros.copy(), 1, 1)

    def predict_dataset(self, dataset: SurvivalDataset, **kwargs) -> SurvivalPrediction:
        """Predict for a cohort whose columns are matched to the model by name."""
        return self.predict(dataset.select_features(self.feature_names).X, **kwargs)


def fit_model(
    kind: str,
    dataset: SurvivalDataset,
    grid: TimeGrid,
    train_config: TrainConfig,
    net_config: BayesNetConfig | None = None,
    progress: TextIO | None = None,
):
    """Fit one model kind; returns (SurvivalModel, LossTrace or None)."""
    if kind not in KINDS:
        raise ValueError(f"unknown model kind '{kind}'")
    names = dataset.feature_names
    seed = train_config.seed
    if kind == "bayes_mtlr":
        net_config = net_config or BayesNetConfig(d=dataset.d, m=grid.m)
        if train_config.alpha is not None:
            net_config = BayesNetConfig(**{**net_config.to_dict(), "alpha": train_config.alpha})
        params, standardizer, trace = train(dataset, grid, net_config, train_config, progress)
        return SurvivalModel(kind, names, grid, standardizer, params, net_config, train_config, seed), trace
    if kind == "mtlr":
        theta, b, standardizer = fit_mtlr(dataset, grid, train_config.C1, train_config.C2, train_config)
        return SurvivalModel(kind, names, grid, standardizer, LinearMTLR(theta, b), None, train_config, seed), None
    if kind == "neural_mtlr":
        net, standardizer, trace = fit_neural_mtlr(dataset, grid, train_config, progress)
        return SurvivalModel(kind, names, grid, standardizer, net, None, train_config, seed), trace
    if kind == "cox":
        cox = cox_fit(dataset)
        return SurvivalModel(kind, names, grid, cox.standardizer, cox, None, None, seed), None
    raise ValueError(f"unknown model kind '{kind}'")


__all__ = ["KINDS", "LinearMTLR", "SurvivalModel", "fit_model", "CoxModel", "NetworkParams", "PointNetwork"]
