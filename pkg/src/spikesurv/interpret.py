"""Feature ranking from the gate posterior and out-of-distribution scoring."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import SurvivalDataset
from .errors import EmptyDatasetError
from .variational import NetworkParams, SurvivalPrediction, inclusion_prob

DEFAULT_OOD_SAMPLES = 50


@dataclass(frozen=True)
class FeatureImportance:
    index: int
    name: str
    mu: float
    sigma: float
    gamma: float
    snr: float


@dataclass(frozen=True)
class ImportanceReport:
    features: tuple[FeatureImportance, ...]

    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def top(self, k: int) -> list[str]:
        return self.names()[:k]


def feature_importance(params: NetworkParams, feature_names) -> ImportanceReport:
    """Rank features by ``|mu| / (sigma * gamma)`` of their gate weight, descending.

    Ties keep feature order.
    """
    names = list(feature_names)
    if len(names) != params.d:
        raise ValueError(f"{len(names)} names for {params.d} gate weights")
    mu = params.gate_mu
    sigma = np.logaddexp(0.0, params.gate_rho)
    gamma = inclusion_prob(params.gate_logit)
    snr = np.abs(mu) / (sigma * gamma)
    order = sorted(range(len(names)), key=lambda i: (-snr[i], i))
    return ImportanceReport(
        tuple(
            FeatureImportance(i, names[i], float(mu[i]), float(sigma[i]), float(gamma[i]), float(snr[i])) for i in order
        )
    )


def mean_uncertainty_score(prediction: SurvivalPrediction):
    """Average over time points of the across-weight-sample std of survival."""
    if prediction.weight_samples < 2:
        raise ValueError("uncertainty score needs predictions from at least 2 weight samples")
    return np.mean(prediction.model_std, axis=-1)


@dataclass(frozen=True, eq=False)
class OodReport:
    scores: np.ndarray
    mean: float
    std: float

    def __len__(self):
        return self.scores.size


def cohort_ood_report(model, dataset: SurvivalDataset, S: int = DEFAULT_OOD_SAMPLES, seed: int = 0) -> OodReport:
    """Per-record uncertainty scores for a cohort and their mean and std.

    ``model`` is a fitted Bayesian :class:`~spikesurv.models.SurvivalModel`.
    """
    if dataset is None or dataset.n == 0:
        raise EmptyDatasetError("OOD report needs a non-empty cohort")
    prediction = model.predict_dataset(dataset, seed=seed, weight_samples=S)
    scores = np.atleast_1d(mean_uncertainty_score(prediction))
    return OodReport(scores, float(scores.mean()), float(scores.std()))
