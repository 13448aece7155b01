"""Bayesian neural MTLR survival models with spike-and-slab weights."""

from .dataset import (
    EncodedTarget,
    Standardizer,
    SurvivalDataset,
    SurvivalRecord,
    TimeGrid,
    build_time_grid,
    encode_target,
    fit_standardizer,
    generate_synthetic,
    load_csv,
    sample_csv_path,
    write_csv,
)
from .models import SurvivalModel, fit_model
from .training import TrainConfig, train
from .variational import BayesNetConfig, NetworkParams, SurvivalPrediction, predict_mc

__version__ = "0.1.0"

__all__ = [
    "BayesNetConfig",
    "EncodedTarget",
    "NetworkParams",
    "Standardizer",
    "SurvivalDataset",
    "SurvivalModel",
    "SurvivalPrediction",
    "SurvivalRecord",
    "TimeGrid",
    "TrainConfig",
    "build_time_grid",
    "encode_target",
    "fit_model",
    "fit_standardizer",
    "generate_synthetic",
    "load_csv",
    "predict_mc",
    "sample_csv_path",
    "train",
    "write_csv",
]
