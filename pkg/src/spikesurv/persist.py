"""Model files: versioned JSON with bit-exact float round trips.

Layout (format_version 1)::

    {
      "format_version": 1,
      "model_kind": "bayes_mtlr" | "mtlr" | "neural_mtlr" | "cox",
      "feature_names": [...],
      "grid": {"points": [...], "strategy": "..."},
      "standardizer": {"means": [...], "stds": [...]},
      "params": {name: nested lists},
      "net_config": {...} | null,
      "train_config": {...} | null,
      "seed": int
    }

Python's float repr is the shortest string that parses back to the same double,
so values survive save/load unchanged.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .cox import CoxModel
from .dataset import Standardizer, TimeGrid
from .errors import ModelFormatError, SpikesurvError
from .metrics import StepFunction
from .models import KINDS, LinearMTLR, SurvivalModel
from .training import PointNetwork, TrainConfig
from .variational import BayesNetConfig, NetworkParams

FORMAT_VERSION = 1


def _params_to_dict(model: SurvivalModel) -> dict:
    p = model.params
    if model.kind == "bayes_mtlr":
        arrays = p.arrays()
    elif model.kind == "mtlr":
        arrays = {"theta": p.theta, "b": p.b}
    elif model.kind == "neural_mtlr":
        arrays = p.arrays()
    else:
        arrays = {
            "beta": p.beta,
            "cumhaz_times": p.baseline_cumhaz.times,
            "cumhaz_values": p.baseline_cumhaz.values,
        }
    return {k: np.asarray(v, dtype=float).tolist() for k, v in arrays.items()}


def to_dict(model: SurvivalModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "model_kind": model.kind,
        "feature_names": list(model.feature_names),
        "grid": {"points": model.grid.points.tolist(), "strategy": model.grid.strategy},
        "standardizer": {
            "means": model.standardizer.means.tolist(),
            "stds": model.standardizer.stds.tolist(),
        },
        "params": _params_to_dict(model),
        "net_config": None if model.net_config is None else model.net_config.to_dict(),
        "train_config": None if model.train_config is None else model.train_config.to_dict(),
        "seed": int(model.seed),
    }


def dumps(model: SurvivalModel) -> str:
    return json.dumps(to_dict(model), indent=1, sort_keys=True, allow_nan=False) + "\n"


def save(model: SurvivalModel, path) -> None:
    Path(path).write_text(dumps(model), encoding="utf-8")


def _reject_constant(name):
    raise ValueError(f"non-finite value {name}")


def _arr(params, key, ndim):
    if key not in params:
        raise ModelFormatError(f"missing parameter array '{key}'")
    arr = np.asarray(params[key], dtype=float)
    if arr.ndim != ndim and arr.size:
        raise ModelFormatError(f"parameter '{key}' should be {ndim}-D, got shape {arr.shape}")
    return arr


def from_dict(doc: dict) -> SurvivalModel:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model file version {version!r} (this build reads {FORMAT_VERSION})")
    kind = doc.get("model_kind")
    if kind not in KINDS:
        raise ModelFormatError(f"unknown model kind {kind!r}")
    try:
        names = tuple(doc["feature_names"])
        grid = TimeGrid(doc["grid"]["points"], doc["grid"].get("strategy", "given"))
        std = Standardizer(doc["standardizer"]["means"], doc["standardizer"]["stds"])
        p = doc["params"]
        d, m = len(names), grid.m
        net_config = None if doc.get("net_config") is None else BayesNetConfig(**doc["net_config"])
        train_config = None if doc.get("train_config") is None else TrainConfig(**doc["train_config"])
        if std.means.size != d:
            raise ModelFormatError(f"standardizer has {std.means.size} columns for {d} features")
        if kind == "bayes_mtlr":
            params = NetworkParams(**{k: _arr(p, k, 2 if k.startswith("out") else 1) for k in NetworkParams.FIELDS})
            if params.d != d or params.m != m or net_config is None or (net_config.d, net_config.m) != (d, m):
                raise ModelFormatError("network shapes disagree with feature names / grid")
        elif kind == "mtlr":
            theta = _arr(p, "theta", 2).reshape(m, d)
            b = _arr(p, "b", 1)
            if b.shape != (m,):
                raise ModelFormatError("bias length disagrees with grid")
            params = LinearMTLR(theta, b)
        elif kind == "neural_mtlr":
            params = PointNetwork(_arr(p, "gate", 1), _arr(p, "weights", 2), _arr(p, "bias", 1))
            if params.gate.shape != (d,) or params.weights.shape != (d, m) or params.bias.shape != (m,):
                raise ModelFormatError("network shapes disagree with feature names / grid")
        else:
            beta = _arr(p, "beta", 1)
            times, values = _arr(p, "cumhaz_times", 1), _arr(p, "cumhaz_values", 1)
            if beta.shape != (d,) or times.shape != values.shape:
                raise ModelFormatError("Cox arrays have inconsistent shapes")
            params = CoxModel(beta, StepFunction(times, values, initial=0.0), std)
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError, SpikesurvError) as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from exc
    return SurvivalModel(kind, names, grid, std, params, net_config, train_config, int(doc.get("seed", 0)))


def loads(text: str) -> SurvivalModel:
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file parse error at byte offset {exc.pos}: {exc.msg}", exc.pos) from exc
    except ValueError as exc:
        raise ModelFormatError(f"model file contains a {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError("model file must hold a JSON object")
    return from_dict(doc)


def load(path) -> SurvivalModel:
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError as exc:
        raise ModelFormatError(f"model file has a non-ASCII byte at offset {exc.start}", exc.start) from exc
    return loads(text)
