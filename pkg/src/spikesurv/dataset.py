"""Survival data: CSV ingestion, standardization, time grids and target encoding."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import DimensionError, EmptyDatasetError, ParseError, SchemaError

EXACT = "exact"
CENSORED = "censored"


@dataclass(frozen=True)
class SurvivalRecord:
    covariates: np.ndarray
    time: float
    event: bool


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """Column-oriented survival cohort.

    ``X`` has shape (n, d); ``time`` and ``event`` have shape (n,).
    """

    X: np.ndarray
    time: np.ndarray
    event: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        time = np.array(self.time, dtype=float).reshape(-1)
        event = np.array(self.event, dtype=bool).reshape(-1)
        names = tuple(str(s) for s in self.feature_names)
        if X.ndim != 2:
            raise DimensionError(f"covariates must be 2-D, got shape {X.shape}")
        n, d = X.shape
        if n == 0:
            raise EmptyDatasetError("dataset has no records")
        if d == 0:
            raise EmptyDatasetError("dataset has no covariate columns")
        if time.shape != (n,) or event.shape != (n,):
            raise DimensionError("time/event length does not match number of rows")
        if len(names) != d:
            raise DimensionError(f"{len(names)} feature names for {d} covariates")
        if len(set(names)) != d:
            raise SchemaError("feature names must be unique")
        if not np.all(np.isfinite(X)):
            raise ParseError("covariates contain non-finite values")
        if not np.all(np.isfinite(time)) or np.any(time < 0):
            raise ParseError("times must be finite and non-negative")
        for arr in (X, time, event):
            arr.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "event", event)
        object.__setattr__(self, "feature_names", names)

    @classmethod
    def from_records(cls, records: Sequence[SurvivalRecord], feature_names):
        if not records:
            raise EmptyDatasetError("dataset has no records")
        X = np.array([r.covariates for r in records], dtype=float)
        return cls(X, [r.time for r in records], [r.event for r in records], feature_names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __len__(self):
        return self.n

    @property
    def records(self) -> list[SurvivalRecord]:
        return list(self)

    def __iter__(self) -> Iterator[SurvivalRecord]:
        for i in range(self.n):
            yield SurvivalRecord(self.X[i].copy(), float(self.time[i]), bool(self.event[i]))

    def subset(self, index) -> "SurvivalDataset":
        index = np.asarray(index)
        return SurvivalDataset(self.X[index], self.time[index], self.event[index], self.feature_names)

    def select_features(self, names: Sequence[str]) -> "SurvivalDataset":
        """Reorder columns to ``names``; raises SchemaError listing mismatches."""
        missing = [s for s in names if s not in self.feature_names]
        extra = [s for s in self.feature_names if s not in names]
        if missing or extra:
            raise SchemaError(
                f"feature mismatch: missing {missing or '[]'}, extra {extra or '[]'}"
            )
        cols = [self.feature_names.index(s) for s in names]
        return SurvivalDataset(self.X[:, cols], self.time, self.event, tuple(names))


def _parse_real(text, row, column):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"row {row}, column '{column}': non-numeric value {text!r}", row, column) from None
    if not math.isfinite(value):
        raise ParseError(f"row {row}, column '{column}': non-finite value {text!r}", row, column)
    return value


def load_csv(path, time_col: str = "time", event_col: str = "event") -> SurvivalDataset:
    """Read a comma-separated cohort file with one header row.

    Every column other than ``time_col`` and ``event_col`` is a covariate, kept in
    file order. Rows are numbered from 1 (the first data row) in error messages.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyDatasetError(f"{path}: file is empty") from None
        for col in (time_col, event_col):
            if col not in header:
                raise SchemaError(f"{path}: missing column '{col}' (have {header})")
        if len(set(header)) != len(header):
            raise SchemaError(f"{path}: duplicate column names in header")
        t_idx, e_idx = header.index(time_col), header.index(event_col)
        feat_idx = [j for j in range(len(header)) if j not in (t_idx, e_idx)]
        if not feat_idx:
            raise EmptyDatasetError(f"{path}: no covariate columns besides '{time_col}' and '{event_col}'")

        X, times, events = [], [], []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"row {row_no}: expected {len(header)} fields, got {len(row)}", row_no, None
                )
            t = _parse_real(row[t_idx], row_no, time_col)
            if t < 0:
                raise ParseError(f"row {row_no}, column '{time_col}': negative time {t}", row_no, time_col)
            e = _parse_real(row[e_idx], row_no, event_col)
            if e not in (0.0, 1.0):
                raise ParseError(
                    f"row {row_no}, column '{event_col}': event must be 0 or 1, got {row[e_idx]!r}",
                    row_no,
                    event_col,
                )
            X.append([_parse_real(row[j], row_no, header[j]) for j in feat_idx])
            times.append(t)
            events.append(e == 1.0)
    if not X:
        raise EmptyDatasetError(f"{path}: no data rows")
    return SurvivalDataset(np.array(X), np.array(times), np.array(events), [header[j] for j in feat_idx])


def load_covariates(path, drop=("time", "event")) -> tuple[np.ndarray, tuple[str, ...]]:
    """Read only the covariate columns of a CSV file (label columns optional)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyDatasetError(f"{path}: file is empty") from None
        cols = [j for j, h in enumerate(header) if h not in drop]
        rows = []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"row {row_no}: expected {len(header)} fields, got {len(row)}", row_no, None)
            rows.append([_parse_real(row[j], row_no, header[j]) for j in cols])
    if not rows:
        raise EmptyDatasetError(f"{path}: no data rows")
    return np.array(rows, dtype=float).reshape(len(rows), len(cols)), tuple(header[j] for j in cols)


def write_csv(dataset: SurvivalDataset, path, time_col: str = "time", event_col: str = "event"):
    """Write ``dataset`` so that :func:`load_csv` reads back identical values."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*dataset.feature_names, time_col, event_col])
        for x, t, e in zip(dataset.X, dataset.time, dataset.event):
            w.writerow([*(repr(float(v)) for v in x), repr(float(t)), int(e)])


@dataclass(frozen=True)
class Standardizer:
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float).reshape(-1)
        stds = np.asarray(self.stds, dtype=float).reshape(-1)
        if means.shape != stds.shape:
            raise DimensionError("means and stds differ in length")
        if np.any(stds <= 0):
            raise ValueError("standard deviations must be positive")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)

    def apply(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.means.shape[0]:
            raise DimensionError(f"expected {self.means.shape[0]} covariates, got {X.shape[-1]}")
        return (X - self.means) / self.stds


def fit_standardizer(dataset: SurvivalDataset) -> Standardizer:
    """Population mean/std per column; constant columns get std 1."""
    means = dataset.X.mean(axis=0)
    stds = dataset.X.std(axis=0)
    stds = np.where(stds > 0, stds, 1.0)
    return Standardizer(means, stds)


@dataclass(frozen=True)
class TimeGrid:
    points: np.ndarray
    strategy: str = field(default="given", compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1)
        if pts.size < 1:
            raise ValueError("time grid needs at least one point")
        if not np.all(np.isfinite(pts)) or np.any(pts <= 0):
            raise ValueError("time grid points must be finite and positive")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("time grid must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def m(self) -> int:
        return self.points.size

    def __len__(self):
        return self.m

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.points, other.points)


def build_time_grid(dataset: SurvivalDataset, m: int, strategy: str = "event_quantiles") -> TimeGrid:
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m}")
    m = int(m)
    if strategy in ("event_quantiles", "quantile"):
        event_times = dataset.time[dataset.event]
        if event_times.size == 0:
            raise ValueError("event_quantiles grid needs at least one uncensored record")
        pts = np.quantile(event_times, np.arange(1, m + 1) / m, method="linear")
        # Collapse duplicates by the smallest representable positive step.
        pts[0] = max(pts[0], np.nextafter(0.0, 1.0))
        for j in range(1, m):
            if pts[j] <= pts[j - 1]:
                pts[j] = np.nextafter(pts[j - 1], np.inf)
        return TimeGrid(pts, "event_quantiles")
    if strategy == "uniform":
        t_max = float(dataset.time.max())
        if t_max <= 0:
            raise ValueError("uniform grid needs a positive maximum time")
        return TimeGrid(np.arange(1, m + 1) * t_max / m, "uniform")
    raise ValueError(f"unknown grid strategy '{strategy}'")


@dataclass(frozen=True)
class EncodedTarget:
    kind: str
    k: int


def encode_target(time: float, event: bool, grid: TimeGrid) -> EncodedTarget:
    """Death-interval index for an observed event, or its lower bound if censored.

    A death exactly at a grid point counts as dead at that point; a censored
    patient is alive at every grid point up to and including the censoring time.
    """
    if time < 0:
        raise ValueError("time must be non-negative")
    if event:
        return EncodedTarget(EXACT, int(np.searchsorted(grid.points, time, side="left")))
    return EncodedTarget(CENSORED, int(np.searchsorted(grid.points, time, side="right")))


def encode_targets(times, events, grid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`encode_target`; returns (k, is_exact)."""
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    k = np.where(
        events,
        np.searchsorted(grid.points, times, side="left"),
        np.searchsorted(grid.points, times, side="right"),
    )
    return k.astype(int), events.copy()


def sample_csv_path() -> Path:
    """Bundled 400-row synthetic cohort (features x0..x4, columns time and event)."""
    return Path(str(resources.files("spikesurv").joinpath("data", "sample.csv")))


def generate_synthetic(
    n: int,
    d: int,
    informative_indices: Sequence[int],
    betas: Sequence[float],
    baseline_rate: float,
    censor_rate: float,
    seed: int,
    *,
    hazard: str = "linear",
    covariate_shift=0.0,
) -> SurvivalDataset:
    """Exponential proportional-hazards cohort with independent exponential censoring.

    Covariates are standard normal plus ``covariate_shift``. With
    ``hazard="hinge"`` informative covariates enter the log-rate through
    ``max(x, 0)`` instead of linearly.
    """
    informative_indices = list(informative_indices)
    betas = np.asarray(betas, dtype=float)
    if len(informative_indices) != betas.size:
        raise ValueError("informative_indices and betas differ in length")
    if any(not 0 <= j < d for j in informative_indices):
        raise ValueError("informative index out of range")
    if baseline_rate <= 0 or censor_rate <= 0:
        raise ValueError("rates must be positive")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d)) + covariate_shift
    Z = X[:, informative_indices]
    if hazard == "hinge":
        Z = np.maximum(Z, 0.0)
    elif hazard != "linear":
        raise ValueError(f"unknown hazard '{hazard}'")
    rate = baseline_rate * np.exp(Z @ betas)
    event_time = rng.exponential(1.0 / rate)
    censor_time = rng.exponential(1.0 / censor_rate, size=n)
    time = np.minimum(event_time, censor_time)
    event = event_time <= censor_time
    return SurvivalDataset(X, time, event, [f"x{j}" for j in range(d)])
