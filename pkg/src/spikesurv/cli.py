"""Command-line interface.

Exit codes: 0 success, 2 usage or data error, 3 numerical failure,
4 undefined metric. ``SPIKESURV_SEED`` sets the default ``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import persist
from .dataset import build_time_grid, generate_synthetic, load_covariates, load_csv, write_csv
from .errors import DataError, NumericalError, ParseError, SchemaError, UndefinedMetricError
from .interpret import DEFAULT_OOD_SAMPLES, cohort_ood_report, feature_importance
from .metrics import evaluate_predictions, risk_score
from .models import fit_model
from .plotting import plot_importance, plot_survival, plot_uncertainty_hist
from .training import TrainConfig
from .variational import BayesNetConfig

EXIT_OK, EXIT_DATA, EXIT_NUMERICAL, EXIT_METRIC = 0, 2, 3, 4

MODEL_KINDS = {"bayes": "bayes_mtlr", "mtlr": "mtlr", "nmtlr": "neural_mtlr", "cox": "cox"}
GRIDS = {"quantile": "event_quantiles", "uniform": "uniform"}


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _nonneg_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {value}")
    return value


def _nonneg_float(text):
    value = float(text)
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _alpha(text):
    value = float(text)
    if not 0 < value <= 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1], got {value}")
    return value


def _fraction(text):
    value = float(text)
    if not 0 <= value < 1:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1), got {value}")
    return value


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _default_seed():
    return int(os.environ.get("SPIKESURV_SEED", "0"))


def _write_rows(path, header, rows):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x) -> str:
    return repr(float(x))


def _model_covariates(model, path, time_col, event_col):
    X, names = load_covariates(path, drop=(time_col, event_col))
    missing = [s for s in model.feature_names if s not in names]
    extra = [s for s in names if s not in model.feature_names]
    if missing or extra:
        raise SchemaError(f"--data feature mismatch with model: missing {missing}, extra {extra}")
    return X[:, [names.index(s) for s in model.feature_names]]


# ---------------------------------------------------------------------------
# commands


def cmd_train(args):
    data = load_csv(args.data, args.time_col, args.event_col)
    grid = build_time_grid(data, args.m, GRIDS[args.grid])
    kind = MODEL_KINDS[args.model]
    config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        C1=args.c1,
        C2=args.c2,
        alpha=args.alpha,
        seed=args.seed,
        validation_fraction=args.val_frac,
        patience=args.patience,
    )
    net_config = None
    if kind == "bayes_mtlr":
        net_config = BayesNetConfig(
            d=data.d,
            m=grid.m,
            alpha=args.alpha,
            gate_temperature=args.gate_temperature,
            data_noise_samples=args.noise_samples,
        )
    progress = None if args.quiet else sys.stderr
    model, trace = fit_model(kind, data, grid, config, net_config, progress)
    persist.save(model, args.out)
    trace_path = args.trace or f"{args.out}.trace.tsv"
    text = trace.to_tsv() if trace is not None else "epoch\tfree_energy\tnll\tkl\tval_nll\n"
    Path(trace_path).write_text(text, encoding="utf-8")
    print(f"model={args.out}\ttrace={trace_path}\tkind={kind}\tm={grid.m}")
    return EXIT_OK


def _predict(model, X, args):
    return model.predict(X, seed=args.seed, weight_samples=args.mc_samples, noise_samples=args.noise_samples)


def _table_header(points):
    times = [repr(float(t)) for t in points]
    return (
        ["row"]
        + [f"surv@{t}" for t in times]
        + [f"model_std@{t}" for t in times]
        + [f"data_std@{t}" for t in times]
        + ["risk", "uncertainty"]
    )


def cmd_predict(args):
    model = persist.load(args.model)
    X = _model_covariates(model, args.data, args.time_col, args.event_col)
    pred = _predict(model, X, args)
    risk = risk_score(pred)
    unc = pred.model_std.mean(axis=1)
    rows = []
    for i in range(X.shape[0]):
        rows.append(
            [i]
            + [_fmt(v) for v in pred.mean[i]]
            + [_fmt(v) for v in pred.model_std[i]]
            + [_fmt(v) for v in pred.data_std[i]]
            + [_fmt(risk[i]), _fmt(unc[i])]
        )
    _write_rows(args.out, _table_header(model.grid.points), rows)
    return EXIT_OK


def read_predictions(path):
    """Parse a predictions table; returns (grid points, S matrix, risk vector)."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"--predictions {path}: empty file")
    header = rows[0]
    surv_cols = [i for i, h in enumerate(header) if h.startswith("surv@")]
    if not surv_cols or "risk" not in header:
        raise SchemaError(f"--predictions {path}: header lacks surv@<time> or risk columns")
    try:
        points = [float(header[i][5:]) for i in surv_cols]
    except ValueError:
        raise SchemaError(f"--predictions {path}: surv@<time> columns need numeric times") from None
    risk_col = header.index("risk")
    surv, risk = [], []
    for r, row in enumerate(rows[1:], start=1):
        try:
            surv.append([float(row[i]) for i in surv_cols])
            risk.append(float(row[risk_col]))
        except (ValueError, IndexError):
            raise ParseError(f"--predictions row {r}: malformed value", r, "") from None
    if not surv:
        raise DataError(f"--predictions {path}: no rows")
    return np.array(points), np.array(surv), np.array(risk)


def cmd_evaluate(args):
    if (args.model is None) == (args.predictions is None):
        raise DataError("evaluate needs exactly one of --model or --predictions")
    if args.model is not None:
        model = persist.load(args.model)
        data = load_csv(args.data, args.time_col, args.event_col).select_features(model.feature_names)
        pred = _predict(model, data.X, args)
        points, surv, risk, label = model.grid.points, pred.mean, None, f"model kind     {model.kind}"
    else:
        data = load_csv(args.data, args.time_col, args.event_col)
        points, surv, risk = read_predictions(args.predictions)
        if surv.shape[0] != data.n:
            raise DataError(f"--predictions has {surv.shape[0]} rows but --data has {data.n}")
        label = f"predictions    {args.predictions}"
    report = evaluate_predictions(surv, points, data.time, data.event, risk=risk)
    print(label)
    print(f"patients       {data.n} ({int(data.event.sum())} events)")
    print(f"C-index        {report.c_index:.4f}  (Harrell)")
    print(f"IBS            {report.ibs:.4f}  (IPCW, trapezoid over [{points[0]:.4g}, {points[-1]:.4g}])")
    print("---")
    for key, value in report.as_dict().items():
        print(f"{key}={value!r}")
    return EXIT_OK


def cmd_importance(args):
    model = persist.load(args.model)
    if model.kind != "bayes_mtlr":
        raise DataError(f"--model: importance needs a Bayesian model with a gate posterior, got '{model.kind}'")
    report = feature_importance(model.params, model.feature_names)
    rows = [
        [rank, f.name, _fmt(f.mu), _fmt(f.sigma), _fmt(f.gamma), _fmt(f.snr)]
        for rank, f in enumerate(report.features, start=1)
    ]
    _write_rows(args.out, ["rank", "feature", "mu", "sigma", "gamma", "snr"], rows)
    if args.figure:
        plot_importance(report, args.figure, top=args.top)
    return EXIT_OK


def cmd_ood(args):
    model = persist.load(args.model)
    if model.kind != "bayes_mtlr":
        raise DataError(f"--model: OOD scoring needs a Bayesian model, got '{model.kind}'")
    data = load_csv(args.data, args.time_col, args.event_col)
    report = cohort_ood_report(model, data, S=args.mc_samples, seed=args.seed)
    _write_rows(args.out, ["row", "uncertainty"], [[i, _fmt(s)] for i, s in enumerate(report.scores)])
    print(f"cohort_mean={report.mean!r}")
    print(f"cohort_std={report.std!r}")
    reference = None
    if args.reference:
        ref = cohort_ood_report(model, load_csv(args.reference, args.time_col, args.event_col), args.mc_samples, args.seed)
        reference = ref.mean
        print(f"reference_mean={ref.mean!r}")
        print(f"reference_std={ref.std!r}")
        print(f"relative_increase={(report.mean - ref.mean) / ref.mean!r}")
    if args.figure:
        plot_uncertainty_hist(report.scores, args.figure, reference)
    return EXIT_OK


def cmd_plot(args):
    model = persist.load(args.model)
    X = _model_covariates(model, args.data, args.time_col, args.event_col)
    if not 0 <= args.row < X.shape[0]:
        raise DataError(f"--row {args.row} out of range (file has {X.shape[0]} rows)")
    pred = _predict(model, X[args.row], args)
    if pred.mean.ndim == 2:
        pred = pred[0]
    plot_survival(pred, args.out, title=args.title)
    return EXIT_OK


def cmd_synth(args):
    ds = generate_synthetic(
        args.n,
        args.d,
        args.informative,
        args.betas,
        args.baseline_rate,
        args.censor_rate,
        args.seed,
        hazard=args.hazard,
        covariate_shift=args.shift,
    )
    write_csv(ds, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_label_cols(p):
    p.add_argument("--time-col", default="time")
    p.add_argument("--event-col", default="event")


def _add_sampling(p):
    p.add_argument("--mc-samples", type=_positive_int, default=DEFAULT_OOD_SAMPLES)
    p.add_argument("--noise-samples", type=_positive_int, default=10)
    p.add_argument("--seed", type=int, default=_default_seed())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spikesurv", description="Bayesian MTLR survival toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model and write a model file plus loss trace")
    p.add_argument("--data", required=True)
    _add_label_cols(p)
    p.add_argument("--model", choices=sorted(MODEL_KINDS), default="bayes")
    p.add_argument("--m", type=_positive_int, default=10)
    p.add_argument("--grid", choices=sorted(GRIDS), default="quantile")
    p.add_argument("--alpha", type=_alpha, default=0.5)
    p.add_argument("--c1", type=_nonneg_float, default=0.0)
    p.add_argument("--c2", type=_nonneg_float, default=0.1)
    p.add_argument("--epochs", type=_nonneg_int, default=100)
    p.add_argument("--batch-size", type=_positive_int, default=64)
    p.add_argument("--lr", type=_positive_float, default=0.01)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--val-frac", type=_fraction, default=0.0)
    p.add_argument("--patience", type=_positive_int, default=None)
    p.add_argument("--gate-temperature", type=_positive_float, default=10.0)
    p.add_argument("--noise-samples", type=_positive_int, default=10)
    p.add_argument("--trace", default=None, help="loss trace path (default: OUT.trace.tsv)")
    p.add_argument("--quiet", action="store_true", help="no per-epoch progress on stderr")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write per-patient survival curves and uncertainties")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    _add_label_cols(p)
    _add_sampling(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="C-index and integrated Brier score on a labelled cohort")
    p.add_argument("--model", default=None)
    p.add_argument("--predictions", default=None, help="score an existing predictions table instead of a model")
    p.add_argument("--data", required=True)
    _add_label_cols(p)
    _add_sampling(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("importance", help="rank features by gate signal-to-noise ratio")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--figure", default=None, help="optional SVG bar chart")
    p.add_argument("--top", type=_positive_int, default=20)
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("ood", help="mean model-uncertainty score per record")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--reference", default=None, help="in-distribution cohort to compare against")
    _add_label_cols(p)
    _add_sampling(p)
    p.add_argument("--out", required=True)
    p.add_argument("--figure", default=None, help="optional SVG histogram")
    p.set_defaults(func=cmd_ood)

    p = sub.add_parser("plot", help="SVG survival curve with uncertainty for one row")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--row", type=int, required=True)
    _add_label_cols(p)
    _add_sampling(p)
    p.add_argument("--title", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("synth", help="write a synthetic proportional-hazards cohort")
    p.add_argument("--n", type=_positive_int, default=500)
    p.add_argument("--d", type=_positive_int, default=5)
    p.add_argument("--informative", type=_int_list, default=[0, 1])
    p.add_argument("--betas", type=_float_list, default=[1.0, -0.5])
    p.add_argument("--baseline-rate", type=_positive_float, default=0.1)
    p.add_argument("--censor-rate", type=_positive_float, default=0.03)
    p.add_argument("--hazard", choices=["linear", "hinge"], default="linear")
    p.add_argument("--shift", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UndefinedMetricError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_METRIC
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
