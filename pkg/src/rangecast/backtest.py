"""Backtest engines, summary statistics and experiment grids.

Two prediction protocols are supported:

* point-to-point: every input window is true data, one step is predicted,
  and the error resets after each prediction;
* multi-point: a segment starts from a window of true data and rolls
  forward ``range`` steps, feeding each predicted close back into the
  window. The next segment starts ``range`` points later from true data
  again. Non-target features (volume) are held at their last true value
  during a rollout.

Errors are absolute differences in normalized units, measured against the
base value of the window that produced the prediction. Predictions are also
reported as prices for plotting.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import randomwalk, recurrent
from .numeric import ParameterError, ShapeError
from .windows import (
    DEFAULT_FEATURES,
    RawSeries,
    WindowSet,
    denormalize,
    load_csv,
    make_windows,
    normalize,
    split,
)

log = logging.getLogger(__name__)


class DiagnosticError(ValueError):
    """Raised when a diagnostic statistic is undefined for the given data."""


class ExportError(OSError):
    """Raised when an export file cannot be written."""


# --------------------------------------------------------------------------
# Predictors: map normalized windows (batch, steps, features) and the
# raw close bases (batch,) to normalized next-close predictions (batch,).
# --------------------------------------------------------------------------


class LstmPredictor:
    def __init__(self, params: recurrent.LstmParams):
        self.params = params
        self.input_size = params.input_size

    def __call__(self, windows: np.ndarray, p0_close: np.ndarray) -> np.ndarray:
        return recurrent.predict(self.params, windows)[:, 0]


class RandomWalkPredictor:
    """Conditional mean of a random walk expressed in window units.

    Next close is the last close plus the drift, so with zero drift the
    forecast is the last value in the window.
    """

    def __init__(self, model: randomwalk.RandomWalkModel, close_column: int = 0, input_size: int | None = None):
        self.model = model
        self.close_column = close_column
        self.input_size = input_size

    def __call__(self, windows: np.ndarray, p0_close: np.ndarray) -> np.ndarray:
        last = windows[:, -1, self.close_column]
        if self.model.drift == 0.0:
            return last.copy()
        return last + self.model.drift / p0_close


def _check_input(model, n_features: int):
    expected = getattr(model, "input_size", None)
    if expected is not None and expected != n_features:
        raise ShapeError(f"model expects {expected} features, data has {n_features}")


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------


@dataclass
class BacktestReport:
    mode: str
    window_len: int
    range: int
    per_segment_errors: list
    overall_mae: float
    pointwise_errors: np.ndarray
    indices: np.ndarray  # positions in the evaluated series
    predictions: np.ndarray  # prices
    truths: np.ndarray  # prices
    segment_ids: np.ndarray
    asset: str = ""
    seed: int | None = None

    @property
    def n_segments(self) -> int:
        return len(self.per_segment_errors)


def run_point_to_point(model, test_windows: WindowSet, asset: str = "", seed: int | None = None) -> BacktestReport:
    """One-step predictions from windows of true data; nothing is fed back."""
    if len(test_windows) == 0:
        raise ParameterError("test window set is empty")
    X = test_windows.features_array()
    _check_input(model, X.shape[2])
    tc = test_windows.target_column
    p0 = test_windows.p0_array()[:, tc]
    target = test_windows.targets_array()[:, 0]
    pred = np.asarray(model(X, p0), dtype=np.float64)
    err = np.abs(pred - target)
    starts = np.array([w.start_index for w in test_windows.windows])
    return BacktestReport(
        mode="point",
        window_len=test_windows.window_len,
        range=1,
        per_segment_errors=[float(e) for e in err],
        overall_mae=float(np.mean(err)),
        pointwise_errors=err,
        indices=starts + test_windows.window_len,
        predictions=denormalize(pred, p0),
        truths=denormalize(target, p0),
        segment_ids=np.arange(len(err)),
        asset=asset,
        seed=seed,
    )


def segment_starts(length: int, window_len: int, pred_range: int) -> list[int]:
    """Segment offsets that tile the series; partial trailing segments are dropped."""
    return list(range(0, length - window_len - pred_range + 1, pred_range))


def run_multi_point(
    model,
    test_series,
    window_len: int,
    pred_range: int,
    features=DEFAULT_FEATURES,
    target_feature: str = "close",
    asset: str | None = None,
    seed: int | None = None,
) -> BacktestReport:
    """Recursive ``pred_range``-step forecasts with a reset to true data per segment.

    ``test_series`` is a :class:`RawSeries` or a raw ``(len, n_features)``
    array whose columns follow ``features``. All segments advance in
    lockstep so the model is queried once per rollout step.
    """
    if window_len < 1 or pred_range < 1:
        raise ParameterError("window_len and range must be >= 1")
    features = tuple(features)
    if isinstance(test_series, RawSeries):
        asset = test_series.asset if asset is None else asset
        values = test_series.matrix(features)
    else:
        values = np.asarray(test_series, dtype=np.float64)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
    if values.shape[1] != len(features):
        raise ShapeError(f"series has {values.shape[1]} columns for features {features}")
    if len(values) < window_len + pred_range:
        raise ParameterError(
            f"test series has {len(values)} points; window_len + range requires at least {window_len + pred_range}"
        )
    _check_input(model, values.shape[1])
    tc = features.index(target_feature)
    starts = np.array(segment_starts(len(values), window_len, pred_range))
    n_seg = len(starts)

    buf = np.stack([values[s : s + window_len] for s in starts])  # (seg, W, F)
    errors = np.empty((n_seg, pred_range))
    preds = np.empty((n_seg, pred_range))
    truths = np.empty((n_seg, pred_range))
    for j in range(pred_range):
        base = buf[:, 0, :]
        if np.any(base <= 0):
            raise ParameterError("non-positive base value inside a rollout window")
        X = normalize(buf, base[:, None, :])
        p0 = base[:, tc]
        y_hat = np.asarray(model(X, p0), dtype=np.float64)
        true_price = values[starts + window_len + j, tc]
        errors[:, j] = np.abs(y_hat - normalize(true_price, p0))
        price = denormalize(y_hat, p0)
        preds[:, j] = price
        truths[:, j] = true_price
        nxt = buf[:, -1, :].copy()
        nxt[:, tc] = price
        buf = np.concatenate([buf[:, 1:, :], nxt[:, None, :]], axis=1)

    flat = errors.ravel()
    return BacktestReport(
        mode="multi",
        window_len=window_len,
        range=pred_range,
        per_segment_errors=[float(e) for e in errors.mean(axis=1)],
        overall_mae=float(np.mean(flat)),
        pointwise_errors=flat,
        indices=(starts[:, None] + window_len + np.arange(pred_range)[None, :]).ravel(),
        predictions=preds.ravel(),
        truths=truths.ravel(),
        segment_ids=np.repeat(np.arange(n_seg), pred_range),
        asset=asset or "",
        seed=seed,
    )


# --------------------------------------------------------------------------
# Summary statistics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BoxStats:
    min: float
    q1: float
    median: float
    q3: float
    max: float


def box_stats(errors) -> BoxStats:
    """Five-number summary; quartiles interpolate linearly at position ``(n-1)*q``."""
    x = np.asarray(errors, dtype=np.float64).ravel()
    if x.size == 0:
        raise ParameterError("box_stats needs at least one value")
    q = np.quantile(x, [0.0, 0.25, 0.5, 0.75, 1.0], method="linear")
    return BoxStats(*(float(v) for v in q))


def error_subtraction(mae_multi: float, mae_single: float) -> float:
    if not (math.isfinite(mae_multi) and math.isfinite(mae_single)):
        raise ParameterError("error_subtraction needs finite inputs")
    return mae_multi - mae_single


@dataclass
class HysteresisReport:
    best_lag: int
    lag_correlations: list  # (lag, r)
    ar_order: int
    ar_weights: list  # w_0 (intercept), w_1 .. w_p
    residual_sigma: float


def hysteresis_diagnostic(predictions, truths, max_lag: int = 5, ar_order: int = 2) -> HysteresisReport:
    """Detect forecasts that trail the truth.

    ``lag_correlations[k]`` correlates ``prediction[t]`` with ``truth[t-k]``;
    a lag-copy forecaster peaks at ``k = 1``. The AR fit regresses each
    prediction on the ``ar_order`` preceding true values plus an intercept.
    """
    p = np.asarray(predictions, dtype=np.float64).ravel()
    y = np.asarray(truths, dtype=np.float64).ravel()
    if p.shape != y.shape:
        raise ShapeError(f"predictions {p.shape} and truths {y.shape} differ in length")
    if max_lag < 1:
        raise ParameterError(f"max_lag must be >= 1, got {max_lag}")
    if ar_order < 1:
        raise ParameterError(f"ar_order must be >= 1, got {ar_order}")
    if p.size < max(max_lag, ar_order) + 10:
        raise ParameterError(f"need at least {max(max_lag, ar_order) + 10} points, got {p.size}")
    if np.ptp(p) == 0 or np.ptp(y) == 0:
        raise DiagnosticError("constant input; correlation is undefined")

    corrs = []
    for lag in range(max_lag + 1):
        a, b = p[lag:], y[: y.size - lag]
        if np.ptp(a) == 0 or np.ptp(b) == 0:
            raise DiagnosticError(f"constant overlap at lag {lag}; correlation is undefined")
        corrs.append((lag, float(np.corrcoef(a, b)[0, 1])))
    best = max(corrs, key=lambda lr: lr[1])[0]

    n = p.size - ar_order
    design = np.column_stack([np.ones(n)] + [y[ar_order - k : ar_order - k + n] for k in range(1, ar_order + 1)])
    target = p[ar_order:]
    w, *_ = np.linalg.lstsq(design, target, rcond=None)
    resid = target - design @ w
    dof = max(n - ar_order - 1, 1)
    sigma = float(math.sqrt(float(resid @ resid) / dof))
    return HysteresisReport(int(best), corrs, ar_order, [float(v) for v in w], sigma)


# --------------------------------------------------------------------------
# Experiment configuration and grid
# --------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    data: dict  # asset name -> csv path
    window_lengths: list
    prediction_ranges: list
    seeds: list = field(default_factory=lambda: [0])
    model: str = "lstm"
    train_fraction: float = 0.8
    features: list = field(default_factory=lambda: list(DEFAULT_FEATURES))
    train: recurrent.TrainConfig = field(default_factory=recurrent.TrainConfig)
    drift_mode: str = "zero"
    output_dir: str = "results"
    base_dir: str = "."

    def validate(self):
        if not self.data:
            raise ParameterError("config needs at least one data file")
        if not self.window_lengths or not self.prediction_ranges or not self.seeds:
            raise ParameterError("window_lengths, prediction_ranges and seeds must be nonempty")
        if any(int(v) < 1 for v in list(self.window_lengths) + list(self.prediction_ranges)):
            raise ParameterError("window lengths and prediction ranges must be >= 1")
        if self.model not in ("lstm", "random_walk"):
            raise ParameterError(f"model must be 'lstm' or 'random_walk', got {self.model!r}")
        if not 0 < self.train_fraction < 1:
            raise ParameterError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        self.train.validate()
        return self

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def out_path(self) -> Path:
        return self.resolve(self.output_dir)

    @classmethod
    def from_dict(cls, d: dict, base_dir=".") -> "ExperimentConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__) - {"base_dir"}
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        data = d.pop("data", None)
        if isinstance(data, list):
            data = {item["asset"]: item["path"] for item in data}
        train_cfg = recurrent.TrainConfig.from_dict(d.pop("train", {}) or {})
        cfg = cls(data=data or {}, train=train_cfg, base_dir=str(base_dir), **d)
        cfg.window_lengths = [int(v) for v in cfg.window_lengths]
        cfg.prediction_ranges = [int(v) for v in cfg.prediction_ranges]
        cfg.seeds = [int(v) for v in cfg.seeds]
        return cfg.validate()

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParameterError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(doc, base_dir=path.parent)


def fit_lstm(train_series: RawSeries, window_len: int, features, train_cfg: recurrent.TrainConfig, seed: int):
    """Initialise and train a one-step LSTM on windows of ``train_series``."""
    cfg = replace(train_cfg, seed=seed)
    ws = make_windows(train_series, window_len, 1, features)
    params = recurrent.LstmParams.init(cfg.hidden_size, len(features), 1, seed=seed)
    return recurrent.train(params, cfg, ws)


def build_predictor(config: ExperimentConfig, train_series: RawSeries, window_len: int, seed: int):
    """Returns ``(predictor, epoch_logs)`` for one grid cell."""
    features = tuple(config.features)
    if config.model == "random_walk":
        model = randomwalk.fit(train_series.column("close"), config.drift_mode)
        return RandomWalkPredictor(model, features.index("close"), len(features)), []
    params, logs = fit_lstm(train_series, window_len, features, config.train, seed)
    return LstmPredictor(params), logs


@dataclass
class GridResult:
    assets: list
    window_lengths: list
    prediction_ranges: list
    seeds: list
    reports: dict  # (asset, window, range, seed) -> BacktestReport
    failures: dict  # (asset, window, range, seed) -> message
    epoch_logs: dict  # (asset, window, seed) -> list[EpochLog]

    def cell_mae(self, asset, window, rng_) -> float:
        vals = [self.reports[(asset, window, rng_, s)].overall_mae for s in self.seeds if (asset, window, rng_, s) in self.reports]
        return float(np.mean(vals)) if vals else float("nan")

    def seed_maes(self, asset, window, rng_) -> list:
        return [
            self.reports[(asset, window, rng_, s)].overall_mae if (asset, window, rng_, s) in self.reports else float("nan")
            for s in self.seeds
        ]

    def fixed_window_matrix(self) -> dict:
        """``{(asset, window): [mean MAE per range]}``."""
        return {(a, w): [self.cell_mae(a, w, r) for r in self.prediction_ranges] for a in self.assets for w in self.window_lengths}

    def fixed_range_matrix(self) -> dict:
        """``{(asset, range): [mean MAE per window]}``."""
        return {(a, r): [self.cell_mae(a, w, r) for w in self.window_lengths] for a in self.assets for r in self.prediction_ranges}

    def error_subtraction_matrix(self) -> dict:
        """``{(asset, window): [MAE(R) - MAE(1) for R != 1]}``; empty if range 1 was not run."""
        if 1 not in self.prediction_ranges:
            return {}
        j1 = self.prediction_ranges.index(1)
        out = {}
        for key, row in self.fixed_window_matrix().items():
            out[key] = [error_subtraction(v, row[j1]) for j, v in enumerate(row) if j != j1]
        return out

    @property
    def subtraction_ranges(self) -> list:
        return [r for r in self.prediction_ranges if r != 1]


def grid_run(config: ExperimentConfig, series: dict | None = None) -> GridResult:
    """Run every (asset, window, range, seed) cell of the configured grid.

    A model is trained once per (asset, window, seed) and reused for every
    range. A failing stage is recorded against its cells; the rest of the
    grid still runs. ``series`` may supply preloaded data by asset name.
    """
    config.validate()
    assets = list(config.data)
    features = tuple(config.features)
    reports, failures, logs = {}, {}, {}
    for asset in assets:
        try:
            full = series[asset] if series and asset in series else load_csv(config.resolve(config.data[asset]), asset)
            train_s, test_s = split(full, config.train_fraction)
        except Exception as exc:  # noqa: BLE001 - attributed to the cells
            for w in config.window_lengths:
                for r in config.prediction_ranges:
                    for s in config.seeds:
                        failures[(asset, w, r, s)] = f"{type(exc).__name__}: {exc}"
            continue
        for w in config.window_lengths:
            for s in config.seeds:
                try:
                    predictor, logs[(asset, w, s)] = build_predictor(config, train_s, w, s)
                except Exception as exc:  # noqa: BLE001
                    for r in config.prediction_ranges:
                        failures[(asset, w, r, s)] = f"{type(exc).__name__}: {exc}"
                    continue
                for r in config.prediction_ranges:
                    try:
                        reports[(asset, w, r, s)] = run_multi_point(predictor, test_s, w, r, features, seed=s)
                    except Exception as exc:  # noqa: BLE001
                        failures[(asset, w, r, s)] = f"{type(exc).__name__}: {exc}"
                log.info("%s window=%d seed=%d done", asset, w, s)
    return GridResult(assets, list(config.window_lengths), list(config.prediction_ranges), list(config.seeds), reports, failures, logs)


# --------------------------------------------------------------------------
# Export
# --------------------------------------------------------------------------


def _num(v) -> str:
    """Shortest round-tripping text for a float."""
    v = float(v)
    return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))


def _write(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from exc
    return path


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _json_text(doc) -> str:
    return json.dumps(doc, indent=2, allow_nan=True) + "\n"


def report_to_dict(report: BacktestReport) -> dict:
    return {
        "asset": report.asset,
        "mode": report.mode,
        "window_len": report.window_len,
        "range": report.range,
        "seed": report.seed,
        "overall_mae": report.overall_mae,
        "n_segments": report.n_segments,
        "box": asdict(box_stats(report.per_segment_errors)),
        "per_segment_errors": list(report.per_segment_errors),
    }


def export_report(report: BacktestReport, out_dir, prefix: str = "report", formats=("json", "csv")) -> list[Path]:
    """Write a single backtest: summary JSON and a per-point CSV for plotting."""
    if not report.per_segment_errors:
        raise ParameterError("report has no errors to export")
    out_dir = Path(out_dir)
    written = []
    if "json" in formats:
        written.append(_write(out_dir / f"{prefix}.json", _json_text(report_to_dict(report))))
    if "csv" in formats:
        rows = zip(
            report.indices.tolist(),
            report.segment_ids.tolist(),
            report.truths.tolist(),
            report.predictions.tolist(),
            report.pointwise_errors.tolist(),
        )
        written.append(
            _write(
                out_dir / f"{prefix}_points.csv",
                _csv_text(["index", "segment", "truth", "prediction", "abs_error_normalized"], rows),
            )
        )
    return written


def export_grid(result: GridResult, out_dir, formats=("json", "csv")) -> list[Path]:
    """Write the grid matrices, per-cell results and box statistics."""
    if not result.reports:
        raise ParameterError("grid produced no reports to export")
    out_dir = Path(out_dir)
    written = []
    fw, fr, sub = result.fixed_window_matrix(), result.fixed_range_matrix(), result.error_subtraction_matrix()
    cells = []
    for a in result.assets:
        for w in result.window_lengths:
            for r in result.prediction_ranges:
                for s in result.seeds:
                    rep = result.reports.get((a, w, r, s))
                    cells.append(
                        {
                            "asset": a,
                            "window_len": w,
                            "range": r,
                            "seed": s,
                            "mae": rep.overall_mae if rep else None,
                            "n_segments": rep.n_segments if rep else 0,
                            "box": asdict(box_stats(rep.per_segment_errors)) if rep else None,
                            "error": result.failures.get((a, w, r, s)),
                        }
                    )
    if "csv" in formats:
        written.append(
            _write(
                out_dir / "table_fixed_window.csv",
                _csv_text(["asset", "window_len"] + [f"range_{r}" for r in result.prediction_ranges], [[a, w, *row] for (a, w), row in fw.items()]),
            )
        )
        written.append(
            _write(
                out_dir / "table_fixed_range.csv",
                _csv_text(["asset", "range"] + [f"window_{w}" for w in result.window_lengths], [[a, r, *row] for (a, r), row in fr.items()]),
            )
        )
        if sub:
            written.append(
                _write(
                    out_dir / "table_error_subtraction.csv",
                    _csv_text(
                        ["asset", "window_len"] + [f"days_interval_{r - 1}" for r in result.subtraction_ranges],
                        [[a, w, *row] for (a, w), row in sub.items()],
                    ),
                )
            )
        box_rows = [
            [c["asset"], c["window_len"], c["range"], c["seed"], *(c["box"][k] for k in ("min", "q1", "median", "q3", "max"))]
            for c in cells
            if c["box"]
        ]
        written.append(
            _write(out_dir / "box_stats.csv", _csv_text(["asset", "window_len", "range", "seed", "min", "q1", "median", "q3", "max"], box_rows))
        )
        cell_rows = [[c["asset"], c["window_len"], c["range"], c["seed"], c["mae"] if c["mae"] is not None else "", c["n_segments"], c["error"] or ""] for c in cells]
        written.append(_write(out_dir / "cells.csv", _csv_text(["asset", "window_len", "range", "seed", "mae", "n_segments", "error"], cell_rows)))
    if "json" in formats:
        doc = {
            "assets": result.assets,
            "window_lengths": result.window_lengths,
            "prediction_ranges": result.prediction_ranges,
            "seeds": result.seeds,
            "fixed_window": [{"asset": a, "window_len": w, "mae": row} for (a, w), row in fw.items()],
            "fixed_range": [{"asset": a, "range": r, "mae": row} for (a, r), row in fr.items()],
            "error_subtraction": [
                {"asset": a, "window_len": w, "ranges": result.subtraction_ranges, "values": row} for (a, w), row in sub.items()
            ],
            "cells": cells,
        }
        written.append(_write(out_dir / "grid.json", _json_text(doc)))
    return written
