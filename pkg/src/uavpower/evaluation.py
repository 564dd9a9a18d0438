"""Error metrics, cross-validated grid search and the held-out flight comparison."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import analytic
from .analytic import DroneParams
from .dataset import (
    DEFAULT_WINDOW,
    FlightRecord,
    FlightSample,
    Scaler,
    build_windows,
    fit_scaler_from_flights,
    kfold_split,
    make_window_batch,
)
from .errors import InvalidParameterError, UavPowerError
from .neural.model import LstmModel, predict
from .neural.train import TrainConfig, predict_series, train

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1

# (dropout, learning rate, batch size) rows of the published tuning table
TUNING_GRID: tuple[tuple[float, float, int], ...] = (
    (0.2, 0.001, 128),
    (0.2, 0.0001, 128),
    (0.5, 0.001, 128),
    (0.5, 0.0001, 128),
    (0.5, 0.01, 128),
    (0.5, 0.001, 64),
)

MODEL_NAMES = (
    "D'Andrea",
    "D'Andrea (headwind)",
    "Dorling",
    "Stolaroff",
    "Kirchstein",
    "Tseng",
    "LSTM",
)


# -- metrics ----------------------------------------------------------------


def _residuals(pred, truth) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.size == 0 or pred.shape != truth.shape:
        raise InvalidParameterError("metrics need equal-length non-empty series")
    return pred - truth


def rmse(pred, truth) -> float:
    r = _residuals(pred, truth)
    return float(np.sqrt(np.mean(r * r)))


def mae(pred, truth) -> float:
    return float(np.mean(np.abs(_residuals(pred, truth))))


@dataclass(frozen=True)
class Metrics:
    rmse: float
    mae: float
    n: int

    @classmethod
    def of(cls, pred, truth) -> "Metrics":
        return cls(rmse(pred, truth), mae(pred, truth), int(np.size(pred)))


# -- grid search ------------------------------------------------------------


@dataclass
class GridResult:
    dropout: float
    learning_rate: float
    batch_size: int
    avg_rmse: float
    avg_mae: float
    folds: int
    fold_rmse: list[float] = field(default_factory=list)
    fold_mae: list[float] = field(default_factory=list)
    error: Optional[str] = None


def default_grid(base: Optional[TrainConfig] = None) -> list[TrainConfig]:
    base = base or TrainConfig()
    return [replace(base, dropout_rate=d, learning_rate=lr, batch_size=bs) for d, lr, bs in TUNING_GRID]


def _sort_key(r: GridResult):
    bad = not math.isfinite(r.avg_mae)
    return (bad, r.avg_mae if not bad else 0.0, r.avg_rmse if not bad else 0.0)


def cross_validate(
    config: TrainConfig,
    records: Sequence[FlightRecord],
    folds: Sequence[np.ndarray],
    T: int = DEFAULT_WINDOW,
    stride: int = 1,
) -> tuple[list[float], list[float]]:
    """Per-fold validation RMSE and MAE (watts) for one configuration."""
    fold_rmse, fold_mae = [], []
    for i, val_idx in enumerate(folds):
        val_set = set(int(j) for j in val_idx)
        train_recs = [r for j, r in enumerate(records) if j not in val_set]
        val_recs = [records[j] for j in sorted(val_set)]
        scaler = fit_scaler_from_flights(train_recs)
        tr = make_window_batch(train_recs, scaler, T, stride)
        va = make_window_batch(val_recs, scaler, T, stride)
        if len(tr) == 0 or len(va) == 0:
            raise InvalidParameterError(f"fold {i}: no windows in train or validation flights")
        combined = type(tr)(
            np.concatenate([tr.features, va.features]),
            np.concatenate([tr.targets, va.targets]),
            scaler,
        )
        split = (np.arange(len(tr)), np.arange(len(tr), len(combined)))
        model, _ = train(combined, config, split)
        truth = np.concatenate([build_windows(r, T, stride)[1] for r in val_recs])
        pred = scaler.inverse_target(predict(model, va.features))
        fold_rmse.append(rmse(pred, truth))
        fold_mae.append(mae(pred, truth))
    return fold_rmse, fold_mae


def grid_search(
    grid: Sequence[TrainConfig],
    records: Sequence[FlightRecord],
    k: int = 5,
    seed: int = 0,
    T: int = DEFAULT_WINDOW,
    stride: int = 1,
) -> list[GridResult]:
    """k-fold (by flight) cross-validation of every grid point.

    Rows are sorted by fold-mean MAE, then RMSE; failed cells keep their
    error message and NaN metrics and sort last.
    """
    if not grid:
        raise InvalidParameterError("grid must be non-empty")
    folds = kfold_split(len(records), k, seed)
    results = []
    for cfg in grid:
        try:
            fr, fm = cross_validate(cfg, records, folds, T, stride)
            res = GridResult(cfg.dropout_rate, cfg.learning_rate, cfg.batch_size,
                             float(np.mean(fr)), float(np.mean(fm)), k, fr, fm)
        except UavPowerError as exc:
            log.error("grid cell %s failed: %s", (cfg.dropout_rate, cfg.learning_rate, cfg.batch_size), exc)
            res = GridResult(cfg.dropout_rate, cfg.learning_rate, cfg.batch_size,
                             math.nan, math.nan, k, error=str(exc))
        results.append(res)
    return sorted(results, key=_sort_key)


def select_best(results: Sequence[GridResult]) -> GridResult:
    ok = [r for r in results if r.error is None]
    if not ok:
        raise InvalidParameterError("no successful grid cells")
    return min(ok, key=_sort_key)


# -- analytic inputs from telemetry -----------------------------------------


def _wind_vector(sample: FlightSample) -> np.ndarray:
    # wind_angle: direction the air moves toward, degrees clockwise from north;
    # x points east and y north
    a = math.radians(sample.wind_angle)
    return np.array([sample.wind_speed * math.sin(a), sample.wind_speed * math.cos(a), 0.0])


def quaternion_pitch(x: float, y: float, z: float, w: float) -> float:
    norm = math.sqrt(x * x + y * y + z * z + w * w)
    if norm < 1e-9:
        log.warning("degenerate orientation quaternion; using alpha = 0")
        return 0.0
    x, y, z, w = x / norm, y / norm, z / norm, w / norm
    return math.asin(max(-1.0, min(1.0, 2.0 * (w * y - z * x))))


def airspeed_from_sample(sample: FlightSample) -> tuple[float, float]:
    """``(v_air, alpha)``: airspeed magnitude and pitch angle from telemetry."""
    ground = np.array([sample.velocity_x, sample.velocity_y, sample.velocity_z])
    v_air = float(np.linalg.norm(ground - _wind_vector(sample)))
    alpha = quaternion_pitch(sample.orientation_x, sample.orientation_y, sample.orientation_z, sample.orientation_w)
    limit = math.pi / 2 - 1e-9
    return v_air, max(-limit, min(limit, alpha))


def headwind_from_sample(sample: FlightSample) -> tuple[float, float]:
    """``(ground speed, headwind)``; headwind is the wind component against travel."""
    ground = np.array([sample.velocity_x, sample.velocity_y, sample.velocity_z])
    v_ground = float(np.linalg.norm(ground))
    horiz = ground[:2]
    hn = float(np.linalg.norm(horiz))
    if hn < 1e-6:
        return v_ground, float(sample.wind_speed)
    return v_ground, float(-_wind_vector(sample)[:2] @ (horiz / hn))


def _analytic_models() -> dict[str, Callable[[DroneParams, FlightSample], float]]:
    def dandrea(p, s):
        return analytic.power_dandrea(p, airspeed_from_sample(s)[0])

    def dandrea_wind(p, s):
        return analytic.power_dandrea_headwind(p, *headwind_from_sample(s))

    def dorling(p, s):
        return analytic.power_dorling(p)

    def stolaroff(p, s):
        return analytic.power_stolaroff(p, *airspeed_from_sample(s))

    def kirchstein(p, s):
        return analytic.power_kirchstein(p, airspeed_from_sample(s)[0])

    def tseng(p, s):
        return analytic.power_tseng(airspeed_from_sample(s)[0], s.payload)

    return dict(zip(MODEL_NAMES[:6], (dandrea, dandrea_wind, dorling, stolaroff, kirchstein, tseng)))


def analytic_series(flight: FlightRecord, params: DroneParams) -> dict[str, Union[np.ndarray, str]]:
    """Per-sample predictions of each analytic model (payload taken from telemetry, grams -> kg).

    A model whose parameters are missing maps to the error message instead.
    """
    out: dict[str, Union[np.ndarray, str]] = {}
    per_sample = [params.with_payload(s.payload / 1000.0) for s in flight.samples]
    for name, fn in _analytic_models().items():
        try:
            out[name] = np.array([fn(p, s) for p, s in zip(per_sample, flight.samples)])
        except UavPowerError as exc:
            out[name] = str(exc)
    return out


# -- comparison -------------------------------------------------------------


@dataclass
class ComparisonRow:
    model: str
    avg_rmse: float
    avg_mae: float
    n: int
    available: bool = True
    reason: str = ""


@dataclass
class Comparison:
    flight_id: str
    times: np.ndarray
    truth: np.ndarray
    series: dict[str, np.ndarray]
    rows: list[ComparisonRow]


def comparison_for_flight(
    flight: FlightRecord,
    params: DroneParams,
    model: Optional[LstmModel],
    scaler: Optional[Scaler],
    T: int = DEFAULT_WINDOW,
) -> Comparison:
    """Score all seven models on samples ``T-1 .. n-1`` of one flight."""
    n = len(flight)
    if n < T:
        raise InvalidParameterError(f"flight {flight.flight_id} has {n} samples, needs >= {T}")
    horizon = slice(T - 1, n)
    truth = flight.labels(strict=False)
    preds = analytic_series(flight, params)
    if model is None or scaler is None:
        preds["LSTM"] = "no trained model supplied"
    else:
        preds["LSTM"] = predict_series(flight, model, scaler, T)
    scored = np.isfinite(truth[horizon])  # unlabeled samples are plotted but not scored
    if not scored.any():
        raise InvalidParameterError(f"flight {flight.flight_id} has no labeled samples after step {T - 1}")
    rows, series = [], {}
    for name in MODEL_NAMES:
        p = preds[name]
        if isinstance(p, str):
            rows.append(ComparisonRow(name, math.nan, math.nan, 0, False, p))
            continue
        series[name] = p[horizon]
        m = Metrics.of(p[horizon][scored], truth[horizon][scored])
        rows.append(ComparisonRow(name, m.rmse, m.mae, m.n))
    return Comparison(flight.flight_id, flight.times()[horizon], truth[horizon], series, rows)


def compare_models(
    flight: FlightRecord,
    params: DroneParams,
    model: Optional[LstmModel],
    scaler: Optional[Scaler],
    T: int = DEFAULT_WINDOW,
) -> list[ComparisonRow]:
    return comparison_for_flight(flight, params, model, scaler, T).rows


# -- report files -----------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return ";".join(_fmt(x) for x in v)
    return "" if v is None else str(v)


def write_rows_csv(rows: Sequence, path: Union[str, Path], header_comment: str = "") -> None:
    rows = [asdict(r) for r in rows]
    if not rows:
        raise InvalidParameterError("no rows to write")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        if header_comment:
            for line in header_comment.splitlines():
                fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(list(rows[0]))
        for r in rows:
            w.writerow([_fmt(v) for v in r.values()])


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, list):
        return [_json_safe(x) for x in v]
    return v


def write_rows_json(rows: Sequence, path: Union[str, Path], kind: str, meta: Optional[dict] = None) -> None:
    doc = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "kind": kind,
        "meta": meta or {},
        "rows": [{k: _json_safe(v) for k, v in asdict(r).items()} for r in rows],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_series(path: Union[str, Path], times: np.ndarray, values: np.ndarray) -> None:
    """Two-column ``time watts`` file (whitespace separated, gnuplot-ready)."""
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("# time_s watts\n")
        for t, v in zip(times, values):
            fh.write(f"{float(t)!r} {float(v)!r}\n")


def read_series(path: Union[str, Path]) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, comments="#", ndmin=2)
    return data[:, 0], data[:, 1]
