"""Step / half-step perturbation analysis of a trained model.

For each feature of interest the five probe values are the feature's minimum
and maximum (steps -1 and +1), their midpoint (step 0), and the midpoints
between step 0 and each extreme (half steps).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

from .dataset import FEATURE_INDEX, FlightRecord, Scaler, WindowBatch
from .errors import InvalidParameterError
from .neural.model import LstmModel, predict

STEP_LABELS = ("Step-1", "Step-1/2", "Step0", "Step+1/2", "Step+1")

# analysis name -> telemetry feature column
SENSITIVITY_FEATURES = {
    "altitude": "cmd_altitude",
    "payload": "payload",
    "speed": "cmd_speed",
}

# ranges of the published sensitivity table (m, g, m/s)
REFERENCE_RANGES = {
    "altitude": (25.0, 100.0),
    "payload": (0.0, 750.0),
    "speed": (4.0, 12.0),
}

CSV_HEADER = ("feature", "step_label", "step_value", "delta_watts")


@dataclass(frozen=True)
class SensitivityGrid:
    feature: str
    steps: tuple[float, float, float, float, float]

    def __post_init__(self) -> None:
        if self.feature not in SENSITIVITY_FEATURES:
            raise InvalidParameterError(f"unknown sensitivity feature {self.feature!r}")
        if any(b <= a for a, b in zip(self.steps, self.steps[1:])):
            raise InvalidParameterError("sensitivity steps must be strictly increasing")

    @property
    def column(self) -> str:
        return SENSITIVITY_FEATURES[self.feature]


@dataclass(frozen=True)
class SensitivityRow:
    feature: str
    step_label: str
    step_value: float
    delta_watts: float


def make_grid(feature: str, lo: float, hi: float) -> SensitivityGrid:
    lo, hi = float(lo), float(hi)
    if not hi > lo:
        raise InvalidParameterError(f"{feature}: need max > min, got [{lo}, {hi}]")
    mid = (lo + hi) / 2.0
    return SensitivityGrid(feature, (lo, (lo + mid) / 2.0, mid, (mid + hi) / 2.0, hi))


def ranges_from_flights(records: Sequence[FlightRecord]) -> dict[str, tuple[float, float]]:
    feats = np.concatenate([r.features() for r in records])
    out = {}
    for name, col in SENSITIVITY_FEATURES.items():
        v = feats[:, FEATURE_INDEX[col]]
        out[name] = (float(v.min()), float(v.max()))
    return out


def default_grids(ranges: Mapping[str, tuple[float, float]] = REFERENCE_RANGES) -> list[SensitivityGrid]:
    return [make_grid(name, *ranges[name]) for name in SENSITIVITY_FEATURES]


def sensitivity_analysis(
    model: LstmModel,
    scaler: Scaler,
    baseline: Union[WindowBatch, np.ndarray],
    grids: Sequence[SensitivityGrid],
) -> list[SensitivityRow]:
    """Mean prediction change (W) versus step 0 when one feature is overwritten.

    ``baseline`` holds normalized windows; the probed column is set to the
    (normalized, clamped) step value at every time step of every window.
    """
    X = baseline.features if isinstance(baseline, WindowBatch) else np.asarray(baseline, dtype=np.float64)
    if X.ndim != 3 or X.shape[0] == 0:
        raise InvalidParameterError("baseline needs at least one window")
    rows = []
    for grid in grids:
        col = FEATURE_INDEX[grid.column]
        means = []
        for value in grid.steps:
            Xp = X.copy()
            Xp[:, :, col] = scaler.transform_value(grid.column, value)
            means.append(float(np.mean(scaler.inverse_target(predict(model, Xp)))))
        base = means[2]
        for label, value, m in zip(STEP_LABELS, grid.steps, means):
            delta = 0.0 if label == "Step0" else m - base
            rows.append(SensitivityRow(grid.feature, label, value, delta))
    return rows


def emit_divergent_bars(rows: Sequence[SensitivityRow], path: Union[str, Path]) -> None:
    """Write ``feature,step_label,step_value,delta_watts`` records for plotting."""
    by_feature: dict[str, set] = {}
    for r in rows:
        by_feature.setdefault(r.feature, set()).add(r.step_label)
    for feature, labels in by_feature.items():
        if labels != set(STEP_LABELS):
            raise InvalidParameterError(f"{feature}: incomplete step grid {sorted(labels)}")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([r.feature, r.step_label, repr(float(r.step_value)), repr(float(r.delta_watts))])


def read_divergent_bars(path: Union[str, Path]) -> list[SensitivityRow]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise InvalidParameterError(f"{path}: unexpected header {header}")
        return [SensitivityRow(f, lab, float(v), float(d)) for f, lab, v, d in reader]


def write_grid_table(grids: Sequence[SensitivityGrid], path: Union[str, Path]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("feature",) + STEP_LABELS)
        for g in grids:
            w.writerow([g.feature] + [f"{v:.2f}" for v in g.steps])
