"""Telemetry ingestion, feature extraction, windowing and normalization.

A flight log is a delimited text file with one row per sample; a column map
binds the semantic field names used here to the file's headers. The 21 model
features are listed in :data:`FEATURES` in the order they appear in every
feature matrix and window tensor.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import struct
from collections import defaultdict
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import (
    DegenerateScaleError,
    InvalidParameterError,
    NoDataError,
    SchemaError,
    UnlabeledSampleError,
)

log = logging.getLogger(__name__)

FEATURES: tuple[str, ...] = (
    "wind_speed",
    "wind_angle",
    "position_x",
    "position_y",
    "position_z",
    "orientation_x",
    "orientation_y",
    "orientation_z",
    "orientation_w",
    "velocity_x",
    "velocity_y",
    "velocity_z",
    "angular_x",
    "angular_y",
    "angular_z",
    "lin_accel_x",
    "lin_accel_y",
    "lin_accel_z",
    "cmd_speed",
    "payload",
    "cmd_altitude",
)
N_FEATURES = len(FEATURES)
FEATURE_INDEX = {name: i for i, name in enumerate(FEATURES)}
LABEL_FIELDS = ("battery_voltage", "battery_current")
REQUIRED_COLUMNS = ("flight_id", "time") + FEATURES + LABEL_FIELDS

DEFAULT_WINDOW = 10
QUATERNION_TOL = 1e-2


@dataclass(frozen=True)
class FlightSample:
    t: float
    wind_speed: float
    wind_angle: float
    position_x: float
    position_y: float
    position_z: float
    orientation_x: float
    orientation_y: float
    orientation_z: float
    orientation_w: float
    velocity_x: float
    velocity_y: float
    velocity_z: float
    angular_x: float
    angular_y: float
    angular_z: float
    lin_accel_x: float
    lin_accel_y: float
    lin_accel_z: float
    cmd_speed: float
    payload: float
    cmd_altitude: float
    battery_voltage: Optional[float] = None
    battery_current: Optional[float] = None

    def __post_init__(self) -> None:
        if self.wind_speed < 0:
            raise InvalidParameterError(f"wind_speed must be >= 0, got {self.wind_speed}")
        if self.payload < 0:
            raise InvalidParameterError(f"payload must be >= 0, got {self.payload}")
        qn = math.sqrt(
            self.orientation_x ** 2 + self.orientation_y ** 2
            + self.orientation_z ** 2 + self.orientation_w ** 2
        )
        if abs(qn - 1.0) > QUATERNION_TOL:
            raise InvalidParameterError(f"orientation quaternion norm {qn:.4f} is not unit")
        if self.battery_voltage is not None and self.battery_voltage <= 0:
            raise InvalidParameterError(f"battery_voltage must be > 0, got {self.battery_voltage}")
        if self.battery_current is not None and self.battery_current < 0:
            raise InvalidParameterError(f"battery_current must be >= 0, got {self.battery_current}")

    @property
    def labeled(self) -> bool:
        return self.battery_voltage is not None and self.battery_current is not None

    def feature_vector(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURES], dtype=np.float64)


@dataclass
class FlightRecord:
    flight_id: str
    samples: list[FlightSample]

    def __post_init__(self) -> None:
        ts = [s.t for s in self.samples]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise InvalidParameterError(f"flight {self.flight_id}: timestamps not strictly increasing")

    def __len__(self) -> int:
        return len(self.samples)

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples], dtype=np.float64)

    def features(self) -> np.ndarray:
        """(n_samples, 21) feature matrix in :data:`FEATURES` order."""
        if not self.samples:
            return np.empty((0, N_FEATURES))
        return np.stack([s.feature_vector() for s in self.samples])

    def labels(self, strict: bool = True) -> np.ndarray:
        """Power labels; with ``strict=False`` unlabeled samples become NaN."""
        if strict:
            return np.array([power_label(s) for s in self.samples], dtype=np.float64)
        return np.array([power_label(s) if s.labeled else np.nan for s in self.samples], dtype=np.float64)


def power_label(sample: FlightSample) -> float:
    """Instantaneous electrical power (W) = voltage * current."""
    if not sample.labeled:
        raise UnlabeledSampleError(f"sample at t={sample.t} has no voltage/current")
    return sample.battery_voltage * sample.battery_current


# -- parsing ----------------------------------------------------------------


@dataclass(frozen=True)
class RowError:
    line: int
    message: str


def load_column_map(path: Union[str, Path, None] = None) -> dict[str, str]:
    """Load a JSON column map; ``None`` loads the shipped default."""
    if path is None:
        text = resources.files("uavpower").joinpath("data/column_map.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    cmap = json.loads(text)
    unknown = set(cmap) - set(REQUIRED_COLUMNS)
    if unknown:
        raise SchemaError(f"column map has unknown semantic fields: {sorted(unknown)}")
    missing = set(REQUIRED_COLUMNS) - set(cmap)
    if missing:
        raise SchemaError(f"column map lacks semantic fields: {sorted(missing)}")
    return cmap


def _optional_float(text: str) -> Optional[float]:
    text = text.strip()
    return None if text == "" else float(text)


def parse_flight_csv(
    path: Union[str, Path],
    column_map: Optional[Mapping[str, str]] = None,
    delimiter: str = ",",
    max_bad_rows: int = 1000,
    bad_rows: Optional[list[RowError]] = None,
) -> list[FlightRecord]:
    """Parse a telemetry file into flights sorted by time.

    Malformed rows are skipped and appended to ``bad_rows`` (with 1-based file
    line numbers) until ``max_bad_rows`` is exceeded, which raises
    :class:`SchemaError`. Duplicate timestamps within a flight keep the first
    row. Flights are returned in order of first appearance.
    """
    cmap = dict(column_map) if column_map is not None else load_column_map()
    errors = bad_rows if bad_rows is not None else []
    path = Path(path)
    grouped: dict[str, list[FlightSample]] = defaultdict(list)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise NoDataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        missing = [f"{k} -> {v!r}" for k, v in cmap.items() if v not in header]
        if missing:
            raise SchemaError(f"{path}: mapped columns not in header: {', '.join(missing)}")
        idx = {k: header.index(v) for k, v in cmap.items()}
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            try:
                if len(row) != len(header):
                    raise ValueError(f"expected {len(header)} fields, got {len(row)}")
                values = {name: float(row[idx[name]]) for name in ("time",) + FEATURES}
                values["t"] = values.pop("time")
                for name in LABEL_FIELDS:
                    values[name] = _optional_float(row[idx[name]])
                sample = FlightSample(**values)
            except (ValueError, InvalidParameterError) as exc:
                errors.append(RowError(line, str(exc)))
                log.warning("%s:%d: rejected row: %s", path, line, exc)
                if len(errors) > max_bad_rows:
                    raise SchemaError(f"{path}: more than {max_bad_rows} bad rows") from exc
                continue
            grouped[row[idx["flight_id"]].strip()].append(sample)

    records = []
    for fid, samples in grouped.items():
        samples.sort(key=lambda s: s.t)
        deduped = [samples[0]]
        for s in samples[1:]:
            if s.t > deduped[-1].t:
                deduped.append(s)
        if len(deduped) < len(samples):
            log.warning("flight %s: dropped %d duplicate timestamps", fid, len(samples) - len(deduped))
        records.append(FlightRecord(fid, deduped))
    return records


def parse_dataset(
    path: Union[str, Path],
    column_map: Optional[Mapping[str, str]] = None,
    **kwargs,
) -> list[FlightRecord]:
    """Parse one telemetry file or every ``*.csv`` file in a directory."""
    path = Path(path)
    files = sorted(path.glob("*.csv")) if path.is_dir() else [path]
    if not files:
        raise NoDataError(f"{path}: no telemetry files found")
    records = []
    for f in files:
        records.extend(parse_flight_csv(f, column_map, **kwargs))
    if not records:
        raise NoDataError(f"{path}: no telemetry rows found")
    return records


def write_flight_csv(
    records: Iterable[FlightRecord],
    path: Union[str, Path],
    column_map: Optional[Mapping[str, str]] = None,
    delimiter: str = ",",
) -> None:
    """Write flights back out in the column map's layout (full float precision)."""
    cmap = dict(column_map) if column_map is not None else load_column_map()
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        w.writerow([cmap[k] for k in REQUIRED_COLUMNS])
        for rec in records:
            for s in rec.samples:
                row = [rec.flight_id, repr(s.t)]
                row += [repr(getattr(s, name)) for name in FEATURES]
                row += ["" if getattr(s, n) is None else repr(getattr(s, n)) for n in LABEL_FIELDS]
                w.writerow(row)


# -- windows ----------------------------------------------------------------


def window_starts(n_samples: int, T: int, stride: int = 1) -> range:
    if T < 1 or stride < 1:
        raise InvalidParameterError("window length and stride must be >= 1")
    return range(0, max(n_samples - T + 1, 0), stride)


def build_windows(record: FlightRecord, T: int = DEFAULT_WINDOW, stride: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Raw (unscaled) windows of one flight.

    Returns ``(features, targets)`` with shapes ``(count, T, 21)`` and
    ``(count,)``; the target is the power label of each window's last step.
    Windows whose last step is unlabeled are skipped.
    """
    starts = window_starts(len(record), T, stride)
    if len(starts) == 0:
        log.warning("flight %s has %d samples, fewer than window length %d", record.flight_id, len(record), T)
        return np.empty((0, T, N_FEATURES)), np.empty(0)
    feats = record.features()
    labels = record.labels(strict=False)
    starts = [s for s in starts if np.isfinite(labels[s + T - 1])]
    if not starts:
        return np.empty((0, T, N_FEATURES)), np.empty(0)
    X = np.stack([feats[s:s + T] for s in starts])
    y = np.array([labels[s + T - 1] for s in starts])
    return X, y


@dataclass(frozen=True)
class Scaler:
    """Min-max scaling of features and target to [-1, 1]."""

    feature_min: np.ndarray
    feature_max: np.ndarray
    target_min: float
    target_max: float

    def transform_features(self, x: np.ndarray, clamp: bool = True) -> np.ndarray:
        z = 2.0 * (np.asarray(x, dtype=np.float64) - self.feature_min) / (self.feature_max - self.feature_min) - 1.0
        return np.clip(z, -1.0, 1.0) if clamp else z

    def inverse_features(self, z: np.ndarray) -> np.ndarray:
        return (np.asarray(z, dtype=np.float64) + 1.0) * 0.5 * (self.feature_max - self.feature_min) + self.feature_min

    def transform_target(self, y, clamp: bool = True):
        z = 2.0 * (np.asarray(y, dtype=np.float64) - self.target_min) / (self.target_max - self.target_min) - 1.0
        return np.clip(z, -1.0, 1.0) if clamp else z

    def inverse_target(self, z):
        return (np.asarray(z, dtype=np.float64) + 1.0) * 0.5 * (self.target_max - self.target_min) + self.target_min

    def transform_value(self, feature: str, value: float, clamp: bool = True) -> float:
        i = FEATURE_INDEX[feature]
        lo, hi = self.feature_min[i], self.feature_max[i]
        z = 2.0 * (value - lo) / (hi - lo) - 1.0
        return float(min(max(z, -1.0), 1.0)) if clamp else float(z)

    def to_dict(self) -> dict:
        return {
            "feature_min": [float(v) for v in self.feature_min],
            "feature_max": [float(v) for v in self.feature_max],
            "target_min": float(self.target_min),
            "target_max": float(self.target_max),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Scaler":
        return cls(
            np.array(d["feature_min"], dtype=np.float64),
            np.array(d["feature_max"], dtype=np.float64),
            float(d["target_min"]),
            float(d["target_max"]),
        )

    def __eq__(self, other) -> bool:
        return isinstance(other, Scaler) and self.to_dict() == other.to_dict()


def fit_scaler(features: np.ndarray, targets: np.ndarray, names: Sequence[str] = FEATURES) -> Scaler:
    """Fit min/max on training rows (``features`` is ``(n, F)`` or windows ``(n, T, F)``)."""
    features = np.asarray(features, dtype=np.float64)
    features = features.reshape(-1, features.shape[-1])
    targets = np.asarray(targets, dtype=np.float64).ravel()
    if features.shape[0] < 2 or targets.size < 2:
        raise InvalidParameterError("need at least 2 rows to fit a scaler")
    lo, hi = features.min(axis=0), features.max(axis=0)
    for i in np.flatnonzero(hi <= lo):
        raise DegenerateScaleError(names[i])
    tlo, thi = float(targets.min()), float(targets.max())
    if thi <= tlo:
        raise DegenerateScaleError("power")
    return Scaler(lo, hi, tlo, thi)


def fit_scaler_from_flights(records: Sequence[FlightRecord]) -> Scaler:
    feats = np.concatenate([r.features() for r in records])
    labels = np.concatenate([r.labels(strict=False) for r in records])
    return fit_scaler(feats, labels[np.isfinite(labels)])


def apply_scaler(scaler: Scaler, features: np.ndarray, clamp: bool = True) -> np.ndarray:
    return scaler.transform_features(features, clamp=clamp)


def invert_scaler(scaler: Scaler, features: np.ndarray) -> np.ndarray:
    return scaler.inverse_features(features)


@dataclass
class WindowBatch:
    features: np.ndarray
    targets: np.ndarray
    scaler: Scaler
    flight_ids: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.features.ndim != 3 or self.features.shape[2] != N_FEATURES:
            raise InvalidParameterError(f"window tensor must be (count, T, {N_FEATURES}), got {self.features.shape}")
        if self.targets.shape != (self.features.shape[0],):
            raise InvalidParameterError("targets must have one entry per window")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def window(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "WindowBatch":
        idx = np.asarray(idx)
        ids = [self.flight_ids[i] for i in idx] if self.flight_ids else []
        return WindowBatch(self.features[idx], self.targets[idx], self.scaler, ids)


def make_window_batch(
    records: Sequence[FlightRecord],
    scaler: Scaler,
    T: int = DEFAULT_WINDOW,
    stride: int = 1,
) -> WindowBatch:
    """Normalized windows for several flights; no window spans two flights."""
    xs, ys, ids = [], [], []
    for rec in records:
        X, y = build_windows(rec, T, stride)
        xs.append(X)
        ys.append(y)
        ids.extend([rec.flight_id] * len(y))
    X = np.concatenate(xs) if xs else np.empty((0, T, N_FEATURES))
    y = np.concatenate(ys) if ys else np.empty(0)
    return WindowBatch(scaler.transform_features(X), scaler.transform_target(y), scaler, ids)


def kfold_split(n_items: int, k: int, seed: int = 0) -> list[np.ndarray]:
    """Shuffle ``range(n_items)`` with ``seed`` and cut it into ``k`` folds.

    Fold sizes differ by at most one. Items are whole flights, so windows of a
    flight never straddle folds.
    """
    if k < 2:
        raise InvalidParameterError(f"k must be >= 2, got {k}")
    if n_items < k:
        raise InvalidParameterError(f"need at least k={k} items, got {n_items}")
    perm = np.random.default_rng(seed).permutation(n_items)
    return [np.sort(f) for f in np.array_split(perm, k)]


# -- window cache -----------------------------------------------------------

CACHE_MAGIC = b"UAVPWIN\x00"
CACHE_VERSION = 1
_CACHE_HEADER = struct.Struct("<8sIIIQ32s")


def write_window_cache(path: Union[str, Path], features: np.ndarray, targets: np.ndarray, source_hash: bytes) -> None:
    """Write windows as header + row-major little-endian float64 features, then targets."""
    count, T, F = features.shape
    if len(source_hash) != 32:
        raise InvalidParameterError("source_hash must be a 32-byte digest")
    with Path(path).open("wb") as fh:
        fh.write(_CACHE_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, T, F, count, source_hash))
        fh.write(np.ascontiguousarray(features, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(targets, dtype="<f8").tobytes())


def read_window_cache(path: Union[str, Path]) -> tuple[np.ndarray, np.ndarray, bytes]:
    data = Path(path).read_bytes()
    if len(data) < _CACHE_HEADER.size:
        raise SchemaError(f"{path}: truncated window cache")
    magic, version, T, F, count, digest = _CACHE_HEADER.unpack_from(data)
    if magic != CACHE_MAGIC:
        raise SchemaError(f"{path}: not a window cache")
    if version != CACHE_VERSION:
        raise SchemaError(f"{path}: unsupported cache version {version}")
    n_x, off = count * T * F, _CACHE_HEADER.size
    if len(data) != off + 8 * (n_x + count):
        raise SchemaError(f"{path}: window cache size mismatch")
    X = np.frombuffer(data, "<f8", n_x, off).reshape(count, T, F).astype(np.float64)
    y = np.frombuffer(data, "<f8", count, off + 8 * n_x).astype(np.float64)
    return X, y, digest


def read_cache_hash(path: Union[str, Path]) -> Optional[bytes]:
    try:
        with Path(path).open("rb") as fh:
            head = fh.read(_CACHE_HEADER.size)
    except OSError:
        return None
    if len(head) < _CACHE_HEADER.size:
        return None
    magic, version, *_, digest = _CACHE_HEADER.unpack(head)
    if magic != CACHE_MAGIC or version != CACHE_VERSION:
        return None
    return digest


def source_digest(paths: Sequence[Union[str, Path]], extra: Mapping) -> bytes:
    """SHA-256 over input file bytes plus a JSON-encoded settings mapping."""
    h = hashlib.sha256()
    for p in sorted(str(p) for p in paths):
        h.update(Path(p).read_bytes())
    h.update(json.dumps(dict(extra), sort_keys=True).encode("utf-8"))
    return h.digest()


def sample_fields() -> tuple[str, ...]:
    return tuple(f.name for f in fields(FlightSample))
