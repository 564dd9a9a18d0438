"""``uavpower`` command line: ingest, train, gridsearch, compare, sensitivity, plotdata.

Every option can also be set through an environment variable named
``UAVPOWER_<SUBCOMMAND>_<OPTION>``, e.g. ``UAVPOWER_TRAIN_EPOCHS=20``.
Each command writes ``manifest_<command>.json`` into its output directory with
the resolved settings, their hash, the seed, input digests and versions.
"""
from __future__ import annotations

import contextlib
import hashlib
import json
import logging
import os
import platform
import re
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path
from typing import Optional

import click
import numpy as np

from . import __version__
from .analytic import dump_profile, load_profile
from .dataset import (
    RowError,
    build_windows,
    fit_scaler_from_flights,
    kfold_split,
    load_column_map,
    make_window_batch,
    parse_dataset,
    read_cache_hash,
    source_digest,
    write_window_cache,
)
from .errors import NoDataError, UavPowerError
from .evaluation import (
    comparison_for_flight,
    grid_search,
    read_series,
    select_best,
    write_rows_csv,
    write_rows_json,
    write_series,
)
from .neural import BACKEND, TrainConfig, load_checkpoint, save_checkpoint, train
from .sensitivity import (
    REFERENCE_RANGES,
    default_grids,
    emit_divergent_bars,
    ranges_from_flights,
    read_divergent_bars,
    sensitivity_analysis,
    write_grid_table,
)

log = logging.getLogger("uavpower")


def load_defaults() -> dict:
    return json.loads(resources.files("uavpower").joinpath("data/defaults.json").read_text("utf-8"))


DEFAULTS = load_defaults()


# -- shared plumbing --------------------------------------------------------


@contextlib.contextmanager
def output_lock(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    lock = out / ".uavpower.lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise click.ClickException(f"{out} is locked by another run (remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield out
    finally:
        lock.unlink(missing_ok=True)


def _dataset_files(path: Path) -> list[Path]:
    if path.is_dir():
        files = sorted(path.glob("*.csv"))
        if not files:
            raise NoDataError(f"{path}: no telemetry files found")
        return files
    return [path]


def write_manifest(out: Path, command: str, settings: dict, inputs: list[Path], seed: Optional[int]) -> None:
    blob = json.dumps(settings, sort_keys=True, default=str)
    doc = {
        "command": command,
        "argv": [Path(sys.argv[0]).name] + sys.argv[1:],
        "settings": json.loads(blob),
        "settings_sha256": hashlib.sha256(blob.encode()).hexdigest(),
        "seed": seed,
        "inputs": {str(p): hashlib.sha256(p.read_bytes()).hexdigest() for p in inputs},
        "versions": {
            "uavpower": __version__,
            "kernel_backend": BACKEND,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
    }
    (out / f"manifest_{command}.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", "utf-8")


def _load_flights(dataset: Path, column_map: Optional[Path]):
    cmap = load_column_map(column_map)
    bad: list[RowError] = []
    flights = parse_dataset(dataset, cmap, max_bad_rows=DEFAULTS["max_bad_rows"], bad_rows=bad)
    return flights, bad


def _train_config(seed, epochs, dropout, lr, batch_size, clip_grad=False) -> TrainConfig:
    cfg = TrainConfig(**DEFAULTS["train"])
    clip = DEFAULTS["clip_norm_when_enabled"] if clip_grad else None
    updates = {k: v for k, v in dict(seed=seed, epochs=epochs, dropout_rate=dropout, learning_rate=lr,
                                     batch_size=batch_size, clip_norm=clip).items() if v is not None}
    return replace(cfg, **updates)


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")


def _inputs(*paths) -> list[Path]:
    out = []
    for p in paths:
        if p is None:
            continue
        p = Path(p)
        out.extend(_dataset_files(p) if p.is_dir() else [p])
    return out


dataset_opt = click.option("--dataset", type=click.Path(exists=True, path_type=Path), required=True,
                           help="Telemetry CSV file or directory of CSV files.")
colmap_opt = click.option("--column-map", type=click.Path(exists=True, dir_okay=False, path_type=Path),
                          help="JSON map from semantic field names to CSV headers.")
out_opt = click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True,
                       help="Output directory.")
seed_opt = click.option("--seed", type=int, default=None, help="Random seed.")
window_opt = click.option("--window", type=int, default=DEFAULTS["window"], show_default=True,
                          help="Window length T.")


def _train_opts(f):
    for opt in reversed([
        click.option("--epochs", type=int, default=None),
        click.option("--dropout", type=float, default=None),
        click.option("--lr", type=float, default=None),
        click.option("--batch-size", type=int, default=None),
        click.option("--clip-grad", is_flag=True,
                     help=f"Clip gradients to global norm {DEFAULTS['clip_norm_when_enabled']}."),
    ]):
        f = opt(f)
    return f


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except UavPowerError as exc:
            raise click.ClickException(f"{type(exc).__name__}: {exc}") from exc


@click.group(cls=_Group, context_settings={"auto_envvar_prefix": "UAVPOWER"})
@click.version_option(__version__)
@click.option("-v", "--verbose", count=True)
def main(verbose: int) -> None:
    """Drone power models: analytic baselines and a BiLSTM regressor."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


# -- commands ---------------------------------------------------------------


@main.command()
@dataset_opt
@colmap_opt
@out_opt
@window_opt
@click.option("--stride", type=int, default=DEFAULTS["stride"], show_default=True)
def ingest(dataset: Path, column_map: Optional[Path], out: Path, window: int, stride: int) -> None:
    """Parse telemetry, print a summary and cache raw windows."""
    with output_lock(out):
        files = _inputs(dataset)
        cmap_files = _inputs(column_map)
        settings = {"window": window, "stride": stride, "column_map": load_column_map(column_map)}
        digest = source_digest(files + cmap_files, settings)
        cache, summary_path = out / "windows.bin", out / "summary.json"
        if read_cache_hash(cache) == digest and summary_path.exists():
            summary = json.loads(summary_path.read_text("utf-8"))
            click.echo("inputs unchanged; reusing cached windows")
        else:
            flights, bad = _load_flights(dataset, column_map)
            xs, ys = zip(*(build_windows(f, window, stride) for f in flights))
            X, y = np.concatenate(xs), np.concatenate(ys)
            labels = np.concatenate([f.labels(strict=False) for f in flights])
            labels = labels[np.isfinite(labels)]
            if labels.size == 0:
                raise NoDataError("no labeled samples (voltage and current) in dataset")
            write_window_cache(cache, X, y, digest)
            summary = {
                "flights": len(flights),
                "samples": int(sum(len(f) for f in flights)),
                "windows": int(len(y)),
                "bad_rows": len(bad),
                "label_watts": {
                    "mean": float(labels.mean()),
                    "std": float(labels.std()),
                    "min": float(labels.min()),
                    "max": float(labels.max()),
                },
                "cache_sha256": digest.hex(),
            }
            summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", "utf-8")
        write_manifest(out, "ingest", settings, files + cmap_files, None)
    lw = summary["label_watts"]
    click.echo(f"flights: {summary['flights']}")
    click.echo(f"samples: {summary['samples']}")
    click.echo(f"windows: {summary['windows']}")
    click.echo(f"bad rows: {summary['bad_rows']}")
    click.echo(f"power label (W): mean {lw['mean']:.3f}  std {lw['std']:.3f}  min {lw['min']:.3f}  max {lw['max']:.3f}")


@main.command("train")
@dataset_opt
@colmap_opt
@out_opt
@seed_opt
@window_opt
@_train_opts
@click.option("--flight", help="Flight id held out from training (for later comparison).")
def train_cmd(dataset, column_map, out, seed, window, epochs, dropout, lr, batch_size, clip_grad, flight) -> None:
    """Train the BiLSTM and write model.ckpt plus per-epoch losses."""
    cfg = _train_config(seed, epochs, dropout, lr, batch_size, clip_grad)
    with output_lock(out):
        flights, _ = _load_flights(dataset, column_map)
        pool = [f for f in flights if f.flight_id != flight]
        if flight is not None and len(pool) == len(flights):
            raise click.ClickException(f"flight {flight!r} not found in dataset")
        if not pool:
            raise NoDataError("no flights left for training")
        if len(pool) >= 2:
            k = min(DEFAULTS["validation_folds"], len(pool))
            val_set = set(kfold_split(len(pool), k, cfg.seed)[0].tolist())
            train_f = [f for i, f in enumerate(pool) if i not in val_set]
            val_f = [f for i, f in enumerate(pool) if i in val_set]
        else:
            train_f = val_f = pool
        scaler = fit_scaler_from_flights(train_f)
        tr = make_window_batch(train_f, scaler, window)
        va = make_window_batch(val_f, scaler, window)
        combined = type(tr)(np.concatenate([tr.features, va.features]),
                            np.concatenate([tr.targets, va.targets]), scaler)
        split = (np.arange(len(tr)), np.arange(len(tr), len(combined)))
        click.echo(f"training on {len(tr)} windows ({len(train_f)} flights), validating on {len(va)} "
                   f"[{BACKEND} kernels]")
        model, report = train(combined, cfg, split)
        extra = {
            "window": window,
            "seed": cfg.seed,
            "train_config": cfg.to_dict(),
            "held_out_flight": flight,
            "train_flights": [f.flight_id for f in train_f],
            "val_flights": [f.flight_id for f in val_f],
        }
        save_checkpoint(model, out / "model.ckpt", scaler, extra)
        (out / "train_report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", "utf-8")
        with (out / "loss_curve.dat").open("w", encoding="utf-8") as fh:
            fh.write("# epoch train_mse val_mse\n")
            for i, (a, b) in enumerate(zip(report.train_loss, report.val_loss), 1):
                fh.write(f"{i} {a!r} {b!r}\n")
        write_manifest(out, "train", {"train": cfg.to_dict(), "window": window, "flight": flight},
                       _inputs(dataset, column_map), cfg.seed)
    click.echo(f"final train MSE {report.train_loss[-1]:.6g}, val MSE {report.val_loss[-1]:.6g}; "
               f"checkpoint {report.checkpoint_id}")


@main.command()
@dataset_opt
@colmap_opt
@out_opt
@seed_opt
@window_opt
@_train_opts
@click.option("--grid", "grid_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="JSON list of [dropout, learning_rate, batch_size] triples.")
@click.option("--folds", type=int, default=DEFAULTS["grid_folds"], show_default=True)
@click.option("--flight", help="Flight id excluded from the search.")
def gridsearch(dataset, column_map, out, seed, window, epochs, dropout, lr, batch_size, clip_grad, grid_path, folds,
               flight):
    """Cross-validated grid search over dropout, learning rate and batch size."""
    base = _train_config(seed, epochs, dropout, lr, batch_size, clip_grad)
    triples = json.loads(grid_path.read_text("utf-8")) if grid_path else DEFAULTS["grid"]
    grid = [replace(base, dropout_rate=float(d), learning_rate=float(l), batch_size=int(b)) for d, l, b in triples]
    with output_lock(out):
        flights, _ = _load_flights(dataset, column_map)
        flights = [f for f in flights if f.flight_id != flight]
        results = grid_search(grid, flights, k=folds, seed=base.seed, T=window)
        note = f"fold-mean RMSE/MAE in watts over {folds} flight-level folds; sorted by avg_mae"
        write_rows_csv(results, out / "gridsearch.csv", note)
        write_rows_json(results, out / "gridsearch.json", "gridsearch", {"note": note, "seed": base.seed})
        write_manifest(out, "gridsearch", {"base": base.to_dict(), "grid": triples, "folds": folds,
                                           "window": window, "flight": flight},
                       _inputs(dataset, column_map, grid_path), base.seed)
    click.echo("dropout  lr        batch  avg_rmse    avg_mae")
    for r in results:
        click.echo(f"{r.dropout:<8} {r.learning_rate:<9} {r.batch_size:<6} {r.avg_rmse:<11.4f} {r.avg_mae:.4f}"
                   + (f"  FAILED: {r.error}" if r.error else ""))
    best = select_best(results)
    click.echo(f"best: dropout={best.dropout} lr={best.learning_rate} batch={best.batch_size}")


def _resolve_flight(flights, flight_id, extra):
    fid = flight_id or extra.get("held_out_flight")
    if fid is None:
        raise click.ClickException("no --flight given and checkpoint records no held-out flight")
    for f in flights:
        if f.flight_id == fid:
            return f
    raise click.ClickException(f"flight {fid!r} not found in dataset")


@main.command()
@dataset_opt
@colmap_opt
@out_opt
@click.option("--profile", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Drone parameter profile (default: shipped reference profile).")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--flight", help="Held-out flight id (default: the one recorded in the checkpoint).")
def compare(dataset, column_map, out, profile, checkpoint, flight) -> None:
    """Score all seven models on one held-out flight."""
    params = load_profile(profile)
    model = scaler = None
    extra: dict = {}
    window = DEFAULTS["window"]
    if checkpoint is not None:
        model, scaler, extra = load_checkpoint(checkpoint)
        window = extra.get("window", window)
    with output_lock(out):
        flights, _ = _load_flights(dataset, column_map)
        target = _resolve_flight(flights, flight, extra)
        if target.flight_id in extra.get("train_flights", []):
            log.warning("flight %s was used for training", target.flight_id)
        cmp = comparison_for_flight(target, params, model, scaler, window)
        note = (f"flight {cmp.flight_id}; metrics averaged over time steps {window - 1}..end "
                f"({len(cmp.truth)} samples) in watts")
        write_rows_csv(cmp.rows, out / "comparison.csv", note)
        write_rows_json(cmp.rows, out / "comparison.json", "comparison",
                        {"note": note, "flight": cmp.flight_id, "seed": extra.get("seed")})
        series_dir = out / "series"
        series_dir.mkdir(exist_ok=True)
        write_series(series_dir / "ground_truth.dat", cmp.times, cmp.truth)
        for name, values in cmp.series.items():
            write_series(series_dir / f"{_slug(name)}.dat", cmp.times, values)
        (out / "profile_used.txt").write_text(dump_profile(params), "utf-8")
        write_manifest(out, "compare", {"flight": cmp.flight_id, "window": window, "profile": dump_profile(params)},
                       _inputs(dataset, column_map, profile, checkpoint), extra.get("seed"))
    click.echo(f"flight {cmp.flight_id} ({len(cmp.truth)} samples)")
    click.echo(f"{'model':<22} {'avg_rmse':>12} {'avg_mae':>10}")
    for r in cmp.rows:
        if r.available:
            click.echo(f"{r.model:<22} {r.avg_rmse:>12.4f} {r.avg_mae:>10.4f}")
        else:
            click.echo(f"{r.model:<22} unavailable: {r.reason}")


@main.command()
@dataset_opt
@colmap_opt
@out_opt
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--flight", help="Baseline flight id (default: held-out flight, else all flights).")
@click.option("--ranges", type=click.Choice(["data", "reference"]), default="data", show_default=True,
              help="Take step +-1 from the dataset min/max or from the reference table ranges.")
def sensitivity(dataset, column_map, out, checkpoint, flight, ranges) -> None:
    """Step / half-step sensitivity of predicted power to altitude, payload and speed."""
    model, scaler, extra = load_checkpoint(checkpoint)
    if scaler is None:
        raise click.ClickException("checkpoint carries no scaler")
    window = extra.get("window", DEFAULTS["window"])
    with output_lock(out):
        flights, _ = _load_flights(dataset, column_map)
        fid = flight or extra.get("held_out_flight")
        base_flights = [f for f in flights if f.flight_id == fid] if fid else flights
        if not base_flights:
            raise click.ClickException(f"flight {fid!r} not found in dataset")
        rng_map = ranges_from_flights(flights) if ranges == "data" else REFERENCE_RANGES
        grids = default_grids(rng_map)
        baseline = make_window_batch(base_flights, scaler, window)
        rows = sensitivity_analysis(model, scaler, baseline, grids)
        write_grid_table(grids, out / "sensitivity_grid.csv")
        emit_divergent_bars(rows, out / "sensitivity.csv")
        write_manifest(out, "sensitivity", {"ranges": ranges, "flight": fid, "window": window},
                       _inputs(dataset, column_map, checkpoint), extra.get("seed"))
    click.echo(f"{'feature':<9} {'step':<9} {'value':>9} {'delta_W':>10}")
    for r in rows:
        click.echo(f"{r.feature:<9} {r.step_label:<9} {r.step_value:>9.2f} {r.delta_watts:>10.4f}")


@main.command()
@click.option("--out", type=click.Path(file_okay=False, exists=True, path_type=Path), required=True,
              help="Directory holding compare and/or sensitivity outputs.")
def plotdata(out: Path) -> None:
    """Emit gnuplot-ready multi-column files from compare/sensitivity outputs."""
    written = []
    series_dir = out / "series"
    if (series_dir / "ground_truth.dat").exists():
        t, truth = read_series(series_dir / "ground_truth.dat")
        analytic_names = ["d_andrea", "d_andrea_headwind", "dorling", "stolaroff", "kirchstein", "tseng"]
        cols, names = [truth], ["ground_truth"]
        for n in analytic_names:
            p = series_dir / f"{n}.dat"
            if p.exists():
                cols.append(read_series(p)[1])
                names.append(n)
        _write_columns(out / "fig_analytic.dat", t, cols, names)
        written.append("fig_analytic.dat")
        if (series_dir / "lstm.dat").exists():
            _write_columns(out / "fig_lstm.dat", t, [truth, read_series(series_dir / "lstm.dat")[1]],
                           ["ground_truth", "lstm"])
            written.append("fig_lstm.dat")
    if (out / "sensitivity.csv").exists():
        rows = read_divergent_bars(out / "sensitivity.csv")
        with (out / "fig_sensitivity.dat").open("w", encoding="utf-8") as fh:
            fh.write("# feature step_label step_value delta_watts\n")
            for r in rows:
                fh.write(f"{r.feature} {r.step_label} {r.step_value!r} {r.delta_watts!r}\n")
        written.append("fig_sensitivity.dat")
    if not written:
        raise click.ClickException(f"{out}: nothing to convert (run compare or sensitivity first)")
    for w in written:
        click.echo(str(out / w))


def _write_columns(path: Path, t, cols, names) -> None:
    with path.open("w", encoding="utf-8") as fh:
        fh.write("# time_s " + " ".join(names) + "\n")
        for i in range(len(t)):
            fh.write(" ".join(repr(float(v)) for v in [t[i]] + [c[i] for c in cols]) + "\n")


if __name__ == "__main__":
    main()
