import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uavpower import dataset as D
from uavpower.errors import DegenerateScaleError, InvalidParameterError, NoDataError, SchemaError, UnlabeledSampleError
from uavpower.synthetic import make_flight

CMAP = D.load_column_map()
HEADER = [CMAP[k] for k in D.REQUIRED_COLUMNS]


def row(fid="1", t=0.0, voltage="24.0", current="10.0", **over):
    vals = {name: 0.0 for name in D.FEATURES}
    vals.update(orientation_w=1.0, wind_speed=1.5, payload=250.0, cmd_speed=8.0, cmd_altitude=50.0)
    vals.update(over)
    return [fid, repr(t)] + [repr(vals[n]) for n in D.FEATURES] + [voltage, current]


def write(path, rows, header=HEADER):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def test_feature_schema():
    assert D.N_FEATURES == 21
    assert len(set(D.FEATURES)) == 21


def test_default_column_map_covers_schema():
    assert set(CMAP) == set(D.REQUIRED_COLUMNS)


class TestParse:
    def test_identity_parse(self, tmp_path):
        f = write(tmp_path / "a.csv", [row(t=0.5, wind_speed=2.25, velocity_x=3.125), row(t=1.0)])
        (rec,) = D.parse_flight_csv(f)
        assert rec.flight_id == "1" and len(rec) == 2
        s = rec.samples[0]
        assert (s.t, s.wind_speed, s.velocity_x, s.payload, s.battery_voltage) == (0.5, 2.25, 3.125, 250.0, 24.0)

    def test_shuffled_timestamps_sorted(self, tmp_path):
        f = write(tmp_path / "a.csv", [row(t=3.0), row(t=1.0), row(t=2.0), row(fid="2", t=0.1)])
        recs = D.parse_flight_csv(f)
        assert [r.flight_id for r in recs] == ["1", "2"]
        assert list(recs[0].times()) == [1.0, 2.0, 3.0]

    def test_bad_voltage_rejected(self, tmp_path):
        f = write(tmp_path / "a.csv", [row(t=0.0), row(t=1.0, voltage="abc"), row(t=2.0)])
        bad = []
        (rec,) = D.parse_flight_csv(f, bad_rows=bad)
        assert len(rec) == 2
        assert len(bad) == 1 and bad[0].line == 3

    def test_bad_row_cap(self, tmp_path):
        f = write(tmp_path / "a.csv", [row(t=float(i), voltage="x") for i in range(5)])
        with pytest.raises(SchemaError):
            D.parse_flight_csv(f, max_bad_rows=3)

    def test_missing_column(self, tmp_path):
        f = write(tmp_path / "a.csv", [row()[:-1]], header=HEADER[:-1])
        with pytest.raises(SchemaError, match="battery_current"):
            D.parse_flight_csv(f)

    def test_unlabeled_rows_kept(self, tmp_path):
        f = write(tmp_path / "a.csv", [row(t=0.0, voltage="", current="")])
        (rec,) = D.parse_flight_csv(f)
        assert not rec.samples[0].labeled
        with pytest.raises(UnlabeledSampleError):
            D.power_label(rec.samples[0])

    def test_invalid_quaternion_rejected(self, tmp_path):
        f = write(tmp_path / "a.csv", [row(t=0.0, orientation_w=0.5), row(t=1.0)])
        bad = []
        (rec,) = D.parse_flight_csv(f, bad_rows=bad)
        assert len(rec) == 1 and len(bad) == 1

    def test_duplicate_timestamp_dropped(self, tmp_path):
        f = write(tmp_path / "a.csv", [row(t=1.0), row(t=1.0, wind_speed=9.0)])
        (rec,) = D.parse_flight_csv(f)
        assert len(rec) == 1

    def test_custom_delimiter(self, tmp_path):
        f = tmp_path / "a.tsv"
        f.write_text("\t".join(HEADER) + "\n" + "\t".join(row()) + "\n")
        (rec,) = D.parse_flight_csv(f, delimiter="\t")
        assert len(rec) == 1

    def test_empty_directory(self, tmp_path):
        with pytest.raises(NoDataError):
            D.parse_dataset(tmp_path)

    def test_round_trip_full_precision(self, tmp_path):
        recs = [make_flight("7", n=15, seed=5), make_flight("8", n=12, seed=6)]
        D.write_flight_csv(recs, tmp_path / "a.csv")
        back = D.parse_flight_csv(tmp_path / "a.csv")
        assert [r.flight_id for r in back] == ["7", "8"]
        for a, b in zip(recs, back):
            assert a.samples == b.samples


class TestLabel:
    def test_product(self):
        s = make_flight("1", n=10).samples[0]
        s = D.FlightSample(**{**s.__dict__, "battery_voltage": 15.2, "battery_current": 20.0})
        assert D.power_label(s) == pytest.approx(304.0, rel=1e-15)
        s0 = D.FlightSample(**{**s.__dict__, "battery_current": 0.0})
        assert D.power_label(s0) == 0.0

    def test_plausible_band(self, flights):
        for f in flights:
            assert 50.0 <= f.labels().mean() <= 1500.0


class TestWindows:
    @pytest.mark.parametrize("n,T,stride,count", [(10, 10, 1, 1), (12, 10, 1, 3), (12, 10, 2, 2), (9, 10, 1, 0)])
    def test_counts(self, n, T, stride, count):
        X, y = D.build_windows(make_flight("1", n=n), T, stride)
        assert X.shape == (count, T, 21) and y.shape == (count,)

    def test_content(self):
        rec = make_flight("1", n=14)
        X, y = D.build_windows(rec, 10, 2)
        feats, labels = rec.features(), rec.labels()
        np.testing.assert_array_equal(X[1], feats[2:12])
        assert y[1] == labels[11]

    def test_no_cross_flight_windows(self, flights):
        sc = D.fit_scaler_from_flights(flights)
        wb = D.make_window_batch(flights[:3], sc, 10)
        assert len(wb) == sum(len(f) - 9 for f in flights[:3])
        assert wb.features.shape[1:] == (10, 21)
        assert np.all(np.isfinite(wb.targets))
        # the first window of the second flight equals that flight's first 10 rows
        i = len(flights[0]) - 9
        np.testing.assert_allclose(wb.features[i], sc.transform_features(flights[1].features()[:10]))


class TestScaler:
    def test_midpoint(self):
        sc = D.fit_scaler(np.array([[0.0], [10.0]]), np.array([0.0, 1.0]), names=["x"])
        assert sc.transform_features(np.array([5.0]))[0] == 0.0

    def test_degenerate(self):
        feats = np.array([[0.0, 1.0], [0.0, 2.0]])
        with pytest.raises(DegenerateScaleError, match="'a'"):
            D.fit_scaler(feats, np.array([0.0, 1.0]), names=["a", "b"])

    def test_out_of_range_clamped(self):
        sc = D.fit_scaler(np.array([[0.0], [10.0]]), np.array([0.0, 1.0]), names=["x"])
        assert sc.transform_features(np.array([20.0]))[0] == 1.0
        assert sc.transform_features(np.array([20.0]), clamp=False)[0] == 3.0
        assert sc.transform_target(-5.0) == -1.0

    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=40).filter(lambda v: max(v) > min(v)))
    def test_round_trip(self, vals):
        v = np.array(vals)
        feats = np.stack([v] * 21, axis=1)
        sc = D.fit_scaler(feats, v)
        back = sc.inverse_features(sc.transform_features(feats))
        scale = np.maximum(np.abs(feats), np.ptp(v))
        assert np.all(np.abs(back - feats) <= 1e-12 * scale)
        ty = sc.inverse_target(sc.transform_target(v))
        assert np.all(np.abs(ty - v) <= 1e-12 * np.maximum(np.abs(v), np.ptp(v)))

    def test_dict_round_trip(self, flights):
        sc = D.fit_scaler_from_flights(flights)
        assert D.Scaler.from_dict(sc.to_dict()) == sc

    def test_spec_wrappers(self, flights):
        sc = D.fit_scaler_from_flights(flights)
        x = flights[0].features()
        np.testing.assert_allclose(D.invert_scaler(sc, D.apply_scaler(sc, x)), x, rtol=1e-12, atol=1e-9)


class TestKFold:
    def test_exact(self):
        folds = D.kfold_split(10, 5, seed=0)
        assert [len(f) for f in folds] == [2] * 5

    def test_remainder(self):
        folds = D.kfold_split(11, 5, seed=0)
        assert sorted(len(f) for f in folds) == [2, 2, 2, 2, 3]

    @given(st.integers(2, 60), st.integers(2, 10), st.integers(0, 2 ** 31))
    def test_partition(self, n, k, seed):
        if n < k:
            with pytest.raises(InvalidParameterError):
                D.kfold_split(n, k, seed)
            return
        folds = D.kfold_split(n, k, seed)
        allidx = np.concatenate(folds)
        assert sorted(allidx.tolist()) == list(range(n))
        sizes = [len(f) for f in folds]
        assert max(sizes) - min(sizes) <= 1
        again = D.kfold_split(n, k, seed)
        assert all(np.array_equal(a, b) for a, b in zip(folds, again))

    def test_bad_k(self):
        with pytest.raises(InvalidParameterError):
            D.kfold_split(10, 1)


class TestCache:
    def test_round_trip(self, tmp_path, rng):
        X, y = rng.normal(size=(7, 10, 21)), rng.normal(size=7)
        digest = b"\x01" * 32
        D.write_window_cache(tmp_path / "w.bin", X, y, digest)
        X2, y2, d2 = D.read_window_cache(tmp_path / "w.bin")
        assert np.array_equal(X, X2) and np.array_equal(y, y2) and d2 == digest
        assert D.read_cache_hash(tmp_path / "w.bin") == digest

    def test_header_layout(self, tmp_path, rng):
        D.write_window_cache(tmp_path / "w.bin", rng.normal(size=(2, 3, 21)), np.zeros(2), b"\0" * 32)
        raw = (tmp_path / "w.bin").read_bytes()
        assert raw[:8] == D.CACHE_MAGIC
        assert int.from_bytes(raw[8:12], "little") == D.CACHE_VERSION
        assert int.from_bytes(raw[12:16], "little") == 3
        assert int.from_bytes(raw[16:20], "little") == 21

    def test_truncated(self, tmp_path, rng):
        D.write_window_cache(tmp_path / "w.bin", rng.normal(size=(2, 3, 21)), np.zeros(2), b"\0" * 32)
        data = (tmp_path / "w.bin").read_bytes()
        (tmp_path / "w.bin").write_bytes(data[:-5])
        with pytest.raises(SchemaError):
            D.read_window_cache(tmp_path / "w.bin")


def test_unlabeled_target_windows_skipped(flights):
    import dataclasses

    rec = flights[0]
    samples = list(rec.samples)
    samples[11] = dataclasses.replace(samples[11], battery_voltage=None, battery_current=None)
    holey = D.FlightRecord(rec.flight_id, samples)
    X, y = D.build_windows(holey, 10, 1)
    assert len(y) == len(rec) - 9 - 1 and np.all(np.isfinite(y))
    full = D.fit_scaler_from_flights(flights[:3])
    assert D.fit_scaler_from_flights([holey] + list(flights[1:3])).target_max <= full.target_max
