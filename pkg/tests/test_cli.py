import json

import pytest
from click.testing import CliRunner

from uavpower.cli import main
from uavpower.synthetic import write_dataset


def run(*args, env=None):
    return CliRunner().invoke(main, [str(a) for a in args], env=env, catch_exceptions=False)


@pytest.fixture(scope="module")
def trained(dataset_csv, tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    res = run("train", "--dataset", dataset_csv, "--out", out, "--epochs", 1, "--seed", 4, "--flight", "2")
    assert res.exit_code == 0, res.output
    return out


def test_ingest_two_flights(tmp_path):
    write_dataset(tmp_path / "two.csv", n_flights=2, samples_per_flight=20, seed=1)
    res = run("ingest", "--dataset", tmp_path / "two.csv", "--out", tmp_path / "o")
    assert res.exit_code == 0, res.output
    assert "flights: 2" in res.output and "windows: 22" in res.output
    assert (tmp_path / "o" / "windows.bin").exists()
    assert (tmp_path / "o" / "manifest_ingest.json").exists()


def test_ingest_empty_dir(tmp_path):
    (tmp_path / "empty").mkdir()
    res = run("ingest", "--dataset", tmp_path / "empty", "--out", tmp_path / "o")
    assert res.exit_code != 0
    assert "NoDataError" in res.output


def test_ingest_reuses_cache(tmp_path, dataset_csv):
    out = tmp_path / "o"
    first = run("ingest", "--dataset", dataset_csv, "--out", out)
    assert "reusing" not in first.output
    second = run("ingest", "--dataset", dataset_csv, "--out", out)
    assert "inputs unchanged; reusing cached windows" in second.output
    third = run("ingest", "--dataset", dataset_csv, "--out", out, "--window", 5)
    assert "reusing" not in third.output


def test_schema_error_has_context(tmp_path):
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    res = run("ingest", "--dataset", tmp_path / "bad.csv", "--out", tmp_path / "o")
    assert res.exit_code == 1 and "bad.csv" in res.output


def test_train_outputs(trained):
    names = {p.name for p in trained.iterdir()}
    assert {"model.ckpt", "train_report.json", "loss_curve.dat", "manifest_train.json"} <= names
    man = json.loads((trained / "manifest_train.json").read_text())
    assert man["seed"] == 4 and man["settings"]["flight"] == "2"
    assert man["inputs"] and all(len(v) == 64 for v in man["inputs"].values())


def test_env_override(dataset_csv, tmp_path):
    res = run("train", "--dataset", dataset_csv, "--out", tmp_path, env={"UAVPOWER_TRAIN_EPOCHS": "0"})
    assert res.exit_code != 0 and "epochs" in res.output


def test_compare_byte_identical(dataset_csv, trained, tmp_path):
    outs = []
    for name in ("a", "b"):
        res = run("compare", "--dataset", dataset_csv, "--checkpoint", trained / "model.ckpt", "--out", tmp_path / name)
        assert res.exit_code == 0, res.output
        outs.append(tmp_path / name)
    # the manifest records argv, which names the output directory
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file() and "manifest" not in p.name)
    assert (outs[1] / "manifest_compare.json").exists()
    assert any(str(f) == "comparison.csv" for f in files)
    for f in files:
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), f
    text = (outs[0] / "comparison.csv").read_text()
    assert "Tseng" in text and "LSTM" in text


def test_compare_unknown_flight(dataset_csv, trained, tmp_path):
    res = run("compare", "--dataset", dataset_csv, "--checkpoint", trained / "model.ckpt", "--out", tmp_path,
              "--flight", "nope")
    assert res.exit_code == 1


def test_sensitivity_rows(dataset_csv, trained, tmp_path):
    res = run("sensitivity", "--dataset", dataset_csv, "--checkpoint", trained / "model.ckpt", "--out", tmp_path,
              "--ranges", "reference")
    assert res.exit_code == 0, res.output
    lines = (tmp_path / "sensitivity.csv").read_text().splitlines()
    assert lines[0] == "feature,step_label,step_value,delta_watts"
    assert len(lines) == 16
    assert (tmp_path / "manifest_sensitivity.json").exists()

    plot = run("plotdata", "--out", tmp_path)
    assert plot.exit_code == 0 and (tmp_path / "fig_sensitivity.dat").exists()


def test_gridsearch_one_point(dataset_csv, tmp_path):
    (tmp_path / "grid.json").write_text("[[0.5, 0.001, 128]]")
    res = run("gridsearch", "--dataset", dataset_csv, "--out", tmp_path / "o", "--grid", tmp_path / "grid.json",
              "--epochs", 1, "--folds", 3)
    assert res.exit_code == 0, res.output
    rows = json.loads((tmp_path / "o" / "gridsearch.json").read_text())["rows"]
    assert len(rows) == 1 and rows[0]["dropout"] == 0.5


def test_lock_blocks_concurrent_run(dataset_csv, tmp_path):
    out = tmp_path / "o"
    out.mkdir()
    (out / ".uavpower.lock").write_text("123")
    res = run("ingest", "--dataset", dataset_csv, "--out", out)
    assert res.exit_code == 1 and "locked" in res.output


def test_lock_released(dataset_csv, tmp_path):
    run("ingest", "--dataset", dataset_csv, "--out", tmp_path)
    assert not (tmp_path / ".uavpower.lock").exists()


def test_clip_flag_recorded(dataset_csv, tmp_path):
    res = run("train", "--dataset", dataset_csv, "--out", tmp_path, "--epochs", 1, "--clip-grad")
    assert res.exit_code == 0, res.output
    man = json.loads((tmp_path / "manifest_train.json").read_text())
    assert man["settings"]["train"]["clip_norm"] == 5.0
