import csv
import json

import numpy as np
import pytest

from ssa.calibrate import cv_from_json
from ssa.cli import EXIT_CALIBRATION, EXIT_CONFIG, EXIT_DATA, main
from ssa.dataio import read_numeric_csv

# a small, fast setup shared by the commands below
SMALL = ["--set", "ladder.K=6", "--set", "ladder.N1=5", "--set", "ladder.NK=60",
         "--set", "calibration.replicates=1000", "--set", "calibration.design_n=150",
         "--set", "weak.kernel_K=4", "--set", "weak.kernel_h1=0.3"]


def run(tmp_path, command, *extra, out="out"):
    return main([command, "--output-dir", str(tmp_path / out), *SMALL, *extra])


@pytest.fixture
def sample_csv(tmp_path):
    assert run(tmp_path, "simulate", "--set", "simulate.n_per_class=40", out="sim") == 0
    return tmp_path / "sim" / "sample.csv"


def test_simulate_writes_labeled_sample(tmp_path):
    assert run(tmp_path, "simulate", "--set", "simulate.n_per_class=100") == 0
    header, data = read_numeric_csv(tmp_path / "out" / "sample.csv")
    assert header == ["x1", "x2", "y"] and data.shape == (200, 3)
    assert data[:, 2].sum() == 100
    cfg = json.loads((tmp_path / "out" / "config.simulate.json").read_text())
    assert cfg["simulate"]["n_per_class"] == 100


def test_simulate_example42_has_ten_coordinates(tmp_path):
    assert run(tmp_path, "simulate", "--example", "example42", "--set", "simulate.n_per_class=5") == 0
    header, _ = read_numeric_csv(tmp_path / "out" / "sample.csv")
    assert header[-1] == "y" and len(header) == 11


def test_calibrate_writes_affine_values(tmp_path, capsys):
    assert run(tmp_path, "calibrate") == 0
    cv = cv_from_json((tmp_path / "out" / "critical_values.json").read_text())
    assert cv.K == 6 and cv.slope >= 0
    np.testing.assert_allclose(cv.z, cv.base + cv.slope * np.arange(5, -1, -1))
    assert "max validation risk" in capsys.readouterr().out


def test_calibrate_two_levels_has_zero_slope(tmp_path):
    assert run(tmp_path, "calibrate", "--set", "ladder.K=2") == 0
    cv = cv_from_json((tmp_path / "out" / "critical_values.json").read_text())
    assert cv.slope == 0.0


def test_classify_reports_error(tmp_path, sample_csv, capsys):
    assert run(tmp_path, "classify", "--input", str(sample_csv), "--set", f"classify.test={sample_csv}",
               "--svg") == 0
    header, data = read_numeric_csv(tmp_path / "out" / "predictions.csv")
    assert header == ["x1", "x2", "theta_hat", "label"] and data.shape == (80, 4)
    assert np.all((data[:, 3] == 1) == (data[:, 2] >= 0.5))
    assert "error_rate=" in capsys.readouterr().out
    assert (tmp_path / "out" / "classify.svg").exists()
    assert (tmp_path / "out" / "critical_values.json").exists()


def test_estimate_with_traces(tmp_path):
    x = np.linspace(0, 1, 120) + np.arange(120) * 1e-5
    y = np.where(x < 0.5, 0.0, 2.0) + np.random.default_rng(0).normal(0, 0.1, 120)
    data = tmp_path / "reg.csv"
    data.write_text("x1,y\n" + "".join(f"{a!r},{b!r}\n" for a, b in zip(x.tolist(), y.tolist())))
    q = tmp_path / "q.csv"
    q.write_text("x1\n0.1\n0.9\n")
    assert run(tmp_path, "estimate", "--input", str(data), "--set", "model.family=gaussian",
               "--set", "model.sigma=0.1", "--set", f"estimate.query={q}", "--set", "estimate.trace_dump=true") == 0
    with open(tmp_path / "out" / "estimates.csv", newline="") as fh:
        header, *rows = list(csv.reader(fh))
    assert header == ["x1", "theta_hat", "selected_gamma_profile_hash"]
    assert abs(float(rows[0][1])) < 0.2 and abs(float(rows[1][1]) - 2.0) < 0.2
    traces = json.loads((tmp_path / "out" / "traces.json").read_text())
    assert len(traces) == 2 and len(traces[0]["gamma"]) == 6


def test_cv_table(tmp_path, sample_csv):
    assert run(tmp_path, "cv", "--input", str(sample_csv), "--svg") == 0
    text = (tmp_path / "out" / "cv_results.csv").read_text().splitlines()
    assert text[0] == "method,param,mean_error,stderr,runs"
    methods = {line.split(",")[0] for line in text[1:]}
    assert methods == {"knn", "kernel", "ssa"}
    assert (tmp_path / "out" / "cv_knn.svg").exists()


def test_benchmark_table(tmp_path):
    assert run(tmp_path, "benchmark", "--runs", "2", "--set", "benchmark.n_train_per_class=40",
               "--set", "benchmark.n_test_per_class=40") == 0
    lines = (tmp_path / "out" / "benchmark.csv").read_text().splitlines()
    methods = [line.split(",")[0] for line in lines[1:]]
    assert methods.count("ssa") == 1 and methods.count("bayes") == 1 and methods.count("knn") == 6


def test_print_config(capsys):
    assert main(["simulate", "--print-config", "--seed", "4"]) == 0
    assert json.loads(capsys.readouterr().out)["seed"] == 4


# -- exit codes -------------------------------------------------------------

def test_unknown_key_is_config_error(tmp_path):
    assert run(tmp_path, "simulate", "--set", "simulate.bogus=1") == EXIT_CONFIG


def test_missing_input_is_config_error(tmp_path):
    assert run(tmp_path, "cv") == EXIT_CONFIG


def test_malformed_data_is_data_error(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("x1,y\n0.1,1\n0.2\n")
    assert run(tmp_path, "cv", "--input", str(bad)) == EXIT_DATA


def test_non_binary_labels_are_data_error(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("x1,y\n" + "".join(f"{i},{i % 3}\n" for i in range(80)))
    assert run(tmp_path, "cv", "--input", str(bad)) == EXIT_DATA


def test_calibration_ceiling_is_calibration_error(tmp_path):
    assert run(tmp_path, "calibrate", "--set", "calibration.z_max=1e-9") == EXIT_CALIBRATION


def test_mismatched_calibration_file_is_config_error(tmp_path, sample_csv):
    assert run(tmp_path, "calibrate", "--set", "ladder.K=4", out="cal") == 0
    cal = tmp_path / "cal" / "critical_values.json"
    assert run(tmp_path, "cv", "--input", str(sample_csv), "--calibration", str(cal)) == EXIT_CONFIG


# -- determinism ------------------------------------------------------------

@pytest.mark.parametrize("command, files", [
    ("simulate", ["sample.csv"]),
    ("calibrate", ["critical_values.json"]),
    ("benchmark", ["benchmark.csv", "benchmark_critical_values.json"]),
])
def test_repeated_runs_are_byte_identical(tmp_path, command, files):
    extra = ["--runs", "1", "--set", "benchmark.n_train_per_class=40"] if command == "benchmark" else []
    names = files + [f"config.{command}.json"]
    assert run(tmp_path, command, *extra) == 0
    first = {name: (tmp_path / "out" / name).read_bytes() for name in names}
    assert run(tmp_path, command, *extra) == 0
    for name in names:
        assert (tmp_path / "out" / name).read_bytes() == first[name]
