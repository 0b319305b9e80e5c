import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from extremal_clustering.cli import main
from extremal_clustering.core import ThresholdSpec, interexceedances, resolve_threshold
from extremal_clustering.estimators import MleOptions, mle_fit
from extremal_clustering.experiments import ExperimentConfig, read_results_csv, run_experiment
from extremal_clustering.models import PRESETS, RngStream, simulate


def test_simulate_matches_library(tmp_path):
    out = tmp_path / "s.txt"
    assert main(["simulate", "--preset", "paper-gaussian", "-n", "1000", "--seed", "7", "-o", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 1000
    lib = simulate(PRESETS["paper-gaussian"], 1000, RngStream(7, 0)).values
    assert np.array_equal(np.array([float(v) for v in lines]), lib)
    again = tmp_path / "t.txt"
    main(["simulate", "--preset", "paper-gaussian", "-n", "1000", "--seed", "7", "-o", str(again)])
    assert again.read_bytes() == out.read_bytes()


def test_simulate_explicit_params(tmp_path):
    out = tmp_path / "s.txt"
    assert main(["simulate", "--family", "logistic-markov", "--params", "0.3,0.9", "-n", "50",
                 "-o", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 50


def _estimate_row(capsys, argv):
    assert main(argv) == 0
    text = capsys.readouterr().out
    return next(csv.DictReader(io.StringIO(text)))


def test_estimate_matches_library(capsys):
    row = _estimate_row(capsys, ["estimate", "--preset", "paper-logistic", "-n", "100000", "--tail-p", "0.05",
                                 "--estimator", "mle", "--k", "5", "--seed", "1"])
    spec = PRESETS["paper-logistic"]
    series = simulate(spec, 100_000, RngStream(1, 0))
    u = resolve_threshold(ThresholdSpec.tail(0.05), spec.family)
    rec = mle_fit(interexceedances(series, u), MleOptions(run_lengths=5))
    assert float(row["gamma"]) == rec.gamma
    for i in range(7):
        assert float(row[f"theta_{i + 1}"]) == rec.thetas[i]
    assert row["method"] == "mle" and row["k"] == " ".join(["5"] * 7)


def test_estimate_from_file_and_level(capsys, tmp_path):
    out = tmp_path / "s.txt"
    main(["simulate", "--preset", "paper-gaussian", "-n", "5000", "--seed", "2", "-o", str(out)])
    capsys.readouterr()
    a = _estimate_row(capsys, ["estimate", "--preset", "paper-gaussian", "--input", str(out), "--level", "1.5"])
    b = _estimate_row(capsys, ["estimate", "--preset", "paper-gaussian", "-n", "5000", "--seed", "2",
                               "--level", "1.5"])
    assert a == b


def test_experiment_writes_outputs(tmp_path):
    cfg = ExperimentConfig("paper-gaussian", lengths=(2000,), tail_probs=(0.1,), reps=8, seed=4)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    out = tmp_path / "out"
    assert main(["experiment", "--config", str(path), "-o", str(out)]) == 0
    assert (out / "provenance.json").exists()
    assert (out / "theta_n2000_p0.1.svg").exists()
    assert read_results_csv(out / "results.csv") == run_experiment(cfg).rows


def test_experiment_failed_cell_exit_code(tmp_path):
    cfg = {"model": "paper-gaussian", "lengths": [20], "tail_probs": [1e-9], "reps": 2}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["experiment", "--config", str(path), "--no-figures", "-o", str(tmp_path / "o")]) == 1


def test_verify_small(tmp_path):
    out = tmp_path / "v.csv"
    code = main(["verify", "-n", "1000", "--reps", "300", "-o", str(out)])
    assert code in (0, 1)
    assert out.read_text().startswith("check,parameters,observed,predicted,se,passed")


@pytest.mark.parametrize("argv", [
    ["simulate", "--bogus"],
    ["estimate", "--preset", "paper-gaussian", "-n", "100"],
    ["simulate", "-n", "10", "-o", "x.txt"],
    ["simulate", "--family", "gaussian-ar", "--params", "1.5", "-n", "10", "-o", "x.txt"],
    ["simulate", "--family", "gaussian-ar", "--params", "a,b", "-n", "10", "-o", "x.txt"],
    ["estimate", "--preset", "paper-gaussian", "-n", "100", "--level", "1", "--estimator", "mle",
     "--fbar", "exact"],
    [],
])
def test_usage_errors_exit_2(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 2


def test_help_exits_zero_and_lists_flags(capsys):
    assert main(["--help"]) == 0
    top = capsys.readouterr().out
    for cmd in ("simulate", "estimate", "verify", "experiment"):
        assert cmd in top
    assert main(["estimate", "--help"]) == 0
    text = capsys.readouterr().out
    for flag in ("--preset", "--family", "--params", "--period", "--tail-p", "--level", "--estimator",
                 "--k", "--fbar", "--seed", "--input"):
        assert flag in text


def test_console_module_entry():
    proc = subprocess.run([sys.executable, "-m", "extremal_clustering", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "experiment" in proc.stdout
