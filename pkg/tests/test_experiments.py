import json
import math
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from extremal_clustering.core import InvalidSpecError, PeriodicModelSpec
from extremal_clustering.experiments import (
    CSV_COLUMNS,
    PRESET_CONFIGS,
    EstimatorConfig,
    ExperimentConfig,
    ExperimentResult,
    read_results_csv,
    run_experiment,
    write_provenance,
    write_results_csv,
)
from extremal_clustering.plotting import render_theta_figure, theta_band

SMALL = ExperimentConfig("paper-logistic", lengths=(3000,), tail_probs=(0.1, 0.05),
                         estimators=(EstimatorConfig("intervals"), EstimatorConfig("mle", 5)),
                         reps=30, seed=5)


@pytest.fixture(scope="module")
def small_result():
    return run_experiment(SMALL, workers=1)


def test_row_count_arithmetic(small_result):
    d = SMALL.spec.d
    cells = len(SMALL.cell_list()) * len(SMALL.estimators)
    assert len(small_result.rows) == cells * (d + 1)
    assert sum(r.phase == "gamma" for r in small_result.rows) == cells


def test_eight_cell_row_count():
    cells = [(1000, 0.1), (1000, 0.05), (1000, 0.01), (2000, 0.1), (2000, 0.05), (2000, 0.01),
             (3000, 0.05), (3000, 0.01)]
    cfg = ExperimentConfig("paper-gaussian", cells=cells, reps=3, seed=1)
    res = run_experiment(cfg)
    assert sum(r.phase == "gamma" for r in res.rows) == 8
    assert sum(r.phase != "gamma" for r in res.rows) == 56


def test_table1_preset_cells():
    cfg = PRESET_CONFIGS["table1"]
    assert len(cfg.cell_list()) == 9
    assert cfg.reps == 1000 and cfg.spec == PeriodicModelSpec.from_dict(cfg.spec.to_dict())


def test_quantiles_ordered_and_counts(small_result):
    for r in small_result.rows:
        assert r.q025 <= r.median <= r.q975
        assert 0 <= r.reps_used <= SMALL.reps
        assert r.reps_used + r.undefined_count == SMALL.reps
        if r.estimator == "intervals":
            assert 0 <= r.q025 and r.q975 <= 1


def test_gamma_is_mean_per_realisation(small_result):
    block = small_result.samples[(3000, 0.1, "mle", "5")]
    gamma = block[:, -1]
    assert np.allclose(gamma, np.nanmean(block[:, :-1], axis=1), equal_nan=True)
    row = small_result.row(3000, 0.1, "mle", "gamma")
    assert row.median == pytest.approx(float(np.nanquantile(gamma, 0.5)))


def test_worker_count_bit_identical_csv(small_result, tmp_path):
    other = run_experiment(SMALL, workers=2)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_results_csv(small_result, a)
    write_results_csv(other, b)
    assert a.read_bytes() == b.read_bytes()


def test_csv_round_trip(small_result, tmp_path):
    path = tmp_path / "r.csv"
    write_results_csv(small_result, path)
    assert path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    assert read_results_csv(path) == small_result.rows


def test_empty_result_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    write_results_csv(ExperimentResult([], {}), path)
    assert path.read_text().strip() == ",".join(CSV_COLUMNS)
    assert read_results_csv(path) == []


def test_undefined_realisations_counted():
    # a tail probability this small leaves most realisations without two exceedances
    cfg = ExperimentConfig("paper-gaussian", lengths=(200,), tail_probs=(0.002,), reps=40, seed=3)
    res = run_experiment(cfg)
    g = res.row(200, 0.002, "intervals", "gamma")
    assert g.undefined_count > 0
    assert g.reps_used + g.undefined_count == 40
    block = res.samples[(200, 0.002, "intervals", "")]
    assert g.undefined_count == int(np.isnan(block[:, -1]).sum())


def test_wholly_failed_cell_reported():
    cfg = ExperimentConfig("paper-gaussian", lengths=(20,), tail_probs=(1e-9,), reps=5)
    res = run_experiment(cfg)
    assert res.failed_cells == [(20, 1e-9, "intervals", "")]
    assert math.isnan(res.row(20, 1e-9, "intervals", "gamma").median)


def test_config_json_round_trip(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(SMALL.to_dict()))
    back = ExperimentConfig.from_json(path)
    assert back.to_dict() == SMALL.to_dict()
    assert back.config_hash() == SMALL.config_hash()
    assert SMALL.replace(seed=6).config_hash() != SMALL.config_hash()


def test_config_explicit_model_and_validation():
    spec = PeriodicModelSpec("logistic-markov", 2, (0.3, 0.6))
    cfg = ExperimentConfig.from_dict({"model": spec.to_dict(), "lengths": [100], "tail_probs": [0.1],
                                      "estimators": [{"name": "mle", "k": [1, 2]}]})
    assert cfg.spec == spec and cfg.estimators[0].k == (1, 2)
    with pytest.raises(InvalidSpecError):
        ExperimentConfig.from_dict({"model": "paper-gaussian", "lengths": [100], "tail_probs": [0.1],
                                    "bogus": 1})
    with pytest.raises(InvalidSpecError):
        ExperimentConfig("paper-gaussian", lengths=(100,), tail_probs=(1.5,))
    with pytest.raises(InvalidSpecError):
        ExperimentConfig("paper-gaussian", lengths=(100,), tail_probs=(0.1,), reps=0)
    with pytest.raises(InvalidSpecError):
        ExperimentConfig("no-such-model", lengths=(100,), tail_probs=(0.1,))
    with pytest.raises(InvalidSpecError):
        EstimatorConfig("mle")


def test_provenance(small_result, tmp_path):
    path = tmp_path / "p.json"
    write_provenance(small_result, path)
    prov = json.loads(path.read_text())
    assert prov["seed"] == 5 and prov["config_hash"] == SMALL.config_hash()
    assert prov["code_version"]


def _svg_root(path):
    root = ET.parse(path).getroot()
    assert root.tag.endswith("svg")
    return root


def test_figure_and_band(small_result, tmp_path):
    path = tmp_path / "f.svg"
    render_theta_figure(small_result, 3000, 0.05, path, alphas=SMALL.spec.params, d=7)
    _svg_root(path)
    medians, lo, hi = theta_band(small_result, 3000, 0.05, 7)
    assert set(medians) == {"intervals", "mle (k=5)"}
    for med in medians.values():
        ok = ~np.isnan(med)
        assert np.all(lo[ok] <= med[ok]) and np.all(med[ok] <= hi[ok])


def test_figure_is_deterministic(small_result, tmp_path):
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    render_theta_figure(small_result, 3000, 0.1, a, alphas=SMALL.spec.params)
    render_theta_figure(small_result, 3000, 0.1, b, alphas=SMALL.spec.params)
    assert a.read_bytes() == b.read_bytes()


def test_figure_single_phase(tmp_path):
    spec = PeriodicModelSpec("logistic-markov", 1, (0.5,))
    cfg = ExperimentConfig(spec, lengths=(2000,), tail_probs=(0.05,), reps=10, seed=1)
    res = run_experiment(cfg)
    path = tmp_path / "d1.svg"
    render_theta_figure(res, 2000, 0.05, path, alphas=spec.params, d=1)
    _svg_root(path)


def test_figure_with_missing_phase(tmp_path):
    cfg = ExperimentConfig("paper-gaussian", lengths=(20,), tail_probs=(1e-9,), reps=3)
    res = run_experiment(cfg)
    path = tmp_path / "gap.svg"
    render_theta_figure(res, 20, 1e-9, path, d=7)
    _svg_root(path)


@pytest.mark.parametrize("name", sorted(PRESET_CONFIGS))
def test_shipped_configs_match_presets(name):
    path = Path(__file__).resolve().parents[1] / "configs" / f"{name}.json"
    assert ExperimentConfig.from_json(path).config_hash() == PRESET_CONFIGS[name].config_hash()
