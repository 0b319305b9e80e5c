"""Config-driven Monte Carlo studies of the estimators.

A study simulates ``reps`` realisations for every sequence length, estimates
``theta_1..theta_d`` and ``gamma`` at each threshold with each estimator, and
summarises across realisations by empirical quantiles.  Realisation ``r`` of
length index ``j`` always uses ``RngStream(seed, j * 2**32 + r)``, so the
result is a pure function of the config whatever the worker count.

Config JSON fields::

    {
      "model": "paper-gaussian" | {"family": ..., "d": ..., "params": [...]},
      "lengths": [10000, 100000],          # sequence lengths n
      "tail_probs": [0.1, 0.05],           # thresholds u = q_p
      "cells": [[10000, 0.1], ...],        # optional; replaces lengths x tail_probs
      "estimators": [{"name": "intervals"},
                     {"name": "mle", "k": 5, "fbar": "empirical"}],
      "reps": 1000,
      "seed": 20240101,
      "quantiles": [0.025, 0.5, 0.975],
      "workers": 1                         # hint; never changes results
    }

``k`` is an integer or a list with one run length per phase; ``fbar`` is
``"empirical"`` (``|E| / n``) or ``"exact"`` (the cell's tail probability).
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .core import (
    InvalidSpecError,
    MissingDataError,
    NoExceedancesError,
    PeriodicModelSpec,
    ThresholdSpec,
    empirical_quantiles,
    interexceedances,
    resolve_threshold,
)
from .estimators import MleOptions, estimate_thetas_intervals, mle_fit
from .models import PRESETS, RngStream, simulate
from .parallel import ordered_map

CSV_COLUMNS = ["model", "n", "tail_p", "estimator", "k", "phase", "q025", "median", "q975",
               "reps_used", "undefined_count", "seed"]
CSV_PROBS = (0.025, 0.5, 0.975)
CHUNK = 25


@dataclass(frozen=True)
class EstimatorConfig:
    name: str
    k: int | tuple[int, ...] | None = None
    fbar: str = "empirical"

    def __post_init__(self):
        if self.name not in ("intervals", "mle"):
            raise InvalidSpecError(f"unknown estimator {self.name!r}")
        if self.name == "mle":
            if self.k is None:
                raise InvalidSpecError("mle needs a run length k")
            if self.fbar not in ("empirical", "exact"):
                raise InvalidSpecError("fbar must be 'empirical' or 'exact'")
        if isinstance(self.k, list):
            object.__setattr__(self, "k", tuple(self.k))

    @property
    def k_label(self) -> str:
        if self.name != "mle":
            return ""
        return str(self.k) if isinstance(self.k, int) else " ".join(map(str, self.k))

    def to_dict(self) -> dict:
        out = {"name": self.name}
        if self.name == "mle":
            out["k"] = self.k if isinstance(self.k, int) else list(self.k)
            out["fbar"] = self.fbar
        return out


@dataclass(frozen=True)
class ExperimentConfig:
    model: str | PeriodicModelSpec
    lengths: tuple[int, ...] = ()
    tail_probs: tuple[float, ...] = ()
    estimators: tuple[EstimatorConfig, ...] = (EstimatorConfig("intervals"),)
    reps: int = 1000
    seed: int = 0
    quantiles: tuple[float, ...] = CSV_PROBS
    cells: tuple[tuple[int, float], ...] | None = None
    workers: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(int(n) for n in self.lengths))
        object.__setattr__(self, "tail_probs", tuple(float(p) for p in self.tail_probs))
        object.__setattr__(self, "quantiles", tuple(float(q) for q in self.quantiles))
        if self.cells is not None:
            object.__setattr__(self, "cells", tuple((int(n), float(p)) for n, p in self.cells))
        if self.reps < 1:
            raise InvalidSpecError("reps must be at least 1")
        if any(not 0 < p < 1 for _, p in self.cell_list()):
            raise InvalidSpecError("tail probabilities must lie in (0, 1)")
        if not self.cell_list():
            raise InvalidSpecError("config defines no (n, tail_p) cells")
        if any(not 0 < q < 1 for q in self.quantiles):
            raise InvalidSpecError("quantile probabilities must lie in (0, 1)")
        self.spec  # validates the model

    @property
    def spec(self) -> PeriodicModelSpec:
        if isinstance(self.model, PeriodicModelSpec):
            return self.model
        if self.model not in PRESETS:
            raise InvalidSpecError(f"unknown model preset {self.model!r}")
        return PRESETS[self.model]

    @property
    def model_name(self) -> str:
        return self.model if isinstance(self.model, str) else self.model.family.value

    def cell_list(self) -> list[tuple[int, float]]:
        if self.cells is not None:
            return list(self.cells)
        return [(n, p) for n in self.lengths for p in self.tail_probs]

    def to_dict(self) -> dict:
        out = {
            "model": self.model if isinstance(self.model, str) else self.model.to_dict(),
            "lengths": list(self.lengths),
            "tail_probs": list(self.tail_probs),
            "estimators": [e.to_dict() for e in self.estimators],
            "reps": self.reps,
            "seed": self.seed,
            "quantiles": list(self.quantiles),
        }
        if self.cells is not None:
            out["cells"] = [list(c) for c in self.cells]
        return out

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidSpecError(f"unknown config fields: {sorted(unknown)}")
        model = data["model"]
        if isinstance(model, dict):
            model = PeriodicModelSpec.from_dict(model)
        ests = tuple(EstimatorConfig(**e) for e in data.get("estimators", [{"name": "intervals"}]))
        return cls(
            model=model,
            lengths=tuple(data.get("lengths", ())),
            tail_probs=tuple(data.get("tail_probs", ())),
            estimators=ests,
            reps=int(data.get("reps", 1000)),
            seed=int(data.get("seed", 0)),
            quantiles=tuple(data.get("quantiles", CSV_PROBS)),
            cells=tuple(tuple(c) for c in data["cells"]) if data.get("cells") is not None else None,
            workers=data.get("workers"),
        )

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def replace(self, **changes) -> "ExperimentConfig":
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(changes)
        return ExperimentConfig(**data)


@dataclass
class ResultRow:
    model: str
    n: int
    tail_p: float
    estimator: str
    k: str
    phase: str
    q025: float
    median: float
    q975: float
    reps_used: int
    undefined_count: int
    seed: int
    quantiles: dict[float, float] = field(default_factory=dict, compare=False, repr=False)


@dataclass
class ExperimentResult:
    rows: list[ResultRow]
    provenance: dict
    samples: dict = field(default_factory=dict, repr=False)

    def row(self, n: int, tail_p: float, estimator: str, phase: str | int, k: str | None = None) -> ResultRow:
        for r in self.rows:
            if (r.n == n and math.isclose(r.tail_p, tail_p) and r.estimator == estimator
                    and r.phase == str(phase) and (k is None or r.k == k)):
                return r
        raise KeyError((n, tail_p, estimator, phase, k))

    @property
    def failed_cells(self) -> list[tuple[int, float, str, str]]:
        return [(r.n, r.tail_p, r.estimator, r.k) for r in self.rows
                if r.phase == "gamma" and r.reps_used == 0]


def _estimate_one(series, u: float, p: float, est: EstimatorConfig) -> np.ndarray:
    """``[theta_1..theta_d, gamma]`` for one realisation; all NaN if undefined."""
    ix = interexceedances(series, u)
    d = series.spec.d
    try:
        if est.name == "intervals":
            rec = estimate_thetas_intervals(ix)
        else:
            fbar = p if est.fbar == "exact" else "empirical"
            rec = mle_fit(ix, MleOptions(run_lengths=est.k, fbar=fbar))
    except (MissingDataError, NoExceedancesError):
        return np.full(d + 1, np.nan)
    return np.append(rec.thetas, rec.gamma)


def _run_chunk(args) -> np.ndarray:
    """Estimates for realisations ``start..stop-1`` of one sequence length.

    Returns an array of shape ``(stop - start, n_thresholds, n_estimators, d + 1)``.
    """
    config, j, n, probs, start, stop = args
    spec = config.spec
    levels = [resolve_threshold(ThresholdSpec.tail(p), spec.family) for p in probs]
    out = np.full((stop - start, len(probs), len(config.estimators), spec.d + 1), np.nan)
    for r in range(start, stop):
        series = simulate(spec, n, RngStream(config.seed, j * 2 ** 32 + r))
        for a, (u, p) in enumerate(zip(levels, probs)):
            for b, est in enumerate(config.estimators):
                out[r - start, a, b] = _estimate_one(series, u, p, est)
    return out


def _summarise(values: np.ndarray, probs: Sequence[float]) -> tuple[dict[float, float], int]:
    ok = values[~np.isnan(values)]
    if ok.size == 0:
        return {q: math.nan for q in probs}, 0
    qs = empirical_quantiles(ok, probs)
    return dict(zip(probs, (float(v) for v in qs))), int(ok.size)


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> ExperimentResult:
    """Simulate, estimate and summarise every (n, tail_p, estimator) cell.

    Realisations where an estimator is undefined (no exceedances, empty
    phase) are excluded from the quantiles and counted in
    ``undefined_count``.  ``gamma`` is computed per realisation and then
    summarised.
    """
    spec = config.spec
    workers = config.workers if workers is None else workers
    probs = sorted(set(config.quantiles) | set(CSV_PROBS))
    cells = config.cell_list()
    lengths = list(dict.fromkeys(n for n, _ in cells))
    rows: list[ResultRow] = []
    samples: dict = {}
    for j, n in enumerate(lengths):
        tails = [p for m, p in cells if m == n]
        jobs = [(config, j, n, tuple(tails), s, min(config.reps, s + CHUNK))
                for s in range(0, config.reps, CHUNK)]
        est = np.concatenate(ordered_map(_run_chunk, jobs, workers), axis=0)
        for a, p in enumerate(tails):
            for b, ec in enumerate(config.estimators):
                block = est[:, a, b, :]
                samples[(n, p, ec.name, ec.k_label)] = block
                labels = [str(i) for i in range(1, spec.d + 1)] + ["gamma"]
                for c, phase in enumerate(labels):
                    qs, used = _summarise(block[:, c], probs)
                    rows.append(ResultRow(config.model_name, n, p, ec.name, ec.k_label, phase,
                                          qs[0.025], qs[0.5], qs[0.975], used,
                                          config.reps - used, config.seed, qs))
    provenance = {
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "code_version": __version__,
        "config": config.to_dict(),
    }
    return ExperimentResult(rows, provenance, samples)


def write_results_csv(result: ExperimentResult | Sequence[ResultRow], path) -> None:
    rows = result.rows if isinstance(result, ExperimentResult) else result
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([r.model, r.n, repr(r.tail_p), r.estimator, r.k, r.phase, repr(r.q025),
                        repr(r.median), repr(r.q975), r.reps_used, r.undefined_count, r.seed])


def read_results_csv(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_COLUMNS:
            raise ValueError(f"unexpected columns {reader.fieldnames}")
        return [ResultRow(rec["model"], int(rec["n"]), float(rec["tail_p"]), rec["estimator"],
                          rec["k"], rec["phase"], float(rec["q025"]), float(rec["median"]),
                          float(rec["q975"]), int(rec["reps_used"]), int(rec["undefined_count"]),
                          int(rec["seed"]))
                for rec in reader]


def write_provenance(result: ExperimentResult, path) -> None:
    Path(path).write_text(json.dumps(result.provenance, indent=2, sort_keys=True) + "\n")


def _table1_cells(scale: str):
    if scale == "full":
        return [(10_000, 0.10), (10_000, 0.05), (10_000, 0.01), (100_000, 0.10), (100_000, 0.05),
                (100_000, 0.01), (1_000_000, 0.05), (1_000_000, 0.01), (1_000_000, 0.001)]
    return [(10_000, 0.10), (10_000, 0.05), (10_000, 0.01), (100_000, 0.05)]


PRESET_CONFIGS = {
    "table1": ExperimentConfig("paper-gaussian", cells=tuple(_table1_cells("full")), reps=1000, seed=1),
    "table1-fast": ExperimentConfig("paper-gaussian", cells=tuple(_table1_cells("fast")), reps=200, seed=1),
    "table2": ExperimentConfig("paper-logistic", lengths=(10_000, 100_000), tail_probs=(0.10, 0.05, 0.01),
                               estimators=(EstimatorConfig("mle", 5),), reps=1000, seed=2),
    "table2-fast": ExperimentConfig("paper-logistic", lengths=(10_000,), tail_probs=(0.10, 0.05, 0.01),
                                    estimators=(EstimatorConfig("mle", 5),), reps=200, seed=2),
    "figure1": ExperimentConfig("paper-logistic", lengths=(100_000,), tail_probs=(0.05,),
                                estimators=(EstimatorConfig("intervals"), EstimatorConfig("mle", 5)),
                                reps=1000, seed=3),
}
