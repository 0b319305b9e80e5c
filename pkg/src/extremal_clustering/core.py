"""Domain types and exceedance bookkeeping shared by the rest of the package.

All phase arithmetic is 1-based: a sequence with period ``d`` has phases
``1..d`` and position ``i`` (also 1-based) belongs to phase
``((i - 1) mod d) + 1``.  Arrays are stored 0-based internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import norm


class InvalidSpecError(ValueError):
    """A model, threshold or option specification is out of range."""


class MissingDataError(ValueError):
    """An estimator was handed an empty set of interexceedance times."""


class NoExceedancesError(ValueError):
    """No interexceedance time is available in any phase class."""


class SimulationError(RuntimeError):
    """The conditional sampler failed to converge.

    Carries the failing step (1-based target position), the conditioning
    value and the uniform draw.
    """

    def __init__(self, step: int, x: float, u: float):
        super().__init__(f"conditional inversion failed at step {step} (x={x!r}, U={u!r})")
        self.step = step
        self.x = x
        self.u = u


class Family(str, Enum):
    GAUSSIAN_AR = "gaussian-ar"
    LOGISTIC_MARKOV = "logistic-markov"


@dataclass(frozen=True)
class PeriodicModelSpec:
    """Periodic Markov model with ``d`` per-phase dependence parameters.

    ``params[m - 1]`` is the dependence parameter of the pair
    ``(X_m, X_{m+1})`` for every position ``m`` in phase ``m``: the lag-one
    correlation for the Gaussian family, the logistic ``alpha`` otherwise.
    """

    family: Family
    d: int
    params: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))
        if int(self.d) != self.d or self.d < 1:
            raise InvalidSpecError(f"period d must be a positive integer, got {self.d!r}")
        if len(self.params) != self.d:
            raise InvalidSpecError(f"expected {self.d} parameters, got {len(self.params)}")
        arr = np.asarray(self.params)
        if not np.all(np.isfinite(arr)):
            raise InvalidSpecError("parameters must be finite")
        if self.family is Family.GAUSSIAN_AR and np.any(np.abs(arr) >= 1):
            raise InvalidSpecError("gaussian-ar requires |rho| < 1 for every phase")
        if self.family is Family.LOGISTIC_MARKOV and np.any((arr <= 0) | (arr > 1)):
            raise InvalidSpecError("logistic-markov requires alpha in (0, 1] for every phase")

    def param(self, index: int) -> float:
        """Dependence parameter governing the transition out of ``index``."""
        return self.params[phase_of(index, self.d) - 1]

    def to_dict(self) -> dict:
        return {"family": self.family.value, "d": self.d, "params": list(self.params)}

    @classmethod
    def from_dict(cls, data: Mapping) -> "PeriodicModelSpec":
        return cls(Family(data["family"]), int(data["d"]), tuple(data["params"]))


class ThresholdKind(str, Enum):
    ABSOLUTE = "absolute"
    EXCEEDANCE_PROB = "exceedance-prob"


@dataclass(frozen=True)
class ThresholdSpec:
    kind: ThresholdKind
    value: float

    def __post_init__(self):
        object.__setattr__(self, "kind", ThresholdKind(self.kind))
        if self.kind is ThresholdKind.EXCEEDANCE_PROB and not 0.0 < self.value < 1.0:
            raise InvalidSpecError(f"tail probability must lie in (0, 1), got {self.value!r}")

    @classmethod
    def tail(cls, p: float) -> "ThresholdSpec":
        return cls(ThresholdKind.EXCEEDANCE_PROB, p)

    @classmethod
    def level(cls, u: float) -> "ThresholdSpec":
        return cls(ThresholdKind.ABSOLUTE, u)


@dataclass
class Series:
    """A realisation ``X_1..X_n`` with its model and seed provenance."""

    values: np.ndarray
    spec: PeriodicModelSpec
    seed: int = 0
    stream: int = 0

    @property
    def n(self) -> int:
        return len(self.values)

    def phases(self) -> np.ndarray:
        return np.arange(self.n) % self.spec.d + 1


@dataclass
class InterexceedanceSet:
    """Interexceedance times split into phase classes ``I_1..I_d``.

    ``classes[i]`` holds the gaps ``j' - j`` between consecutive exceedances
    whose starting position ``j`` lies in phase ``i``.  ``n_obs`` is the
    length of the sequence the exceedances came from, when known; the MLE
    uses it for the empirical tail probability.
    """

    d: int
    classes: dict[int, np.ndarray]
    threshold: float
    n_exceedances: int
    n_obs: int | None = None

    @property
    def counts(self) -> dict[int, int]:
        return {i: len(t) for i, t in self.classes.items()}

    def times(self, phase: int) -> np.ndarray:
        return self.classes[phase]

    def pooled(self) -> np.ndarray:
        return np.concatenate([self.classes[i] for i in range(1, self.d + 1)])

    def nonempty_phases(self) -> list[int]:
        return [i for i in range(1, self.d + 1) if len(self.classes[i])]


def phase_of(index: int, d: int) -> int:
    if index < 1 or d < 1:
        raise ValueError("index and d must be positive")
    return (index - 1) % d + 1


def marginal_sf(x, family: Family | str):
    """Survival function of the family marginal (standard normal or unit Frechet)."""
    family = Family(family)
    x = np.asarray(x, dtype=float)
    if family is Family.GAUSSIAN_AR:
        return norm.sf(x)
    with np.errstate(divide="ignore"):
        return np.where(x > 0, -np.expm1(-1.0 / np.where(x > 0, x, 1.0)), 1.0)


def marginal_cdf(x, family: Family | str):
    family = Family(family)
    x = np.asarray(x, dtype=float)
    if family is Family.GAUSSIAN_AR:
        return norm.cdf(x)
    with np.errstate(divide="ignore"):
        return np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)


def resolve_threshold(spec: ThresholdSpec, family: Family | str) -> float:
    """Level ``u`` with ``P(X > u) = p`` under the family marginal."""
    if spec.kind is ThresholdKind.ABSOLUTE:
        return float(spec.value)
    p = spec.value
    if not 0.0 < p < 1.0:
        raise InvalidSpecError(f"tail probability must lie in (0, 1), got {p!r}")
    if Family(family) is Family.GAUSSIAN_AR:
        u = float(norm.isf(p))
    else:
        u = -1.0 / np.log1p(-p)
    if not np.isfinite(u):
        raise InvalidSpecError(f"threshold for p={p!r} is not finite")
    return u


def extract_exceedances(values: Series | Sequence[float] | np.ndarray, u: float) -> np.ndarray:
    """1-based indices ``i`` with ``X_i > u`` (ties are non-exceedances)."""
    x = values.values if isinstance(values, Series) else np.asarray(values, dtype=float)
    return np.flatnonzero(x > u) + 1


def interexceedance_partition(
    exceedances: Sequence[int] | np.ndarray,
    d: int,
    u: float,
    n_obs: int | None = None,
) -> InterexceedanceSet:
    e = np.asarray(exceedances, dtype=np.int64)
    if e.size > 1 and np.any(np.diff(e) <= 0):
        raise ValueError("exceedance indices must be strictly increasing")
    gaps = np.diff(e)
    starts = e[:-1]
    phases = (starts - 1) % d + 1
    classes = {i: gaps[phases == i] for i in range(1, d + 1)}
    return InterexceedanceSet(d=d, classes=classes, threshold=float(u),
                              n_exceedances=int(e.size), n_obs=n_obs)


def interexceedances(series: Series, u: float) -> InterexceedanceSet:
    """Exceedance extraction and phase partition in one step."""
    return interexceedance_partition(extract_exceedances(series, u), series.spec.d, u,
                                     n_obs=series.n)


def empirical_quantiles(samples, probs) -> np.ndarray:
    """Type-7 quantiles (linear interpolation between order statistics)."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("cannot take quantiles of an empty sample")
    return np.quantile(x, np.asarray(probs, dtype=float), method="linear")


@dataclass
class EstimateRecord:
    """Per-phase extremal clustering estimates and their aggregate.

    ``thetas`` has one entry per phase with NaN marking a phase that had no
    interexceedance times.  ``diagnostics`` collects free-form flags such as
    ``"missing-phase:3"`` or ``"boundary:upper:2"``.
    """

    method: str
    thetas: np.ndarray
    gamma: float
    run_lengths: tuple[int, ...] | None = None
    fbar: float | None = None
    threshold: float | None = None
    diagnostics: list[str] = field(default_factory=list)

    @property
    def missing_phases(self) -> list[int]:
        return [i + 1 for i in np.flatnonzero(np.isnan(self.thetas))]

    def as_row(self) -> dict:
        row = {"method": self.method, "gamma": float(self.gamma)}
        for i, t in enumerate(self.thetas, start=1):
            row[f"theta_{i}"] = float(t)
        row["k"] = "" if self.run_lengths is None else " ".join(map(str, self.run_lengths))
        row["fbar"] = "" if self.fbar is None else self.fbar
        row["threshold"] = "" if self.threshold is None else self.threshold
        row["diagnostics"] = ";".join(self.diagnostics)
        return row
