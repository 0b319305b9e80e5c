"""Seeded simulators for the periodic Gaussian AR and bivariate logistic chains.

Both chains have a common marginal (standard normal, unit Frechet) and a
per-phase dependence parameter.  ``spec.params[m - 1]`` governs the pair
``(X_m, X_{m+1})`` for every ``m`` in phase ``m``, so that the local
clustering at phase ``i`` is driven by parameter ``i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import kstest, norm

from . import _kernels
from .core import Family, InvalidSpecError, PeriodicModelSpec, Series, SimulationError

KS_CRITICAL_1PCT = 1.628


@dataclass(frozen=True)
class RngStream:
    """Independent random stream keyed by ``(seed, stream)``.

    Streams are Philox (counter based) generators keyed through
    ``SeedSequence(seed, spawn_key=(stream, *sub))`` so that realisation ``r``
    always sees the same numbers whatever the worker layout.
    """

    seed: int
    stream: int = 0

    def generator(self, *sub: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream, *sub))
        return np.random.Generator(np.random.Philox(ss))


def as_rng(rng: RngStream | int | None) -> RngStream:
    if rng is None:
        return RngStream(0)
    if isinstance(rng, RngStream):
        return rng
    return RngStream(int(rng))


def seasonal_params(d: int = 7, mean: float = 0.5, amplitude: float = 0.25) -> tuple[float, ...]:
    # parameter of phase m is mean + amplitude * sin(2 pi (m - 1) / d)
    return tuple(mean + amplitude * math.sin(2 * math.pi * m / d) for m in range(d))


PRESETS = {
    "paper-gaussian": PeriodicModelSpec(Family.GAUSSIAN_AR, 7, seasonal_params()),
    "paper-logistic": PeriodicModelSpec(Family.LOGISTIC_MARKOV, 7, seasonal_params()),
}


def preset(name: str) -> PeriodicModelSpec:
    try:
        return PRESETS[name]
    except KeyError:
        raise InvalidSpecError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def family_code(family: Family | str) -> int:
    return _kernels.GAUSSIAN if Family(family) is Family.GAUSSIAN_AR else _kernels.LOGISTIC


def open_uniforms(gen: np.random.Generator, size) -> np.ndarray:
    u = gen.random(size)
    u[u == 0.0] = 2.0 ** -53
    return u


def draw_noise(family: Family | str, gen: np.random.Generator, size) -> np.ndarray:
    if Family(family) is Family.GAUSSIAN_AR:
        return gen.standard_normal(size)
    return open_uniforms(gen, size)


def frechet_from_uniform(u):
    return -1.0 / np.log(u)


def draw_marginal(family: Family | str, gen: np.random.Generator, size) -> np.ndarray:
    if Family(family) is Family.GAUSSIAN_AR:
        return gen.standard_normal(size)
    return frechet_from_uniform(open_uniforms(gen, size))


def draw_tail(family: Family | str, p: float, gen: np.random.Generator, size) -> np.ndarray:
    """Draw from the marginal conditioned on exceeding its upper ``p``-quantile."""
    v = p * open_uniforms(gen, size)
    if Family(family) is Family.GAUSSIAN_AR:
        return norm.isf(v)
    return -1.0 / np.log1p(-v)


def _simulate(spec: PeriodicModelSpec, n: int, rng: RngStream | int | None) -> Series:
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = as_rng(rng)
    gen = rng.generator()
    noise = draw_noise(spec.family, gen, n)
    if spec.family is Family.GAUSSIAN_AR:
        x0 = noise[0]
    else:
        x0 = frechet_from_uniform(noise[0])
    out = np.empty(n)
    params = np.asarray(spec.params, dtype=float)
    failed = _kernels.path(family_code(spec.family), x0, params, 0, noise, out)
    if failed >= 0:
        raise SimulationError(failed + 1, float(out[failed - 1]), float(noise[failed]))
    return Series(out, spec, seed=rng.seed, stream=rng.stream)


def simulate_gaussian_ar(spec: PeriodicModelSpec, n: int, rng: RngStream | int | None = None) -> Series:
    """Periodic AR(1) with N(0, 1) margins.

    ``X_1 ~ N(0, 1)`` and ``X_{k+1} = rho_k X_k + sqrt(1 - rho_k^2) Z_k`` where
    ``rho_k`` is the parameter of phase ``phase_of(k, d)``.
    """
    if spec.family is not Family.GAUSSIAN_AR:
        raise InvalidSpecError("simulate_gaussian_ar needs a gaussian-ar spec")
    return _simulate(spec, n, rng)


def simulate_logistic_markov(spec: PeriodicModelSpec, n: int, rng: RngStream | int | None = None) -> Series:
    """Markov chain whose consecutive pairs follow the bivariate logistic law.

    ``X_1`` is unit Frechet by inversion; each transition draws ``U`` and
    inverts the conditional distribution function of ``X_{k+1}`` given
    ``X_k``.  Raises :class:`SimulationError` if an inversion does not
    converge.
    """
    if spec.family is not Family.LOGISTIC_MARKOV:
        raise InvalidSpecError("simulate_logistic_markov needs a logistic-markov spec")
    return _simulate(spec, n, rng)


def simulate(spec: PeriodicModelSpec, n: int, rng: RngStream | int | None = None) -> Series:
    return _simulate(spec, n, rng)


def _check_alpha(alpha):
    a = np.asarray(alpha, dtype=float)
    if np.any((a <= 0) | (a > 1)):
        raise InvalidSpecError(f"alpha must lie in (0, 1], got {alpha!r}")
    return a


def logistic_joint_cdf(x, y, alpha):
    a = _check_alpha(alpha)
    x, y = np.asarray(x, float), np.asarray(y, float)
    return np.exp(-(x ** (-1 / a) + y ** (-1 / a)) ** a)


def logistic_conditional_cdf(x, y, alpha):
    """``P(X_{k+1} <= y | X_k = x)`` under the bivariate logistic law.

    Equals ``x^(1-1/a) s^(a-1) exp(1/x - s^a)`` with ``s = x^(-1/a) + y^(-1/a)``.
    """
    a = _check_alpha(alpha)
    x, y = np.asarray(x, float), np.asarray(y, float)
    s = x ** (-1 / a) + y ** (-1 / a)
    with np.errstate(over="ignore", invalid="ignore"):
        out = x ** (1 - 1 / a) * s ** (a - 1) * np.exp(1 / x - s ** a)
    out = np.where(np.isinf(y), 1.0, out)
    return out[()] if out.ndim == 0 else out


def logistic_conditional_density(x, y, alpha):
    """Density in ``y`` of the logistic transition given ``X_k = x``."""
    a = _check_alpha(alpha)
    x, y = np.asarray(x, float), np.asarray(y, float)
    s = x ** (-1 / a) + y ** (-1 / a)
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        val = (x ** (1 - 1 / a) * np.exp(1 / x - s ** a)
               * ((1 - a) * s ** (a - 2) + a * s ** (2 * a - 2)) / a * y ** (-1 / a - 1))
    return np.nan_to_num(val, nan=0.0, posinf=0.0)


@dataclass(frozen=True)
class MarginCheck:
    statistic: float
    critical: float
    passed: bool


def validate_margins(series: Series, widen: float = 1.0) -> MarginCheck:
    """One-sample KS test of the whole series against the family marginal.

    Passes iff the statistic is below ``widen * 1.628 / sqrt(n)`` (asymptotic
    1% level).  Serial dependence inflates the null spread of the statistic, so
    dependent series are checked with ``widen=2``.
    """
    x = np.asarray(series.values)
    if x.size < 100:
        raise ValueError("need at least 100 values for the KS check")
    if series.spec.family is Family.GAUSSIAN_AR:
        stat = kstest(x, norm.cdf).statistic
    else:
        stat = kstest(x, lambda v: np.exp(-1.0 / np.maximum(v, 1e-300))).statistic
    crit = widen * KS_CRITICAL_1PCT / math.sqrt(x.size)
    return MarginCheck(float(stat), crit, bool(stat < crit))


def write_series(path, series: Series) -> None:
    """One value per line with 17 significant digits."""
    Path(path).write_text("".join(f"{v:.17g}\n" for v in series.values))


def read_series(path, spec: PeriodicModelSpec, seed: int = 0, stream: int = 0) -> Series:
    values = np.loadtxt(path, dtype=float, ndmin=1)
    return Series(values, spec, seed=seed, stream=stream)
