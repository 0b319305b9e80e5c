"""Moment (intervals) and likelihood estimators of the extremal clustering function.

Both estimators work on an :class:`~extremal_clustering.core.InterexceedanceSet`
and return an :class:`~extremal_clustering.core.EstimateRecord` whose ``gamma``
is the mean of the per-phase estimates that could be computed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .core import (
    EstimateRecord,
    InterexceedanceSet,
    InvalidSpecError,
    MissingDataError,
    NoExceedancesError,
)

EPS = 1e-6


def _times(times) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if t.size == 0:
        raise MissingDataError("no interexceedance times")
    return t


def intervals_hat(times) -> float:
    """Uncapped ``2 (sum T)^2 / (N sum T^2)``."""
    t = _times(times)
    return 2.0 * t.sum() ** 2 / (t.size * np.sum(t * t))


def intervals_tilde(times) -> float:
    """Uncapped bias-corrected ``2 (sum (T-1))^2 / (N sum (T-1)(T-2))``."""
    t = _times(times)
    den = np.sum((t - 1.0) * (t - 2.0))
    if den <= 0:
        raise ZeroDivisionError("all interexceedance times are <= 2")
    return 2.0 * np.sum(t - 1.0) ** 2 / (t.size * den)


def intervals_star(times) -> float:
    t = _times(times)
    if t.max() <= 2:
        return min(1.0, intervals_hat(t))
    return min(1.0, intervals_tilde(t))


def estimate_thetas_intervals(ix: InterexceedanceSet) -> EstimateRecord:
    thetas = np.full(ix.d, np.nan)
    diagnostics = []
    for i in range(1, ix.d + 1):
        t = ix.classes[i]
        if len(t) == 0:
            diagnostics.append(f"missing-phase:{i}")
            continue
        thetas[i - 1] = intervals_star(t)
    present = thetas[~np.isnan(thetas)]
    if present.size == 0:
        raise NoExceedancesError("every phase class is empty")
    return EstimateRecord("intervals", thetas, float(present.mean()),
                          threshold=ix.threshold, diagnostics=diagnostics)


@dataclass(frozen=True)
class MleOptions:
    """Options for :func:`mle_fit`.

    ``run_lengths`` is one shared ``k`` or one ``k_i`` per phase: times
    ``T <= k_i`` are assigned to the within-cluster (zero) component.
    ``fbar`` is a tail probability or ``"empirical"`` for ``|E| / n``.
    """

    run_lengths: int | Sequence[int] = 1
    fbar: float | str = "empirical"
    tol: float = 1e-8
    multistart: int = 2

    def __post_init__(self):
        ks = np.atleast_1d(np.asarray(self.run_lengths))
        if np.any(ks < 0) or np.any(ks != np.floor(ks)):
            raise InvalidSpecError("run lengths must be nonnegative integers")
        if self.tol <= 0:
            raise InvalidSpecError("tolerance must be positive")
        if isinstance(self.fbar, str):
            if self.fbar != "empirical":
                raise InvalidSpecError(f"fbar must be a probability or 'empirical', got {self.fbar!r}")
        elif not 0.0 < self.fbar < 1.0:
            raise InvalidSpecError("fbar must lie in (0, 1)")

    def ks(self, d: int) -> np.ndarray:
        ks = np.atleast_1d(np.asarray(self.run_lengths, dtype=np.int64))
        if ks.size == 1:
            return np.repeat(ks, d)
        if ks.size != d:
            raise InvalidSpecError(f"expected 1 or {d} run lengths, got {ks.size}")
        return ks


def resolve_fbar(ix: InterexceedanceSet, opts: MleOptions) -> float:
    if not isinstance(opts.fbar, str):
        return float(opts.fbar)
    if not ix.n_obs:
        raise InvalidSpecError("empirical fbar needs the series length (n_obs)")
    return ix.n_exceedances / ix.n_obs


@dataclass(frozen=True)
class _Summary:
    phases: np.ndarray       # 1-based phases with N_i > 0
    N: np.ndarray
    n: np.ndarray            # times above k_i
    excess: np.ndarray       # sum over T > k_i of (T - 1)
    fbar: float
    ks: np.ndarray

    @property
    def exp_total(self) -> float:
        # sum over exponential-component times of T
        return float(self.excess.sum() + self.n.sum())


def _summarise(ix: InterexceedanceSet, opts: MleOptions) -> _Summary:
    ks = opts.ks(ix.d)
    phases, N, n, excess = [], [], [], []
    for i in range(1, ix.d + 1):
        t = np.asarray(ix.classes[i], dtype=float)
        if t.size == 0:
            continue
        above = t > ks[i - 1]
        phases.append(i)
        N.append(t.size)
        n.append(int(above.sum()))
        excess.append(float(np.sum(t[above] - 1.0)))
    return _Summary(np.array(phases, dtype=int), np.array(N, float), np.array(n, float),
                    np.array(excess), resolve_fbar(ix, opts), ks)


def _loglik(theta: np.ndarray, s: _Summary) -> float:
    gamma = theta.mean()
    zero = s.N - s.n
    with np.errstate(divide="ignore"):
        within = zero * np.log1p(-np.where(zero > 0, theta, 0.0))
    return float(within.sum() + np.sum(s.n * np.log(theta)) + s.n.sum() * np.log(gamma)
                 - gamma * s.fbar * s.exp_total)


def _grad(theta: np.ndarray, s: _Summary) -> np.ndarray:
    m = theta.size
    gamma = theta.mean()
    zero = s.N - s.n
    with np.errstate(divide="ignore", invalid="ignore"):
        g_within = np.where(zero > 0, -zero / (1.0 - theta), 0.0)
    return g_within + s.n / theta + (s.n.sum() / gamma - s.fbar * s.exp_total) / m


def _hess(theta: np.ndarray, s: _Summary) -> np.ndarray:
    m = theta.size
    gamma = theta.mean()
    zero = s.N - s.n
    with np.errstate(divide="ignore", invalid="ignore"):
        diag = np.where(zero > 0, -zero / (1.0 - theta) ** 2, 0.0) - s.n / theta ** 2
    return np.diag(diag) - s.n.sum() / (m * gamma) ** 2 * np.ones((m, m))


def log_likelihood(theta, ix: InterexceedanceSet, opts: MleOptions) -> float:
    """Mixture log-likelihood of the interexceedance times.

    ``theta`` has one entry per phase; entries of empty phases are ignored and
    ``gamma`` is the mean over the phases that have data.  Returns ``-inf`` when
    some ``theta_i = 1`` but phase ``i`` has within-cluster times.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (ix.d,):
        raise ValueError(f"theta must have {ix.d} entries")
    s = _summarise(ix, opts)
    if s.phases.size == 0:
        raise NoExceedancesError("every phase class is empty")
    th = theta[s.phases - 1]
    if np.any(th <= 0) or np.any(th > 1):
        raise ValueError("theta entries must lie in (0, 1]")
    return _loglik(th, s)


def _newton_polish(x: np.ndarray, s: _Summary, lo: np.ndarray, hi: np.ndarray, tol: float):
    """Projected Newton ascent on the concave log-likelihood."""
    f = _loglik(x, s)
    for _ in range(100):
        g = _grad(x, s)
        H = _hess(x, s)
        free = ~(((x <= lo) & (g < 0)) | ((x >= hi) & (g > 0)))
        if not free.any():
            break
        step = np.zeros_like(x)
        step[free] = np.linalg.solve(H[np.ix_(free, free)], -g[free])
        t = 1.0
        while t > 1e-12:
            cand = np.clip(x + t * step, lo, hi)
            fc = _loglik(cand, s)
            if fc >= f:
                break
            t *= 0.5
        else:
            break
        moved = np.max(np.abs(cand - x))
        x, f_old, f = cand, f, fc
        if moved <= 1e-15 or f - f_old < tol * 1e-3:
            break
    return x, f


def mle_fit(ix: InterexceedanceSet, opts: MleOptions | None = None) -> EstimateRecord:
    """Maximum likelihood estimates of the per-phase extremal index.

    The log-likelihood is concave in ``theta``; L-BFGS-B is run from the
    run-length proportions ``n_i / N_i`` and from 0.5, the best start is
    refined by projected Newton steps.  Estimates sitting on ``EPS`` or on the
    upper bound are flagged in ``diagnostics``.
    """
    opts = opts or MleOptions()
    if ix.n_exceedances == 0:
        raise NoExceedancesError("no exceedances")
    s = _summarise(ix, opts)
    if s.phases.size == 0:
        raise NoExceedancesError("every phase class is empty")
    diagnostics = [f"missing-phase:{i}" for i in range(1, ix.d + 1) if i not in set(s.phases)]
    m = s.phases.size
    lo = np.full(m, EPS)
    # a phase without within-cluster times has its supremum at theta = 1
    hi = np.where(s.N > s.n, 1.0 - EPS, 1.0)
    thetas = np.full(ix.d, np.nan)
    run_lengths = tuple(int(k) for k in s.ks)

    if s.n.sum() == 0:
        thetas[s.phases - 1] = EPS
        diagnostics.append("all-within-cluster")
        return EstimateRecord("mle", thetas, EPS, run_lengths, s.fbar, ix.threshold, diagnostics)

    starts = [np.clip(s.n / s.N, lo, hi), np.full(m, 0.5)][: max(1, opts.multistart)]
    best_x, best_f = None, -np.inf
    for x0 in starts:
        res = minimize(lambda x: -_loglik(x, s), x0, jac=lambda x: -_grad(x, s),
                       method="L-BFGS-B", bounds=list(zip(lo, hi)),
                       options={"ftol": opts.tol * 1e-3, "gtol": 1e-10, "maxiter": 1000})
        f = -res.fun
        if best_x is None or f > best_f:
            best_x, best_f = np.clip(res.x, lo, hi), f
    x, f = _newton_polish(best_x, s, lo, hi, opts.tol)
    if f < best_f:
        x = best_x

    for j, i in enumerate(s.phases):
        if x[j] <= lo[j] * (1 + 1e-9):
            diagnostics.append(f"boundary:lower:{i}")
        elif x[j] >= hi[j] - 1e-12:
            diagnostics.append(f"boundary:upper:{i}")
    thetas[s.phases - 1] = x
    return EstimateRecord("mle", thetas, float(x.mean()), run_lengths, s.fbar,
                          ix.threshold, diagnostics)


def moments_T(theta: float, gamma: float, p: float) -> tuple[float, float]:
    """First two moments of ``T`` with ``P(T > n) = theta p^(n gamma)``, ``n >= 1``."""
    pg = p ** gamma
    if 1.0 - pg <= 0.0:
        raise OverflowError("p**gamma is numerically 1")
    a = theta * pg / (1.0 - pg)
    return 1.0 + a, 1.0 + a + 2.0 * theta * pg / (1.0 - pg) ** 2


def moment_solution(m1: float, m2: float) -> tuple[float, float]:
    """``(gamma, theta)`` from ``E(Fbar T)`` and ``E((Fbar T)^2)``."""
    if m2 <= 0:
        raise ValueError("second moment must be positive")
    return 2.0 * m1 / m2, 2.0 * m1 * m1 / m2


def estimate(ix: InterexceedanceSet, method: str = "intervals",
             opts: MleOptions | None = None) -> EstimateRecord:
    if method == "intervals":
        return estimate_thetas_intervals(ix)
    if method == "mle":
        return mle_fit(ix, opts)
    raise InvalidSpecError(f"unknown estimator {method!r}")
