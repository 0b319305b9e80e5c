"""Monte Carlo and quadrature oracles for the limit results.

These give ground truth against which the estimators are judged: local
extremal indices ``theta_{i,n}``, their average ``gamma_n``, the law of the
maximum, the tail of normalised interexceedance times and lag-``k`` tail
dependence.  For the logistic chain ``logistic_theta_quadrature`` computes
``P(M_{i,i+k} <= u | X_i > u)`` deterministically.

Monte Carlo work is split into fixed-size blocks of realisations; block ``b``
draws from ``rng.generator(tag, b)`` so results do not depend on how blocks
are scheduled.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from . import _kernels
from .core import (
    Family,
    PeriodicModelSpec,
    Series,
    SimulationError,
    ThresholdSpec,
    marginal_sf,
    resolve_threshold,
)
from .models import (
    RngStream,
    as_rng,
    draw_marginal,
    draw_noise,
    draw_tail,
    family_code,
    logistic_conditional_density,
    preset,
    simulate,
)
from .parallel import ordered_map

BLOCK = 2048
# cap on random draws held in memory per block
_BLOCK_CELLS = 4_000_000


class AccuracyWarning(UserWarning):
    """Quadrature did not self-converge under node doubling."""


@dataclass(frozen=True)
class BlockingPlan:
    """Window ``p_n`` for local maxima and separation ``q_n`` for a length ``n``."""

    n: int
    p_n: int
    q_n: int

    def __post_init__(self):
        if not 0 < self.q_n < self.p_n < self.n:
            raise ValueError(f"need 0 < q_n < p_n < n, got {self}")

    @classmethod
    def default(cls, n: int) -> "BlockingPlan":
        # q_n = n^(1/3), p_n = sqrt(n q_n); the mixing-rate term is unobservable
        q = max(1, int(math.floor(n ** (1 / 3) + 1e-9)))
        p = int(math.floor(math.sqrt(n * q)))
        if p <= q:
            p = q + 1
        return cls(n, p, q)


@dataclass(frozen=True)
class ProbEstimate:
    """A Monte Carlo proportion with its binomial standard error."""

    estimate: float
    se: float
    count: int
    successes: int

    @property
    def undefined(self) -> bool:
        return self.count == 0


def _proportion(successes: int, count: int) -> ProbEstimate:
    if count == 0:
        return ProbEstimate(math.nan, math.nan, 0, 0)
    p = successes / count
    return ProbEstimate(p, math.sqrt(p * (1 - p) / count), count, successes)


def _blocks(reps: int, size: int) -> list[tuple[int, int]]:
    return [(b, min(size, reps - b * size)) for b in range((reps + size - 1) // size)]


def _block_size(steps: int) -> int:
    return max(1, min(BLOCK, _BLOCK_CELLS // max(1, steps)))


def _check(values: np.ndarray):
    if np.isnan(values).any():
        raise SimulationError(-1, math.nan, math.nan)


def _theta_block(args) -> tuple[int, int]:
    spec, i, window, u, rng, tag, (b, count), conditional = args
    gen = rng.generator(tag, b)
    code = family_code(spec.family)
    params = np.asarray(spec.params)
    offset = (i - 1) % spec.d
    if conditional:
        x0 = draw_tail(spec.family, float(marginal_sf(u, spec.family)), gen, count)
    else:
        x1 = draw_marginal(spec.family, gen, count)
        if i > 1:
            x1 = _kernels.advance(code, x1, params, 0, draw_noise(spec.family, gen, (count, i - 1)))
            _check(x1)
        x0 = x1[x1 > u]
    noise = draw_noise(spec.family, gen, (x0.size, window))
    mx = _kernels.forward_max(code, x0, params, offset, noise)
    _check(mx)
    return int(np.sum(mx <= u)), int(x0.size)


def empirical_theta_local(spec: PeriodicModelSpec, i: int, plan: BlockingPlan | int, u: float,
                          reps: int, rng: RngStream | int | None = None, *,
                          conditional: bool = True, workers: int | None = None) -> ProbEstimate:
    """Monte Carlo estimate of ``P(M_{i,i+p_n} <= u | X_i > u)``.

    With ``conditional=True`` each realisation starts from ``X_i`` drawn from
    the marginal restricted to ``(u, inf)``, which is exact for these Markov
    chains with known margins, so every realisation counts.  With
    ``conditional=False`` whole stretches ``X_1..X_{i+p_n}`` are simulated
    and only those with ``X_i > u`` are kept; ``count`` reports how many.
    """
    window = plan.p_n if isinstance(plan, BlockingPlan) else int(plan)
    if window < 1 or i < 1:
        raise ValueError("window and position must be positive")
    rng = as_rng(rng)
    steps = window + (0 if conditional else i)
    jobs = [(spec, i, window, u, rng, i, blk, conditional) for blk in _blocks(reps, _block_size(steps))]
    parts = ordered_map(_theta_block, jobs, workers)
    return _proportion(sum(s for s, _ in parts), sum(c for _, c in parts))


def _full_sum_one(args) -> int:
    spec, n, window, u, rng, r = args
    x = simulate(spec, n + window, RngStream(rng.seed, rng.stream * 1_000_003 + r + 1))
    return int(_kernels.window_events(x.values, u, window, n))


def empirical_gamma_n(spec: PeriodicModelSpec, plan: BlockingPlan, u: float, reps: int,
                      rng: RngStream | int | None = None, *, mode: str = "period",
                      workers: int | None = None) -> ProbEstimate:
    """Estimate of ``gamma_n``, the average of ``theta_{j,n}`` over ``j = 1..n``.

    ``mode="period"`` averages the ``d`` local estimates of one period, each
    from ``reps`` conditional realisations.  ``mode="full"`` simulates
    ``reps`` sequences of length ``n + p_n`` and counts exceedances at
    ``j <= n`` not followed by another within ``p_n`` steps, normalised by
    ``n P(X > u)``; its standard error is taken across realisations.
    ``count`` and ``successes`` are summed over phases (period mode) or are
    the number of realisations and events (full mode).
    """
    rng = as_rng(rng)
    if mode == "period":
        parts = [empirical_theta_local(spec, i, plan, u, reps, RngStream(rng.seed, rng.stream * 1_000_003 + i),
                                       workers=workers)
                 for i in range(1, spec.d + 1)]
        if any(p.undefined for p in parts):
            return ProbEstimate(math.nan, math.nan, 0, 0)
        est = float(np.mean([p.estimate for p in parts]))
        se = math.sqrt(sum(p.se ** 2 for p in parts)) / spec.d
        return ProbEstimate(est, se, sum(p.count for p in parts), sum(p.successes for p in parts))
    if mode != "full":
        raise ValueError(f"unknown mode {mode!r}")
    p = float(marginal_sf(u, spec.family))
    jobs = [(spec, plan.n, plan.p_n, u, rng, r) for r in range(reps)]
    counts = np.asarray(ordered_map(_full_sum_one, jobs, workers), dtype=float)
    per_rep = counts / (plan.n * p)
    se = float(per_rep.std(ddof=1) / math.sqrt(reps)) if reps > 1 else math.nan
    return ProbEstimate(float(per_rep.mean()), se, reps, int(counts.sum()))


@dataclass(frozen=True)
class MaxDistCheck:
    """Empirical ``P(M_n <= u)`` against the prediction ``exp(-n p gamma)``."""

    n: int
    tail_p: float
    tau: float
    u: float
    empirical: float
    se: float
    gamma_hat: float
    predicted: float
    discrepancy: float
    reps: int

    @property
    def iid_limit(self) -> float:
        return math.exp(-self.tau)


def _max_block(args) -> int:
    spec, n, u, rng, (b, count) = args
    gen = rng.generator(0, b)
    x1 = draw_marginal(spec.family, gen, count)
    if n == 1:
        return int(np.sum(x1 <= u))
    noise = draw_noise(spec.family, gen, (count, n - 1))
    mx = _kernels.forward_max(family_code(spec.family), x1, np.asarray(spec.params), 0, noise)
    _check(mx)
    return int(np.sum(np.maximum(mx, x1) <= u))


def max_dist_check(spec: PeriodicModelSpec, n: int, tail_p: float, reps: int,
                   rng: RngStream | int | None = None, *, gamma: float | None = None,
                   plan: BlockingPlan | None = None, gamma_reps: int = 2000,
                   workers: int | None = None) -> MaxDistCheck:
    """Compare the simulated law of ``M_n`` at ``u = q_p`` with ``exp(-tau gamma)``.

    ``gamma`` defaults to :func:`empirical_gamma_n` (period mode) under
    ``plan`` (default :meth:`BlockingPlan.default`).
    """
    rng = as_rng(rng)
    u = resolve_threshold(ThresholdSpec.tail(tail_p), spec.family)
    jobs = [(spec, n, u, rng, blk) for blk in _blocks(reps, _block_size(n))]
    below = sum(ordered_map(_max_block, jobs, workers))
    emp = _proportion(below, reps)
    if gamma is None:
        plan = plan or BlockingPlan.default(n)
        gamma = empirical_gamma_n(spec, plan, u, gamma_reps, RngStream(rng.seed, rng.stream + 7_919),
                                  workers=workers).estimate
    tau = n * tail_p
    pred = math.exp(-tau * gamma)
    return MaxDistCheck(n, tail_p, tau, u, emp.estimate, emp.se, float(gamma), pred,
                        emp.estimate - pred, reps)


@dataclass(frozen=True)
class TailCurve:
    """Survival of ``p T_i(u)`` on a grid of ``t`` with the limiting curve."""

    t: np.ndarray
    survival: np.ndarray
    se: np.ndarray
    model: np.ndarray | None
    count: int


def _passage_block(args) -> np.ndarray:
    spec, i, u, p, steps, rng, (b, count) = args
    gen = rng.generator(1, b)
    x0 = draw_tail(spec.family, p, gen, count)
    noise = draw_noise(spec.family, gen, (count, steps))
    t = _kernels.first_passage(family_code(spec.family), x0, np.asarray(spec.params),
                               (i - 1) % spec.d, u, noise)
    if np.any(t < 0):
        raise SimulationError(-1, math.nan, math.nan)
    return t


def interexceedance_times_sample(spec: PeriodicModelSpec, i: int, tail_p: float, reps: int,
                                 max_steps: int, rng: RngStream | int | None = None,
                                 workers: int | None = None) -> np.ndarray:
    """Draws of ``T_i(u)`` at ``u = q_p``; values above ``max_steps`` read ``max_steps + 1``."""
    rng = as_rng(rng)
    u = resolve_threshold(ThresholdSpec.tail(tail_p), spec.family)
    jobs = [(spec, i, u, tail_p, max_steps, rng, blk) for blk in _blocks(reps, _block_size(max_steps))]
    return np.concatenate(ordered_map(_passage_block, jobs, workers))


def interexceedance_tail(spec: PeriodicModelSpec, i: int, tail_p: float, t_grid: Sequence[float],
                         reps: int, rng: RngStream | int | None = None, *,
                         theta: float | None = None, gamma: float | None = None,
                         workers: int | None = None) -> TailCurve:
    """Empirical ``P(p T_i(q_p) > t)`` with the limit ``theta exp(-gamma t)``.

    The model curve is filled in only when both ``theta`` and ``gamma`` are
    supplied.
    """
    t = np.asarray(t_grid, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t grid must be positive")
    steps = int(math.ceil(t.max() / tail_p)) + 1
    times = interexceedance_times_sample(spec, i, tail_p, reps, steps, rng, workers)
    surv = np.array([np.mean(tail_p * times > tk) for tk in t])
    se = np.sqrt(surv * (1 - surv) / times.size)
    model = None if theta is None or gamma is None else theta * np.exp(-gamma * t)
    return TailCurve(t, surv, se, model, int(times.size))


@dataclass(frozen=True)
class ChiEstimate:
    """Per-phase ``P(X_{j+k} > u | X_j > u)`` with ``j`` in phase ``i``."""

    chi: np.ndarray
    se: np.ndarray
    counts: np.ndarray


def chi_lag(source: Series | PeriodicModelSpec, k: int, u: float, *, n: int | None = None,
            rng: RngStream | int | None = None) -> ChiEstimate:
    """Phase-stratified empirical lag-``k`` tail dependence.

    ``source`` is a series, or a model spec together with ``n`` and ``rng``.
    Phases without exceedances are NaN.
    """
    if isinstance(source, PeriodicModelSpec):
        if n is None:
            raise ValueError("n is required when simulating from a spec")
        source = simulate(source, n, rng)
    x = np.asarray(source.values)
    d = source.spec.d
    base = x[:-k] > u
    hit = x[k:] > u
    phases = np.arange(x.size - k) % d
    chi = np.full(d, np.nan)
    se = np.full(d, np.nan)
    counts = np.zeros(d, dtype=int)
    for i in range(d):
        m = base & (phases == i)
        counts[i] = int(m.sum())
        if counts[i]:
            chi[i] = hit[m].mean()
            se[i] = math.sqrt(chi[i] * (1 - chi[i]) / counts[i])
    return ChiEstimate(chi, se, counts)


def logistic_theta_bound(alpha) -> np.ndarray:
    """Upper bound ``2^alpha - 1`` on the local extremal index of the logistic chain."""
    return 2.0 ** np.asarray(alpha, dtype=float) - 1.0


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    refined: float
    rel_change: float
    converged: bool
    nodes: int


def _theta_recursion(alphas: np.ndarray, i: int, k: int, u: float, nodes: int) -> float:
    t, w = leggauss(nodes)
    s = 0.5 * (t + 1.0)
    # y = u s^2 puts nodes near 0 where the Frechet density is tiny but steep
    z = u * s * s
    wz = 0.5 * w * 2.0 * u * s
    # outer integral over x > u written in v = 1/x, where f(x) dx = exp(-v) dv
    v = 0.5 * (t + 1.0) / u
    wv = 0.5 * w / u
    x = 1.0 / v
    d = alphas.size
    kernels: dict[float, np.ndarray] = {}
    g = np.ones(nodes)
    # backward recursion over positions i+k-1, ..., i+1
    for pos in range(i + k - 1, i, -1):
        a = float(alphas[(pos - 1) % d])
        if a not in kernels:
            kernels[a] = logistic_conditional_density(z[:, None], z[None, :], a) * wz[None, :]
        g = kernels[a] @ g
    a = float(alphas[(i - 1) % d])
    inner = (logistic_conditional_density(x[:, None], z[None, :], a) * wz[None, :]) @ g
    tail = -math.expm1(-1.0 / u)
    return float(np.sum(wv * np.exp(-v) * inner) / tail)


def logistic_theta_quadrature(spec: PeriodicModelSpec, i: int, k: int, u: float,
                              nodes: int = 256, rtol: float = 1e-4) -> QuadratureResult:
    """``P(M_{i,i+k} <= u | X_i > u)`` for the logistic chain by quadrature.

    Iterates the transition kernel restricted to ``(0, u]`` on a
    Gauss-Legendre grid and integrates the last step against the tail of
    ``X_i``.  The value is recomputed with twice the nodes; if the relative
    change exceeds ``rtol`` an :class:`AccuracyWarning` is issued.
    """
    if spec.family is not Family.LOGISTIC_MARKOV:
        raise ValueError("quadrature oracle is only available for the logistic chain")
    if k < 1:
        raise ValueError("window k must be at least 1")
    if nodes < 64:
        raise ValueError("need at least 64 nodes")
    alphas = np.asarray(spec.params)
    value = _theta_recursion(alphas, i, k, u, nodes)
    refined = _theta_recursion(alphas, i, k, u, 2 * nodes)
    rel = abs(refined - value) / max(abs(refined), 1e-300)
    ok = rel < rtol
    if not ok:
        warnings.warn(f"quadrature not converged: {value!r} vs {refined!r} with doubled nodes",
                      AccuracyWarning, stacklevel=2)
    return QuadratureResult(value, refined, rel, ok, nodes)


@dataclass
class VerificationRow:
    check: str
    parameters: str
    observed: float
    predicted: float
    se: float
    passed: bool


VERIFICATION_FIELDS = [f for f in VerificationRow.__dataclass_fields__]


def write_verification_csv(rows: Sequence[VerificationRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=VERIFICATION_FIELDS)
        w.writeheader()
        for row in rows:
            rec = asdict(row)
            for key in ("observed", "predicted", "se"):
                rec[key] = repr(float(rec[key]))
            rec["passed"] = int(rec["passed"])
            w.writerow(rec)


def run_verification(n: int = 10_000, reps: int = 1000, seed: int = 0, n_se: float = 3.0,
                     workers: int | None = None) -> list[VerificationRow]:
    """Desk-scale battery of limit-theorem checks.

    * law of the maximum for an independent and the periodic Gaussian chain
      at ``tau`` in {0.5, 1, 2}, against ``exp(-tau)``;
    * interexceedance tail of an independent sequence against ``exp(-t)``;
    * Monte Carlo local index against quadrature on the periodic logistic
      chain, including the atom of the interexceedance law.
    """
    rows: list[VerificationRow] = []
    indep = PeriodicModelSpec(Family.GAUSSIAN_AR, 1, (0.0,))
    gauss = preset("paper-gaussian")
    logistic = preset("paper-logistic")
    for name, spec in (("independent", indep), ("gaussian", gauss)):
        for j, tau in enumerate((0.5, 1.0, 2.0)):
            res = max_dist_check(spec, n, tau / n, reps, RngStream(seed, 100 + 10 * j + spec.d),
                                 gamma=1.0, workers=workers)
            rows.append(VerificationRow("max_dist", f"model={name};n={n};tau={tau}", res.empirical,
                                        res.iid_limit, res.se,
                                        abs(res.empirical - res.iid_limit) < n_se * res.se))
    grid = np.round(np.arange(0.1, 3.0 + 1e-9, 0.1), 10)
    curve = interexceedance_tail(indep, 1, 0.01, grid, reps * 10, RngStream(seed, 200),
                                 theta=1.0, gamma=1.0, workers=workers)
    dev = np.abs(curve.survival - curve.model)
    worst = int(np.argmax(dev / curve.se))
    rows.append(VerificationRow("interexceedance_tail", "model=independent;p=0.01;t=0.1..3",
                                float(curve.survival[worst]), float(curve.model[worst]),
                                float(curve.se[worst]), bool(np.all(dev < n_se * curve.se))))
    p = 0.05
    u = -1.0 / math.log1p(-p)
    for i in (3, 6):
        quad = logistic_theta_quadrature(logistic, i, 5, u)
        mc = empirical_theta_local(logistic, i, 5, u, reps * 10, RngStream(seed, 300 + i), workers=workers)
        rows.append(VerificationRow("theta_local_vs_quadrature", f"model=paper-logistic;i={i};k=5;p={p}",
                                    mc.estimate, quad.value, mc.se,
                                    abs(mc.estimate - quad.value) < n_se * mc.se))
    return rows
