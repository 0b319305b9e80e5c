"""Compiled inner loops for the two Markov models.

Family codes: 0 = Gaussian AR, 1 = bivariate logistic with Frechet margins.
Noise is always supplied by the caller (standard normals for family 0,
uniforms in (0, 1) for family 1) so that the random stream is owned by numpy
and the kernels stay deterministic.  Phase offsets are 0-based: ``offset`` is
the index into ``params`` that governs the transition out of the first value.
"""

import math

import numpy as np
from numba import njit

GAUSSIAN = 0
LOGISTIC = 1

_MAX_NEWTON = 200


@njit(cache=True)
def logistic_inverse(x, a, u):
    """Solve ``F(y | x) = u`` for the logistic transition.

    With ``w = 1 + (y/x)^(-1/a)`` and ``L = log w`` the equation becomes
    ``h(L) = (a-1) L + (1 - exp(a L)) / x - log u = 0`` with ``h`` concave and
    decreasing.  Newton started right of the root decreases monotonically onto
    it.  Returns NaN on failure.
    """
    lu = math.log(u)
    hi = math.log1p(-x * lu) / a
    if a < 1.0:
        alt = -lu / (1.0 - a)
        if alt < hi:
            hi = alt
    L = hi
    for _ in range(_MAX_NEWTON):
        ea = math.exp(a * L)
        h = (a - 1.0) * L + (1.0 - ea) / x - lu
        dh = (a - 1.0) - a * ea / x
        step = h / dh
        L_new = L - step
        if L_new <= 0.0:
            L_new = 0.5 * L
        if abs(h) <= 1e-13 or abs(L_new - L) <= 1e-15 * L:
            L = L_new
            return x * math.expm1(L) ** (-a)
        L = L_new
    return np.nan


@njit(cache=True)
def step(family, x, a, e):
    if family == GAUSSIAN:
        return a * x + math.sqrt(1.0 - a * a) * e
    return logistic_inverse(x, a, e)


@njit(cache=True)
def path(family, x0, params, offset, noise, out):
    """Fill ``out[0] = x0`` and ``out[k]`` from ``out[k-1]`` using ``noise[k]``.

    Returns -1 on success, otherwise the 0-based position that failed.
    """
    d = params.shape[0]
    out[0] = x0
    x = x0
    for k in range(1, out.shape[0]):
        a = params[(offset + k - 1) % d]
        y = step(family, x, a, noise[k])
        if not (y == y):
            return k
        out[k] = y
        x = y
    return -1


@njit(cache=True)
def forward_max(family, x0, params, offset, noise):
    """Maximum of the ``steps`` values following each start value.

    ``noise`` has shape ``(reps, steps)``.  NaN marks a failed inversion.
    """
    d = params.shape[0]
    reps, steps = noise.shape
    out = np.empty(reps)
    for r in range(reps):
        x = x0[r]
        m = -np.inf
        for k in range(steps):
            x = step(family, x, params[(offset + k) % d], noise[r, k])
            if not (x == x):
                m = np.nan
                break
            if x > m:
                m = x
        out[r] = m
    return out


@njit(cache=True)
def first_passage(family, x0, params, offset, u, noise):
    """Steps until the first value above ``u``; ``steps + 1`` if none, -1 on failure."""
    d = params.shape[0]
    reps, steps = noise.shape
    out = np.empty(reps, dtype=np.int64)
    for r in range(reps):
        x = x0[r]
        t = steps + 1
        for k in range(steps):
            x = step(family, x, params[(offset + k) % d], noise[r, k])
            if not (x == x):
                t = -1
                break
            if x > u:
                t = k + 1
                break
        out[r] = t
    return out


@njit(cache=True)
def window_events(values, u, window, n):
    """Count ``j <= n`` with ``X_j > u`` and no exceedance in the next ``window`` values."""
    count = 0
    # scan backwards tracking the nearest exceedance strictly after j
    nxt = np.int64(values.shape[0] + window + 1)
    for j in range(values.shape[0] - 1, -1, -1):
        if j < n and values[j] > u and nxt - j > window:
            count += 1
        if values[j] > u:
            nxt = j
    return count


@njit(cache=True)
def advance(family, x0, params, offset, noise):
    """State after ``steps`` transitions from each start value (NaN on failure)."""
    d = params.shape[0]
    reps, steps = noise.shape
    out = np.empty(reps)
    for r in range(reps):
        x = x0[r]
        for k in range(steps):
            x = step(family, x, params[(offset + k) % d], noise[r, k])
            if not (x == x):
                break
        out[r] = x
    return out
