"""Static figures for experiment results."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiments import ExperimentResult  # noqa: E402
from .theory import logistic_theta_bound  # noqa: E402

MARKERS = {"intervals": "^", "mle": "o"}

STYLE = {
    "font.size": 10,
    "axes.labelsize": 11,
    "legend.fontsize": 9,
    "xtick.labelsize": 9,
    "ytick.labelsize": 9,
    "svg.hashsalt": "extremal-clustering",
}


def figure_size(width: float = 6.0, height: float | None = None) -> tuple[float, float]:
    golden = (math.sqrt(5) - 1.0) / 2.0
    return width, height or width * golden


def theta_band(result: ExperimentResult, n: int, tail_p: float, d: int):
    """Per-phase medians by estimator and the pooled quantile band.

    The band runs from the pointwise minimum of the 0.025 quantiles to the
    pointwise maximum of the 0.975 quantiles over all estimators.
    """
    medians: dict[str, np.ndarray] = {}
    lo = np.full(d, np.inf)
    hi = np.full(d, -np.inf)
    for r in result.rows:
        if r.n != n or not math.isclose(r.tail_p, tail_p) or r.phase == "gamma":
            continue
        label = r.estimator if not r.k else f"{r.estimator} (k={r.k})"
        i = int(r.phase) - 1
        medians.setdefault(label, np.full(d, np.nan))[i] = r.median
        if not math.isnan(r.q025):
            lo[i] = min(lo[i], r.q025)
            hi[i] = max(hi[i], r.q975)
    lo[np.isinf(lo)] = np.nan
    hi[np.isinf(hi)] = np.nan
    return medians, lo, hi


def render_theta_figure(result: ExperimentResult, n: int, tail_p: float, path,
                        alphas=None, d: int | None = None) -> None:
    """Median per-phase estimates with the quantile band, written as SVG.

    ``alphas`` adds the solid bound curve ``2^alpha_i - 1``.  Phases without
    estimates show as gaps.
    """
    if d is None:
        d = max(int(r.phase) for r in result.rows if r.phase != "gamma")
    medians, lo, hi = theta_band(result, n, tail_p, d)
    phases = np.arange(1, d + 1)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figure_size())
        if d == 1:
            ax.errorbar(phases, (lo + hi) / 2, yerr=(hi - lo) / 2, fmt="none", color="0.7", lw=8)
        else:
            ax.fill_between(phases, lo, hi, color="0.85", lw=0, label="0.025-0.975 band")
        if alphas is not None:
            ax.plot(phases, logistic_theta_bound(alphas), color="k", lw=1.5,
                    marker="_" if d == 1 else None, label=r"$2^{\alpha_i}-1$")
        for label, med in medians.items():
            ax.plot(phases, med, ls="none", marker=MARKERS.get(label.split()[0], "s"),
                    mfc="none", mec="k", ms=7, label=label)
        ax.set_xlabel("phase $i$")
        ax.set_ylabel(r"$\theta_i$")
        ax.set_xticks(phases)
        ax.set_ylim(0, 1.05)
        ax.set_title(f"n = {n}, u = q_{tail_p:g}", fontsize=10)
        ax.legend(frameon=False, loc="best")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
