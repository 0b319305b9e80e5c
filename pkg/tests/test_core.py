import math
import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from extremal_clustering.core import (
    EstimateRecord,
    Family,
    InvalidSpecError,
    PeriodicModelSpec,
    Series,
    ThresholdSpec,
    empirical_quantiles,
    extract_exceedances,
    interexceedance_partition,
    interexceedances,
    marginal_sf,
    phase_of,
    resolve_threshold,
)


@pytest.mark.parametrize("index,d,expected", [(1, 7, 1), (9, 7, 2), (14, 7, 7), (15, 7, 1), (5, 1, 1)])
def test_phase_of_examples(index, d, expected):
    assert phase_of(index, d) == expected


@given(st.integers(1, 10_000), st.integers(1, 50))
def test_phase_periodicity(i, d):
    assert phase_of(i + d, d) == phase_of(i, d)
    assert 1 <= phase_of(i, d) <= d


def test_phase_of_rejects_nonpositive():
    with pytest.raises(ValueError):
        phase_of(0, 7)


def test_resolve_threshold_gaussian():
    # independent oracle: stdlib inverse normal
    u = resolve_threshold(ThresholdSpec.tail(0.10), Family.GAUSSIAN_AR)
    assert u == pytest.approx(statistics.NormalDist().inv_cdf(0.9), abs=1e-12)
    assert round(u, 6) == 1.281552


def test_resolve_threshold_frechet():
    u = resolve_threshold(ThresholdSpec.tail(0.10), Family.LOGISTIC_MARKOV)
    assert u == pytest.approx(-1.0 / math.log(0.9), rel=1e-14)
    assert round(u, 5) == 9.49122
    assert math.exp(-1.0 / u) == pytest.approx(0.9, abs=1e-15)


def test_resolve_threshold_absolute_passthrough():
    for fam in Family:
        assert resolve_threshold(ThresholdSpec.level(2.5), fam) == 2.5


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
def test_resolve_threshold_rejects_bad_p(p):
    with pytest.raises(InvalidSpecError):
        ThresholdSpec.tail(p)


@given(st.floats(1e-6, 1 - 1e-6), st.sampled_from(list(Family)))
def test_resolve_threshold_round_trip(p, fam):
    u = resolve_threshold(ThresholdSpec.tail(p), fam)
    assert abs(float(marginal_sf(u, fam)) - p) <= 1e-12


def test_extract_exceedances_examples():
    assert extract_exceedances([3, 1, 4, 1, 5], 2.5).tolist() == [1, 3, 5]
    assert extract_exceedances([1, 2, 2.5], 2.5).tolist() == []
    assert extract_exceedances([1.0, -3.0, 7.0], -math.inf).tolist() == [1, 2, 3]


def test_partition_examples():
    ix = interexceedance_partition([2, 5, 9, 16], 7, 0.0)
    # 9 is in phase ((9 - 1) mod 7) + 1 = 2, so its gap joins I_2
    assert {i: t.tolist() for i, t in ix.classes.items() if len(t)} == {2: [3, 7], 5: [4]}
    assert sum(ix.counts.values()) == 3

    ix = interexceedance_partition([4, 5, 6], 1, 0.0)
    assert ix.classes[1].tolist() == [1, 1]

    ix = interexceedance_partition([10], 7, 0.0)
    assert ix.n_exceedances == 1
    assert all(len(t) == 0 for t in ix.classes.values())


def test_partition_rejects_unsorted():
    with pytest.raises(ValueError):
        interexceedance_partition([3, 2], 2, 0.0)


@settings(max_examples=200)
@given(st.lists(st.integers(1, 500), min_size=1, max_size=80, unique=True), st.integers(1, 12))
def test_partition_conservation(indices, d):
    e = sorted(indices)
    ix = interexceedance_partition(e, d, 0.0)
    assert sum(ix.counts.values()) == len(e) - 1
    assert all((t >= 1).all() for t in ix.classes.values())
    assert sorted(ix.pooled().tolist()) == sorted(np.diff(e).tolist())


MONOTONE_MAPS = [np.exp, np.arctan, lambda x: x ** 3 + 2 * x, lambda x: np.sinh(x) - 4.0]


@settings(max_examples=100)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=200),
       st.floats(-3, 3), st.integers(1, 9), st.sampled_from(range(len(MONOTONE_MAPS))))
def test_monotone_transform_invariance(values, u, d, g_index):
    g = MONOTONE_MAPS[g_index]
    x = np.asarray(values)
    gx, gu = g(x), float(g(np.float64(u)))
    # skip draws where rounding in g merges a value with the threshold
    if np.any((x > u) != (gx > gu)):
        return
    spec = PeriodicModelSpec(Family.GAUSSIAN_AR, d, (0.0,) * d)
    a = interexceedances(Series(x, spec), u)
    b = interexceedances(Series(gx, spec), gu)
    assert np.array_equal(extract_exceedances(x, u), extract_exceedances(gx, gu))
    for i in range(1, d + 1):
        assert np.array_equal(a.classes[i], b.classes[i])


def test_quantile_examples():
    assert empirical_quantiles([1, 2, 3, 4, 5], [0.5]).tolist() == [3.0]
    assert empirical_quantiles([1, 1, 1, 1], [0.025, 0.975]).tolist() == [1.0, 1.0]


def test_quantile_97_525_example():
    x = list(range(1, 101))
    # independent oracle: 'inclusive' in the stdlib is type-7 interpolation
    oracle = statistics.quantiles(x, n=40, method="inclusive")[38]
    assert oracle == pytest.approx(97.525, abs=1e-12)
    assert empirical_quantiles(x, [0.975])[0] == pytest.approx(oracle, abs=1e-12)


@settings(max_examples=100)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=50), st.integers(1, 39))
def test_quantiles_match_statistics_oracle(x, j):
    oracle = statistics.quantiles(x, n=40, method="inclusive")[j - 1]
    assert empirical_quantiles(x, [j / 40])[0] == pytest.approx(oracle, rel=1e-9, abs=1e-6)


def test_quantiles_empty_raises():
    with pytest.raises(ValueError):
        empirical_quantiles([], [0.5])


@pytest.mark.parametrize("family,params", [
    ("gaussian-ar", (1.0,)),
    ("gaussian-ar", (0.2, 0.3)),
    ("logistic-markov", (0.0,)),
    ("logistic-markov", (1.2,)),
    ("logistic-markov", (float("nan"),)),
])
def test_spec_validation(family, params):
    d = 1
    with pytest.raises(InvalidSpecError):
        PeriodicModelSpec(family, d, params)


def test_spec_dict_round_trip():
    spec = PeriodicModelSpec("logistic-markov", 3, (0.25, 0.5, 1.0))
    assert PeriodicModelSpec.from_dict(spec.to_dict()) == spec
    assert spec.param(4) == 0.25


def test_estimate_record_row_and_missing():
    rec = EstimateRecord("intervals", np.array([0.5, np.nan]), 0.5, diagnostics=["missing-phase:2"])
    assert rec.missing_phases == [2]
    row = rec.as_row()
    assert row["theta_1"] == 0.5 and type(row["gamma"]) is float
