import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from rwre_lab.errors import ConfigurationError
from rwre_lab.limit_laws import (
    EmpiricalCDF,
    StableSpec,
    exp_cdf,
    fit_stable_b_by_median,
    hill_estimator,
    ks_critical,
    ks_distance,
    normal_cdf,
    qq_points,
    shifted_exp_cdf,
    stable_cdf,
    stable_median,
    two_sample_ks,
)


def test_normal_values():
    assert normal_cdf(0.0) == 0.5
    assert normal_cdf(1.96) == pytest.approx(0.9750021048517795, abs=1e-15)
    assert normal_cdf(-30.0) > 0


def test_exponential_values():
    assert exp_cdf(1.0) == pytest.approx(1 - math.exp(-1), abs=1e-16)
    assert exp_cdf(-2.0) == 0.0
    assert shifted_exp_cdf(-1.0) == 0.0
    assert shifted_exp_cdf(0.0) == pytest.approx(1 - math.exp(-1), abs=1e-16)


def test_stable_spec_validation():
    for bad in (0.0, 1.0, 2.0, 2.5):
        with pytest.raises(ConfigurationError):
            StableSpec(bad)
    with pytest.raises(ConfigurationError):
        StableSpec(1.5, 0.0)


def test_levy_special_case():
    # index 1/2 totally skewed stable law is Levy with c = b^2
    b = 1.0
    levy = stats.levy(scale=b * b)
    xs = np.array([0.05, 0.3, 1.0, 4.0, 25.0, 400.0])
    got = stable_cdf(StableSpec(0.5, b), xs)
    assert np.max(np.abs(got - levy.cdf(xs))) < 1e-9


def test_levy_scale_fitted_from_quantiles():
    # independent check: fit the Levy scale from a handful of quantiles
    spec = StableSpec(0.5, 1.3)
    ps = np.array([0.1, 0.3, 0.5, 0.7, 0.9])
    xs = np.array([stats.levy(scale=1.3**2).ppf(p) for p in ps])
    got = stable_cdf(spec, xs)
    assert np.max(np.abs(got - ps)) < 1e-9


@pytest.mark.parametrize("alpha", [0.6, 0.8, 1.25, 1.5, 1.8])
def test_stable_cdf_monotone_and_limits(alpha):
    spec = StableSpec(alpha)
    xs = np.linspace(-30, 60, 181)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        f = stable_cdf(spec, xs)
    assert np.all(np.diff(f) >= -1e-10)
    assert f[0] < 0.02 and f[-1] > 0.9
    assert np.all((f >= 0) & (f <= 1))
    assert 1 - stable_cdf(spec, 1e8) < 1e-4


def test_stable_cdf_index_below_one_support():
    spec = StableSpec(0.75)
    assert stable_cdf(spec, -1.0) == 0.0
    assert stable_cdf(spec, 0.0) == 0.0


def test_stable_right_tail_slope():
    alpha = 0.75
    spec = StableSpec(alpha)
    xs = np.array([1e3, 1e4])
    tail = 1 - stable_cdf(spec, xs)
    slope = math.log(tail[1] / tail[0]) / math.log(10.0)
    assert slope == pytest.approx(-alpha, abs=0.02)


def test_stable_against_scipy_samples():
    # scipy's S1 parametrisation with beta = 1 and scale b^(1/alpha) matches ours
    alpha = 1.5
    rng = np.random.default_rng(5)
    x = stats.levy_stable.rvs(alpha, 1.0, size=20000, random_state=rng)
    d = ks_distance(x, lambda v: stable_cdf(StableSpec(alpha), v))
    assert d < ks_critical(x.size, 0.01)


def test_stable_scale_invariance():
    alpha, b = 1.5, 3.0
    xs = np.array([-2.0, 0.0, 1.5, 7.0])
    lhs = stable_cdf(StableSpec(alpha, b), xs)
    rhs = stable_cdf(StableSpec(alpha, 1.0), xs / b ** (1 / alpha))
    assert np.allclose(lhs, rhs, atol=1e-13)


def test_median_fit_recovers_b():
    alpha = 1.5
    m1 = stable_median(alpha)
    assert stable_cdf(StableSpec(alpha), m1) == pytest.approx(0.5, abs=1e-10)
    samples = np.array([m1 * 2.0 ** (1 / alpha)] * 3)
    assert fit_stable_b_by_median(samples, alpha) == pytest.approx(2.0, rel=1e-10)
    with pytest.raises(ConfigurationError):
        fit_stable_b_by_median(-np.ones(3), 0.75)


# ---------------------------------------------------------------------------
# goodness of fit


def test_ks_distance_exact():
    assert ks_distance(np.array([0.25, 0.75]), lambda x: np.clip(x, 0, 1)) == pytest.approx(0.25)
    with pytest.raises(ConfigurationError):
        ks_distance(np.array([1.0]), normal_cdf)


def test_ks_distance_matches_scipy():
    x = np.random.default_rng(2).normal(size=500)
    assert ks_distance(x, normal_cdf) == pytest.approx(stats.kstest(x, "norm").statistic, abs=1e-12)


def test_two_sample_ks_matches_scipy():
    rng = np.random.default_rng(3)
    a, b = rng.exponential(size=400), rng.exponential(size=700)
    assert two_sample_ks(a, b) == pytest.approx(stats.ks_2samp(a, b).statistic, abs=1e-12)


def test_ks_critical_values():
    assert ks_critical(100, 0.05) == pytest.approx(1.3581 / 10, abs=1e-4)
    assert ks_critical(100, 0.01, 100) == pytest.approx(1.6276 / math.sqrt(50), abs=1e-4)


@pytest.mark.parametrize("law, cdf", [("normal", normal_cdf), ("exp", exp_cdf)])
def test_ks_accepts_true_law(law, cdf):
    rng = np.random.default_rng(11)
    x = rng.normal(size=10**4) if law == "normal" else rng.exponential(size=10**4)
    assert ks_distance(x, cdf) < ks_critical(x.size, 0.01)


def test_ks_rejects_wrong_law():
    x = np.random.default_rng(1).exponential(size=10**4) - 1
    assert ks_distance(x, normal_cdf) > ks_critical(x.size, 0.01)
    assert ks_distance(x, shifted_exp_cdf) < ks_critical(x.size, 0.01)


def test_empirical_cdf():
    e = EmpiricalCDF(np.array([3.0, 1.0, 2.0]))
    assert e.n == 3
    assert e(2.0) == pytest.approx(2 / 3)
    assert e(0.0) == 0.0


# ---------------------------------------------------------------------------
# tail index


def test_hill_on_pareto():
    x = stats.pareto(1.5).rvs(size=10**5, random_state=np.random.default_rng(0))
    assert hill_estimator(x, 2000) == pytest.approx(1.5, rel=0.05)


def test_hill_edge_cases():
    x = np.arange(1.0, 11.0)
    assert math.isfinite(hill_estimator(x, 9))
    with pytest.raises(ConfigurationError):
        hill_estimator(x, 10)
    with pytest.raises(ConfigurationError):
        hill_estimator(x - 5, 3)


@given(st.floats(0.5, 3.0), st.floats(0.1, 100.0))
@settings(max_examples=50, deadline=None)
def test_hill_scale_invariant(alpha, c):
    x = stats.pareto(alpha).rvs(size=500, random_state=np.random.default_rng(7))
    assert hill_estimator(c * x, 50) == pytest.approx(hill_estimator(x, 50), rel=1e-9)


def test_qq_points_on_normal():
    x = np.random.default_rng(4).normal(size=5000)
    probs, emp, ref = qq_points(x, normal_cdf, np.array([0.1, 0.5, 0.9]))
    assert np.allclose(ref, stats.norm.ppf(probs), atol=1e-6)
    assert np.all(np.diff(emp) > 0)
