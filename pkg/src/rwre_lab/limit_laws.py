"""Reference CDFs, goodness-of-fit distances and tail-index estimation."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, special, stats

from .errors import ConfigurationError, NumericalError


def normal_cdf(x):
    """Standard Gaussian distribution function (via ``erfc``)."""
    return special.ndtr(x)


def exp_cdf(x):
    """Unit exponential distribution function."""
    x = np.asarray(x, dtype=float)
    return np.where(x < 0, 0.0, -np.expm1(-np.maximum(x, 0.0)))


def shifted_exp_cdf(x):
    """``Psi(x + 1)``: law of ``E - 1`` for a unit exponential ``E``."""
    return exp_cdf(np.asarray(x, dtype=float) + 1.0)


@dataclass(frozen=True)
class StableSpec:
    """Stable law with characteristic function
    ``exp(-b |t|^index (1 - i sgn(t) tan(pi index / 2)))``."""

    index: float
    b: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.index < 2.0 or self.index == 1.0:
            raise ConfigurationError("stable index must lie in (0, 1) or (1, 2)", "index")
        if not self.b > 0:
            raise ConfigurationError("stable scale b must be positive", "b")

    @property
    def scale(self):
        """``c`` such that this law is ``c`` times the ``b = 1`` law."""
        return self.b ** (1.0 / self.index)

    def with_b(self, b):
        return StableSpec(self.index, b)


def _gil_pelaez(alpha, x):
    """``F(x)`` for the ``b = 1`` stable law by Gil-Pelaez inversion."""
    k = math.tan(math.pi * alpha / 2.0)
    t_damp = 40.0 ** (1.0 / alpha)  # exp(-t^alpha) < 5e-18 beyond
    ax = abs(x)

    if alpha < 1.0:
        # t = u^(1/alpha), dt/t = du/(alpha u): smooth at 0 when alpha < 1
        head = lambda u: math.exp(-u) * math.sin(k * u - x * u ** (1.0 / alpha)) / (alpha * u)
        to_head = lambda t: t**alpha
    else:
        # integrand ~ k t^(alpha-1) - x near 0, already bounded
        head = lambda t: math.exp(-(t**alpha)) * math.sin(k * t**alpha - x * t) / t
        to_head = lambda t: t
    opts = dict(epsabs=1e-11, epsrel=1e-10, limit=2000)

    if ax * t_damp < 200.0:
        val, err = integrate.quad(head, 0.0, to_head(t_damp), **opts)
        tail_val, tail_err = 0.0, 0.0
    else:
        t0 = 20.0 * math.pi / ax
        val, err = integrate.quad(head, 0.0, to_head(t0), **opts)
        g_cos = lambda t: math.exp(-(t**alpha)) * math.sin(k * t**alpha) / t
        g_sin = lambda t: math.exp(-(t**alpha)) * math.cos(k * t**alpha) / t
        with warnings.catch_warnings():
            # convergence is judged from the returned error estimates below
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            c1, e1 = integrate.quad(g_cos, t0, np.inf, weight="cos", wvar=ax, epsabs=1e-11, limlst=200)
            s1, e2 = integrate.quad(g_sin, t0, np.inf, weight="sin", wvar=ax, epsabs=1e-11, limlst=200)
        tail_val = c1 - math.copysign(1.0, x) * s1
        tail_err = e1 + e2
    total_err = err + tail_err
    info = {"abs_err": total_err, "x": x, "alpha": alpha}
    if not math.isfinite(val + tail_val) or total_err > 1e-6:
        raise NumericalError("stable CDF quadrature did not converge", info)
    return 0.5 - (val + tail_val) / math.pi


@lru_cache(maxsize=200_000)
def _unit_cdf(alpha, x):
    if alpha < 1.0 and x <= 0.0:
        return 0.0  # totally right-skewed with index < 1: support is [0, inf)
    return min(1.0, max(0.0, _gil_pelaez(alpha, x)))


def stable_cdf(spec, x):
    """Distribution function ``L_{index,b}`` evaluated at ``x`` (scalar or array)."""
    xs = np.asarray(x, dtype=float)
    flat = xs.ravel() / spec.scale
    out = np.array([_unit_cdf(float(spec.index), float(v)) for v in flat])
    return out.reshape(xs.shape) if xs.shape else float(out[0])


def stable_median(index):
    """Median of ``L_{index,1}``."""
    spec = StableSpec(index, 1.0)
    f = lambda x: stable_cdf(spec, x) - 0.5
    lo, hi = (1e-6, 10.0) if index < 1 else (-10.0, 10.0)
    while f(hi) < 0:
        hi *= 4.0
    return optimize.brentq(f, lo, hi, xtol=1e-12)


def fit_stable_b_by_median(samples, index):
    """``b`` such that the median of ``L_{index,b}`` equals the sample median."""
    med = float(np.median(samples))
    m1 = stable_median(index)
    if med / m1 <= 0:
        raise ConfigurationError("sample median has the wrong sign for this stable law")
    return (med / m1) ** index


# ---------------------------------------------------------------------------
# empirical distribution functions


@dataclass(frozen=True)
class EmpiricalCDF:
    samples: np.ndarray

    def __post_init__(self):
        s = np.sort(np.asarray(self.samples, dtype=float))
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def n(self):
        return self.samples.size

    def __call__(self, x):
        return np.searchsorted(self.samples, x, side="right") / self.n


def ks_distance(ecdf, cdf):
    """``sup_x |F_n(x) - F(x)|`` for a continuous or right-continuous ``cdf``."""
    if not isinstance(ecdf, EmpiricalCDF):
        ecdf = EmpiricalCDF(ecdf)
    n = ecdf.n
    if n < 2:
        raise ConfigurationError("need at least two samples")
    x = ecdf.samples
    f = np.asarray(cdf(x), dtype=float)
    hi = np.searchsorted(x, x, side="right") / n  # F_n(x_i)
    lo = np.searchsorted(x, x, side="left") / n  # F_n(x_i-)
    return float(max(np.max(hi - f), np.max(f - lo), 0.0))


def two_sample_ks(a, b):
    """Two-sample Kolmogorov-Smirnov statistic."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size < 2 or b.size < 2:
        raise ConfigurationError("need at least two samples in each set")
    grid = np.concatenate((a, b))
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_critical(n, level=0.01, m=None):
    """Asymptotic KS critical value at ``level`` (two-sample when ``m`` is given)."""
    n_eff = n if m is None else n * m / (n + m)
    return float(stats.kstwobign.isf(level) / math.sqrt(n_eff))


def hill_estimator(samples, k):
    """Hill estimate of the tail index from the top ``k`` order statistics."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if not 0 < k < n:
        raise ConfigurationError(f"need 0 < k < n, got k={k}, n={n}")
    if x[0] <= 0:
        raise ConfigurationError("Hill estimator needs positive samples")
    top = np.log(x[n - k :])
    h = float(np.mean(top) - math.log(x[n - k - 1]))
    return 1.0 / h if h > 0 else math.inf


def qq_points(samples, cdf_inv_or_cdf, probs=None):
    """Empirical vs reference quantiles; reference quantiles found by bisection on the CDF."""
    x = np.sort(np.asarray(samples, dtype=float))
    if probs is None:
        probs = (np.arange(1, 100) / 100.0)
    emp = np.quantile(x, probs)
    ref = []
    for p in probs:
        f = lambda v: cdf_inv_or_cdf(v) - p
        lo, hi = float(x[0]) - 1.0, float(x[-1]) + 1.0
        while f(lo) > 0:
            lo = lo * 2 - 1 if lo < 0 else lo / 2 - 1
        while f(hi) < 0:
            hi = hi * 2 + 1
        ref.append(optimize.brentq(f, lo, hi, xtol=1e-9 * max(1.0, abs(hi))))
    return np.asarray(probs), emp, np.asarray(ref)
