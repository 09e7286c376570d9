"""Site distributions, environment windows and deterministic environment functionals.

Conventions
-----------
An environment is a finite window of sites ``left_index <= i < left_index + length``
holding ``omega_i``, the probability of a step to the right.  ``rho_i = (1 - omega_i) / omega_i``.
A reflection site has ``omega = 1`` (so ``rho = 0`` and ``log rho = -inf``).

All products of ``rho`` are handled as sums of ``log rho``; sums of products use
max-shifted accumulation (``logsumexp``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit
from scipy import optimize, special

from .errors import (
    ConfigurationError,
    InsufficientContextError,
    NoRootError,
    PartialResultError,
    RunawayBlockError,
)
from .rng import numpy_stream

ELLIPTICITY_FLOOR = 1e-9
RUNAWAY_BLOCK_CAP = 100_000
# |log Pi| below this counts as Pi == 1 when locating ladder points
LADDER_TOL = 1e-11

_KINDS = ("two_point", "beta", "discrete")


@dataclass(frozen=True)
class OmegaDistribution:
    """Law of a single site ``omega_0``.

    Use the ``two_point``, ``beta`` and ``discrete`` constructors rather than
    building instances directly.
    """

    kind: str
    params: tuple
    epsilon: float = ELLIPTICITY_FLOOR

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigurationError(f"unknown distribution kind {self.kind!r}", "kind")
        if self.kind == "beta":
            a, b = self.params
            if not (a > 0 and b > 0):
                raise ConfigurationError("beta parameters must be positive", "params")
        else:
            points, weights = self.params
            if len(points) != len(weights) or len(points) == 0:
                raise ConfigurationError("points and weights differ in length", "params")
            if any(not (0.0 < w < 1.0) for w in points):
                raise ConfigurationError("support points must lie strictly inside (0, 1)", "params")
            if any(p < 0 for p in weights) or abs(sum(weights) - 1.0) > 1e-12:
                raise ConfigurationError("weights must be nonnegative and sum to 1", "params")

    @classmethod
    def two_point(cls, omega_a, omega_b, q):
        """``omega = omega_a`` with probability ``q``, else ``omega_b``."""
        if not 0.0 <= q <= 1.0:
            raise ConfigurationError("q must be a probability", "q")
        return cls("two_point", ((float(omega_a), float(omega_b)), (float(q), 1.0 - float(q))))

    @classmethod
    def beta(cls, a, b):
        return cls("beta", (float(a), float(b)))

    @classmethod
    def discrete(cls, points, weights):
        return cls("discrete", (tuple(float(p) for p in points), tuple(float(w) for w in weights)))

    @classmethod
    def from_rhos(cls, rho_a, rho_b, q):
        """Two-point law specified through its ``rho`` values."""
        return cls.two_point(1.0 / (1.0 + rho_a), 1.0 / (1.0 + rho_b), q)

    # -- serialization -------------------------------------------------
    def to_dict(self):
        if self.kind == "beta":
            return {"kind": "beta", "alpha": self.params[0], "beta": self.params[1]}
        if self.kind == "two_point":
            (wa, wb), (q, _) = self.params
            return {"kind": "two_point", "omega_a": wa, "omega_b": wb, "q": q}
        return {"kind": "discrete", "points": list(self.params[0]), "weights": list(self.params[1])}

    @classmethod
    def from_dict(cls, d):
        try:
            kind = d["kind"]
            if kind == "beta":
                return cls.beta(d["alpha"], d["beta"])
            if kind == "two_point":
                if "rho_a" in d:
                    return cls.from_rhos(d["rho_a"], d["rho_b"], d["q"])
                return cls.two_point(d["omega_a"], d["omega_b"], d["q"])
            if kind == "discrete":
                return cls.discrete(d["points"], d["weights"])
        except KeyError as exc:
            raise ConfigurationError(f"missing field {exc.args[0]!r}", "distribution") from None
        raise ConfigurationError(f"unknown distribution kind {kind!r}", "distribution.kind")

    # -- moments -----------------------------------------------------------
    def _atoms(self):
        points, weights = self.params
        w = np.asarray(points)
        return w, np.asarray(weights), np.log1p(-w) - np.log(w)

    def mean_rho_pow(self, gamma):
        """``E_P rho^gamma`` (``inf`` when it diverges)."""
        if self.kind == "beta":
            a, b = self.params
            if gamma >= a or gamma <= -b:
                return math.inf
            return math.exp(special.betaln(a - gamma, b + gamma) - special.betaln(a, b))
        _, p, lr = self._atoms()
        mask = p > 0
        return float(np.sum(p[mask] * np.exp(gamma * lr[mask])))

    def mean_log_rho(self):
        if self.kind == "beta":
            a, b = self.params
            return float(special.digamma(b) - special.digamma(a))
        _, p, lr = self._atoms()
        mask = p > 0
        return float(np.sum(p[mask] * lr[mask]))

    def check_transient(self):
        """Raise unless ``E_P log rho < 0``."""
        m = self.mean_log_rho()
        if not m < -1e-10:
            raise ConfigurationError(f"E_P log rho = {m:.3g} is not negative; walk is not right-transient")

    def sample(self, rng, size):
        if self.kind == "beta":
            a, b = self.params
            out = rng.beta(a, b, size=size)
            return np.clip(out, self.epsilon, 1.0 - self.epsilon)
        w, p, _ = self._atoms()
        if len(w) == 2:
            return np.where(rng.random(size) < p[0], w[0], w[1])
        idx = np.searchsorted(np.cumsum(p)[:-1], rng.random(size), side="right")
        return w[idx]


@dataclass(frozen=True)
class Environment:
    """A realized window of site probabilities.

    ``omegas[k]`` is ``omega`` at site ``left_index + k``.
    """

    left_index: int
    omegas: np.ndarray
    _log_rho: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        om = np.array(self.omegas, dtype=np.float64)
        if om.ndim != 1:
            raise ConfigurationError("omegas must be one-dimensional", "omegas")
        if om.size and not (np.all(om > 0.0) and np.all(om <= 1.0)):
            raise ConfigurationError("every omega must lie in (0, 1]", "omegas")
        om.setflags(write=False)
        object.__setattr__(self, "left_index", int(self.left_index))
        object.__setattr__(self, "omegas", om)
        with np.errstate(divide="ignore"):
            lr = np.log1p(-om) - np.log(om)
        lr.setflags(write=False)
        object.__setattr__(self, "_log_rho", lr)

    def __len__(self):
        return self.omegas.size

    @property
    def right_index(self):
        """One past the last site."""
        return self.left_index + self.omegas.size

    @property
    def log_rho(self):
        return self._log_rho

    def contains(self, i):
        return self.left_index <= i < self.right_index

    def offset(self, i):
        if not self.contains(i):
            raise InsufficientContextError(
                f"site {i} outside window [{self.left_index}, {self.right_index})", needed=i
            )
        return i - self.left_index

    def omega(self, i):
        return float(self.omegas[self.offset(i)])

    def window(self, lo, hi):
        """Sub-environment over sites ``lo <= i < hi``."""
        a, b = self.offset(lo), self.offset(hi - 1) + 1
        return Environment(lo, self.omegas[a:b])

    def with_reflection(self, site):
        """Copy with ``omega = 1`` forced at ``site``."""
        om = self.omegas.copy()
        om[self.offset(site)] = 1.0
        return Environment(self.left_index, om)

    def __eq__(self, other):
        return (
            isinstance(other, Environment)
            and self.left_index == other.left_index
            and np.array_equal(self.omegas, other.omegas)
        )

    __hash__ = None


@dataclass(frozen=True)
class LadderDecomposition:
    """Ladder points ``nu[0] < nu[1] < ...`` and per-block statistics.

    Block ``i`` (1-based) spans sites ``[nu[i-1], nu[i])``; ``block_max[i-1]`` is
    its maximal prefix product ``M_i``.
    """

    nu: np.ndarray
    log_block_max: np.ndarray

    @property
    def n_blocks(self):
        return self.nu.size - 1

    @property
    def block_len(self):
        return np.diff(self.nu)

    @property
    def block_max(self):
        return np.exp(self.log_block_max)

    def block(self, i):
        """Site range ``(start, stop)`` of block ``i`` (1-based)."""
        return int(self.nu[i - 1]), int(self.nu[i])


@dataclass(frozen=True)
class StabilityParams:
    s: float
    v_P: float
    E_rho: float
    E_log_rho: float


# ---------------------------------------------------------------------------
# sampling


def sample_environment(dist, lo, hi, seed, task=0):
    """I.i.d. sites ``lo..hi`` (inclusive) from ``dist``."""
    if lo > hi:
        raise ConfigurationError("empty site range", "range")
    if not isinstance(dist, OmegaDistribution):
        raise ConfigurationError("dist must be an OmegaDistribution", "distribution")
    dist.check_transient()
    rng = numpy_stream(seed, task)
    return Environment(lo, dist.sample(rng, hi - lo + 1))


@njit(cache=True)
def _scan_ladders(log_rho, begin, max_blocks, tol, cap):
    """Ladder ends found scanning ``log_rho[begin:]``.

    Returns (ends, log_max, count, runaway) where ``runaway`` is 1 if a block
    longer than ``cap`` was met.
    """
    n = log_rho.size
    ends = np.empty(max_blocks, np.int64)
    lmax = np.empty(max_blocks, np.float64)
    count = 0
    start = begin
    acc = 0.0
    best = -np.inf
    k = begin
    while k < n and count < max_blocks:
        acc += log_rho[k]
        if acc > best:
            best = acc
        k += 1
        if acc < -tol:
            ends[count] = k
            lmax[count] = best
            count += 1
            start = k
            acc = 0.0
            best = -np.inf
        elif k - start > cap:
            return ends, lmax, count, 1
    return ends, lmax, count, 0


def ladder_locations(env, max_blocks, start=0, cap=RUNAWAY_BLOCK_CAP):
    """First ``max_blocks`` ladder points of ``env`` to the right of ``start``."""
    begin = env.offset(start)
    ends, lmax, count, runaway = _scan_ladders(env.log_rho, begin, int(max_blocks), LADDER_TOL, cap)
    nu = np.concatenate(([start], ends[:count] + env.left_index))
    dec = LadderDecomposition(nu, lmax[:count].copy())
    if runaway:
        raise RunawayBlockError(f"block starting at {int(nu[-1])} exceeds {cap} sites")
    if count < max_blocks:
        raise PartialResultError(
            f"window exhausted after {count} of {max_blocks} ladder blocks", partial=dec
        )
    return dec


def sample_Q_blocks(dist, n_blocks, seed, task=0, cap=RUNAWAY_BLOCK_CAP):
    """Concatenation of ``n_blocks`` i.i.d. ladder blocks on sites ``[0, nu_n)``.

    Sites are drawn i.i.d. from ``dist`` and cut at successive ladder points, so
    the blocks are i.i.d. copies of the block ``[0, nu_1)`` under ``P``.
    """
    dist.check_transient()
    rng = numpy_stream(seed, task)
    chunk = max(1024, 8 * int(n_blocks))
    sites = dist.sample(rng, chunk)
    ends_all, lmax_all = [], []
    begin, found = 0, 0
    while True:
        lr = np.log1p(-sites) - np.log(sites)
        ends, lmax, count, runaway = _scan_ladders(lr, begin, n_blocks - found, LADDER_TOL, cap)
        if runaway:
            raise RunawayBlockError(f"ladder block starting at {begin} exceeds {cap} sites")
        ends_all.append(ends[:count])
        lmax_all.append(lmax[:count])
        found += count
        if found == n_blocks:
            break
        if count:
            begin = int(ends[count - 1])
        if sites.size - begin > cap:
            raise RunawayBlockError(f"ladder block starting at {begin} exceeds {cap} sites")
        sites = np.concatenate((sites, dist.sample(rng, chunk)))
    ends = np.concatenate(ends_all)
    nu = np.concatenate(([0], ends)).astype(np.int64)
    env = Environment(0, sites[: nu[-1]])
    return env, LadderDecomposition(nu, np.concatenate(lmax_all))


# ---------------------------------------------------------------------------
# functionals


def rho(env, i):
    w = env.omega(i)
    return (1.0 - w) / w


def log_pi(env, i, j):
    """``log Pi_{i,j} = sum_{k=i}^{j} log rho_k``.  Requires ``i <= j``."""
    if i > j:
        raise ConfigurationError(f"empty product Pi_{{{i},{j}}}; handle Pi = 1 at the call site")
    a, b = env.offset(i), env.offset(j)
    return float(np.sum(env.log_rho[a : b + 1]))


def pi(env, i, j):
    return math.exp(log_pi(env, i, j))


def _log_suffix_sums(env, lo, j):
    """``log Pi_{k,j}`` for ``k = lo..j``."""
    a, b = env.offset(lo), env.offset(j)
    seg = env.log_rho[a : b + 1]
    return np.cumsum(seg[::-1])[::-1]


def log_w_sum(env, i, j):
    if i > j:
        raise ConfigurationError(f"W_{{{i},{j}}} needs i <= j")
    return float(special.logsumexp(_log_suffix_sums(env, i, j)))


def w_sum(env, i, j):
    """``W_{i,j} = sum_{k=i}^{j} Pi_{k,j}``."""
    return math.exp(log_w_sum(env, i, j))


def w_tail(env, j, cutoff):
    """``W_j`` in the environment with ``rho_cutoff := 0``.

    Equals ``W_{cutoff+1, j}`` (zero when ``cutoff == j``).
    """
    if cutoff > j:
        raise ConfigurationError("cutoff must not exceed j")
    if cutoff == j:
        return 0.0
    env.offset(cutoff)
    return w_sum(env, cutoff + 1, j)


def w_truncation_bound(E_rho, depth):
    """Annealed mean error of ``1 + 2 W_j`` when sites at distance ``>= depth`` are cut off.

    ``E_P[2 Pi_{j-depth+1,j} W_{j-depth}] = 2 (E rho)^{depth+1} / (1 - E rho)``.
    """
    if not E_rho < 1.0:
        return math.inf
    return 2.0 * E_rho ** (depth + 1) / (1.0 - E_rho)


def speed(dist):
    """``v_P = 1/(1 + 2 E_P W_0)``; zero unless ``E_P rho < 1``."""
    er = dist.mean_rho_pow(1.0)
    if er >= 1.0:
        return 0.0
    return 1.0 / (1.0 + 2.0 * er / (1.0 - er))


def solve_s(dist, lo=1e-6, hi=64.0):
    """Root ``s`` of ``E_P rho^s = 1`` together with the speed."""
    elr = dist.mean_log_rho()
    f = lambda g: dist.mean_rho_pow(g) - 1.0
    if not (elr < 0 and f(lo) < 0):
        raise NoRootError(f"E_P log rho = {elr:.4g}; no root in [{lo}, {hi}]")
    if dist.kind == "beta":
        hi = min(hi, dist.params[0] * (1.0 - 1e-12))
    grid = np.geomspace(lo, hi, 200)
    upper = None
    for g in grid[1:]:
        v = f(g)
        if v > 0:
            upper = g
            break
    if upper is None:
        raise NoRootError(f"E_P rho^gamma < 1 on all of [{lo}, {hi}]")
    s = optimize.brentq(f, lo, upper, xtol=1e-15, rtol=1e-15, maxiter=500)
    if abs(f(s)) >= 1e-10:
        raise NoRootError(f"root polish failed: residual {f(s):.3g}")
    er = dist.mean_rho_pow(1.0)
    return StabilityParams(s=float(s), v_P=speed(dist), E_rho=er, E_log_rho=elr)
