"""Exact quenched moments of crossing times, success probabilities and the
conditioned environment, plus a first-step linear-system oracle.

Crossing-time moments use the per-site decomposition ``T = sum_j tau_j`` where
``tau_j`` is the time to go from ``j`` to ``j+1``.  With a reflection at
``c`` (``rho_c := 0``) and ``c < j``::

    W_j = rho_j (1 + W_{j-1}),                     W_c = 0
    A_j = rho_j (A_{j-1} + W_{j-1} + W_{j-1}^2),   A_c = 0
    E tau_j   = 1 + 2 W_j
    Var tau_j = 4 (W_j + W_j^2) + 8 A_j

``A_j`` is the running form of ``sum_{i<j} Pi_{i+1,j} (W_i + W_i^2)``.  Both
recurrences are carried in log space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
from numba import njit
from scipy import linalg, special

from .environment import Environment, LADDER_TOL
from .errors import ConfigurationError, InsufficientContextError, NumericalError

BLOCK_MOMENTS_FIELDS = (
    "block_index", "nu_len", "M", "mu", "sigma2", "p_success", "E_S", "m_minus", "m_plus",
)


@dataclass(frozen=True)
class ReflectionPolicy:
    """Where the walk is reflected while crossing.

    ``none``: no reflection inside the window (the window edge truncates).
    ``blocks(b)``: once ladder point ``nu_k`` is reached, ``omega`` at ``nu_{k-b}`` is 1.
    ``distance(b)``: once site ``i`` is reached, ``omega`` at ``i - b`` is 1.
    """

    kind: str = "none"
    b: int = 0
    clamp: bool = False

    def __post_init__(self):
        if self.kind not in ("none", "blocks", "distance"):
            raise ConfigurationError(f"unknown reflection kind {self.kind!r}", "reflection.kind")
        if self.b < 0:
            raise ConfigurationError("reflection depth must be nonnegative", "reflection.b")

    @classmethod
    def none(cls):
        return cls("none", 0)

    @classmethod
    def blocks(cls, b, clamp=False):
        return cls("blocks", int(b), clamp)

    @classmethod
    def distance(cls, b):
        return cls("distance", int(b))

    def block_cutoff(self, ladders, i):
        """Cutoff site while crossing block ``i`` (1-based): ``nu_{i-1-b}``."""
        k = i - 1 - self.b
        if k < 0:
            if not self.clamp:
                raise InsufficientContextError(
                    f"block {i} needs {-k} more ladder blocks of left context", needed=-k
                )
            k = 0
        return int(ladders.nu[k])

    def cutoffs(self, env, sites, ladders=None):
        """Active cutoff site for each running-maximum site in ``sites``."""
        sites = np.asarray(sites, dtype=np.int64)
        if self.kind == "none":
            return np.full(sites.shape, env.left_index - 1, dtype=np.int64)
        if self.kind == "distance":
            out = sites - self.b
        else:
            if ladders is None:
                raise ConfigurationError("blocks reflection needs a ladder decomposition")
            nu = np.asarray(ladders.nu)
            k = np.searchsorted(nu, sites, side="right") - 1 - self.b
            if np.any(k < 0):
                if not self.clamp:
                    need = int(-k.min())
                    raise InsufficientContextError(
                        f"need {need} more ladder blocks of left context", needed=need
                    )
                k = np.maximum(k, 0)
            out = nu[k]
        if np.any(out < env.left_index):
            raise InsufficientContextError(
                f"cutoff {int(out.min())} left of window start {env.left_index}", needed=int(out.min())
            )
        return out.astype(np.int64)


@dataclass(frozen=True)
class BlockMoments:
    block_index: int
    nu_len: int
    M: float
    mu: float
    sigma2: float
    p_success: float
    E_S: float
    m_minus: float
    m_plus: float

    def as_row(self):
        return asdict(self)


@dataclass(frozen=True)
class LaplaceBounds:
    lam: float
    lower: float
    upper: float  # math.inf when the bound carries no information
    mc_estimate: float = math.nan
    mc_stderr: float = math.nan


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _logaddexp(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a > b:
        return a + np.log1p(np.exp(b - a))
    return b + np.log1p(np.exp(a - b))


@njit(cache=True)
def _crossing_sums(lr, c, frm, to):
    """Sum of E tau_j and Var tau_j over ``frm <= j < to`` with reflection at offset ``c``.

    ``c`` may be -1 (virtual reflection just left of the array).
    """
    mean = 0.0
    var = 0.0
    lw = -np.inf
    la = -np.inf
    if c >= frm:
        mean += 1.0
    for j in range(c + 1, to):
        r = lr[j]
        la = r + _logaddexp(la, _logaddexp(lw, 2.0 * lw))
        lw = r + np.log1p(np.exp(lw)) if lw != -np.inf else r
        if j >= frm:
            w = np.exp(lw)
            mean += 1.0 + 2.0 * w
            var += 4.0 * (w + w * w) + 8.0 * np.exp(la)
    return mean, var


@njit(cache=True)
def _blocks_mu_sigma(lr, nu_off, b, i_lo, i_hi, clamp):
    """mu_i and sigma_i^2 for blocks ``i_lo <= i <= i_hi`` with blocks(b) reflection."""
    n = i_hi - i_lo + 1
    mu = np.empty(n)
    s2 = np.empty(n)
    for t in range(n):
        i = i_lo + t
        k = i - 1 - b
        if k < 0:
            k = 0
        m, v = _crossing_sums(lr, nu_off[k], nu_off[i - 1], nu_off[i])
        mu[t] = m
        s2[t] = v
    return mu, s2


# ---------------------------------------------------------------------------
# crossing moments


def _resolve(env, frm, to, refl, ladders):
    if not frm < to:
        raise ConfigurationError("crossing needs from < to")
    env.offset(frm)
    env.offset(to - 1)
    cut = refl.cutoffs(env, np.arange(frm, to), ladders)
    if np.any(cut > np.arange(frm, to)):
        raise ConfigurationError("cutoff lies right of the site being crossed")
    return cut


def _crossing(env, frm, to, refl, ladders):
    cut = _resolve(env, frm, to, refl, ladders)
    lr = env.log_rho
    base = env.left_index
    mean = var = 0.0
    j = frm
    while j < to:
        c = int(cut[j - frm])
        k = j
        while k < to and cut[k - frm] == c:
            k += 1
        m, v = _crossing_sums(lr, c - base, j - base, k - base)
        mean += m
        var += v
        j = k
    if not (math.isfinite(mean) and math.isfinite(var)):
        raise NumericalError("crossing moments overflowed", {"from": frm, "to": to})
    return mean, var


def expected_crossing(env, frm, to, refl=ReflectionPolicy(), ladders=None):
    """Exact ``E_omega^from T_to`` under reflection policy ``refl``."""
    return _crossing(env, frm, to, refl, ladders)[0]


def variance_crossing(env, frm, to, refl=ReflectionPolicy(), ladders=None):
    """Exact ``Var_omega^from T_to`` under reflection policy ``refl``."""
    return _crossing(env, frm, to, refl, ladders)[1]


def crossing_moments(env, frm, to, refl=ReflectionPolicy(), ladders=None):
    """``(mean, variance)`` of the crossing time in one pass."""
    return _crossing(env, frm, to, refl, ladders)


def variance_crossing_naive(env, frm, to, cutoff):
    """Direct double-sum evaluation of the crossing variance (test oracle).

    Uses the raw definitions ``W_j = sum_{k=c+1}^{j} Pi_{k,j}`` and
    ``sum_{c<i<j} Pi_{i+1,j} (W_i + W_i^2)`` without any recurrence.
    """
    lr = env.log_rho
    base = env.left_index

    def lpi(i, j):
        return float(np.sum(lr[i - base : j - base + 1])) if i <= j else 0.0

    def W(j):
        if j <= cutoff:
            return 0.0
        return sum(math.exp(lpi(k, j)) for k in range(cutoff + 1, j + 1))

    total = 0.0
    for j in range(frm, to):
        wj = W(j)
        inner = sum(math.exp(lpi(i + 1, j)) * (W(i) + W(i) ** 2) for i in range(cutoff + 1, j))
        total += 4.0 * (wj + wj * wj) + 8.0 * inner
    return total


def block_mu_sigma(env, ladders, b, i_lo, i_hi, clamp=False):
    """Arrays of ``mu_i`` and ``sigma_i^2`` for blocks ``i_lo..i_hi`` (1-based, inclusive)."""
    if i_lo < 1 or i_hi > ladders.n_blocks or i_lo > i_hi:
        raise ConfigurationError(f"block range [{i_lo}, {i_hi}] outside 1..{ladders.n_blocks}")
    if not clamp and i_lo - 1 - b < 0:
        raise InsufficientContextError(
            f"block {i_lo} needs {b + 1 - i_lo} more ladder blocks of left context",
            needed=b + 1 - i_lo,
        )
    nu_off = np.asarray(ladders.nu, dtype=np.int64) - env.left_index
    if nu_off[0] < 0 or nu_off[-1] > len(env):
        raise InsufficientContextError("ladder points outside environment window")
    return _blocks_mu_sigma(env.log_rho, nu_off, int(b), int(i_lo), int(i_hi), clamp)


# ---------------------------------------------------------------------------
# oracle


def oracle_moments(env, absorb_at, reflect_at, start):
    """Mean and variance of the hitting time of ``absorb_at`` from ``start``.

    Solves the first-step equations of the birth-death chain on
    ``reflect_at..absorb_at-1`` (``omega = 1`` at ``reflect_at``)::

        m_x  = 1 + omega_x m_{x+1} + (1-omega_x) m_{x-1}
        m2_x = 2 m_x - 1 + omega_x m2_{x+1} + (1-omega_x) m2_{x-1}
    """
    if not reflect_at <= start <= absorb_at:
        raise ConfigurationError("need reflect_at <= start <= absorb_at")
    if start == absorb_at:
        return 0.0, 0.0
    if reflect_at == start == absorb_at:
        return 0.0, 0.0
    n = absorb_at - reflect_at
    w = np.array([env.omega(x) for x in range(reflect_at, absorb_at)])
    w[0] = 1.0
    ab = np.zeros((3, n))
    ab[0, 1:] = -w[:-1]  # superdiagonal: coefficient of m_{x+1} in row x
    ab[1, :] = 1.0
    ab[2, :-1] = -(1.0 - w[1:])  # subdiagonal: coefficient of m_{x-1} in row x
    try:
        m = linalg.solve_banded((1, 1), ab, np.ones(n))
        m2 = linalg.solve_banded((1, 1), ab, 2.0 * m - 1.0)
    except linalg.LinAlgError as exc:
        raise NumericalError("singular first-step system", {"n": n}) from exc
    k = start - reflect_at
    mean = float(m[k])
    return mean, float(m2[k] - mean * mean)


def oracle_hitting_probability(env, start, lo, hi):
    """``P^start(T_hi < T_lo)`` from the first-step linear system (test oracle)."""
    if start <= lo:
        return 0.0
    if start >= hi:
        return 1.0
    n = hi - lo - 1
    w = np.array([env.omega(x) for x in range(lo + 1, hi)])
    ab = np.zeros((3, n))
    ab[0, 1:] = -w[:-1]
    ab[1, :] = 1.0
    ab[2, :-1] = -(1.0 - w[1:])
    rhs = np.zeros(n)
    rhs[-1] = w[-1]
    h = linalg.solve_banded((1, 1), ab, rhs)
    return float(h[start - lo - 1])


# ---------------------------------------------------------------------------
# block-level quantities


def _block_log_rho(env, start, stop):
    if not start < stop:
        raise ConfigurationError("empty block")
    a = env.offset(start)
    env.offset(stop - 1)
    return env.log_rho[a : a + stop - start]


def _log_R_prime(lr):
    """``log sum_{j=0}^{i} Pi_{1,j}`` for ``i = 0..nu-1`` (``Pi_{1,0} = 1``)."""
    prefix = np.concatenate(([0.0], np.cumsum(lr[1:])))
    return np.logaddexp.accumulate(prefix)


def success_probability(env, start, stop):
    """``p = P^start(T_stop < T_start^+)`` for the block ``[start, stop)``.

    ``p = omega_start / sum_{j=start}^{stop-1} Pi_{start+1, j}``.
    """
    lr = _block_log_rho(env, start, stop)
    w0 = env.omega(start)
    if lr.size == 1:
        return w0
    return math.exp(math.log(w0) - _log_R_prime(lr)[-1])


def conditioned_environment(env, start, stop):
    """Environment seen by the walk conditioned to reach ``stop`` before returning to ``start``.

    ``omega_bar = 1`` at the first two sites; further in,
    ``rho_bar_i = rho_i R_{0,i-2} / R_{0,i}`` with ``R_{0,i} = sum_{j<=i} Pi_{0,j}``.
    """
    lr = _block_log_rho(env, start, stop)
    nu = lr.size
    out = np.ones(nu)
    if nu > 2:
        lR = _log_R_prime(lr)
        lrb = lr[2:] + lR[:-2] - lR[2:]
        out[2:] = special.expit(-lrb)
    return Environment(start, out)


def conditioned_max(env, start, stop):
    """``max Pi_bar_{i,j}`` over ``0 <= i <= j < nu`` in the conditioned environment."""
    bar = conditioned_environment(env, start, stop)
    lr = bar.log_rho
    best = -np.inf
    for i in range(lr.size):
        run = np.cumsum(lr[i:])
        best = max(best, float(np.max(run)))
    return math.exp(best)


def expected_success_time(env, start, stop):
    """``E_omega S``: mean crossing time of ``[start, stop)`` in the conditioned environment."""
    bar = conditioned_environment(env, start, stop)
    return expected_crossing(bar, start, stop, ReflectionPolicy.none())


def _prefix(lr):
    return np.concatenate(([0.0], np.cumsum(lr)))


def m_extremes(env, start, stop):
    """``(M_minus, M_plus, tau)`` for the block ``[start, stop)``; ``tau`` is block-relative."""
    lr = _block_log_rho(env, start, stop)
    nu = lr.size
    P = _prefix(lr)  # Pi_{i,j} = exp(P[j+1] - P[i]) in block coordinates
    top = P[1:].max()
    tau = int(np.nonzero(P[1:] >= top - LADDER_TOL)[0].max()) + 1
    lmin = 0.0
    run = -np.inf
    for bidx in range(2, tau + 1):  # pairs 1 <= a < b <= tau
        run = max(run, P[bidx - 1])
        lmin = min(lmin, P[bidx] - run)
    lmax = 0.0
    run = np.inf
    for bidx in range(tau + 2, nu + 1):  # pairs tau+1 <= a < b <= nu
        run = min(run, P[bidx - 1])
        lmax = max(lmax, P[bidx] - run)
    return math.exp(lmin), math.exp(lmax), tau


def m_extremes_bruteforce(env, start, stop):
    """Definition-level double loop for ``m_extremes`` (test oracle)."""
    lr = _block_log_rho(env, start, stop)
    nu = lr.size
    P = _prefix(lr)
    M1 = max(P[k] for k in range(1, nu + 1))
    tau = max(k for k in range(1, nu + 1) if P[k] >= M1 - LADDER_TOL)
    lo = [P[j + 1] - P[i] for i in range(1, tau) for j in range(i, tau)]
    hi = [P[j + 1] - P[i] for i in range(tau + 1, nu) for j in range(i, nu)]
    return math.exp(min(lo + [0.0])), math.exp(max(hi + [0.0])), tau


def block_moments(env, ladders, i, refl):
    """All exact per-block quantities for block ``i`` under ``refl``."""
    start, stop = ladders.block(i)
    mu, s2 = crossing_moments(env, start, stop, refl, ladders)
    m_minus, m_plus, _ = m_extremes(env, start, stop)
    return BlockMoments(
        block_index=int(i),
        nu_len=stop - start,
        M=float(ladders.block_max[i - 1]),
        mu=mu,
        sigma2=s2,
        p_success=success_probability(env, start, stop),
        E_S=expected_success_time(env, start, stop),
        m_minus=m_minus,
        m_plus=m_plus,
    )


def block_moments_table(env, ladders, blocks, refl):
    return [block_moments(env, ladders, i, refl) for i in blocks]


# ---------------------------------------------------------------------------
# Laplace transform sandwich


def laplace_bounds(bm, lam, mc=None):
    """Bounds on ``E exp(-lam T / mu)`` from exact block moments.

    ``mc`` may be an array of crossing-time samples; its empirical Laplace
    transform and standard error are attached.
    """
    if lam < 0:
        raise ConfigurationError("lambda must be nonnegative", "lambda")
    r = bm.E_S / bm.mu
    lower = (1.0 - lam * r) / (1.0 + lam)
    den = 1.0 + lam - (lam + lam * lam) * r - 0.5 * lam * lam * (bm.sigma2 / bm.mu**2 - 1.0)
    upper = 1.0 / den if den > 0 else math.inf
    if mc is None:
        return LaplaceBounds(lam, lower, upper)
    vals = np.exp(-lam * np.asarray(mc, dtype=float) / bm.mu)
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else math.nan
    return LaplaceBounds(lam, lower, upper, float(vals.mean()), se)


def v_k(env, ladders, lo_block, hi_block, b):
    """``sum_{i in (lo, hi]} sigma_i^2`` with reflection ``blocks(b)``."""
    _, s2 = block_mu_sigma(env, ladders, b, lo_block + 1, hi_block)
    return float(s2.sum())
