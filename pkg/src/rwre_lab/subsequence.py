"""Scale ladders and environment-event detectors.

Blocks are numbered as in the window convention ``(n_{k-1}, n_k]``: the
window of scale ``k`` holds blocks ``n_{k-1}+1 .. n_k`` and the distinguished
first part is ``(n_{k-1}, n_{k-1} + floor(eta d_k)]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .environment import sample_Q_blocks
from .errors import ConfigurationError
from .moments import block_mu_sigma

EVENT_FIELDS = ("k", "kind", "witness", "margin", "n_k", "d_k", "s")


def backtrack_depth(n):
    """``b_n = floor(log(n)^2)`` (natural log)."""
    return int(math.floor(math.log(n) ** 2)) if n > 1 else 0


def a_index(k):
    """``a_k = floor(log log k) v 1``."""
    if k < 3:
        return 1
    return max(int(math.floor(math.log(math.log(k)))), 1)


@dataclass(frozen=True)
class ScaleLadder:
    """Increasing block counts ``n_0 < n_1 < ...`` with ``n_k >= n_{k-1}^(1+delta)``."""

    n: tuple
    delta: float = 1.0

    def __post_init__(self):
        n = tuple(int(v) for v in self.n)
        if len(n) < 2:
            raise ConfigurationError("a ladder needs at least two scale points", "n")
        if not 0 < self.delta <= 1:
            raise ConfigurationError("delta must lie in (0, 1]", "delta")
        for prev, cur in zip(n, n[1:]):
            if cur < prev ** (1 + self.delta) - 1e-9 or cur <= prev:
                raise ConfigurationError(f"n_k = {cur} grows too slowly after {prev}", "n")
        object.__setattr__(self, "n", n)

    @classmethod
    def default(cls, n_max, literal_k=4, delta=1.0):
        """``n_k = 2^(2^k)`` for ``k <= literal_k``, then ``n_k = ceil(n_{k-1}^(1+delta))``."""
        n = [2]
        k = 0
        while True:
            k += 1
            nxt = 2 ** (2**k) if k <= literal_k else int(math.ceil(n[-1] ** (1 + delta)))
            if nxt > n_max:
                break
            n.append(nxt)
        return cls(tuple(n), delta)

    @classmethod
    def geometric(cls, n0, delta, n_max):
        n = [int(n0)]
        while True:
            nxt = max(int(math.ceil(n[-1] ** (1 + delta))), n[-1] + 1)
            if nxt > n_max:
                break
            n.append(nxt)
        return cls(tuple(n), delta)

    @property
    def K(self):
        return len(self.n) - 1

    def d(self, k):
        return self.n[k] - self.n[k - 1]

    def b(self, k):
        return backtrack_depth(self.d(k))

    def a(self, k):
        return a_index(k)

    def scales(self):
        return range(1, self.K + 1)


@dataclass(frozen=True)
class WindowMoments:
    """Exact per-block quantities for the window ``(n_prev, n_k]`` at reflection scale ``d_k``."""

    k: int
    n_prev: int
    n_k: int
    M: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray
    s: float = math.nan

    @property
    def d(self):
        return self.n_k - self.n_prev

    @classmethod
    def from_block_moments(cls, rows, k=0, n_prev=0, s=math.nan):
        rows = list(rows)
        return cls(
            k, n_prev, n_prev + len(rows),
            np.array([r.M for r in rows]), np.array([r.mu for r in rows]),
            np.array([r.sigma2 for r in rows]), s,
        )


@dataclass(frozen=True)
class EventReport:
    k: int
    kind: str
    witness: int
    margin: float
    n_k: int
    d_k: int
    s: float

    def as_row(self):
        return {f: getattr(self, f) for f in EVENT_FIELDS}


def _head_len(d, eta):
    return int(math.floor(eta * d))


def exponential_margins(wm, C, eta):
    """``M_i^2 / (C sum_{j != i} sigma_j^2)`` for every candidate ``i`` in the head."""
    h = _head_len(wm.d, eta)
    total = float(np.sum(wm.sigma2))
    rest = total - wm.sigma2[:h]
    M2 = wm.M[:h] ** 2
    with np.errstate(divide="ignore"):
        return np.where(rest > 0, M2 / (C * np.maximum(rest, 0.0)), np.inf)


def detect_exponential_event(wm, C=2.0, eta=0.5):
    """First block of the head whose ``M^2`` beats ``C`` times the other variances."""
    if not C > 1:
        raise ConfigurationError("C must exceed 1", "C")
    if not 0 < eta < 1:
        raise ConfigurationError("eta must lie in (0, 1)", "eta")
    margins = exponential_margins(wm, C, eta)
    hits = np.nonzero(margins >= 1.0)[0]
    if hits.size == 0:
        return None
    i = int(hits[0])
    return EventReport(wm.k, "exponential", wm.n_prev + i + 1, float(margins[i]), wm.n_k, wm.d, wm.s)


def gaussian_ratios(wm, a, eta, s):
    """The three slack ratios of the Gaussian condition (each must be >= 1, the last > 1)."""
    d = wm.d
    h = _head_len(d, eta)
    th = 2.0 * d ** (2.0 / s)
    mu2 = wm.mu[:h] ** 2
    tail = float(np.sum(wm.sigma2[h:]))
    r_max = th / float(mu2.max()) if h else math.inf
    r_sum = float(mu2.sum()) / a / th
    r_tail = th / tail if tail > 0 else math.inf
    return r_max, r_sum, r_tail


def detect_gaussian_event(wm, a, eta=0.5, s=None):
    """Check ``max mu^2 <= 2 d^{2/s} <= (1/a) sum mu^2`` on the head and
    ``sum sigma^2 < 2 d^{2/s}`` on the rest."""
    s = wm.s if s is None else s
    if not (s > 0 and math.isfinite(s)):
        raise ConfigurationError("stability parameter s is required", "s")
    if a < 1:
        raise ConfigurationError("a must be a positive count", "a")
    h = _head_len(wm.d, eta)
    if h == 0:
        return None
    r_max, r_sum, r_tail = gaussian_ratios(wm, a, eta, s)
    if r_max >= 1.0 and r_sum >= 1.0 and r_tail > 1.0:
        witness = wm.n_prev + 1 + int(np.argmax(wm.mu[:h]))
        return EventReport(wm.k, "gaussian", witness, min(r_max, r_sum, r_tail), wm.n_k, wm.d, s)
    return None


def recheck_margin(report, wm, C=None, a=None, eta=0.5):
    """Recompute a report's margin from raw window moments."""
    i = report.witness - wm.n_prev - 1
    if report.kind == "exponential":
        rest = float(np.sum(wm.sigma2)) - wm.sigma2[i]
        return float(wm.M[i] ** 2 / (C * rest)) if rest > 0 else math.inf
    return min(gaussian_ratios(wm, a, eta, report.s))


# ---------------------------------------------------------------------------
# scanning


@dataclass
class ScanResult:
    events: list = field(default_factory=list)
    scales_done: list = field(default_factory=list)
    partial: bool = False


def default_eta(ladders):
    """``min(0.5, 1 / (2 nu_hat))`` from the mean block length."""
    nu_hat = float(np.mean(np.diff(ladders.nu)))
    return min(0.5, 1.0 / (2.0 * nu_hat))


def window_moments(env, ladders, ladder_scale, k, context, s=math.nan):
    """Exact window moments for scale ``k``; block ``i`` lives at ladder index ``context + i``."""
    n_prev, n_k = ladder_scale.n[k - 1], ladder_scale.n[k]
    b = ladder_scale.b(k)
    lo, hi = context + n_prev + 1, context + n_k
    mu, s2 = block_mu_sigma(env, ladders, b, lo, hi)
    M = ladders.block_max[lo - 1 : hi]
    return WindowMoments(k, n_prev, n_k, M, mu, s2, s)


def context_blocks(ladder_scale, scales):
    return max([ladder_scale.b(k) - ladder_scale.n[k - 1] for k in scales] + [0])


def detect_window(wm, ladder_scale, s, C=2.0, eta=0.5, a=None, detectors=("gaussian", "exponential")):
    """Run the requested detectors on one window (Gaussian first)."""
    out = []
    if "gaussian" in detectors:
        rep = detect_gaussian_event(wm, ladder_scale.a(wm.k) if a is None else a, eta, s)
        if rep is not None:
            out.append(rep)
    if "exponential" in detectors:
        rep = detect_exponential_event(wm, C, eta)
        if rep is not None:
            out.append(rep)
    return out


def scan(env, ladders, ladder_scale, s, context, budget, C=2.0, eta=0.5, a=None,
         detectors=("gaussian", "exponential")):
    """Run the detectors over every scale whose window fits in ``budget`` blocks."""
    result = ScanResult()
    for k in ladder_scale.scales():
        if ladder_scale.n[k] > budget:
            result.partial = True
            break
        if context + ladder_scale.n[k] > ladders.n_blocks:
            result.partial = True
            break
        wm = window_moments(env, ladders, ladder_scale, k, context, s)
        result.events.extend(detect_window(wm, ladder_scale, s, C, eta, a, detectors))
        result.scales_done.append(k)
    return result


def scan_Q(dist, ladder_scale, s, seed, budget, task=0, **kw):
    """Sample a Q-environment sized for ``ladder_scale`` (with left context) and scan it."""
    scales = [k for k in ladder_scale.scales() if ladder_scale.n[k] <= budget]
    if not scales:
        return ScanResult(partial=ladder_scale.K > 0), None, None, 0
    context = context_blocks(ladder_scale, scales)
    n_blocks = context + ladder_scale.n[scales[-1]]
    env, ladders = sample_Q_blocks(dist, n_blocks, seed, task)
    res = scan(env, ladders, ladder_scale, s, context, budget, **kw)
    return res, env, ladders, context
