"""Monte Carlo engine for quenched walks.

Every path draws its uniforms from its own counter-based stream keyed by
``(seed, path_id)``, so results do not depend on batch order.  Reflection is
applied by forcing a right step at the active cutoff site, where the cutoff is
looked up from the running maximum (``cut[max]``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConfigurationError, InsufficientContextError
from .moments import ReflectionPolicy
from .rng import as_seed, path_key, uniform_at

OK, TIMEOUT, WINDOW_EXIT = 0, 1, 2
DEFAULT_MAX_STEPS = 10**9


@dataclass(frozen=True)
class WalkConfig:
    reflection: ReflectionPolicy = field(default_factory=ReflectionPolicy)
    max_steps: int = DEFAULT_MAX_STEPS
    record_running_max: bool = True

    def __post_init__(self):
        if self.max_steps <= 0:
            raise ConfigurationError("max_steps must be positive", "max_steps")


@dataclass(frozen=True)
class ExcursionSample:
    n_failures: int
    failure_times: np.ndarray
    success_time: int
    total: int
    censored: bool = False


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _walk_to(om, cut, x, target, m, key, ctr, max_steps):
    """Run from offset ``x`` until ``target``; returns (steps, x, max, ctr, status)."""
    n = om.size
    steps = 0
    while x != target:
        if steps >= max_steps:
            return steps, x, m, ctr, 1
        if x == cut[m]:
            x += 1
        else:
            u = uniform_at(key, ctr)
            ctr += 1
            if u < om[x]:
                x += 1
            else:
                x -= 1
        steps += 1
        if (x < 0 or x >= n) and x != target:
            return steps, x, m, ctr, 2
        if x > m:
            m = x
    return steps, x, m, ctr, 0


@njit(cache=True)
def _hit_batch(om, cut, start, target, seed, path0, n_paths, max_steps):
    out = np.empty(n_paths, np.int64)
    status = np.empty(n_paths, np.int8)
    for p in range(n_paths):
        key = path_key(seed, path0 + p)
        steps, _, _, _, st = _walk_to(om, cut, start, target, start, key, 0, max_steps)
        out[p] = steps
        status[p] = st
    return out, status


@njit(cache=True)
def _position_batch(om, cut, start, t, seed, path0, n_paths):
    n = om.size
    xs = np.empty(n_paths, np.int64)
    ms = np.empty(n_paths, np.int64)
    status = np.zeros(n_paths, np.int8)
    for p in range(n_paths):
        key = path_key(seed, path0 + p)
        x = start
        m = start
        ctr = 0
        for _ in range(t):
            if x == cut[m]:
                x += 1
            else:
                u = uniform_at(key, ctr)
                ctr += 1
                if u < om[x]:
                    x += 1
                else:
                    x -= 1
            if x < 0 or x >= n:
                status[p] = 2
                break
            if x > m:
                m = x
        xs[p] = x
        ms[p] = m
    return xs, ms, status


@njit(cache=True)
def _excursion_path(om, cut, start, stop, key, max_steps, buf):
    """One crossing of [start, stop) split into excursions from ``start``.

    Failure durations are written to ``buf`` (grown as needed).  Returns
    (n_fail, success, total, status, buf).
    """
    ctr = 0
    total = 0
    n_fail = 0
    m = start
    while True:
        x = start
        dur = 0
        while True:
            if total + dur >= max_steps:
                return n_fail, dur, total + dur, 1, buf
            if x == cut[m]:
                x += 1
            else:
                u = uniform_at(key, ctr)
                ctr += 1
                if u < om[x]:
                    x += 1
                else:
                    x -= 1
            dur += 1
            if (x < 0 or x >= om.size) and x != stop:
                return n_fail, dur, total + dur, 2, buf
            if x > m:
                m = x
            if x == start or x == stop:
                break
        total += dur
        if x == stop:
            return n_fail, dur, total, 0, buf
        if n_fail == buf.size:
            nb = np.empty(2 * buf.size, np.int64)
            nb[: buf.size] = buf
            buf = nb
        buf[n_fail] = dur
        n_fail += 1


@njit(cache=True)
def _excursion_batch(om, cut, start, stop, seed, path0, n_paths, max_steps):
    n_fail = np.empty(n_paths, np.int64)
    succ = np.empty(n_paths, np.int64)
    total = np.empty(n_paths, np.int64)
    sum_f = np.zeros(n_paths, np.float64)
    sum_f2 = np.zeros(n_paths, np.float64)
    status = np.empty(n_paths, np.int8)
    buf = np.empty(64, np.int64)
    for p in range(n_paths):
        key = path_key(seed, path0 + p)
        nf, s, tot, st, buf = _excursion_path(om, cut, start, stop, key, max_steps, buf)
        n_fail[p] = nf
        succ[p] = s
        total[p] = tot
        status[p] = st
        for k in range(nf):
            f = np.float64(buf[k])
            sum_f[p] += f
            sum_f2[p] += f * f
    return n_fail, succ, total, sum_f, sum_f2, status


# ---------------------------------------------------------------------------
# python surface


def _cut_table(env, refl, ladders, first_site):
    """Cutoff offset for every running-maximum offset (``-1`` = no reflection)."""
    n = len(env)
    table = np.full(n, -1, dtype=np.int64)
    sites = np.arange(first_site, env.right_index)
    if refl.kind != "none" and sites.size:
        table[first_site - env.left_index :] = refl.cutoffs(env, sites, ladders) - env.left_index
    return table


def _check_target(env, target):
    # the target may sit one past the last stored site
    if target > env.right_index:
        raise InsufficientContextError(
            f"target {target} beyond window end {env.right_index}", needed=target
        )


def _check_window(status, env, what):
    if np.any(status == WINDOW_EXIT):
        raise InsufficientContextError(
            f"{what} left the environment window [{env.left_index}, {env.right_index}); "
            "extend the window or add a reflection"
        )


def simulate_hitting_times(env, start, target, cfg, seed, n_paths, path0=0, ladders=None):
    """Hitting times of ``target`` from ``start`` for paths ``path0 .. path0+n_paths-1``.

    Returns ``(durations, censored)``; censored paths hit ``max_steps``.
    """
    if not start < target:
        raise ConfigurationError("need start < target")
    env.offset(start)
    _check_target(env, target)
    cut = _cut_table(env, cfg.reflection, ladders, start)
    steps, status = _hit_batch(
        env.omegas, cut, start - env.left_index, target - env.left_index,
        as_seed(seed), np.int64(path0), int(n_paths), np.int64(cfg.max_steps),
    )
    _check_window(status, env, "walk")
    return steps, status == TIMEOUT


def simulate_hitting_time(env, start, target, cfg, seed, path=0, ladders=None):
    """Single-path hitting time; returns ``(duration, censored)``."""
    steps, cens = simulate_hitting_times(env, start, target, cfg, seed, 1, path, ladders)
    return int(steps[0]), bool(cens[0])


def simulate_positions(env, t, cfg, seed, n_paths, path0=0, start=0, ladders=None):
    """Positions ``X_t`` and running maxima ``X*_t`` after ``t`` steps."""
    if t < 0:
        raise ConfigurationError("t must be nonnegative")
    env.offset(start)
    cut = _cut_table(env, cfg.reflection, ladders, start)
    xs, ms, status = _position_batch(
        env.omegas, cut, start - env.left_index, int(t), as_seed(seed), np.int64(path0), int(n_paths)
    )
    if np.any(status == WINDOW_EXIT):
        raise InsufficientContextError(
            f"walk left window [{env.left_index}, {env.right_index}) within {t} steps; "
            f"needs roughly [{start - t}, {start + t}]",
            needed=(start - t, start + t),
        )
    return xs + env.left_index, ms + env.left_index


def simulate_position(env, t, cfg, seed, path=0, start=0, ladders=None):
    xs, ms = simulate_positions(env, t, cfg, seed, 1, path, start, ladders)
    return int(xs[0]), int(ms[0])


def simulate_excursions(env, start, stop, cfg, seed, path=0, ladders=None):
    """Excursion decomposition of one crossing of ``[start, stop)``."""
    if not start < stop:
        raise ConfigurationError("need start < stop")
    env.offset(start)
    _check_target(env, stop)
    cut = _cut_table(env, cfg.reflection, ladders, start)
    key = np.uint64(path_key(as_seed(seed), np.int64(path)))
    nf, s, tot, st, buf = _excursion_path(
        env.omegas, cut, start - env.left_index, stop - env.left_index, key,
        np.int64(cfg.max_steps), np.empty(64, np.int64),
    )
    _check_window(np.array([st]), env, "excursion")
    return ExcursionSample(int(nf), buf[:nf].copy(), int(s), int(tot), st == TIMEOUT)


@dataclass(frozen=True)
class ExcursionBatch:
    n_failures: np.ndarray
    success_time: np.ndarray
    total: np.ndarray
    sum_failure: np.ndarray
    sum_failure_sq: np.ndarray
    censored: np.ndarray

    def failure_moments(self):
        """Pooled mean, variance and count of failure-excursion durations."""
        ok = ~self.censored
        n = int(self.n_failures[ok].sum())
        if n == 0:
            return 0.0, 0.0, 0
        s1 = float(self.sum_failure[ok].sum())
        s2 = float(self.sum_failure_sq[ok].sum())
        mean = s1 / n
        var = (s2 - n * mean * mean) / (n - 1) if n > 1 else 0.0
        return mean, var, n


def simulate_excursion_batch(env, start, stop, cfg, seed, n_paths, path0=0, ladders=None):
    if not start < stop:
        raise ConfigurationError("need start < stop")
    env.offset(start)
    _check_target(env, stop)
    cut = _cut_table(env, cfg.reflection, ladders, start)
    nf, s, tot, sf, sf2, status = _excursion_batch(
        env.omegas, cut, start - env.left_index, stop - env.left_index,
        as_seed(seed), np.int64(path0), int(n_paths), np.int64(cfg.max_steps),
    )
    _check_window(status, env, "excursion")
    return ExcursionBatch(nf, s, tot, sf, sf2, status == TIMEOUT)
