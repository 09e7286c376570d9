import math

import numpy as np
import pytest

from rwre_lab.environment import Environment, sample_environment, sample_Q_blocks
from rwre_lab.errors import ConfigurationError, InsufficientContextError
from rwre_lab.limit_laws import ks_critical, two_sample_ks
from rwre_lab.moments import (
    ReflectionPolicy,
    block_moments,
    conditioned_environment,
    crossing_moments,
    expected_success_time,
    laplace_bounds,
    success_probability,
)
from rwre_lab.walk import (
    WalkConfig,
    simulate_excursion_batch,
    simulate_excursions,
    simulate_hitting_time,
    simulate_hitting_times,
    simulate_position,
    simulate_positions,
)

from conftest import homogeneous, mean_se

PLAIN = WalkConfig()


def _reflected_block(dist, seed, depth=30, min_len=3):
    """A single ladder block with a reflecting site ``depth`` sites to its left."""
    env, dec = sample_Q_blocks(dist, 400, seed=seed)
    for i in range(1, dec.n_blocks + 1):
        a, b = dec.block(i)
        if b - a >= min_len and a >= depth:
            return env.with_reflection(a - depth), a, b
    raise AssertionError("no suitable block")


def test_forced_right_walk():
    env = Environment(0, np.ones(10))
    assert simulate_hitting_time(env, 0, 5, PLAIN, seed=1) == (5, False)
    assert simulate_position(env, 7, PLAIN, seed=1) == (7, 7)
    assert simulate_position(env, 0, PLAIN, seed=1) == (0, 0)


def test_hit_at_window_end():
    env = Environment(0, np.ones(4))
    assert simulate_hitting_time(env, 0, 4, PLAIN, seed=0) == (4, False)
    with pytest.raises(InsufficientContextError):
        simulate_hitting_time(env, 0, 5, PLAIN, seed=0)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        WalkConfig(max_steps=0)
    with pytest.raises(ConfigurationError):
        simulate_hitting_times(Environment(0, [0.5, 0.5]), 1, 1, PLAIN, 0, 3)


def test_homogeneous_mean_three():
    env = homogeneous(2 / 3, -200, 2)
    steps, cens = simulate_hitting_times(env, 0, 1, PLAIN, seed=2024, n_paths=10**6)
    assert not cens.any()
    m, se = mean_se(steps)
    assert abs(m - 3.0) < 3 * se


def test_mc_matches_exact_moments(beta_slow):
    env = sample_environment(beta_slow, -40, 25, seed=8)
    refl = env.with_reflection(-40)
    mean, var = crossing_moments(refl, 0, 25)
    steps, cens = simulate_hitting_times(refl, 0, 25, PLAIN, seed=3, n_paths=10**5)
    assert not cens.any()
    m, se = mean_se(steps)
    assert abs(m - mean) < 3 * se
    # standard error of the sample variance from the fourth central moment
    d = steps - steps.mean()
    v = d.var(ddof=1)
    se_v = math.sqrt(max(np.mean(d**4) - v * v, 0.0) / steps.size)
    assert abs(v - var) < 3 * se_v


def test_blocks_reflection_mc(beta_stat):
    env, dec = sample_Q_blocks(beta_stat, 30, seed=12)
    pol = ReflectionPolicy.blocks(5)
    a, b = dec.nu[10], dec.nu[20]
    mean, _ = crossing_moments(env, a, b, pol, dec)
    steps, _ = simulate_hitting_times(env, a, b, WalkConfig(pol), seed=5, n_paths=20000, ladders=dec)
    m, se = mean_se(steps)
    assert abs(m - mean) < 3 * se


def test_reflection_never_slows(beta_slow):
    env = sample_environment(beta_slow, -300, 30, seed=4)
    refl = WalkConfig(ReflectionPolicy.distance(3))
    far = env.with_reflection(-300)
    t_r, _ = simulate_hitting_times(far, 0, 30, refl, seed=6, n_paths=20000)
    t_u, _ = simulate_hitting_times(far, 0, 30, PLAIN, seed=7, n_paths=20000)
    mr, ser = mean_se(t_r)
    mu_, seu = mean_se(t_u)
    assert mr <= mu_ + 3 * math.hypot(ser, seu)


def test_timeout_is_recorded():
    env = homogeneous(0.5, -10**4, 10)
    cfg = WalkConfig(max_steps=50)
    steps, cens = simulate_hitting_times(env, 0, 10, cfg, seed=1, n_paths=200)
    assert cens.any()
    assert np.all(steps[cens] == 50)


def test_window_exit_error():
    env = homogeneous(0.5, -3, 200)
    with pytest.raises(InsufficientContextError):
        simulate_hitting_times(env, 0, 150, PLAIN, seed=1, n_paths=200)
    with pytest.raises(InsufficientContextError) as ei:
        simulate_positions(env, 10**4, PLAIN, seed=1, n_paths=50)
    assert ei.value.needed == (-10**4, 10**4)


def test_determinism_and_path_independence(beta_stat):
    env = sample_environment(beta_stat, -200, 40, seed=2).with_reflection(-200)
    a, _ = simulate_hitting_times(env, 0, 40, PLAIN, seed=11, n_paths=50)
    b, _ = simulate_hitting_times(env, 0, 40, PLAIN, seed=11, n_paths=50)
    c, _ = simulate_hitting_times(env, 0, 40, PLAIN, seed=11, n_paths=20, path0=30)
    assert np.array_equal(a, b)
    assert np.array_equal(a[30:], c)
    assert simulate_hitting_time(env, 0, 40, PLAIN, seed=11, path=7)[0] == a[7]


def test_positions_running_max():
    env = homogeneous(2 / 3, -5000, 5000)
    xs, ms = simulate_positions(env, 3000, PLAIN, seed=9, n_paths=300)
    assert np.all(ms >= xs)
    assert np.all(ms >= 0)
    assert np.all((xs - 3000) % 2 == 0)


def test_homogeneous_speed_one_percent():
    t = 10**6
    env = homogeneous(2 / 3, -2000, t + 1)
    xs, _ = simulate_positions(env, t, PLAIN, seed=31, n_paths=40)
    assert abs(xs.mean() / t - 1 / 3) < 0.01 / 3


def test_running_max_gap_small(beta_stat):
    # reduced scale: 10^3 paths at t = 10^5
    t = 10**5
    env = sample_environment(beta_stat, -3000, t + 1, seed=6)
    xs, ms = simulate_positions(env, t, PLAIN, seed=2, n_paths=1000)
    gap = int((ms - xs).max())
    assert gap <= 10 * math.log(t) ** 2


# ---------------------------------------------------------------------------
# excursions


def test_excursion_forced_success():
    env = Environment(0, [1.0])
    ex = simulate_excursions(env, 0, 1, PLAIN, seed=1)
    assert ex.n_failures == 0 and ex.success_time == 1 and ex.total == 1


def test_excursion_total_identity(beta_slow):
    env, a, b = _reflected_block(beta_slow, seed=3, min_len=4)
    for path in range(200):
        ex = simulate_excursions(env, a, b, PLAIN, seed=5, path=path)
        assert ex.total == ex.success_time + int(ex.failure_times.sum())
        assert ex.failure_times.size == ex.n_failures
        assert np.all(ex.failure_times >= 2)


def test_failure_fraction_matches_success_probability(beta_slow):
    env, a, b = _reflected_block(beta_slow, seed=9, min_len=4)
    p = success_probability(env, a, b)
    batch = simulate_excursion_batch(env, a, b, PLAIN, seed=4, n_paths=10**5)
    excursions = batch.n_failures.sum() + batch.n_failures.size
    frac = batch.n_failures.sum() / excursions
    se = math.sqrt(p * (1 - p) / excursions)
    assert abs(frac - (1 - p)) < 3 * se


def test_excursion_total_matches_direct(beta_slow):
    env, a, b = _reflected_block(beta_slow, seed=15, min_len=4)
    n = 10**4
    batch = simulate_excursion_batch(env, a, b, PLAIN, seed=100, n_paths=n)
    direct, _ = simulate_hitting_times(env, a, b, PLAIN, seed=200, n_paths=n)
    assert two_sample_ks(batch.total, direct) < ks_critical(n, 0.01, n)


def test_excursion_ks_rejection_rate(beta_slow):
    env, a, b = _reflected_block(beta_slow, seed=15, min_len=4)
    n = 10**4
    crit = ks_critical(n, 0.01, n)
    reject = 0
    for rep in range(100):
        batch = simulate_excursion_batch(env, a, b, PLAIN, seed=1000 + rep, n_paths=n)
        direct, _ = simulate_hitting_times(env, a, b, PLAIN, seed=5000 + rep, n_paths=n)
        reject += two_sample_ks(batch.total, direct) > crit
    assert reject < 5


def test_conditioned_walk_never_returns(beta_slow):
    env, dec = sample_Q_blocks(beta_slow, 500, seed=7)
    i = int(np.argmax(dec.block_len))
    a, b = dec.block(i + 1)
    bar = conditioned_environment(env, a, b)
    steps, _ = simulate_hitting_times(bar, a, b, PLAIN, seed=3, n_paths=10**5)
    m, se = mean_se(steps)
    assert abs(m - expected_success_time(env, a, b)) < 3 * se


def test_laplace_sandwich_on_large_block(beta_stat):
    env, dec = sample_Q_blocks(beta_stat, 3000, seed=19)
    b = 10
    i = b + 1 + int(np.argmax(dec.block_max[b:]))
    pol = ReflectionPolicy.blocks(b)
    bm = block_moments(env, dec, i, pol)
    start, stop = dec.block(i)
    batch = simulate_excursion_batch(env, start, stop, WalkConfig(pol), seed=8, n_paths=10**5, ladders=dec)
    for lam in (0.5, 1.0, 2.0):
        lb = laplace_bounds(bm, lam, mc=batch.total)
        assert lb.lower <= lb.upper
        assert lb.lower - 3 * lb.mc_stderr <= lb.mc_estimate <= lb.upper + 3 * lb.mc_stderr
