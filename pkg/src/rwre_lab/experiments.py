"""Experiment drivers.

Every driver has the signature ``driver(dist, params, seed, workers) -> Result``
where ``params`` has already been normalized by :func:`normalize_params`.  The
``Result`` carries a JSON-able report and named CSV tables.  Reports always
contain ``experiment, params, n_samples, ks, hill, fitted_b, censored_rate,
seed`` plus experiment-specific ``metrics`` and a ``gate`` block.

Random streams: environment number ``t`` of an experiment uses the numpy stream
``(seed, t)``; walk path ``p`` uses the counter stream ``(seed, p)``.  Nothing
depends on the number of workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import limit_laws as ll
from .environment import (
    OmegaDistribution,
    sample_environment,
    sample_Q_blocks,
    solve_s,
    speed,
    w_truncation_bound,
)
from .errors import ConfigurationError
from .io import SAMPLE_FIELDS, sample_rows
from .moments import (
    BLOCK_MOMENTS_FIELDS,
    BlockMoments,
    ReflectionPolicy,
    block_mu_sigma,
    crossing_moments,
    expected_success_time,
    laplace_bounds,
    m_extremes,
    oracle_moments,
    success_probability,
)
from .rng import numpy_stream
from .subsequence import (
    EVENT_FIELDS,
    ScaleLadder,
    backtrack_depth,
    scan_Q,
    window_moments,
)
from .walk import (
    DEFAULT_MAX_STEPS,
    WalkConfig,
    simulate_excursion_batch,
    simulate_hitting_times,
    simulate_positions,
)


@dataclass
class Result:
    report: dict
    tables: dict = field(default_factory=dict)  # name -> (fields, rows)


def _pmap(fn, items, workers):
    """Ordered map, optionally over a process pool."""
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def _base_report(kind, params, seed, **kw):
    rep = {
        "experiment": kind,
        "params": params,
        "seed": seed,
        "n_samples": 0,
        "ks": None,
        "hill": None,
        "fitted_b": None,
        "censored_rate": 0.0,
        "metrics": {},
        "gate": {"checks": {}, "passed": True},
    }
    rep.update(kw)
    return rep


def _gate(report, name, value, limit, passed):
    report["gate"]["checks"][name] = {"value": value, "limit": limit, "passed": bool(passed)}
    report["gate"]["passed"] = all(c["passed"] for c in report["gate"]["checks"].values())


def moments_table(env, ladders, b, i_lo, i_hi):
    """BlockMoments for blocks ``i_lo..i_hi`` with ``blocks(b)`` reflection."""
    mu, s2 = block_mu_sigma(env, ladders, b, i_lo, i_hi)
    M = ladders.block_max
    rows = []
    for t, i in enumerate(range(i_lo, i_hi + 1)):
        start, stop = ladders.block(i)
        m_minus, m_plus, _ = m_extremes(env, start, stop)
        rows.append(BlockMoments(
            block_index=i, nu_len=stop - start, M=float(M[i - 1]), mu=float(mu[t]),
            sigma2=float(s2[t]), p_success=success_probability(env, start, stop),
            E_S=expected_success_time(env, start, stop), m_minus=m_minus, m_plus=m_plus,
        ))
    return rows


# ---------------------------------------------------------------------------
# drivers


def run_moments_check(dist, p, seed, workers=1):
    """Exact crossing moments against the first-step oracle on random windows."""
    rep = _base_report("moments-check", p, seed)
    worst_mean = worst_var = 0.0
    rows = []
    for t in range(p["n_envs"]):
        rng = numpy_stream(seed, 1, t)
        length = int(rng.integers(1, p["max_len"] + 1))
        depth = int(rng.integers(0, p["max_depth"] + 1))
        env = sample_environment(dist, -depth, length, seed, task=t)
        c = -depth
        env = env.with_reflection(c)
        frm = int(rng.integers(c, length))
        to = int(rng.integers(frm + 1, length + 1))
        mean, var = crossing_moments(env, frm, to, ReflectionPolicy.none())
        om, ov = oracle_moments(env, to, c, frm)
        em = abs(mean - om) / om
        ev = abs(var - ov) / ov if ov > 0 else abs(var)
        worst_mean, worst_var = max(worst_mean, em), max(worst_var, ev)
        rows.append({"env": t, "from": frm, "to": to, "cutoff": c, "mean": mean,
                     "oracle_mean": om, "variance": var, "oracle_variance": ov})
    rep["n_samples"] = p["n_envs"]
    rep["metrics"] = {"max_rel_err_mean": worst_mean, "max_rel_err_var": worst_var}
    _gate(rep, "max_rel_err", max(worst_mean, worst_var), p["tol"], max(worst_mean, worst_var) <= p["tol"])
    fields = ("env", "from", "to", "cutoff", "mean", "oracle_mean", "variance", "oracle_variance")
    return Result(rep, {"windows": (fields, rows)})


def _speed_path(args):
    dist, seed, path, t, left, max_steps = args
    env = sample_environment(dist, -left, t + 1, seed, task=path)
    x, _ = simulate_positions(env, t, WalkConfig(max_steps=max_steps), seed, 1, path0=path)
    return int(x[0])


def run_speed(dist, p, seed, workers=1):
    """``X_t / t`` over paths that each live in their own environment."""
    rep = _base_report("speed", p, seed)
    v = speed(dist)
    t = p["t"]
    xs = np.array(_pmap(_speed_path, [(dist, seed, k, t, p["left_context"], DEFAULT_MAX_STEPS)
                                      for k in range(p["paths"])], workers))
    est = xs / t
    mean = float(est.mean())
    rel = abs(mean - v) / v if v > 0 else math.inf
    rep["n_samples"] = int(xs.size)
    rep["metrics"] = {"v_P": v, "mc_speed": mean, "mc_stderr": float(est.std(ddof=1) / math.sqrt(est.size)),
                      "rel_err": rel}
    _gate(rep, "rel_err", rel, p["tol"], rel <= p["tol"])
    return Result(rep, {"samples": (SAMPLE_FIELDS, sample_rows(xs, "X"))})


def run_m_tail(dist, p, seed, workers=1):
    """Hill index of block maxima over i.i.d. ladder blocks."""
    rep = _base_report("m-tail", p, seed)
    s = solve_s(dist).s
    _, ladders = sample_Q_blocks(dist, p["blocks"], seed)
    M = ladders.block_max
    h = ll.hill_estimator(M, p["k"])
    xs = np.geomspace(1.0, np.quantile(M, 1 - 100.0 / M.size), 12)
    tail = [{"x": float(x), "tail": float(np.mean(M > x)), "scaled": float(np.mean(M > x) * x**s)} for x in xs]
    rep.update(n_samples=int(M.size), hill=h)
    rep["metrics"] = {"s": s, "hill": h, "mean_block_len": float(np.mean(ladders.block_len))}
    _gate(rep, "hill_minus_s", abs(h - s), p["tol"], abs(h - s) <= p["tol"])
    return Result(rep, {"tail": (("x", "tail", "scaled"), tail)})


def _variance_rep(args):
    dist, seed, t, n, b = args
    env, ladders = sample_Q_blocks(dist, b + n, seed, task=t)
    _, s2 = block_mu_sigma(env, ladders, b, b + 1, b + n)
    return float(s2.sum()), int(ladders.nu[b])


def run_variance_stable(dist, p, seed, workers=1):
    """``Var_omega T_bar_{nu_n} / n^{2/s}`` over independent ladder environments.

    Each environment carries ``b_n`` extra blocks on the left so every block is
    reflected exactly ``b_n`` blocks back.
    """
    rep = _base_report("variance-stable", p, seed)
    st = solve_s(dist)
    s, n = st.s, p["n"]
    b = backtrack_depth(n)
    out = _pmap(_variance_rep, [(dist, seed, t, n, b) for t in range(p["reps"])], workers)
    var = np.array([o[0] for o in out]) / n ** (2.0 / s)
    depth = min(o[1] for o in out)
    index = s / 2.0
    h = ll.hill_estimator(var, p["k"])
    bfit = ll.fit_stable_b_by_median(var, index)
    spec = ll.StableSpec(index, bfit)
    ks = ll.ks_distance(var, lambda x: ll.stable_cdf(spec, x))
    probs, emp, ref = ll.qq_points(var, lambda x: ll.stable_cdf(spec, x))
    monotone = bool(np.all(np.diff(ref) >= 0) and np.all(np.diff(emp) >= 0))
    rep.update(n_samples=int(var.size), hill=h, fitted_b=bfit, ks=ks)
    rep["metrics"] = {
        "s": s, "index": index, "b_n": b, "qq_monotone": monotone,
        "min_context_sites": depth,
        "unreflected_mean_gap_bound_per_site": w_truncation_bound(st.E_rho, depth),
    }
    _gate(rep, "hill_minus_index", abs(h - index), p["hill_tol"], abs(h - index) <= p["hill_tol"])
    _gate(rep, "ks", ks, p["ks_tol"], ks <= p["ks_tol"])
    _gate(rep, "qq_monotone", monotone, True, monotone)
    qq = [{"p": float(a), "empirical": float(e), "reference": float(r)} for a, e, r in zip(probs, emp, ref)]
    vals = [{"rep": t, "value": float(v)} for t, v in enumerate(var)]
    return Result(rep, {"values": (("rep", "value"), vals), "qq": (("p", "empirical", "reference"), qq)})


def _qualifying_blocks(dist, seed, p, threshold, b):
    """First ``p['blocks_needed']`` ladder blocks with ``M > threshold`` and full context."""
    found = []
    chunk = 0
    while len(found) < p["blocks_needed"]:
        if chunk >= p["max_chunks"]:
            break
        env, ladders = sample_Q_blocks(dist, p["chunk_blocks"], seed, task=chunk)
        M = ladders.block_max
        for i in np.nonzero(M > threshold)[0] + 1:
            if i - 1 - b >= 0 and len(found) < p["blocks_needed"]:
                found.append((chunk, int(i), env, ladders))
        chunk += 1
    return found, chunk


def run_block_exponential(dist, p, seed, workers=1):
    """Crossing times of big blocks, normalized by their exact mean, against Exp(1)."""
    rep = _base_report("block-exponential", p, seed)
    if not p["simulate"]:
        return Result(rep)
    s = solve_s(dist).s
    n = p["n"]
    b = backtrack_depth(n)
    th = n ** ((1.0 - p["eps"]) / s)
    found, chunks = _qualifying_blocks(dist, seed, p, th, b)
    refl = ReflectionPolicy.blocks(b)
    cfg = WalkConfig(refl, max_steps=p["max_steps"])
    pooled, cens, rows, blocks = [], [], [], []
    for j, (chunk, i, env, ladders) in enumerate(found):
        start, stop = ladders.block(i)
        mu, s2 = crossing_moments(env, start, stop, refl, ladders)
        T, c = simulate_hitting_times(env, start, stop, cfg, seed, p["paths"], j * p["paths"], ladders)
        x = T / mu
        pooled.append(x)
        cens.append(c)
        blocks.append({"chunk": chunk, "block_index": i, "M": float(ladders.block_max[i - 1]),
                       "mu": mu, "sigma2": s2, "ks": ll.ks_distance(x, ll.exp_cdf)})
        rows.extend(sample_rows(T, "T", c, j * p["paths"]))
    rep["metrics"] = {"s": s, "threshold": th, "b_n": b, "blocks_found": len(found), "chunks_scanned": chunks}
    if not found:
        _gate(rep, "blocks_found", 0, p["blocks_needed"], False)
        return Result(rep)
    x = np.concatenate(pooled)
    c = np.concatenate(cens)
    ks = ll.ks_distance(x, ll.exp_cdf)
    rep.update(n_samples=int(x.size), ks=ks, censored_rate=float(c.mean()))
    _gate(rep, "blocks_found", len(found), p["blocks_needed"], len(found) == p["blocks_needed"])
    _gate(rep, "ks", ks, p["ks_tol"], ks <= p["ks_tol"])
    fields = ("chunk", "block_index", "M", "mu", "sigma2", "ks")
    return Result(rep, {"blocks": (fields, blocks), "samples": (SAMPLE_FIELDS, rows)})


def _laplace_grid(p):
    return [round(float(x), 10) for x in p["lambdas"]]


def run_laplace(dist, p, seed, workers=1):
    """Exact Laplace-transform bounds against excursion-sampled crossing times."""
    rep = _base_report("laplace", p, seed)
    b = backtrack_depth(p["n"])
    env, ladders = sample_Q_blocks(dist, b + p["blocks"], seed)
    table = moments_table(env, ladders, b, b + 1, b + p["blocks"])
    lams = _laplace_grid(p)
    exact_ok = all(
        (lb.upper == math.inf) or lb.lower <= lb.upper
        for bm in table for lb in (laplace_bounds(bm, lam) for lam in lams)
    )
    order = sorted(range(len(table)), key=lambda t: (-table[t].M, t))[: p["top"]]
    refl = ReflectionPolicy.blocks(b)
    cfg = WalkConfig(refl, max_steps=p["max_steps"])
    rows = []
    inside = total = 0
    cens = []
    for j, t in enumerate(order):
        bm = table[t]
        start, stop = ladders.block(bm.block_index)
        batch = simulate_excursion_batch(env, start, stop, cfg, seed, p["samples"], j * p["samples"], ladders)
        cens.append(batch.censored)
        for lam in lams:
            lb = laplace_bounds(bm, lam, batch.total)
            ok = lb.lower - 3 * lb.mc_stderr <= lb.mc_estimate <= lb.upper + 3 * lb.mc_stderr
            inside += ok
            total += 1
            rows.append({"block_index": bm.block_index, "lambda": lam, "lower": lb.lower, "upper": lb.upper,
                         "mc": lb.mc_estimate, "mc_se": lb.mc_stderr, "inside": ok})
    frac = inside / total if total else 0.0
    rep.update(n_samples=total, censored_rate=float(np.concatenate(cens).mean()) if cens else 0.0)
    rep["metrics"] = {"b_n": b, "exact_lower_le_upper": exact_ok, "fraction_inside": frac}
    _gate(rep, "exact_lower_le_upper", exact_ok, True, exact_ok)
    _gate(rep, "fraction_inside", frac, p["min_fraction"], frac >= p["min_fraction"])
    return Result(rep, {
        "laplace": (("block_index", "lambda", "lower", "upper", "mc", "mc_se", "inside"), rows),
        "moments": (BLOCK_MOMENTS_FIELDS, [bm.as_row() for bm in table]),
    })


def run_excursion_identity(dist, p, seed, workers=1):
    """``E T = E S + E N * E F_1`` with only ``E F_1`` estimated."""
    rep = _base_report("excursion-identity", p, seed)
    b = backtrack_depth(p["n"])
    env, ladders = sample_Q_blocks(dist, b + p["blocks"], seed)
    refl = ReflectionPolicy.blocks(b)
    cfg = WalkConfig(refl, max_steps=p["max_steps"])
    rows = []
    cens = []
    for j, i in enumerate(range(b + 1, b + p["blocks"] + 1)):
        start, stop = ladders.block(i)
        mu, _ = crossing_moments(env, start, stop, refl, ladders)
        ps = success_probability(env, start, stop)
        ES = expected_success_time(env, start, stop)
        EN = (1.0 - ps) / ps
        batch = simulate_excursion_batch(env, start, stop, cfg, seed, p["samples"], j * p["samples"], ladders)
        cens.append(batch.censored)
        fm, fv, cnt = batch.failure_moments()
        se = EN * math.sqrt(fv / cnt) if cnt > 1 else 0.0
        diff = mu - (ES + EN * fm)
        z = diff / se if se > 0 else (0.0 if diff == 0 else math.inf)
        rows.append({"block_index": i, "mu": mu, "E_S": ES, "E_N": EN, "F_mean": fm, "F_count": cnt,
                     "diff": diff, "se": se, "z": z})
    z = np.array([r["z"] for r in rows])
    n_out = int(np.sum(~(np.abs(z) <= p["z_max"])))
    rep.update(n_samples=len(rows), censored_rate=float(np.concatenate(cens).mean()))
    rep["metrics"] = {"b_n": b, "max_abs_z": float(np.max(np.abs(z))), "blocks_outside": n_out}
    _gate(rep, "blocks_outside", n_out, 0, n_out == 0)
    fields = ("block_index", "mu", "E_S", "E_N", "F_mean", "F_count", "diff", "se", "z")
    return Result(rep, {"blocks": (fields, rows)})


def _ladder_from_params(p):
    lad = p["ladder"]
    return ScaleLadder(tuple(lad["n"]), lad["delta"])


def scan_events(dist, p, seed, s=None):
    """Scan one ladder environment; returns (ScanResult, env, ladders, context, s)."""
    s = solve_s(dist).s if s is None else s
    L = _ladder_from_params(p)
    res, env, ladders, ctx = scan_Q(
        dist, L, s, seed, p["budget"], C=p["C"], eta=p["eta"], a=p["a"], detectors=tuple(p["detectors"])
    )
    return res, env, ladders, ctx, s


def run_scan(dist, p, seed, workers=1):
    rep = _base_report("scan", p, seed)
    res, env, ladders, ctx, s = scan_events(dist, p, seed)
    rep["n_samples"] = len(res.events)
    rep["metrics"] = {
        "s": s, "context_blocks": ctx, "scales_done": res.scales_done, "partial": res.partial,
        "gaussian": sum(e.kind == "gaussian" for e in res.events),
        "exponential": sum(e.kind == "exponential" for e in res.events),
    }
    return Result(rep, {"events": (EVENT_FIELDS, [e.as_row() for e in res.events])})


def _segment_run(dist, p, seed, kind, cdf, center):
    """Find environments where ``kind`` fires and test the normalized segment crossing time."""
    s = solve_s(dist).s
    L = _ladder_from_params(p)
    k = L.K
    b = L.b(k)
    refl = ReflectionPolicy.blocks(b)
    cfg = WalkConfig(refl, max_steps=p["max_steps"])
    detectors = (kind,)
    hits = []
    tried = 0
    for task in range(p["max_envs"]):
        tried += 1
        res, env, ladders, ctx = scan_Q(dist, L, s, seed, L.n[k], task=task, C=p["C"], eta=p["eta"],
                                        a=p["a"], detectors=detectors)
        ev = [e for e in res.events if e.k == k]
        if ev:
            hits.append((task, ev[0], env, ladders, ctx))
            if len(hits) == p["events"]:
                break
    rows, samples, per = [], [], []
    for j, (task, ev, env, ladders, ctx) in enumerate(hits):
        start = int(ladders.nu[ctx + L.n[k - 1]])
        stop = int(ladders.nu[ctx + L.n[k]])
        mean, v = crossing_moments(env, start, stop, refl, ladders)
        wm = window_moments(env, ladders, L, k, ctx, s)
        T, c = simulate_hitting_times(env, start, stop, cfg, seed, p["paths"], j * p["paths"], ladders)
        z = (T - mean) / math.sqrt(v)
        ks = ll.ks_distance(z, cdf)
        per.append(ks)
        rows.append({"task": task, "k": k, "witness": ev.witness, "margin": ev.margin, "mean": mean,
                     "v_k": v, "v_k_window": float(wm.sigma2.sum()), "ks": ks, "censored_rate": float(c.mean())})
        samples.extend(sample_rows(T, "T", c, j * p["paths"]))
    return s, hits, tried, rows, samples, per


def _subsequence_report(kind, name, dist, p, seed, cdf, tol_key):
    rep = _base_report(name, p, seed)
    s, hits, tried, rows, samples, per = _segment_run(dist, p, seed, kind, cdf, None)
    rep["metrics"] = {"s": s, "environments_scanned": tried, "events_found": len(hits),
                      "event_rate": len(hits) / tried if tried else 0.0}
    rep["n_samples"] = len(samples)
    if rows:
        rep["ks"] = max(per)
        rep["censored_rate"] = float(np.mean([r["censored_rate"] for r in rows]))
    _gate(rep, "events_found", len(hits), p["events"], len(hits) == p["events"])
    if rows:
        _gate(rep, "max_ks", max(per), p[tol_key], max(per) <= p[tol_key])
    fields = ("task", "k", "witness", "margin", "mean", "v_k", "v_k_window", "ks", "censored_rate")
    return Result(rep, {"segments": (fields, rows), "samples": (SAMPLE_FIELDS, samples)})


def run_clt_subsequence(dist, p, seed, workers=1):
    """Gaussian-event windows: ``(T - E T) / sqrt(v_k)`` against the standard normal."""
    return _subsequence_report("gaussian", "clt-subsequence", dist, p, seed, ll.normal_cdf, "ks_tol")


def run_exp_subsequence(dist, p, seed, workers=1):
    """Exponential-event windows: ``(T - E T) / sqrt(v_k)`` against ``Psi(x + 1)``."""
    return _subsequence_report("exponential", "exp-subsequence", dist, p, seed, ll.shifted_exp_cdf, "ks_tol")


def _annealed_path(args):
    dist, seed, t, n, left, max_steps = args
    env = sample_environment(dist, -left, n, seed, task=t)
    T, c = simulate_hitting_times(env, 0, n, WalkConfig(max_steps=max_steps), seed, 1, path0=t)
    return int(T[0]), bool(c[0])


def run_annealed_stable(dist, p, seed, workers=1):
    """``(T_n - n / v_P) / n^{1/s}`` with a fresh environment per path (no gate)."""
    rep = _base_report("annealed-stable", p, seed)
    st = solve_s(dist)
    n = p["n"]
    out = _pmap(_annealed_path, [(dist, seed, t, n, p["left_context"], p["max_steps"])
                                 for t in range(p["reps"])], workers)
    T = np.array([o[0] for o in out])
    c = np.array([o[1] for o in out])
    z = (T - n / st.v_P) / n ** (1.0 / st.s)
    rep.update(n_samples=int(T.size), censored_rate=float(c.mean()))
    try:
        bfit = ll.fit_stable_b_by_median(z, st.s)
        spec = ll.StableSpec(st.s, bfit)
        rep.update(fitted_b=bfit, ks=ll.ks_distance(z, lambda x: ll.stable_cdf(spec, x)))
    except ConfigurationError as exc:
        rep["metrics"]["fit_error"] = str(exc)
    rep["metrics"].update({"s": st.s, "v_P": st.v_P})
    return Result(rep, {"samples": (SAMPLE_FIELDS, sample_rows(T, "T", c))})


# ---------------------------------------------------------------------------
# registry and parameter normalization

_SCAN_DEFAULTS = {
    "ladder": {"n": [32, 1056], "delta": 1.0}, "C": 2.0, "eta": 0.5, "a": None,
    "budget": 1 << 14, "detectors": ["gaussian", "exponential"],
}

EXPERIMENTS = {
    "moments-check": (run_moments_check, {"n_envs": 100, "max_len": 50, "max_depth": 20, "tol": 1e-9}),
    "speed": (run_speed, {"t": 10**6, "paths": 200, "left_context": 2000, "tol": 0.01}),
    "m-tail": (run_m_tail, {"blocks": 10**6, "k": 10**4, "tol": 0.15}),
    "variance-stable": (run_variance_stable, {"n": 1024, "reps": 2000, "k": 200, "hill_tol": 0.15,
                                              "ks_tol": 0.08}),
    "block-exponential": (run_block_exponential, {
        "n": 4096, "eps": 0.1, "blocks_needed": 50, "paths": 2000, "chunk_blocks": 200_000,
        "max_chunks": 50, "simulate": True, "ks_tol": 0.05, "max_steps": DEFAULT_MAX_STEPS}),
    "laplace": (run_laplace, {
        "n": 1024, "blocks": 500, "top": 50, "samples": 10_000,
        "lambdas": [round(0.1 * j, 10) for j in range(1, 41)], "min_fraction": 0.95,
        "max_steps": DEFAULT_MAX_STEPS}),
    "excursion-identity": (run_excursion_identity, {
        "n": 1024, "blocks": 100, "samples": 100_000, "z_max": 3.0, "max_steps": DEFAULT_MAX_STEPS}),
    "scan": (run_scan, _SCAN_DEFAULTS),
    "clt-subsequence": (run_clt_subsequence, {
        **_SCAN_DEFAULTS, "C": 2.0, "events": 3, "max_envs": 2000, "paths": 5000, "ks_tol": 0.05,
        "max_steps": DEFAULT_MAX_STEPS}),
    "exp-subsequence": (run_exp_subsequence, {
        **_SCAN_DEFAULTS, "C": 20.0, "events": 3, "max_envs": 5000, "paths": 5000, "ks_tol": 0.07,
        "max_steps": DEFAULT_MAX_STEPS}),
    "annealed-stable": (run_annealed_stable, {
        "n": 1024, "reps": 2000, "left_context": 2000, "max_steps": DEFAULT_MAX_STEPS}),
}

_COUNT_FIELDS = ("n_envs", "max_len", "t", "paths", "blocks", "k", "n", "reps", "blocks_needed",
                 "chunk_blocks", "max_chunks", "top", "samples", "events", "max_envs", "budget",
                 "left_context", "max_steps")


def normalize_params(kind, raw=None):
    """Fill defaults and validate; errors name the offending field path."""
    if kind not in EXPERIMENTS:
        raise ConfigurationError(
            f"unknown experiment kind {kind!r}; expected one of {', '.join(sorted(EXPERIMENTS))}", "experiment"
        )
    defaults = EXPERIMENTS[kind][1]
    raw = dict(raw or {})
    unknown = set(raw) - set(defaults)
    if unknown:
        raise ConfigurationError(f"unknown field(s) {sorted(unknown)}", "params")
    p = {**defaults, **raw}
    for key in _COUNT_FIELDS:
        if key in p and (not isinstance(p[key], int) or isinstance(p[key], bool) or p[key] <= 0):
            if not (key == "budget" and p[key] == 0):
                raise ConfigurationError("must be a positive integer", f"params.{key}")
    if "ladder" in p:
        lad = p["ladder"]
        if isinstance(lad, list):
            lad = {"n": lad, "delta": 1.0}
        if "default" in lad:
            L = ScaleLadder.default(lad["default"], delta=lad.get("delta", 1.0))
        elif "geometric" in lad:
            g = lad["geometric"]
            L = ScaleLadder.geometric(g["n0"], g["delta"], g["n_max"])
        else:
            L = ScaleLadder(tuple(lad["n"]), lad.get("delta", 1.0))
        p["ladder"] = {"n": list(L.n), "delta": L.delta}
        if p["a"] is not None and p["a"] < 1:
            raise ConfigurationError("must be >= 1", "params.a")
        if not 0 < p["eta"] < 1:
            raise ConfigurationError("must lie in (0, 1)", "params.eta")
        if not p["C"] > 1:
            raise ConfigurationError("must exceed 1", "params.C")
        bad = set(p["detectors"]) - {"gaussian", "exponential"}
        if bad:
            raise ConfigurationError(f"unknown detector(s) {sorted(bad)}", "params.detectors")
        p["detectors"] = sorted(p["detectors"])
    return p


def normalized_config(cfg):
    """Canonical form of an experiment config (the object that gets hashed)."""
    if not isinstance(cfg, dict):
        raise ConfigurationError("config must be a JSON object")
    for key in ("experiment", "distribution"):
        if key not in cfg:
            raise ConfigurationError("required field missing", key)
    kind = cfg["experiment"]
    params = normalize_params(kind, cfg.get("params"))
    dist = OmegaDistribution.from_dict(cfg["distribution"])
    seed = cfg.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigurationError("must be a nonnegative integer", "seed")
    return {"experiment": kind, "distribution": dist.to_dict(), "seed": seed, "params": params}


def run_experiment(cfg, workers=1):
    """Run a normalized config; returns ``(Result, dist)``."""
    cfg = normalized_config(cfg)
    dist = OmegaDistribution.from_dict(cfg["distribution"])
    driver = EXPERIMENTS[cfg["experiment"]][0]
    return driver(dist, cfg["params"], cfg["seed"], workers), cfg


def verify_block_exponential(dist, eps=0.1, n=4096, paths=2000, seed=0, simulate=True, workers=1, **kw):
    """Keyword front end to the ``block-exponential`` driver; returns the report dict."""
    p = normalize_params("block-exponential", {"eps": eps, "n": n, "paths": paths, "simulate": simulate, **kw})
    return run_block_exponential(dist, p, seed, workers).report


def verify_variance_stable(dist, n=1024, reps=2000, seed=0, workers=1, **kw):
    """Keyword front end to the ``variance-stable`` driver; returns the report dict."""
    p = normalize_params("variance-stable", {"n": n, "reps": reps, **kw})
    return run_variance_stable(dist, p, seed, workers).report
