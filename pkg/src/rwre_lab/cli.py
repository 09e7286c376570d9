"""``rwre-lab`` command line interface."""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import limit_laws as ll
from .environment import OmegaDistribution, ladder_locations, sample_Q_blocks, solve_s
from .errors import ConfigurationError, RWREError
from .experiments import moments_table, normalize_params, normalized_config, run_experiment
from .io import (
    LADDER_FIELDS,
    SAMPLE_FIELDS,
    canonical_json,
    csv_text,
    config_hash,
    dumps_report,
    ladder_rows,
    read_csv,
    read_environment,
    read_json,
    sample_rows,
    write_csv,
    write_environment,
)
from .moments import BLOCK_MOMENTS_FIELDS, ReflectionPolicy
from .subsequence import (
    EVENT_FIELDS,
    ScaleLadder,
    WindowMoments,
    backtrack_depth,
    context_blocks,
    detect_window,
    scan,
)
from .walk import DEFAULT_MAX_STEPS, WalkConfig, simulate_hitting_times, simulate_positions

EXIT_GATE = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _workers(args):
    if args.workers is not None:
        n = args.workers
    else:
        env = os.environ.get("RWRE_WORKERS", "1")
        try:
            n = int(env)
        except ValueError:
            raise ConfigurationError(f"RWRE_WORKERS={env!r} is not an integer", "RWRE_WORKERS") from None
    if n < 1:
        raise ConfigurationError("must be >= 1", "workers")
    return n


def _out(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_dist(path):
    d = read_json(path)
    if "distribution" in d:
        d = d["distribution"]
    return OmegaDistribution.from_dict(d)


def _timing(t0):
    return {"timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "wall_clock_s": round(time.time() - t0, 3)}


def _write_tables(out, prefix, tables, h):
    paths = []
    for name, (fields, rows) in tables.items():
        p = out / f"{prefix}_{name}.csv"
        write_csv(p, fields, rows, h)
        paths.append(str(p.name))
    return paths


# ---------------------------------------------------------------------------
# subcommands


def cmd_run(args):
    path = args.config_pos or args.config
    if path is None:
        raise UsageError("run needs a config file")
    cfg = read_json(path)
    if args.seed is not None:
        cfg["seed"] = args.seed
    t0 = time.time()
    norm = normalized_config(cfg)
    result, norm = run_experiment(norm, workers=_workers(args))
    h = config_hash(norm)
    out = _out(args)
    kind = norm["experiment"]
    report = dict(result.report)
    report.update(config_hash=h, version=__version__, config=norm)
    report["artifacts"] = _write_tables(out, kind, result.tables, h)
    report["timing"] = _timing(t0)
    (out / f"{kind}.json").write_text(dumps_report(report))
    passed = report["gate"]["passed"]
    print(f"{kind}: config_hash={h[:12]} gate={'pass' if passed else 'FAIL'} -> {out / (kind + '.json')}")
    if args.gate and not passed:
        for name, c in report["gate"]["checks"].items():
            if not c["passed"]:
                print(f"  gate {name}: value={c['value']} limit={c['limit']}", file=sys.stderr)
        return EXIT_GATE
    return 0


def _env_meta(dist, seed, n_blocks, task):
    return {"distribution": dist.to_dict(), "seed": seed, "n_blocks": n_blocks, "task": task}


def cmd_env_gen(args):
    if args.dist is None and args.config is None:
        raise UsageError("env-gen needs --dist or --config")
    src = args.dist or args.config
    dist = _load_dist(src)
    seed = args.seed
    if seed is None:
        seed = read_json(src).get("seed", 0) if args.config else 0
    env, ladders = sample_Q_blocks(dist, args.blocks, seed, args.task)
    meta = _env_meta(dist, seed, args.blocks, args.task)
    h = config_hash({"experiment": "env-gen", **meta})
    out = _out(args)
    write_environment(out / "env.bin", env, meta)
    write_csv(out / "ladders.csv", LADDER_FIELDS, ladder_rows(ladders), h)
    print(f"env-gen: {args.blocks} blocks, {len(env)} sites -> {out / 'env.bin'}")
    return 0


def _env_and_ladders(path):
    env, meta = read_environment(path)
    if env.left_index != 0:
        raise ConfigurationError("environment must start at site 0", "env")
    ladders = ladder_locations(env, meta.get("n_blocks") or _count_blocks(env))
    return env, ladders, meta


def _count_blocks(env):
    from .errors import PartialResultError

    try:
        ladder_locations(env, len(env))
    except PartialResultError as exc:
        return exc.partial.n_blocks
    return len(env)


def cmd_moments(args):
    env, ladders, meta = _env_and_ladders(args.env)
    b = backtrack_depth(args.scale)
    first = args.first if args.first is not None else b + 1
    last = args.last if args.last is not None else ladders.n_blocks
    table = moments_table(env, ladders, b, first, last)
    h = config_hash({"experiment": "moments", "env": meta, "scale": args.scale, "first": first, "last": last})
    out = _out(args)
    path = out / f"moments_{args.scale}.csv"
    # provenance lines let a later scan rebuild the run's config hash
    head = f"# env_meta={canonical_json(meta)}\n# scale={args.scale}\n"
    path.write_text(head + csv_text(BLOCK_MOMENTS_FIELDS, [bm.as_row() for bm in table], h))
    print(f"moments: blocks {first}..{last} at scale {args.scale} (b={b}) -> {path}")
    return 0


def _scan_params(args):
    raw = {"ladder": {"n": [int(v) for v in args.ladder.split(",")], "delta": args.delta}}
    for key in ("C", "eta", "a", "budget"):
        v = getattr(args, key)
        if v is not None:
            raw[key] = v
    if args.detectors:
        raw["detectors"] = args.detectors.split(",")
    return normalize_params("scan", raw)


def _windows_from_moments(files, L, context, s, budget):
    """WindowMoments per scale from ``moments`` CSVs keyed by their reflection scale."""
    by_scale = {}
    meta = None
    for f in files:
        rows, comments = read_csv(f)
        m = json.loads(comments["env_meta"])
        if meta is not None and m != meta:
            raise ConfigurationError("moments files come from different environments", "moments")
        meta = m
        by_scale[int(comments["scale"])] = {int(r["block_index"]): r for r in rows}
    windows, partial = [], False
    for k in L.scales():
        if L.n[k] > budget:
            partial = True
            break
        rows = by_scale.get(L.d(k))
        lo, hi = context + L.n[k - 1] + 1, context + L.n[k]
        if rows is None or any(i not in rows for i in (lo, hi)):
            partial = True
            break
        sel = [rows[i] for i in range(lo, hi + 1)]
        windows.append(WindowMoments(
            k, L.n[k - 1], L.n[k],
            np.array([float(r["M"]) for r in sel]), np.array([float(r["mu"]) for r in sel]),
            np.array([float(r["sigma2"]) for r in sel]), s,
        ))
    return meta, windows, partial


def cmd_scan(args):
    p = _scan_params(args)
    L = ScaleLadder(tuple(p["ladder"]["n"]), p["ladder"]["delta"])
    scales = [k for k in L.scales() if L.n[k] <= p["budget"]]
    context = context_blocks(L, scales)
    if args.env:
        env, ladders, meta = _env_and_ladders(args.env)
        dist = OmegaDistribution.from_dict(meta["distribution"])
        s = solve_s(dist).s
        res = scan(env, ladders, L, s, context, p["budget"], C=p["C"], eta=p["eta"], a=p["a"],
                   detectors=tuple(p["detectors"]))
        events, partial = res.events, res.partial
    elif args.moments:
        meta0 = json.loads(read_csv(args.moments[0])[1]["env_meta"])
        s = solve_s(OmegaDistribution.from_dict(meta0["distribution"])).s
        meta, windows, partial = _windows_from_moments(args.moments, L, context, s, p["budget"])
        events = []
        for wm in windows:
            events.extend(detect_window(wm, L, s, p["C"], p["eta"], p["a"], tuple(p["detectors"])))
    else:
        raise UsageError("scan needs --env or --moments")
    if scales and meta.get("n_blocks") != context + L.n[scales[-1]]:
        print(f"scan: note: environment has {meta.get('n_blocks')} blocks, ladder uses "
              f"{context + L.n[scales[-1]]}; config hash will not match a direct run", file=sys.stderr)
    cfg = {"experiment": "scan", "distribution": meta["distribution"], "seed": meta["seed"], "params": p}
    h = config_hash(cfg)
    out = _out(args)
    write_csv(out / "scan_events.csv", EVENT_FIELDS, [e.as_row() for e in events], h)
    flag = " (partial)" if partial else ""
    print(f"scan: {len(events)} event(s){flag} -> {out / 'scan_events.csv'}")
    return 0


def cmd_simulate(args):
    env, meta = read_environment(args.env)
    ladders = None
    if args.scale or args.from_block is not None or args.to_block is not None:
        ladders = ladder_locations(env, meta.get("n_blocks") or _count_blocks(env))
    refl = ReflectionPolicy.blocks(backtrack_depth(args.scale)) if args.scale else ReflectionPolicy.none()
    # block indices refer to ladder points nu_i
    for name, attr in (("from_block", "start"), ("to_block", "to")):
        i = getattr(args, name)
        if i is None:
            continue
        if not 0 <= i <= ladders.n_blocks:
            raise ConfigurationError(f"must lie in 0..{ladders.n_blocks}", name.replace("_", "-"))
        setattr(args, attr, int(ladders.nu[i]))
    cfg = WalkConfig(refl, max_steps=args.max_steps)
    seed = args.seed or 0
    if args.steps is not None:
        xs, _ = simulate_positions(env, args.steps, cfg, seed, args.paths, start=args.start, ladders=ladders)
        rows = sample_rows(xs, "X")
    else:
        if args.to is None:
            raise UsageError("simulate needs --to (hitting times) or --steps (positions)")
        T, c = simulate_hitting_times(env, args.start, args.to, cfg, seed, args.paths, ladders=ladders)
        rows = sample_rows(T, "T", c)
    h = config_hash({"experiment": "simulate", "env": meta, "start": args.start, "to": args.to,
                     "steps": args.steps, "paths": args.paths, "seed": seed, "scale": args.scale,
                     "max_steps": args.max_steps})
    out = _out(args)
    write_csv(out / "samples.csv", SAMPLE_FIELDS, rows, h)
    print(f"simulate: {len(rows)} samples -> {out / 'samples.csv'}")
    return 0


def _law(args):
    if args.law == "normal":
        return ll.normal_cdf
    if args.law == "exp":
        return ll.exp_cdf
    if args.law == "shifted-exp":
        return ll.shifted_exp_cdf
    spec = ll.StableSpec(args.index, args.b)
    return lambda x: ll.stable_cdf(spec, x)


def cmd_limits(args):
    if args.law == "stable" and args.index is None:
        raise UsageError("--law stable needs --index")
    F = _law(args)
    if args.samples:
        rows, _ = read_csv(args.samples)
        x = np.array([float(r["value"]) for r in rows])
        if args.law == "stable" and args.fit:
            args.b = ll.fit_stable_b_by_median(x, args.index)
            F = _law(args)
        res = {"law": args.law, "n": int(x.size), "ks": ll.ks_distance(x, F),
               "critical_1pct": ll.ks_critical(x.size, 0.01)}
        if args.law == "stable":
            res.update(index=args.index, b=args.b)
        print(json.dumps(res, sort_keys=True))
        return 0
    xs = args.x or list(np.linspace(-3, 3, 13))
    print("x,F")
    for x in xs:
        print(f"{float(x)!r},{float(np.asarray(F(float(x))))!r}")
    return 0


REPORT_FIELDS = ("experiment", "config_hash", "seed", "n_samples", "ks", "hill", "fitted_b",
                 "censored_rate", "passed")


def cmd_report(args):
    rows = []
    for f in sorted(args.files):
        r = read_json(f)
        rows.append({k: ("" if r.get(k) is None else r.get(k)) for k in REPORT_FIELDS[:-1]}
                    | {"passed": r.get("gate", {}).get("passed", "")})
    out = _out(args)
    write_csv(out / "summary.csv", REPORT_FIELDS, rows)
    for r in rows:
        print(f"{r['experiment']:<20} {'pass' if r['passed'] else 'FAIL'}  ks={r['ks']} hill={r['hill']}")
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--gate", action="store_true", help="exit nonzero when a gate check fails")
    common.add_argument("--workers", type=int, help="worker processes (default: $RWRE_WORKERS or 1)")
    common.add_argument("--out", default=".", help="output directory")

    ap = argparse.ArgumentParser(prog="rwre-lab", description="Random walk in random environment lab.")
    ap.add_argument("--version", action="version", version=f"rwre-lab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run an experiment from a JSON config")
    p.add_argument("config_pos", nargs="?", metavar="CONFIG")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("env-gen", parents=[common], help="sample a ladder-block environment")
    p.add_argument("--dist", help="distribution JSON")
    p.add_argument("--blocks", type=int, required=True)
    p.add_argument("--task", type=int, default=0)
    p.set_defaults(fn=cmd_env_gen)

    p = sub.add_parser("moments", parents=[common], help="exact block moments of an environment file")
    p.add_argument("--env", required=True)
    p.add_argument("--scale", type=int, required=True, help="reflection scale n (b = floor(log^2 n))")
    p.add_argument("--first", type=int)
    p.add_argument("--last", type=int)
    p.set_defaults(fn=cmd_moments)

    p = sub.add_parser("simulate", parents=[common], help="hitting times or positions in an environment file")
    p.add_argument("--env", required=True)
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--to", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--paths", type=int, default=1000)
    p.add_argument("--from-block", type=int, help="start at ladder point nu_i (overrides --start)")
    p.add_argument("--to-block", type=int, help="target ladder point nu_j (overrides --to)")
    p.add_argument("--scale", type=int, help="block reflection at this scale")
    p.add_argument("--max-steps", type=int, default=DEFAULT_MAX_STEPS)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("scan", parents=[common], help="run event detectors over a scale ladder")
    p.add_argument("--env")
    p.add_argument("--moments", action="append", help="moments CSV (repeatable, one per scale)")
    p.add_argument("--ladder", default="32,1056", help="comma-separated n_0,n_1,...")
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--C", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--a", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--detectors")
    p.set_defaults(fn=cmd_scan)

    p = sub.add_parser("limits", parents=[common], help="reference CDFs and KS distances")
    p.add_argument("--law", choices=("normal", "exp", "shifted-exp", "stable"), required=True)
    p.add_argument("--index", type=float)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--fit", action="store_true", help="fit stable b by median matching")
    p.add_argument("--samples", help="samples CSV (path_id,kind,value,censored)")
    p.add_argument("--x", type=float, nargs="*")
    p.set_defaults(fn=cmd_limits)

    p = sub.add_parser("report", parents=[common], help="merge JSON reports into summary.csv")
    p.add_argument("files", nargs="+")
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigurationError, UsageError) as exc:
        ap.print_usage(sys.stderr)
        print(f"rwre-lab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"rwre-lab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RWREError as exc:
        print(f"rwre-lab {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
