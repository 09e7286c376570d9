import json
import shutil
import subprocess

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rwre_lab.cli import main
from rwre_lab.environment import Environment, OmegaDistribution
from rwre_lab.errors import ConfigurationError
from rwre_lab.io import (
    canonical_json,
    config_hash,
    csv_text,
    decode_environment,
    encode_environment,
    read_csv,
    read_environment,
    strip_volatile,
    write_csv,
    write_environment,
)

TWO_POINT = {"kind": "two_point", "omega_a": 1 / 3, "omega_b": 0.8,
             "q": (1.0 - 4.0**-1.5) / (2.0**1.5 - 4.0**-1.5)}
BETA = {"kind": "beta", "alpha": 2.0, "beta": 0.5}


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


# ---------------------------------------------------------------------------
# file formats


def test_environment_roundtrip(tmp_path):
    env = Environment(-7, np.random.default_rng(0).uniform(0.1, 0.9, 300))
    meta = {"seed": 3, "note": "x"}
    write_environment(tmp_path / "e.bin", env, meta)
    back, m = read_environment(tmp_path / "e.bin")
    assert back == env and m == meta
    assert decode_environment(encode_environment(env))[0] == env


def test_environment_bad_magic():
    data = bytearray(encode_environment(Environment(0, [0.5])))
    data[:4] = b"XXXX"
    with pytest.raises(ConfigurationError):
        decode_environment(bytes(data))
    with pytest.raises(ConfigurationError):
        decode_environment(b"RW")


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=30))
@settings(max_examples=100, deadline=None)
def test_csv_floats_exact(values):
    text = csv_text(("i", "v"), [{"i": i, "v": v} for i, v in enumerate(values)], "abc")
    assert text.startswith("# config_hash=abc\n")


def test_csv_roundtrip(tmp_path):
    vals = [0.1, 1 / 3, 1e-300, 12345678.000000001]
    write_csv(tmp_path / "t.csv", ("i", "v"), [{"i": i, "v": v} for i, v in enumerate(vals)], "h1")
    rows, comments = read_csv(tmp_path / "t.csv")
    assert comments["config_hash"] == "h1"
    assert [float(r["v"]) for r in rows] == vals


@given(st.dictionaries(st.text(min_size=1, max_size=5), st.integers(), min_size=1, max_size=8))
@settings(max_examples=100, deadline=None)
def test_config_hash_order_invariant(d):
    rev = dict(reversed(list(d.items())))
    assert config_hash(d) == config_hash(rev)
    assert canonical_json(d) == canonical_json(rev)


def test_config_hash_ignores_timing():
    a = {"x": 1, "timing": {"wall_clock_s": 1.0}}
    b = {"x": 1, "timing": {"wall_clock_s": 9.0}}
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash({"x": 2})
    assert "timing" not in strip_volatile(a)


# ---------------------------------------------------------------------------
# run


def _speed_cfg(tmp_path, **params):
    cfg = {"experiment": "speed", "distribution": {"kind": "two_point", "omega_a": 2 / 3, "omega_b": 0.9, "q": 1.0},
           "seed": 3, "params": {"t": 20000, "paths": 20, "left_context": 500, **params}}
    return _write(tmp_path / "speed.json", cfg)


def test_run_speed_homogeneous(tmp_path):
    path = _speed_cfg(tmp_path)
    assert main(["run", path, "--out", str(tmp_path / "o"), "--gate"]) == 0
    rep = json.loads((tmp_path / "o" / "speed.json").read_text())
    assert rep["metrics"]["v_P"] == pytest.approx(1 / 3, abs=1e-15)
    assert abs(rep["metrics"]["mc_speed"] - 1 / 3) < 0.01
    assert rep["config_hash"] == config_hash(rep["config"])


def test_run_gate_failure_exit(tmp_path):
    path = _speed_cfg(tmp_path, tol=1e-9)
    out = str(tmp_path / "o")
    assert main(["run", path, "--out", out]) == 0
    assert main(["run", path, "--out", out, "--gate"]) == 1


def test_run_is_deterministic(tmp_path):
    path = _speed_cfg(tmp_path)
    for d in ("a", "b"):
        assert main(["run", path, "--out", str(tmp_path / d)]) == 0
    ra = json.loads((tmp_path / "a" / "speed.json").read_text())
    rb = json.loads((tmp_path / "b" / "speed.json").read_text())
    assert strip_volatile(ra) == strip_volatile(rb)
    for f in ra["artifacts"]:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_unknown_kind_is_usage_error(tmp_path, capsys):
    path = _write(tmp_path / "c.json", {"experiment": "teleport", "distribution": BETA})
    assert main(["run", path, "--out", str(tmp_path)]) == 2
    assert "experiment" in capsys.readouterr().err


@pytest.mark.parametrize("params, field", [
    ({"paths": 0}, "params.paths"),
    ({"bogus": 1}, "params"),
])
def test_bad_params_name_field(tmp_path, capsys, params, field):
    path = _write(tmp_path / "c.json", {"experiment": "speed", "distribution": BETA, "params": params})
    assert main(["run", path, "--out", str(tmp_path)]) == 2
    assert field in capsys.readouterr().err


def test_workers_env_fallback(tmp_path, monkeypatch):
    path = _speed_cfg(tmp_path)
    monkeypatch.setenv("RWRE_WORKERS", "2")
    assert main(["run", path, "--out", str(tmp_path / "w2")]) == 0
    monkeypatch.delenv("RWRE_WORKERS")
    assert main(["run", path, "--out", str(tmp_path / "w1"), "--workers", "1"]) == 0
    a = (tmp_path / "w2" / "speed_samples.csv").read_bytes()
    assert a == (tmp_path / "w1" / "speed_samples.csv").read_bytes()
    monkeypatch.setenv("RWRE_WORKERS", "many")
    assert main(["run", path, "--out", str(tmp_path / "w3")]) == 2


def test_seed_override(tmp_path):
    path = _speed_cfg(tmp_path)
    main(["run", path, "--out", str(tmp_path / "a"), "--seed", "11"])
    rep = json.loads((tmp_path / "a" / "speed.json").read_text())
    assert rep["seed"] == 11 and rep["config"]["seed"] == 11


# ---------------------------------------------------------------------------
# subcommands


def test_env_gen_outputs(tmp_path):
    dist = _write(tmp_path / "two_point.json", TWO_POINT)
    out = tmp_path / "g"
    assert main(["env-gen", "--dist", dist, "--blocks", "100", "--seed", "7", "--out", str(out)]) == 0
    env, meta = read_environment(out / "env.bin")
    assert meta["n_blocks"] == 100 and meta["seed"] == 7
    rows, comments = read_csv(out / "ladders.csv")
    assert len(rows) == 100 and "config_hash" in comments
    assert int(rows[-1]["stop"]) == len(env)


def test_moments_csv(tmp_path):
    dist = _write(tmp_path / "d.json", BETA)
    out = str(tmp_path)
    main(["env-gen", "--dist", dist, "--blocks", "80", "--seed", "1", "--out", out])
    assert main(["moments", "--env", str(tmp_path / "env.bin"), "--scale", "64", "--out", out]) == 0
    rows, comments = read_csv(tmp_path / "moments_64.csv")
    assert comments["scale"] == "64"
    b = int(np.floor(np.log(64) ** 2))
    assert int(rows[0]["block_index"]) == b + 1 and int(rows[-1]["block_index"]) == 80
    assert all(float(r["sigma2"]) >= 0 for r in rows)


def test_pipeline_matches_direct_scan(tmp_path):
    dist = _write(tmp_path / "d.json", BETA)
    cfg = _write(tmp_path / "scan.json", {"experiment": "scan", "distribution": BETA, "seed": 5,
                                          "params": {"ladder": [32, 1056]}})
    direct = tmp_path / "direct"
    piped = tmp_path / "piped"
    assert main(["run", cfg, "--out", str(direct)]) == 0
    # context = b_1024 - 32 = 16 blocks, so 1072 in total
    assert main(["env-gen", "--dist", dist, "--blocks", "1072", "--seed", "5", "--out", str(piped)]) == 0
    assert main(["moments", "--env", str(piped / "env.bin"), "--scale", "1024", "--out", str(piped)]) == 0
    assert main(["scan", "--moments", str(piped / "moments_1024.csv"), "--ladder", "32,1056",
                 "--out", str(piped)]) == 0
    assert (direct / "scan_events.csv").read_bytes() == (piped / "scan_events.csv").read_bytes()
    shutil.move(piped / "scan_events.csv", piped / "from_moments.csv")
    assert main(["scan", "--env", str(piped / "env.bin"), "--ladder", "32,1056", "--out", str(piped)]) == 0
    assert (direct / "scan_events.csv").read_bytes() == (piped / "scan_events.csv").read_bytes()


def test_simulate_samples(tmp_path):
    env = Environment(0, np.ones(10))
    write_environment(tmp_path / "e.bin", env, {"n_blocks": None})
    assert main(["simulate", "--env", str(tmp_path / "e.bin"), "--to", "6", "--paths", "5",
                 "--out", str(tmp_path)]) == 0
    rows, _ = read_csv(tmp_path / "samples.csv")
    assert [int(r["value"]) for r in rows] == [6] * 5
    assert main(["simulate", "--env", str(tmp_path / "e.bin"), "--out", str(tmp_path)]) == 2


def test_simulate_by_block_index(tmp_path):
    dist = _write(tmp_path / "d.json", BETA)
    out = str(tmp_path)
    main(["env-gen", "--dist", dist, "--blocks", "60", "--seed", "2", "--out", out])
    assert main(["simulate", "--env", str(tmp_path / "env.bin"), "--scale", "32", "--from-block", "12",
                 "--to-block", "20", "--paths", "50", "--out", out]) == 0
    rows, _ = read_csv(tmp_path / "samples.csv")
    assert len(rows) == 50 and all(int(r["value"]) > 0 for r in rows)
    assert main(["simulate", "--env", str(tmp_path / "env.bin"), "--to-block", "61", "--out", out]) == 2
    assert main(["simulate", "--env", str(tmp_path / "missing.bin"), "--to", "3", "--out", out]) == 2


def test_limits_values_and_ks(tmp_path, capsys):
    assert main(["limits", "--law", "normal", "--x", "0"]) == 0
    assert "0.0,0.5" in capsys.readouterr().out
    assert main(["limits", "--law", "stable"]) == 2
    capsys.readouterr()
    x = np.random.default_rng(0).exponential(size=2000)
    write_csv(tmp_path / "s.csv", ("path_id", "kind", "value", "censored"),
              [{"path_id": i, "kind": "T", "value": v, "censored": 0} for i, v in enumerate(x)])
    assert main(["limits", "--law", "exp", "--samples", str(tmp_path / "s.csv")]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["ks"] < res["critical_1pct"]


def test_report_summary(tmp_path):
    path = _speed_cfg(tmp_path)
    main(["run", path, "--out", str(tmp_path / "a")])
    assert main(["report", str(tmp_path / "a" / "speed.json"), "--out", str(tmp_path)]) == 0
    rows, _ = read_csv(tmp_path / "summary.csv")
    assert rows[0]["experiment"] == "speed" and rows[0]["passed"] == "1"


def test_console_script(tmp_path):
    exe = shutil.which("rwre-lab")
    if exe is None:
        pytest.skip("console script not installed")
    out = subprocess.run([exe, "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "rwre-lab" in out.stdout
