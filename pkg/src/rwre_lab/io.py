"""Artifact formats: environment files, CSV tables and JSON reports.

Everything written here is a deterministic function of its inputs.  Floats go
through ``repr`` so they round-trip exactly, JSON keys are sorted, and the only
volatile data (wall-clock timings) lives under the ``"timing"`` key of a
report, which is excluded from hashing.
"""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
import struct
from pathlib import Path

import numpy as np

from .environment import Environment
from .errors import ConfigurationError

ENV_MAGIC = b"RWRE"
ENV_VERSION = 1
_HEADER = struct.Struct("<4sHqqI")  # magic, version, left_index, length, meta length

VOLATILE_KEYS = ("timing",)


# ---------------------------------------------------------------------------
# JSON


def sanitize(obj):
    """Recursively convert to plain JSON types; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def canonical_json(obj):
    return json.dumps(sanitize(obj), sort_keys=True, separators=(",", ":"))


def config_hash(obj):
    """SHA-256 of the canonical JSON form; insensitive to key order."""
    if isinstance(obj, dict):
        obj = {k: v for k, v in obj.items() if k not in VOLATILE_KEYS}
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def dumps_report(report):
    return json.dumps(sanitize(report), sort_keys=True, indent=2) + "\n"


def write_report(path, report):
    Path(path).write_text(dumps_report(report))


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None


def strip_volatile(report):
    return {k: v for k, v in report.items() if k not in VOLATILE_KEYS}


# ---------------------------------------------------------------------------
# environment files


def encode_environment(env, meta=None):
    meta_bytes = canonical_json(meta or {}).encode()
    head = _HEADER.pack(ENV_MAGIC, ENV_VERSION, env.left_index, len(env), len(meta_bytes))
    return head + meta_bytes + np.ascontiguousarray(env.omegas, dtype="<f8").tobytes()


def decode_environment(data):
    if len(data) < _HEADER.size:
        raise ConfigurationError("environment file truncated")
    magic, version, left, length, mlen = _HEADER.unpack_from(data)
    if magic != ENV_MAGIC:
        raise ConfigurationError("not an environment file (bad magic)")
    if version != ENV_VERSION:
        raise ConfigurationError(f"unsupported environment file version {version}")
    off = _HEADER.size
    meta = json.loads(data[off : off + mlen].decode())
    off += mlen
    if len(data) - off != 8 * length:
        raise ConfigurationError("environment file length does not match header")
    om = np.frombuffer(data, dtype="<f8", count=length, offset=off)
    return Environment(left, om.astype(np.float64)), meta


def write_environment(path, env, meta=None):
    Path(path).write_bytes(encode_environment(env, meta))


def read_environment(path):
    """Returns ``(env, meta)``."""
    return decode_environment(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# CSV


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(fields, rows, config_hash=None):
    """CSV with an optional leading ``# config_hash=...`` comment line."""
    buf = _io.StringIO()
    if config_hash is not None:
        buf.write(f"# config_hash={config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_cell(r[f]) for f in fields])
    return buf.getvalue()


def write_csv(path, fields, rows, config_hash=None):
    Path(path).write_text(csv_text(fields, rows, config_hash))


def read_csv(path):
    """``(rows, comments)``; rows are dicts of strings, comments map ``key=value`` lines."""
    lines = Path(path).read_text().splitlines()
    comments = {}
    body = []
    for ln in lines:
        if ln.startswith("#"):
            key, _, val = ln[1:].strip().partition("=")
            comments[key.strip()] = val.strip()
        else:
            body.append(ln)
    return list(csv.DictReader(body)), comments


LADDER_FIELDS = ("block_index", "start", "stop", "length", "M")
SAMPLE_FIELDS = ("path_id", "kind", "value", "censored")


def ladder_rows(ladders):
    M = ladders.block_max
    return [
        {"block_index": i, "start": int(ladders.nu[i - 1]), "stop": int(ladders.nu[i]),
         "length": int(ladders.nu[i] - ladders.nu[i - 1]), "M": float(M[i - 1])}
        for i in range(1, ladders.n_blocks + 1)
    ]


def sample_rows(values, kind, censored=None, path0=0):
    values = np.asarray(values)
    cens = np.zeros(values.size, bool) if censored is None else np.asarray(censored)
    conv = int if np.issubdtype(values.dtype, np.integer) else float
    return [
        {"path_id": path0 + p, "kind": kind, "value": conv(values[p]), "censored": bool(cens[p])}
        for p in range(values.size)
    ]
