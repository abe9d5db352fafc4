"""CSV files for designs and reports, with JSON metadata sidecars.

Every CSV starts with one comment line naming its schema and version, the
hash of the configuration that produced it and the seed::

    # valdesign-design v1 config=3f2a... seed=7

Loaders reject unknown schema versions. Numbers are written with 17
significant digits so that files round-trip exactly.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
FLOAT_FMT = "{:.17g}"


class SchemaError(ValueError):
    """A file does not carry a schema line this version can read."""


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT.format(float(v))
    return str(v)


def _header_line(schema, config, seed):
    return f"# valdesign-{schema} v{SCHEMA_VERSION} config={config_hash(config)} seed={seed}\n"


def write_table(path, schema, columns, rows, config, seed=None):
    """Write ``rows`` (sequences matching ``columns``) as a schema-tagged CSV."""
    path = Path(path)
    with path.open("w", newline="\n") as fh:
        fh.write(_header_line(schema, config, seed))
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def _parse_schema_line(line, schema):
    parts = line[1:].split()
    if not parts or parts[0] != f"valdesign-{schema}":
        raise SchemaError(f"expected a valdesign-{schema} file, got {line.strip()!r}")
    if len(parts) < 2 or parts[1] != f"v{SCHEMA_VERSION}":
        raise SchemaError(f"unsupported {schema} schema version {parts[1:2]}")
    meta = dict(p.split("=", 1) for p in parts[2:] if "=" in p)
    return meta


def read_table(path, schema):
    """Return ``(columns, rows, meta)``; rows are lists of strings."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise SchemaError(f"{path}: missing schema line")
    meta = _parse_schema_line(lines[0], schema)
    columns = lines[1].split(",")
    rows = [ln.split(",") for ln in lines[2:] if ln]
    return columns, rows, meta


def write_design(path, points, weights=None, config=None, seed=None, meta=None):
    """Design CSV with header ``x1,...,xd[,w]`` and a JSON sidecar."""
    points = np.asarray(points, dtype=float)
    d = points.shape[1] if points.ndim == 2 else int(config.get("d", 1))
    cols = [f"x{i + 1}" for i in range(d)]
    rows = [list(p) for p in points.reshape(-1, d)]
    if weights is not None:
        cols.append("w")
        rows = [r + [w] for r, w in zip(rows, np.asarray(weights, float))]
    config = config or {}
    write_table(path, "design", cols, rows, config, seed)
    write_sidecar(path, config, seed, meta)
    return Path(path)


def read_design(path):
    """Return ``(points, weights_or_None, meta)``."""
    cols, rows, meta = read_table(path, "design")
    has_w = cols[-1] == "w"
    d = len(cols) - has_w
    if not all(c == f"x{i + 1}" for i, c in enumerate(cols[:d])):
        raise SchemaError(f"{path}: bad design header {cols}")
    data = np.array(rows, dtype=float).reshape(-1, len(cols))
    pts = data[:, :d]
    return pts, (data[:, d] if has_w else None), meta


def write_sidecar(path, config, seed=None, meta=None):
    side = {"schema_version": SCHEMA_VERSION, "config": config,
            "config_hash": config_hash(config), "seed": seed}
    if meta:
        side.update(meta)
    out = Path(str(path) + ".json")
    out.write_text(json.dumps(_jsonable(side), sort_keys=True, indent=2) + "\n")
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj
