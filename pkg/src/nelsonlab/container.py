"""On-disk formats: a self-describing binary array container, CSV and JSON.

Result bodies are deterministic; timestamps live in a ``.meta.json`` sidecar so
reruns with the same configuration produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import platform
import struct
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__

MAGIC = b"NLAB1\n"


class HashMismatch(ValueError):
    """Artifacts from different configurations were combined."""


def versions() -> dict:
    return {"nelsonlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, float) and not np.isfinite(x):
        return repr(x)
    return x


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_sidecar(path: Path, config_hash: str, extra: dict | None = None) -> None:
    meta = {"config_hash": config_hash, "written": datetime.now(timezone.utc).isoformat(), **versions()}
    meta.update(extra or {})
    Path(str(path) + ".meta.json").write_text(dumps(meta))


def write_container(path, arrays: dict, meta: dict) -> None:
    """``MAGIC | u64 header length | JSON header | raw little-endian C-order arrays``."""
    path = Path(path)
    entries, blobs, offset = [], [], 0
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name])
        a = a.astype(a.dtype.newbyteorder("<"), copy=False)
        raw = a.tobytes(order="C")
        entries.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape), "offset": offset,
                        "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps(_jsonable({"arrays": entries, "meta": meta}), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)


def read_container(path):
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not an NLAB1 container")
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n))
        body = fh.read()
    arrays = {}
    for e in header["arrays"]:
        buf = body[e["offset"]: e["offset"] + e["nbytes"]]
        arrays[e["name"]] = np.frombuffer(buf, dtype=np.dtype(e["dtype"])).reshape(e["shape"]).copy()
    return arrays, header["meta"]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(rows, columns=None, header: dict | None = None) -> str:
    rows = list(rows)
    columns = columns or (list(rows[0]) if rows else [])
    buf = io.StringIO()
    for k in sorted(header or {}):
        buf.write(f"# {k}={header[k]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def write_csv(path, rows, config_hash: str, columns=None, extra_header: dict | None = None) -> None:
    header = {"config_hash": config_hash, **versions(), **(extra_header or {})}
    Path(path).write_text(csv_text(rows, columns, header))


def read_csv(path):
    """Rows as dicts of strings plus the ``# key=value`` header."""
    header, lines = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            k, _, v = line[2:].partition("=")
            header[k] = v
        else:
            lines.append(line)
    rows = list(csv.DictReader(lines))
    return rows, header


def artifact_hash(path) -> str:
    path = Path(path)
    if path.suffix == ".csv":
        return read_csv(path)[1]["config_hash"]
    if path.suffix == ".json":
        return json.loads(path.read_text())["config_hash"]
    return read_container(path)[1]["config_hash"]


def require_same_hash(paths) -> str:
    """Refuse to combine artifacts produced by different configurations."""
    hashes = {artifact_hash(p) for p in paths}
    if len(hashes) != 1:
        raise HashMismatch(f"artifacts carry different config hashes: {sorted(hashes)}")
    return hashes.pop()
