"""Persistence: binary field files, JSON sidecars, CSV series and run manifests.

Binary field layout (all little-endian):
    int64 d, float64 alpha, int64 m, float64 c,
    float64 L[0..d-1], int64 N[0..d-1],
    float64 samples in C order (N[0] * ... * N[d-1] values).
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .params import ModelParams
from .spectral import Field, make_grid

RUN_ROOT_ENV = "FKDV_RUN_ROOT"
FLOAT_FORMAT = "{:.17g}"


# -- binary fields -------------------------------------------------------------

def write_field(path, f: Field, p: ModelParams) -> Path:
    path = Path(path)
    g = f.grid
    with open(path, "wb") as fh:
        fh.write(np.array([g.d], dtype="<i8").tobytes())
        fh.write(np.array([p.alpha], dtype="<f8").tobytes())
        fh.write(np.array([p.m], dtype="<i8").tobytes())
        fh.write(np.array([p.c], dtype="<f8").tobytes())
        fh.write(np.asarray(g.L, dtype="<f8").tobytes())
        fh.write(np.asarray(g.N, dtype="<i8").tobytes())
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())
    return path


def read_field(path) -> tuple[Field, ModelParams]:
    raw = Path(path).read_bytes()
    pos = 0

    def take(dtype, count):
        nonlocal pos
        n = count * 8
        if pos + n > len(raw):
            raise ConfigurationError(f"truncated field file {path}")
        out = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
        pos += n
        return out

    d = int(take("<i8", 1)[0])
    if d not in (1, 2):
        raise ConfigurationError(f"bad dimension {d} in {path}")
    alpha = float(take("<f8", 1)[0])
    m = int(take("<i8", 1)[0])
    c = float(take("<f8", 1)[0])
    L = take("<f8", d).tolist()
    N = take("<i8", d).tolist()
    size = int(np.prod(N))
    vals = take("<f8", size).reshape(N)
    if pos != len(raw):
        raise ConfigurationError(f"trailing bytes in field file {path}")
    grid = make_grid(d, L, N)
    return Field(grid, vals.copy()), ModelParams(d, alpha, m, c)


# -- JSON and CSV --------------------------------------------------------------

def to_jsonable(obj):
    """Convert dataclasses, numpy values and Fields into JSON-ready structures."""
    if isinstance(obj, Field):
        return {"grid": {"d": obj.grid.d, "L": list(obj.grid.L), "N": list(obj.grid.N)}}
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return FLOAT_FORMAT.format(float(v))


def write_csv(path, columns: dict) -> Path:
    """Columns of equal length written with 17 significant digits."""
    path = Path(path)
    names = list(columns)
    lengths = {len(columns[k]) for k in names}
    if len(lengths) > 1:
        raise ConfigurationError(f"CSV columns have unequal lengths {sorted(lengths)}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*(columns[k] for k in names)):
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    names, body = rows[0], rows[1:]
    return {n: np.array([float(r[i]) if r[i] else math.nan for r in body]) for i, n in enumerate(names)}


# -- run directories and manifests ---------------------------------------------

def run_root(default="runs") -> Path:
    return Path(os.environ.get(RUN_ROOT_ENV, default))


def new_run_dir(name: str, root=None) -> Path:
    """Create a fresh run directory ``name-YYYYmmddTHHMMSS[-k]``; never reuses one."""
    root = Path(root) if root is not None else run_root()
    root.mkdir(parents=True, exist_ok=True)
    stamp = _dt.datetime.now().strftime("%Y%m%dT%H%M%S")
    base = root / f"{name}-{stamp}"
    path, k = base, 1
    while True:
        try:
            path.mkdir()
            return path
        except FileExistsError:
            path = Path(f"{base}-{k}")
            k += 1


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(run_dir, config: dict, files=None) -> Path:
    """manifest.json listing every file in the run directory with its checksum."""
    run_dir = Path(run_dir)
    if files is None:
        files = sorted(p for p in run_dir.rglob("*") if p.is_file() and p.name != "manifest.json")
    entries = [
        {"path": str(Path(p).relative_to(run_dir)), "sha256": sha256(p), "bytes": Path(p).stat().st_size}
        for p in files
    ]
    return write_json(run_dir / "manifest.json", {"config": config, "files": entries})
