"""CSV and JSON output with checksummed manifests."""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .subdiffusion_mc import ParticleEnsemble


def jsonable(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_field_csv(path, times: np.ndarray, values: np.ndarray) -> Path:
    """One row per time: ``t, x_0, x_1, ...`` (spatial axes flattened in C order)."""
    path = Path(path)
    flat = np.asarray(values, dtype=float).reshape(len(times), -1)
    header = ",".join(["t"] + [f"x_{j}" for j in range(flat.shape[1])])
    table = np.column_stack([np.asarray(times, dtype=float), flat])
    np.savetxt(path, table, fmt="%.17g", delimiter=",", header=header, comments="")
    return path


def read_field_csv(path) -> tuple[np.ndarray, np.ndarray]:
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return table[:, 0], table[:, 1:]


def write_ensemble_csv(path, ensemble: ParticleEnsemble) -> Path:
    """Columns ``particle, time_index, x_0[, x_1]`` for every recorded node."""
    path = Path(path)
    n_rec, n_p, d = ensemble.positions.shape
    pid = np.tile(np.arange(n_p), n_rec)
    tix = np.repeat(ensemble.recorded, n_p)
    coords = ensemble.positions.reshape(-1, d)
    header = ",".join(["particle", "time_index"] + [f"x_{a}" for a in range(d)])
    table = np.column_stack([pid, tix, coords])
    np.savetxt(path, table, fmt=["%d", "%d"] + ["%.17g"] * d, delimiter=",", header=header, comments="")
    return path


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def file_inventory(paths) -> list[dict]:
    return [
        {"name": Path(p).name, "bytes": Path(p).stat().st_size, "sha256": sha256_file(p)}
        for p in sorted(paths, key=lambda q: Path(q).name)
    ]
