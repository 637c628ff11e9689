"""Binary value-function dumps and run-length-encoded reachable masks.

Each dump is a data file plus a ``.json`` sidecar with the metadata needed to
read it back.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .solver import DiskRegion, Grid, StationSet, ValueFunction

__all__ = ["write_value_function", "read_value_function", "rle_encode", "rle_decode",
           "write_reachable", "read_reachable"]


def write_value_function(vf: ValueFunction, path) -> tuple[Path, Path]:
    """Write ``path`` (little-endian float64, x1 fastest) and ``path.json``."""
    path = Path(path)
    data = np.asarray(vf.values, dtype="<f8")
    path.write_bytes(data.tobytes(order="F"))
    side = path.with_name(path.name + ".json")
    side.write_text(json.dumps(vf.metadata(), indent=2, sort_keys=True) + "\n")
    return path, side


def read_value_function(path) -> ValueFunction:
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    g = meta["grid"]
    grid = Grid(tuple(g["shape"]), tuple(g["lower"]), tuple(g["upper"]))
    values = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(grid.shape, order="F").copy()
    tgt = meta["target"]
    if tgt["kind"] == "disk":
        target = DiskRegion(tuple(tgt["center"]), tgt["radius"])
    else:
        hs = tgt.get("headings")
        target = StationSet(tuple(tgt["center"]), tgt["radius"], None if hs is None else tuple(hs))
    return ValueFunction(values, grid, target, meta["speed"], meta["turn_radius"], meta["direction"],
                         rounds=meta["rounds"], residual=meta["residual"], converged=meta["converged"])


def rle_encode(mask) -> list[int]:
    """Run lengths of a flattened (C-order) boolean array, starting with a
    run of ``False`` (possibly empty)."""
    flat = np.asarray(mask, dtype=bool).ravel()
    if flat.size == 0:
        return []
    edges = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate([[0], edges, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def rle_decode(runs, shape) -> np.ndarray:
    vals = np.arange(len(runs)) % 2 == 1
    flat = np.repeat(vals, runs)
    return flat.reshape(shape)


def write_reachable(rs, path) -> Path:
    """JSON document with one run-length list per time slice."""
    path = Path(path)
    doc = {
        "station_id": rs.station_id,
        "angle_filter": rs.angle_filter,
        "available_from": rs.available_from,
        "times": [float(t) for t in rs.times],
        "x1": [float(v) for v in rs.x1],
        "x2": [float(v) for v in rs.x2],
        "slice_shape": list(rs.mask.shape[1:]),
        "order": "C (x1 major, x2 minor); runs alternate false/true starting with false",
        "runs": [rle_encode(m) for m in rs.mask],
    }
    path.write_text(json.dumps(doc) + "\n")
    return path


def read_reachable(path) -> tuple[np.ndarray, dict]:
    doc = json.loads(Path(path).read_text())
    shape = tuple(doc["slice_shape"])
    mask = np.stack([rle_decode(r, shape) for r in doc["runs"]])
    return mask, doc
