"""CSV series, snapshots and checkpoints."""
from __future__ import annotations

import csv
import math

import numpy as np

from .dynamics import SimState
from .grid import RadialGrid

SERIES_SCHEMA = "chemolab-series/1"
SNAPSHOT_SCHEMA = "chemolab-snapshot/1"
BRANCH_SCHEMA = "chemolab-branch/1"
SUMMARY_SCHEMA = "chemolab-summary/1"
CHECKPOINT_SCHEMA = "chemolab-checkpoint/1"


class SchemaError(ValueError):
    pass


def fmt(x) -> str:
    """17 significant digits, enough to round-trip a double."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


class CsvTable:
    """Writer for ``# schema`` / ``# key=value`` comment lines then a header row."""

    def __init__(self, path, columns, schema, meta=None):
        self.path = path
        self.columns = list(columns)
        self._fh = open(path, "w", newline="")
        self._fh.write(f"# {schema}\n")
        for key, value in (meta or {}).items():
            self._fh.write(f"# {key}={value}\n")
        self._fh.write(",".join(self.columns) + "\n")

    def write_row(self, row):
        self._fh.write(",".join(fmt(row.get(c, "")) for c in self.columns) + "\n")

    def flush(self):
        if not self._fh.closed:
            self._fh.flush()

    def close(self):
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_table(path):
    """Return ``(meta, columns, rows)``; numeric cells become floats."""
    meta = {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            text = line[1:].strip()
            if "=" in text:
                k, v = text.split("=", 1)
                meta[k.strip()] = v.strip()
            else:
                meta.setdefault("schema", text)
        elif line.strip():
            body.append(line)
    if not body:
        raise SchemaError(f"{path}: no header row")
    reader = csv.reader(body)
    columns = next(reader)
    rows = []
    for rec in reader:
        if len(rec) != len(columns):
            raise SchemaError(f"{path}: row has {len(rec)} cells, header has {len(columns)}")
        row = {}
        for c, cell in zip(columns, rec):
            try:
                row[c] = float(cell)
            except ValueError:
                row[c] = cell
        rows.append(row)
    return meta, columns, rows


def write_snapshot(path, grid: RadialGrid, u, v, t, meta=None):
    info = {"t": fmt(t), **grid.descriptor(), **(meta or {})}
    with CsvTable(path, ("xi", "u", "v"), SNAPSHOT_SCHEMA, info) as out:
        for x, a, b in zip(grid.cell_centers, u, v):
            out.write_row({"xi": x, "u": a, "v": b})


def save_checkpoint(path, grid: RadialGrid, state: SimState, config_hash: str, extra=None):
    """Write an ``.npz`` checkpoint; arrays are stored bit-exactly."""
    extra = extra or {}
    payload = {
        "schema": np.array(CHECKPOINT_SCHEMA),
        "geometry": np.array(grid.geometry),
        "extent": np.array(grid.extent),
        "n_cells": np.array(grid.n_cells),
        "u": state.u,
        "v": state.v,
        "t": np.array(state.t),
        "step": np.array(state.step),
        "dt_last": np.array(state.dt_last),
        "dt_next": np.array(state.dt_next),
        "status": np.array(state.status),
        "config_hash": np.array(config_hash),
    }
    for k, val in extra.items():
        if val is not None:
            payload["extra_" + k] = np.asarray(val)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path):
    """Return ``(grid_descriptor, state, config_hash, extra)``."""
    with np.load(path, allow_pickle=False) as z:
        if str(z["schema"]) != CHECKPOINT_SCHEMA:
            raise SchemaError(f"{path}: not a checkpoint ({z['schema']})")
        desc = {"geometry": str(z["geometry"]), "extent": float(z["extent"]),
                "n_cells": int(z["n_cells"])}
        state = SimState(u=z["u"].copy(), v=z["v"].copy(), t=float(z["t"]), step=int(z["step"]),
                         dt_last=float(z["dt_last"]), status=str(z["status"]),
                         dt_next=float(z["dt_next"]))
        extra = {k[6:]: z[k].copy() for k in z.files if k.startswith("extra_")}
        return desc, state, str(z["config_hash"]), extra
