"""Plain CSV export of nodal fields, result tables and particle snapshots."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .mesh import CartesianGrid

FLOAT_FMT = ".17g"

TABLE_COLUMNS = {
    "table1": ("N", "rho_bar_std", "err_std", "rho_bar_imp", "err_imp"),
    "table2": ("N", "err_traditional", "err_improved"),
    "table3": ("mesh", "h", "err_traditional", "err_improved"),
}


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if math.isnan(v):
            return ""
        return format(float(v), FLOAT_FMT)
    return str(v)


def _write_rows(path, header, rows):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def export_nodal_field(values, grid: CartesianGrid, path) -> Path:
    """Write ``x,y,value`` rows, j outer and i inner, 17 significant digits."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size != grid.n_nodes:
        raise ValueError(f"expected {grid.n_nodes} nodal values, got {values.size}")
    xy = grid.node_coordinates()
    return _write_rows(path, ("x", "y", "value"), zip(xy[:, 0], xy[:, 1], values))


def read_nodal_field(path):
    """Inverse of :func:`export_nodal_field`; returns ``(xy, values)``."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, :2], data[:, 2]


def export_table(rows, path, columns=None) -> Path:
    """Write a list of row dicts as CSV.

    Columns default to the keys of the first row.  An empty row set with no
    explicit ``columns`` gives an empty header line.
    """
    rows = list(rows)
    if columns is None:
        columns = tuple(rows[0].keys()) if rows else ()
    return _write_rows(path, columns, ([r.get(c, "") for c in columns] for r in rows))


def read_table(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def export_particles(particles, path) -> Path:
    """Snapshot of active particles as ``x,y,vx,vy,q``."""
    act = particles.active
    p, v, q = particles.positions[act], particles.velocities[act], particles.charges[act]
    return _write_rows(path, ("x", "y", "vx", "vy", "q"),
                       zip(p[:, 0], p[:, 1], v[:, 0], v[:, 1], q))
