"""Probe CSV and legacy VTK output."""
from __future__ import annotations

import datetime as _dt
from pathlib import Path

import numpy as np

from .mesh import Mesh

VTK_TRIANGLE = 5


def timestamp_line() -> str:
    now = _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0)
    return f"generated {now.isoformat()}"


def write_probe_csv(path, times, values, timestamp: bool = False) -> None:
    """``time,v_p1,...,v_pk`` with one row per step, exact round trip."""
    values = np.asarray(values, dtype=float)
    header = ["time"] + [f"v_p{k + 1}" for k in range(values.shape[1])]
    lines = []
    if timestamp:
        lines.append("# " + timestamp_line())
    lines.append(",".join(header))
    for t, row in zip(times, values):
        lines.append(",".join(f"{x:.17e}" for x in (t, *row)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_probe_csv(path):
    """Returns ``(header, times, values)``; ``#`` lines are skipped."""
    rows = [ln for ln in Path(path).read_text().splitlines()
            if ln and not ln.startswith("#")]
    header = rows[0].split(",")
    data = np.array([[float(x) for x in ln.split(",")] for ln in rows[1:]])
    data = data.reshape(-1, len(header))
    return header, data[:, 0], data[:, 1:]


def write_vtk(path, mesh: Mesh, point_data: dict | None = None,
              title: str = "cardiofem") -> None:
    """Legacy ASCII unstructured grid of triangles with scalar point data."""
    out = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
           "DATASET UNSTRUCTURED_GRID", f"POINTS {mesh.n_nodes} double"]
    out += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.nodes]
    ne = mesh.n_triangles
    out.append(f"CELLS {ne} {4 * ne}")
    out += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    out.append(f"CELL_TYPES {ne}")
    out += [str(VTK_TRIANGLE)] * ne
    if point_data:
        out.append(f"POINT_DATA {mesh.n_nodes}")
        for name, arr in point_data.items():
            arr = np.asarray(arr, dtype=float)
            if arr.shape != (mesh.n_nodes,):
                raise ValueError(f"point array {name!r} has shape {arr.shape}")
            out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            out += [f"{x:.17g}" for x in arr]
    Path(path).write_text("\n".join(out) + "\n")


def read_vtk_point_data(path) -> dict[str, np.ndarray]:
    """Scalar point arrays from a file written by :func:`write_vtk`."""
    lines = Path(path).read_text().splitlines()
    arrays = {}
    n = None
    k = 0
    while k < len(lines):
        parts = lines[k].split()
        if parts and parts[0] == "POINT_DATA":
            n = int(parts[1])
        elif parts and parts[0] == "SCALARS":
            start = k + 2
            arrays[parts[1]] = np.array([float(x) for x in lines[start:start + n]])
            k = start + n
            continue
        k += 1
    return arrays
