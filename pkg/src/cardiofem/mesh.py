"""Structured triangulations of square domains."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Mesh:
    """P1 triangulation of ``[a, b]^2`` with ``n`` cells per axis.

    Nodes are numbered row-major: node ``j*(n+1) + i`` sits at
    ``(a + i*h, a + j*h)``.  Triangles are counterclockwise.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    bounds: tuple[float, float]
    n: int
    boundary_nodes: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def spacing(self) -> float:
        a, b = self.bounds
        return (b - a) / self.n

    @property
    def area(self) -> float:
        return float(self.signed_areas().sum())

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def build_structured_mesh(a: float, b: float, n: int) -> Mesh:
    """Triangulate ``[a, b]^2`` with every cell cut bottom-left to top-right."""
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValueError(f"subdivisions must be a positive integer, got {n!r}")
    if not a < b:
        raise ValueError(f"domain bounds must satisfy a < b, got a={a}, b={b}")
    n = int(n)
    a = float(a)
    b = float(b)

    # linspace pins the endpoints exactly, so corners are bit-exact.
    ticks = np.linspace(a, b, n + 1)
    xx, yy = np.meshgrid(ticks, ticks)
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    p0 = (j * (n + 1) + i).ravel()
    p1 = p0 + 1
    p2 = p0 + n + 2
    p3 = p0 + n + 1
    lower = np.column_stack([p0, p1, p2])
    upper = np.column_stack([p0, p2, p3])
    # interleave so the two halves of a cell are adjacent
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    boundary = np.unique(np.concatenate([idx[0], idx[-1], idx[:, 0], idx[:, -1]]))

    for arr in (nodes, triangles, boundary):
        arr.setflags(write=False)
    return Mesh(nodes=nodes, triangles=triangles, bounds=(a, b), n=n,
                boundary_nodes=boundary)


def mesh_from_arrays(nodes, triangles) -> Mesh:
    """Wrap an arbitrary triangle list, e.g. a single reference element.

    ``bounds`` becomes the bounding box extent of the x coordinates and
    ``n`` is 1; boundary tagging is left empty.
    """
    nodes = np.array(nodes, dtype=float)
    triangles = np.array(triangles, dtype=np.int64)
    if triangles.min() < 0 or triangles.max() >= len(nodes):
        raise ValueError("triangle references a node index out of range")
    for arr in (nodes, triangles):
        arr.setflags(write=False)
    mesh = Mesh(nodes=nodes, triangles=triangles,
                bounds=(float(nodes.min()), float(nodes.max())), n=1,
                boundary_nodes=np.empty(0, dtype=np.int64))
    if np.any(mesh.signed_areas() <= 0):
        raise ValueError("triangles must be counterclockwise with positive area")
    return mesh


def element_geometry(mesh: Mesh, e: int) -> tuple[float, np.ndarray]:
    """Area and the three constant P1 basis gradients (rows) of triangle ``e``."""
    if not 0 <= e < mesh.n_triangles:
        raise IndexError(f"element index {e} out of range [0, {mesh.n_triangles})")
    area, grads = triangle_geometry(mesh.nodes[mesh.triangles[e]])
    return float(area), grads


def triangle_geometry(coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised areas and basis gradients.

    ``coords`` has shape ``(..., 3, 2)``; returns areas of shape ``(...)`` and
    gradients of shape ``(..., 3, 2)``.
    """
    coords = np.asarray(coords, dtype=float)
    x = coords[..., 0]
    y = coords[..., 1]
    det = (x[..., 1] - x[..., 0]) * (y[..., 2] - y[..., 0]) \
        - (x[..., 2] - x[..., 0]) * (y[..., 1] - y[..., 0])
    grads = np.empty(coords.shape)
    for r in range(3):
        s, t = (r + 1) % 3, (r + 2) % 3
        grads[..., r, 0] = (y[..., s] - y[..., t]) / det
        grads[..., r, 1] = (x[..., t] - x[..., s]) / det
    return 0.5 * det, grads


def locate_node(mesh: Mesh, p, tol: float | None = None) -> int:
    """Index of the node nearest to ``p``.

    ``tol`` defaults to half a cell diagonal, which always succeeds for
    points inside the domain.
    """
    p = np.asarray(p, dtype=float)
    a, b = mesh.bounds
    slack = 1e-12 * (b - a)
    if p.shape != (2,) or np.any(p < a - slack) or np.any(p > b + slack):
        raise ValueError(f"point {tuple(p)} lies outside the domain [{a}, {b}]^2")
    if tol is None:
        tol = 0.5 * np.sqrt(2.0) * mesh.spacing * (1 + 1e-12)
    dist = np.hypot(mesh.nodes[:, 0] - p[0], mesh.nodes[:, 1] - p[1])
    k = int(np.argmin(dist))
    if dist[k] > tol:
        raise ValueError(
            f"no node within {tol:g} of {tuple(p)} (nearest is {dist[k]:g} away)")
    return k
