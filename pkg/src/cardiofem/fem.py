"""Conductivity tensors, P1 assembly and a deflated conjugate-gradient solver."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
import scipy.io
import scipy.sparse as sp

from .mesh import Mesh, triangle_geometry

FiberAngle = Union[float, Callable[[float, float], float]]

_P1_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


class ConvergenceError(RuntimeError):
    """Raised when the iterative solver misses its tolerance."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class ConductivityField:
    """Axially symmetric conductivity with fibres at ``fiber_angle``.

    ``fiber_angle`` is either a constant (radians) or ``f(x, y) -> angle``.
    ``lambda_ratio`` relates the two media, D_e = lambda * D_i.
    """

    sigma_l: float
    sigma_t: float
    fiber_angle: FiberAngle = 0.0
    lambda_ratio: float = 1.0

    def __post_init__(self):
        if not (self.sigma_l > 0 and self.sigma_t > 0):
            raise ValueError(
                f"conductivities must be positive, got sigma_l={self.sigma_l}, "
                f"sigma_t={self.sigma_t}")
        if not self.lambda_ratio > 0:
            raise ValueError("lambda_ratio must be positive")

    def angle_at(self, x) -> float:
        if callable(self.fiber_angle):
            return float(self.fiber_angle(float(x[0]), float(x[1])))
        return float(self.fiber_angle)

    def scaled(self, factor: float) -> "ConductivityField":
        return ConductivityField(self.sigma_l * factor, self.sigma_t * factor,
                                 self.fiber_angle, self.lambda_ratio)

    def extracellular(self) -> "ConductivityField":
        return self.scaled(self.lambda_ratio)

    def monodomain(self) -> "ConductivityField":
        """Effective field lambda/(1+lambda) * D_i of the reduced model."""
        lam = self.lambda_ratio
        return self.scaled(lam / (1.0 + lam))

    @property
    def ellipticity(self) -> float:
        return min(self.sigma_l, self.sigma_t)


def tensor_at(field: ConductivityField, x) -> np.ndarray:
    theta = field.angle_at(x)
    a_l = np.array([np.cos(theta), np.sin(theta)])
    a_t = np.array([-np.sin(theta), np.cos(theta)])
    return field.sigma_l * np.outer(a_l, a_l) + field.sigma_t * np.outer(a_t, a_t)


def _finalize(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.n_nodes
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    mat.eliminate_zeros()
    mat.sort_indices()
    return mat


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    """Consistent P1 mass matrix."""
    areas = np.abs(mesh.signed_areas())
    return _finalize(mesh, areas[:, None, None] * _P1_MASS)


def assemble_stiffness(mesh: Mesh, field: ConductivityField) -> sp.csr_matrix:
    """P1 stiffness with D evaluated once per element at the centroid."""
    if not isinstance(field, ConductivityField):
        raise TypeError("field must be a ConductivityField")
    coords = mesh.nodes[mesh.triangles]
    areas, grads = triangle_geometry(coords)
    if callable(field.fiber_angle):
        centroids = coords.mean(axis=1)
        tensors = np.array([tensor_at(field, c) for c in centroids])
    else:
        tensors = np.broadcast_to(tensor_at(field, (0.0, 0.0)),
                                  (mesh.n_triangles, 2, 2))
    local = np.einsum("eri,eij,esj->ers", grads, tensors, grads)
    # exact symmetry regardless of summation order inside einsum
    local = 0.5 * (local + local.transpose(0, 2, 1))
    return _finalize(mesh, areas[:, None, None] * local)


def zero_stiffness(mesh: Mesh) -> sp.csr_matrix:
    return sp.csr_matrix((mesh.n_nodes, mesh.n_nodes))


def lumped_mass(M: sp.spmatrix) -> np.ndarray:
    return np.asarray(M.sum(axis=1)).ravel()


def apply_mass(M: sp.spmatrix, values: np.ndarray, lumped: bool = False) -> np.ndarray:
    """``M @ values``, or its row-sum-lumped approximation."""
    if lumped:
        return lumped_mass(M) * values
    return M @ values


def solve_spd(A, b, tol: float = 1e-10, max_iter: int | None = None,
              deflate: bool = False, x0=None) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradients.

    With ``deflate=True`` the matrix may be singular with the constant
    vector as its null space; ``b`` must then have zero sum and the
    returned solution has zero mean.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"shape mismatch: A is {A.shape}, b has length {n}")
    if max_iter is None:
        max_iter = 10 * n
    diag = np.asarray(A.diagonal(), dtype=float)
    if np.any(diag <= 0):
        raise ValueError("matrix diagonal must be positive")
    inv_diag = 1.0 / diag

    if deflate:
        scale = np.sum(np.abs(b))
        if abs(b.sum()) > 1e-10 * scale + 1e-300:
            raise ValueError(
                f"right-hand side is incompatible with the constant null space "
                f"(sum = {b.sum():.3e})")
        b = b - b.mean()

    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if deflate:
        x -= x.mean()
    r = b - A @ x
    if deflate:
        r -= r.mean()
    z = inv_diag * r
    if deflate:
        z -= z.mean()
    p = z.copy()
    rz = r @ z
    res = np.linalg.norm(r) / bnorm
    it = 0
    while res > tol:
        if it >= max_iter:
            raise ConvergenceError(
                f"CG did not converge in {max_iter} iterations "
                f"(relative residual {res:.3e})", res)
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise ConvergenceError(
                f"matrix is not positive definite on the search space "
                f"(p'Ap = {pAp:.3e})", res)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if deflate:
            r -= r.mean()
        z = inv_diag * r
        if deflate:
            z -= z.mean()
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
        res = np.linalg.norm(r) / bnorm
        it += 1
    if deflate:
        x -= x.mean()
    return x


def write_matrix_market(path, A, comment: str = "") -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment, symmetry="general")
