import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from scipy.integrate import dblquad

from cardiofem.fem import (ConductivityField, ConvergenceError, apply_mass, assemble_mass,
                           assemble_stiffness, lumped_mass, solve_spd, tensor_at,
                           write_matrix_market)
from cardiofem.mesh import build_structured_mesh, mesh_from_arrays

UNIT_TRI = mesh_from_arrays([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
TABLE = ConductivityField(1.2e-3, 2.5562e-4)


def gaussian_elimination(A, b):
    """Dense elimination with partial pivoting, kept independent of LAPACK."""
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    n = len(b)
    for k in range(n):
        piv = k + int(np.argmax(np.abs(A[k:, k])))
        A[[k, piv]] = A[[piv, k]]
        b[[k, piv]] = b[[piv, k]]
        for i in range(k + 1, n):
            f = A[i, k] / A[k, k]
            A[i, k:] -= f * A[k, k:]
            b[i] -= f * b[k]
    x = np.zeros(n)
    for k in range(n - 1, -1, -1):
        x[k] = (b[k] - A[k, k + 1:] @ x[k + 1:]) / A[k, k]
    return x


# ---- conductivity tensors

def test_tensor_axis_aligned():
    np.testing.assert_array_equal(tensor_at(ConductivityField(2.0, 1.0), (0.3, 0.1)),
                                  np.diag([2.0, 1.0]))


@given(st.floats(-10, 10))
def test_tensor_isotropic(angle):
    D = tensor_at(ConductivityField(0.7, 0.7, angle), (0, 0))
    np.testing.assert_allclose(D, 0.7 * np.eye(2), atol=1e-15)


def test_tensor_45_degrees():
    D = tensor_at(ConductivityField(2.0, 1.0, np.pi / 4), (0, 0))
    np.testing.assert_allclose(D, [[1.5, 0.5], [0.5, 1.5]], rtol=1e-15, atol=1e-15)


@given(st.floats(1e-4, 10), st.floats(1e-4, 10), st.floats(-7, 7), st.floats(-7, 7))
def test_tensor_spectrum_and_ellipticity(sl, st_, angle, xi_angle):
    field = ConductivityField(sl, st_, lambda x, y: angle + 0.1 * x)
    D = tensor_at(field, (0.4, -0.2))
    assert D[0, 1] == D[1, 0]
    np.testing.assert_allclose(np.linalg.eigvalsh(D), sorted((sl, st_)),
                               rtol=1e-12, atol=1e-14 * max(sl, st_))
    xi = np.array([np.cos(xi_angle), np.sin(xi_angle)])
    assert xi @ D @ xi >= field.ellipticity - 1e-12


@pytest.mark.parametrize("sl,st_", [(0, 1), (1, 0), (-1, 1)])
def test_non_positive_conductivity_rejected(sl, st_):
    with pytest.raises(ValueError):
        ConductivityField(sl, st_)


def test_derived_fields():
    f = ConductivityField(1.2e-3, 2.5562e-4, 0.0, lambda_ratio=3.0)
    assert f.monodomain().sigma_l == pytest.approx(0.75 * 1.2e-3, rel=1e-15)
    assert f.extracellular().sigma_t == pytest.approx(3 * 2.5562e-4, rel=1e-15)


# ---- mass matrix

def test_reference_mass():
    M = assemble_mass(UNIT_TRI).toarray()
    np.testing.assert_allclose(M, np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24,
                               rtol=1e-15)


def test_reference_mass_by_quadrature():
    # degree-2 edge-midpoint rule is exact for products of P1 functions
    bary = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
    exact = 0.5 / 3 * bary.T @ bary
    np.testing.assert_allclose(assemble_mass(UNIT_TRI).toarray(), exact, rtol=1e-14)


@pytest.mark.parametrize("n", [5, 10, 20, 40])
def test_mass_total_and_spd(n):
    mesh = build_structured_mesh(-1.25, 1.25, n)
    M = assemble_mass(mesh)
    assert M.sum() == pytest.approx(6.25, rel=1e-10)
    assert (M != M.T).nnz == 0
    if n <= 20:
        assert np.linalg.eigvalsh(M.toarray()).min() > 0
    else:
        # Gershgorin on the lumped diagonal is inconclusive for P1 mass,
        # so bound the smallest eigenvalue by the element-wise estimate instead
        lo = sp.linalg.eigsh(M, k=1, sigma=0, which="LM", return_eigenvectors=False)[0]
        assert lo > 0


def test_no_stored_zeros():
    mesh = build_structured_mesh(0, 1, 4)
    for mat in (assemble_mass(mesh), assemble_stiffness(mesh, ConductivityField(1, 1))):
        assert np.all(mat.data != 0)


# ---- stiffness matrix

def test_reference_stiffness():
    A = assemble_stiffness(UNIT_TRI, ConductivityField(1.0, 1.0)).toarray()
    np.testing.assert_allclose(A, [[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]],
                               atol=1e-15)


@pytest.mark.parametrize("field", [
    TABLE,
    ConductivityField(2.0, 0.5, 0.7),
    ConductivityField(1.0, 0.1, lambda x, y: np.arctan2(y, x + 3.0)),
])
def test_stiffness_structure(field):
    mesh = build_structured_mesh(-1.25, 1.25, 12)
    A = assemble_stiffness(mesh, field)
    assert (A != A.T).nnz == 0
    assert np.abs(A @ np.ones(mesh.n_nodes)).max() <= 1e-12
    eig = np.linalg.eigvalsh(A.toarray())
    scale = eig.max()
    assert eig.min() > -1e-12 * scale
    assert np.sum(np.abs(eig) <= 1e-10 * scale) == 1


def test_stiffness_linear_in_conductivity():
    mesh = build_structured_mesh(-1.25, 1.25, 8)
    A1 = assemble_stiffness(mesh, ConductivityField(1.0, 1.0))
    A3 = assemble_stiffness(mesh, ConductivityField(3.0, 3.0))
    np.testing.assert_allclose(A3.toarray(), 3.0 * A1.toarray(), rtol=1e-14, atol=1e-15)


def test_stiffness_energy_converges():
    a, b = -1.25, 1.25
    exact, _ = dblquad(lambda y, x: 4 * x * x + 4 * y * y, a, b, a, b)
    errs = []
    for n in (8, 16, 32, 64):
        mesh = build_structured_mesh(a, b, n)
        u = (mesh.nodes ** 2).sum(axis=1)
        A = assemble_stiffness(mesh, ConductivityField(1.0, 1.0))
        errs.append(abs(u @ (A @ u) - exact))
    rates = [errs[k] / errs[k + 1] for k in range(3)]
    assert errs[-1] / exact < 1e-3
    assert all(3.5 < r < 4.5 for r in rates)


def test_stiffness_rejects_non_field():
    with pytest.raises(TypeError):
        assemble_stiffness(UNIT_TRI, 1.0)


# ---- lumping

def test_lumped_mass():
    mesh = build_structured_mesh(-1.25, 1.25, 10)
    M = assemble_mass(mesh)
    assert lumped_mass(M).sum() == pytest.approx(6.25, rel=1e-12)
    c = np.full(mesh.n_nodes, -3.7)
    np.testing.assert_allclose(apply_mass(M, c, lumped=True), apply_mass(M, c),
                               rtol=1e-13)


# ---- solver

def test_solve_identity():
    b = np.random.default_rng(1).standard_normal(30)
    np.testing.assert_allclose(solve_spd(sp.identity(30, format="csr"), b), b, rtol=1e-14)


def test_solve_mass_constructed():
    M = assemble_mass(build_structured_mesh(-1.25, 1.25, 20))
    x = solve_spd(M, M @ np.ones(M.shape[0]), tol=1e-12)
    np.testing.assert_allclose(x, 1.0, rtol=1e-10)


def test_solve_random_spd_against_elimination():
    rng = np.random.default_rng(7)
    B = rng.standard_normal((50, 50))
    A = B @ B.T + 50 * np.eye(50)
    b = rng.standard_normal(50)
    x = solve_spd(sp.csr_matrix(A), b, tol=1e-13)
    np.testing.assert_allclose(x, gaussian_elimination(A, b), rtol=1e-8, atol=1e-12)


def test_solve_relative_residual():
    rng = np.random.default_rng(3)
    mesh = build_structured_mesh(-1.25, 1.25, 16)
    K = assemble_mass(mesh) + 0.1 * assemble_stiffness(mesh, ConductivityField(1, 0.2, 0.4))
    b = rng.standard_normal(mesh.n_nodes)
    for tol in (1e-6, 1e-10):
        x = solve_spd(K, b, tol=tol)
        assert np.linalg.norm(K @ x - b) / np.linalg.norm(b) <= tol


def test_solve_deflated_neumann():
    mesh = build_structured_mesh(-1.25, 1.25, 12)
    A = assemble_stiffness(mesh, ConductivityField(1.0, 0.3, 0.2))
    rng = np.random.default_rng(5)
    b = rng.standard_normal(mesh.n_nodes)
    b -= b.mean()
    x = solve_spd(A, b, tol=1e-11, deflate=True)
    assert abs(x.mean()) < 1e-13
    assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) <= 1e-10


def test_solve_rejects_incompatible():
    mesh = build_structured_mesh(0, 1, 4)
    A = assemble_stiffness(mesh, ConductivityField(1, 1))
    with pytest.raises(ValueError, match="null space"):
        solve_spd(A, np.ones(mesh.n_nodes), deflate=True)


def test_solve_reports_non_convergence():
    M = assemble_mass(build_structured_mesh(0, 1, 10))
    b = np.random.default_rng(0).standard_normal(M.shape[0])
    with pytest.raises(ConvergenceError) as info:
        solve_spd(M, b, tol=1e-14, max_iter=2)
    assert info.value.residual > 1e-14


def test_solve_deterministic():
    mesh = build_structured_mesh(-1, 1, 15)
    K = assemble_mass(mesh) + assemble_stiffness(mesh, ConductivityField(1, 1))
    b = np.sin(np.arange(mesh.n_nodes))
    assert solve_spd(K, b).tobytes() == solve_spd(K, b).tobytes()


@settings(max_examples=20, deadline=None)
@given(st.floats(1e-4, 10.0))
def test_step_operator_spd_any_dt(dt):
    mesh = build_structured_mesh(-1.25, 1.25, 4)
    K = assemble_mass(mesh) + dt * assemble_stiffness(mesh, TABLE.monodomain())
    assert np.linalg.eigvalsh(K.toarray()).min() > 0


def test_matrix_market_dump(tmp_path):
    M = assemble_mass(build_structured_mesh(0, 1, 3))
    write_matrix_market(tmp_path / "m.mtx", M)
    back = scipy.io.mmread(str(tmp_path / "m.mtx"))
    np.testing.assert_array_equal(back.toarray(), M.toarray())
