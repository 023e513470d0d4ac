import numpy as np
import pytest

from cardiofem import ionic
from cardiofem.bidomain import (block_operator, check_compatibility,
                                init_bidomain_state, reduction_check, run_bidomain)
from cardiofem.fem import ConductivityField, assemble_mass, assemble_stiffness
from cardiofem.ionic import MorrisLecarParams
from cardiofem.mesh import build_structured_mesh
from cardiofem.monodomain import InitialCondition, StimulusConfig

P = MorrisLecarParams()
FIELD = ConductivityField(1.2e-3, 2.5562e-4)
QUAD = InitialCondition(blend=0.1)


@pytest.fixture(scope="module")
def mesh10():
    return build_structured_mesh(-1.25, 1.25, 10)


def test_compatibility_examples(mesh10):
    M = assemble_mass(mesh10)
    assert check_compatibility(None, None, M).passed
    ok = check_compatibility(np.ones(mesh10.n_nodes), np.ones(mesh10.n_nodes), M)
    assert ok.passed and ok.residual < 1e-13
    bad = check_compatibility(np.ones(mesh10.n_nodes), None, M)
    assert not bad.passed
    assert bad.residual == pytest.approx(6.25, rel=1e-12)


def test_block_operator_structure(mesh10):
    M = assemble_mass(mesh10)
    A = assemble_stiffness(mesh10, FIELD)
    K0 = block_operator(M, A, 3 * A, 0.1, 1.0, 0.0)
    assert (K0 != K0.T).nnz == 0
    assert np.abs(K0 @ np.ones(K0.shape[0])).max() < 1e-12
    eig = np.linalg.eigvalsh(K0.toarray())
    assert np.sum(np.abs(eig) < 1e-12 * eig.max()) == 1
    assert eig.min() > -1e-12 * eig.max()
    K1 = block_operator(M, A, 3 * A, 0.1, 1.0, 1e-3)
    assert np.linalg.eigvalsh(K1.toarray()).min() > 0


def test_no_diffusion_no_gating_dynamics():
    # with the channels off and no diffusion nothing moves
    mesh = build_structured_mesh(-1.25, 1.25, 4)
    p = MorrisLecarParams(g_ca=0, g_k=0, g_l=0)
    res = run_bidomain(mesh, p, None, QUAD, 0.1, 10, snapshot_steps=[10])
    init = init_bidomain_state(mesh, QUAD, p)
    np.testing.assert_allclose(res.snapshots[10]["v"], init.v, rtol=1e-9)


def test_constant_state_follows_cell_recursion():
    mesh = build_structured_mesh(-1.25, 1.25, 6)
    ic = InitialCondition(preset="constant", v0=-20.0)
    dt, n_steps = 0.1, 40
    res = run_bidomain(mesh, P, FIELD, ic, dt, n_steps, tol=1e-13)
    v, w = -20.0, 1e-3
    expected = [v]
    for _ in range(n_steps):
        w = ionic.step_gating(v, w, dt, P)
        v = v - dt * ionic.i_ion(v, w, P) / P.c_m
        expected.append(float(v))
    np.testing.assert_allclose(res.probes.trace(0), expected, rtol=1e-9)
    assert np.ptp(res.state.v) < 1e-9


def test_gauge_invariance(mesh10):
    a = run_bidomain(mesh10, P, FIELD, QUAD, 0.1, 30, tol=1e-13, snapshot_steps=[30])
    b = run_bidomain(mesh10, P, FIELD, QUAD, 0.1, 30, tol=1e-13, snapshot_steps=[30],
                     offset=17.0)
    np.testing.assert_allclose(b.snapshots[30]["v"], a.snapshots[30]["v"],
                               atol=1e-9)
    np.testing.assert_allclose(b.snapshots[30]["u_e"], a.snapshots[30]["u_e"],
                               atol=1e-9)
    assert abs(a.snapshots[30]["u_e"].mean()) < 1e-12


def test_epsilon_continuity(mesh10):
    def final(eps):
        return run_bidomain(mesh10, P, FIELD, QUAD, 0.1, 30, epsilon=eps,
                            tol=1e-13).state.v
    ref = final(0.0)
    errs = [np.abs(final(eps) - ref).max() for eps in (1e-2, 1e-4, 1e-6)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-6


@pytest.mark.parametrize("lam", [1.0, 3.0])
def test_reduction_to_monodomain(mesh10, lam):
    assert reduction_check(mesh10, P, FIELD, lam, QUAD, 0.1, 100) < 1e-6


def test_reduction_without_diffusion(mesh10):
    assert reduction_check(mesh10, P, None, 2.0, QUAD, 0.1, 20) < 1e-12


def test_incompatible_forcing_raises(mesh10):
    stim = StimulusConfig(lambda t, x: 1.0)
    with pytest.raises(ValueError, match="compatibility"):
        run_bidomain(mesh10, P, FIELD, QUAD, 0.1, 2, stim_i=stim)


def test_balanced_forcing_accepted(mesh10):
    stim = StimulusConfig(lambda t, x: 0.5)
    res = run_bidomain(mesh10, P, FIELD, QUAD, 0.1, 3, stim_i=stim, stim_e=stim)
    assert np.all(np.isfinite(res.state.v))


def test_negative_epsilon_rejected(mesh10):
    with pytest.raises(ValueError):
        init_bidomain_state(mesh10, QUAD, P, epsilon=-1.0)
