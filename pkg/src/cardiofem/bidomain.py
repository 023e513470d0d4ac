"""Monolithic semi-implicit stepping of the bidomain model.

The unknowns (u_i, u_e) are solved together from the symmetric block system

    [ C_m M + eps M + dt A_i      -C_m M               ] [u_i]
    [ -C_m M                      C_m M + eps M + dt A_e ] [u_e]

where the extracellular row has been negated.  With ``eps = 0`` the operator
annihilates constant (c, c) pairs; the solve is deflated against that
vector and u_e is shifted to zero mean afterwards.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import ionic
from .fem import (ConductivityField, apply_mass, assemble_mass, assemble_stiffness,
                  solve_spd, zero_stiffness)
from .ionic import MorrisLecarParams
from .mesh import Mesh
from .monodomain import (InitialCondition, ProbeSeries, RunResult, StimulusConfig,
                         _GateMonitor, check_finite, check_snapshot_steps,
                         initial_gate, initial_potential, resolve_probes)
from . import monodomain


@dataclass
class BidomainState:
    t: float
    u_i: np.ndarray
    u_e: np.ndarray
    v: np.ndarray
    w: np.ndarray
    epsilon: float = 0.0
    step_index: int = 0


@dataclass
class Compatibility:
    passed: bool
    residual: float
    threshold: float


def check_compatibility(i_app_i, i_app_e, M, tol: float = 1e-10) -> Compatibility:
    """Compare the integrated intra- and extracellular forcings."""
    n = M.shape[0]
    ones = np.ones(n)
    fi = np.zeros(n) if i_app_i is None else np.broadcast_to(i_app_i, (n,))
    fe = np.zeros(n) if i_app_e is None else np.broadcast_to(i_app_e, (n,))
    residual = abs(float(ones @ (M @ (fi - fe))))
    threshold = tol * (1.0 + abs(float(ones @ (M @ fi))))
    return Compatibility(residual <= threshold, residual, threshold)


def init_bidomain_state(mesh: Mesh, ic: InitialCondition, p: MorrisLecarParams,
                        epsilon: float = 0.0, offset: float = 0.0,
                        check_bounds: bool = True) -> BidomainState:
    """u_e = offset, u_i = v0 + offset."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    v = initial_potential(mesh, ic)
    u_e = np.full(mesh.n_nodes, float(offset))
    return BidomainState(t=0.0, u_i=v + offset, u_e=u_e, v=v.copy(),
                         w=initial_gate(v, ic, p, check_bounds), epsilon=epsilon)


def block_operator(M, A_i, A_e, dt: float, c_m: float, epsilon: float = 0.0) -> sp.csr_matrix:
    diag_i = (c_m + epsilon) * M + dt * A_i
    diag_e = (c_m + epsilon) * M + dt * A_e
    off = -c_m * M
    return sp.bmat([[diag_i, off], [off, diag_e]], format="csr")


def bidomain_step(state: BidomainState, dt: float, M, A_i, A_e, p: MorrisLecarParams,
                  stim_i: StimulusConfig | None = None,
                  stim_e: StimulusConfig | None = None, mesh: Mesh | None = None,
                  lumped: bool = False, tol: float = 1e-10,
                  operator=None) -> BidomainState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = M.shape[0]
    eps = state.epsilon
    if operator is None:
        operator = block_operator(M, A_i, A_e, dt, p.c_m, eps)
    t_next = (state.step_index + 1) * dt

    def forcing(stim):
        if stim is None or stim.i_app is None:
            return None
        if mesh is None:
            raise ValueError("a mesh is required to evaluate the stimulus")
        return stim.values(t_next, mesh)

    f_i = forcing(stim_i)
    f_e = forcing(stim_e)
    if eps == 0 and (f_i is not None or f_e is not None):
        verdict = check_compatibility(f_i, f_e, M)
        if not verdict.passed:
            raise ValueError(
                f"applied currents violate the compatibility condition "
                f"(residual {verdict.residual:.3e})")

    w_next = ionic.step_gating(state.v, state.w, dt, p)
    ion = dt * apply_mass(M, ionic.i_ion(state.v, w_next, p), lumped)
    cmv = p.c_m * (M @ state.v)
    rhs_i = cmv - ion
    rhs_e = -cmv + ion
    if f_i is not None:
        rhs_i = rhs_i + dt * apply_mass(M, f_i, lumped)
    if f_e is not None:
        rhs_e = rhs_e - dt * apply_mass(M, f_e, lumped)
    if eps > 0:
        rhs_i = rhs_i + eps * (M @ state.u_i)
        rhs_e = rhs_e + eps * (M @ state.u_e)

    rhs = np.concatenate([rhs_i, rhs_e])
    x0 = np.concatenate([state.u_i, state.u_e])
    sol = solve_spd(operator, rhs, tol=tol, deflate=(eps == 0), x0=x0)
    u_i, u_e = sol[:n], sol[n:]
    shift = u_e.mean()
    u_i = u_i - shift
    u_e = u_e - shift
    v_next = u_i - u_e
    check_finite(v_next, w_next)
    return BidomainState(t=t_next, u_i=u_i, u_e=u_e, v=v_next, w=w_next,
                         epsilon=eps, step_index=state.step_index + 1)


def stiffness_pair(mesh: Mesh, field_i: ConductivityField | None):
    """(A_i, A_e) with D_e = lambda * D_i; ``None`` gives zero matrices."""
    if field_i is None:
        zero = zero_stiffness(mesh)
        return zero, zero
    return (assemble_stiffness(mesh, field_i),
            assemble_stiffness(mesh, field_i.extracellular()))


def run_bidomain(mesh: Mesh, p: MorrisLecarParams, field_i: ConductivityField | None,
                 ic: InitialCondition, dt: float, n_steps: int,
                 probes: Sequence = ((0.0, 0.0),), snapshot_steps: Sequence[int] = (),
                 epsilon: float = 0.0, stim_i: StimulusConfig | None = None,
                 stim_e: StimulusConfig | None = None, lumped: bool = False,
                 tol: float = 1e-10, check_bounds: bool = True, offset: float = 0.0,
                 probe_tol: float | None = None) -> RunResult:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    nodes = resolve_probes(mesh, probes, probe_tol)
    snap_steps = set(check_snapshot_steps(snapshot_steps, n_steps))
    M = assemble_mass(mesh)
    A_i, A_e = stiffness_pair(mesh, field_i)
    operator = block_operator(M, A_i, A_e, dt, p.c_m, epsilon)

    state = init_bidomain_state(mesh, ic, p, epsilon, offset, check_bounds)
    monitor = _GateMonitor(state.w, p, check_bounds)
    values = np.empty((n_steps + 1, len(nodes)))
    values[0] = state.v[nodes]
    snapshots = {}

    def snap(s):
        return {"v": s.v.copy(), "u_i": s.u_i.copy(), "u_e": s.u_e.copy()}

    if 0 in snap_steps:
        snapshots[0] = snap(state)
    for k in range(1, n_steps + 1):
        v_old = state.v
        state = bidomain_step(state, dt, M, A_i, A_e, p, stim_i, stim_e, mesh,
                              lumped, tol, operator)
        monitor.update(v_old, state.w, state.t)
        values[k] = state.v[nodes]
        if k in snap_steps:
            snapshots[k] = snap(state)
    series = ProbeSeries(points=[tuple(map(float, pt)) for pt in probes],
                         nodes=nodes, times=dt * np.arange(n_steps + 1), values=values)
    return RunResult(series, snapshots, state, monitor.w_min, monitor.w_max,
                     monitor.tau_min)


def reduction_check(mesh: Mesh, p: MorrisLecarParams, field_i: ConductivityField | None,
                    lambda_ratio: float, ic: InitialCondition, dt: float, n_steps: int,
                    tol: float = 1e-12) -> float:
    """Max |v_bidomain - v_monodomain| over all nodes and steps.

    The bidomain run uses D_e = lambda D_i, the monodomain run the reduced
    D = lambda D_i / (1 + lambda); both start from ``ic`` with no forcing.
    """
    if field_i is not None:
        field_i = replace(field_i, lambda_ratio=lambda_ratio)
    mono_field = None if field_i is None else field_i.monodomain()
    everywhere = [tuple(x) for x in mesh.nodes]
    probe_tol = 1e-12 * (1.0 + np.max(np.abs(mesh.nodes)))

    bi = run_bidomain(mesh, p, field_i, ic, dt, n_steps, probes=everywhere,
                      tol=tol, probe_tol=probe_tol)
    mono = monodomain.run(mesh, p, mono_field, ic, None, dt, n_steps,
                          probes=everywhere, tol=tol, probe_tol=probe_tol)
    return float(np.max(np.abs(bi.probes.values - mono.probes.values)))
