"""Semi-implicit time stepping of the monodomain model.

Each step advances the gate exactly with v frozen, then solves

    (C_m M + dt A) v^{n+1} = C_m M v^n - dt M I_ion(v^n, w^{n+1}) + dt M I_app

so diffusion is implicit and the ionic current explicit.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import ionic
from .fem import (ConductivityField, apply_mass, assemble_mass, assemble_stiffness,
                  solve_spd, zero_stiffness)
from .ionic import MorrisLecarParams
from .mesh import Mesh, locate_node

IC_PRESETS = ("constant", "gaussian", "linear-ramp", "quadrant")
DIVERGENCE_LIMIT = 500.0


class SimulationError(RuntimeError):
    """Non-finite or runaway state, or a violated gating bound."""


@dataclass
class InitialCondition:
    """Initial data preset.

    ``constant``     v = v0
    ``gaussian``     v = baseline + amplitude * exp(-|x - center|^2 / (2 width^2))
    ``linear-ramp``  v varies linearly from v_start to v_end across ``axis``
    ``quadrant``     v = values[k] for the quadrants (lower-left, lower-right,
                     upper-left, upper-right) about ``center``; nodes on an
                     axis belong to the lower / left side.  ``blend > 0``
                     replaces the jumps by tanh ramps of that width.

    ``w0=None`` sets ``w = clip(w_inf(v), w_floor, 1)``.
    """

    preset: str = "quadrant"
    v0: float = 0.0
    baseline: float = -20.0
    amplitude: float = 20.0
    center: tuple[float, float] = (0.0, 0.0)
    width: float = 0.5
    v_start: float = -40.0
    v_end: float = -10.0
    axis: int = 0
    values: tuple[float, float, float, float] = (-40.0, -30.0, -20.0, -10.0)
    blend: float = 0.0
    w0: Optional[float] = 1e-3
    w_floor: float = 1e-3


@dataclass
class StimulusConfig:
    """Applied current ``i_app(t, nodes) -> nodal values``; ``None`` is zero."""

    i_app: Optional[Callable[[float, np.ndarray], np.ndarray]] = None

    def values(self, t: float, mesh: Mesh) -> np.ndarray | None:
        if self.i_app is None:
            return None
        return np.broadcast_to(np.asarray(self.i_app(t, mesh.nodes), dtype=float),
                               (mesh.n_nodes,))


@dataclass
class MonodomainState:
    t: float
    v: np.ndarray
    w: np.ndarray
    step_index: int = 0


@dataclass
class ProbeSeries:
    points: list[tuple[float, float]]
    nodes: list[int]
    times: np.ndarray
    values: np.ndarray  # shape (n_times, n_probes)

    def trace(self, k: int) -> np.ndarray:
        return self.values[:, k]


@dataclass
class RunResult:
    probes: ProbeSeries
    snapshots: dict[int, dict[str, np.ndarray]]
    state: object
    w_min: float
    w_max: float
    tau_min: float


def initial_potential(mesh: Mesh, ic: InitialCondition) -> np.ndarray:
    x = mesh.nodes[:, 0]
    y = mesh.nodes[:, 1]
    if ic.preset == "constant":
        return np.full(mesh.n_nodes, float(ic.v0))
    if ic.preset == "gaussian":
        cx, cy = ic.center
        r2 = (x - cx) ** 2 + (y - cy) ** 2
        return ic.baseline + ic.amplitude * np.exp(-r2 / (2.0 * ic.width ** 2))
    if ic.preset == "linear-ramp":
        if ic.axis not in (0, 1):
            raise ValueError("linear-ramp axis must be 0 (x) or 1 (y)")
        a, b = mesh.bounds
        s = (mesh.nodes[:, ic.axis] - a) / (b - a)
        return ic.v_start + (ic.v_end - ic.v_start) * s
    if ic.preset == "quadrant":
        cx, cy = ic.center
        vals = np.asarray(ic.values, dtype=float)
        if ic.blend > 0:
            sx = 0.5 * (1.0 + np.tanh((x - cx) / ic.blend))
            sy = 0.5 * (1.0 + np.tanh((y - cy) / ic.blend))
            return ((1 - sy) * ((1 - sx) * vals[0] + sx * vals[1])
                    + sy * ((1 - sx) * vals[2] + sx * vals[3]))
        idx = 2 * (y > cy).astype(int) + (x > cx).astype(int)
        return vals[idx]
    raise ValueError(f"unknown initial-condition preset {ic.preset!r}; "
                     f"expected one of {IC_PRESETS}")


def initial_gate(v: np.ndarray, ic: InitialCondition, p: MorrisLecarParams,
                 check_bounds: bool = True) -> np.ndarray:
    if ic.w0 is None:
        w = np.clip(ionic.w_inf(v, p), ic.w_floor, 1.0)
    else:
        w = np.full(v.shape, float(ic.w0))
    if check_bounds and (np.any(w <= 0) or np.any(w > 1)):
        raise ValueError("initial gate must lie in (0, 1] for the bound checks")
    return w


def init_state(mesh: Mesh, ic: InitialCondition, p: MorrisLecarParams,
               check_bounds: bool = True) -> MonodomainState:
    v = initial_potential(mesh, ic)
    return MonodomainState(t=0.0, v=v, w=initial_gate(v, ic, p, check_bounds))


def system_matrix(M, A, dt: float, c_m: float) -> sp.csr_matrix:
    return (c_m * M + dt * A).tocsr()


def check_finite(v, w, limit: float = DIVERGENCE_LIMIT) -> None:
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(w))):
        raise SimulationError("non-finite potential or gate")
    vmax = float(np.max(np.abs(v)))
    if vmax > limit:
        raise SimulationError(
            f"|v| reached {vmax:.1f} mV (> {limit} mV); check the sign "
            f"convention, phi and the initial gate")


def step(state: MonodomainState, dt: float, M, A, p: MorrisLecarParams,
         stim: StimulusConfig | None = None, mesh: Mesh | None = None,
         lumped: bool = False, tol: float = 1e-10, system=None) -> MonodomainState:
    """One IMEX step; ``system`` may carry a prebuilt ``C_m M + dt A``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if system is None:
        system = system_matrix(M, A, dt, p.c_m)
    t_next = (state.step_index + 1) * dt
    w_next = ionic.step_gating(state.v, state.w, dt, p)
    source = -ionic.i_ion(state.v, w_next, p)
    if stim is not None and stim.i_app is not None:
        if mesh is None:
            raise ValueError("a mesh is required to evaluate the stimulus")
        source = source + stim.values(t_next, mesh)
    rhs = p.c_m * (M @ state.v) + dt * apply_mass(M, source, lumped)
    v_next = solve_spd(system, rhs, tol=tol, x0=state.v)
    check_finite(v_next, w_next)
    return MonodomainState(t=t_next, v=v_next, w=w_next,
                           step_index=state.step_index + 1)


def resolve_probes(mesh: Mesh, probes: Sequence, tol: float | None = None) -> list[int]:
    return [locate_node(mesh, pt, tol) for pt in probes]


def check_snapshot_steps(snapshot_steps: Sequence[int], n_steps: int) -> list[int]:
    steps = sorted(set(int(s) for s in snapshot_steps))
    bad = [s for s in steps if s < 0 or s > n_steps]
    if bad:
        raise ValueError(f"snapshot steps {bad} outside [0, {n_steps}]")
    return steps


class _GateMonitor:
    """Tracks the extremes of w and the smallest tau_w seen by the gate."""

    def __init__(self, w0, p, check):
        self.p = p
        self.check = check
        self.r = float(np.min(w0))
        self.w_min = float(np.min(w0))
        self.w_max = float(np.max(w0))
        self.tau_min = 1.0

    def update(self, v_old, w_new, t):
        self.tau_min = min(self.tau_min, float(np.min(ionic.tau_w(v_old, self.p))))
        self.w_min = min(self.w_min, float(np.min(w_new)))
        self.w_max = max(self.w_max, float(np.max(w_new)))
        if self.check:
            floor = ionic.gating_lower_bound(self.r, t, self.p, self.tau_min)
            if self.w_min < floor * (1 - 1e-12) or self.w_max > 1.0:
                raise SimulationError(
                    f"gating bounds violated at t={t:g}: w in "
                    f"[{self.w_min:.6g}, {self.w_max:.6g}], floor {floor:.6g}")


def run(mesh: Mesh, p: MorrisLecarParams, field: ConductivityField | None,
        ic: InitialCondition, stim: StimulusConfig | None, dt: float, n_steps: int,
        probes: Sequence = ((0.0, 0.0),), snapshot_steps: Sequence[int] = (),
        lumped: bool = False, tol: float = 1e-10, check_bounds: bool = True,
        probe_tol: float | None = None, M=None, A=None,
        initial: MonodomainState | None = None) -> RunResult:
    """Integrate ``n_steps`` steps, recording probe traces and snapshots.

    ``field`` is the effective conductivity D; ``None`` disables diffusion.
    ``initial`` overrides the state built from ``ic``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    nodes = resolve_probes(mesh, probes, probe_tol)
    snap_steps = set(check_snapshot_steps(snapshot_steps, n_steps))
    if M is None:
        M = assemble_mass(mesh)
    if A is None:
        A = zero_stiffness(mesh) if field is None else assemble_stiffness(mesh, field)
    system = system_matrix(M, A, dt, p.c_m)

    state = init_state(mesh, ic, p, check_bounds) if initial is None else initial
    monitor = _GateMonitor(state.w, p, check_bounds)
    values = np.empty((n_steps + 1, len(nodes)))
    values[0] = state.v[nodes]
    snapshots = {}
    if 0 in snap_steps:
        snapshots[0] = {"v": state.v.copy()}
    for k in range(1, n_steps + 1):
        v_old = state.v
        state = step(state, dt, M, A, p, stim, mesh, lumped, tol, system)
        monitor.update(v_old, state.w, state.t)
        values[k] = state.v[nodes]
        if k in snap_steps:
            snapshots[k] = {"v": state.v.copy()}
    times = dt * np.arange(n_steps + 1)
    series = ProbeSeries(points=[tuple(map(float, pt)) for pt in probes],
                         nodes=nodes, times=times, values=values)
    return RunResult(series, snapshots, state, monitor.w_min, monitor.w_max,
                     monitor.tau_min)
