"""Experiment drivers and their file outputs."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import bidomain, monodomain
from .config import SimConfig
from .io import timestamp_line, write_probe_csv, write_vtk
from .monodomain import RunResult

GRID_SIZES = (10, 20, 40)
GRID_GATE = 0.02
REFERENCE_GRID_TARGET = 0.005


def simulate(cfg: SimConfig, n: int | None = None, probes=None,
             snapshot_steps=None) -> RunResult:
    """Run the configured model once."""
    mesh = cfg.mesh(n)
    probes = cfg.probes if probes is None else probes
    snaps = cfg.snapshot_steps if snapshot_steps is None else snapshot_steps
    p = cfg.params()
    ic = cfg.initial_condition()
    if cfg.model == "bidomain":
        return bidomain.run_bidomain(
            mesh, p, cfg.intracellular_field(), ic, cfg.dt, cfg.n_steps,
            probes=probes, snapshot_steps=snaps, epsilon=cfg.epsilon,
            lumped=cfg.mass_lumping, tol=cfg.solver_tol, check_bounds=cfg.check_bounds)
    return monodomain.run(
        mesh, p, cfg.monodomain_field(), ic, None, cfg.dt, cfg.n_steps,
        probes=probes, snapshot_steps=snaps, lumped=cfg.mass_lumping,
        tol=cfg.solver_tol, check_bounds=cfg.check_bounds)


def _header(timestamp: bool) -> list[str]:
    return [f"# {timestamp_line()}"] if timestamp else []


def _kv(block: str, items: dict) -> list[str]:
    lines = [f"[{block}]"]
    lines += [f"{k} = {v}" for k, v in items.items()]
    lines.append("")
    return lines


def write_snapshots(out: Path, cfg: SimConfig, result: RunResult, prefix: str,
                    timestamp: bool) -> list[Path]:
    mesh = cfg.mesh()
    paths = []
    for k in sorted(result.snapshots):
        path = out / f"{prefix}_{k:04d}.vtk"
        title = f"{cfg.model} v at step {k} t={k * cfg.dt:.6g} ms"
        if timestamp:
            title += f" {timestamp_line()}"
        write_vtk(path, mesh, result.snapshots[k], title=title)
        paths.append(path)
    return paths


def run_simulate(cfg: SimConfig, out, timestamp: bool = True) -> RunResult:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    result = simulate(cfg)
    write_probe_csv(out / "probes.csv", result.probes.times, result.probes.values,
                    timestamp)
    write_snapshots(out, cfg, result, "snapshot", timestamp)
    mesh = cfg.mesh()
    lines = _header(timestamp)
    lines += _kv("simulation", {
        "model": cfg.model, "dofs": mesh.n_nodes, "triangles": mesh.n_triangles,
        "dt": cfg.dt, "n_steps": cfg.n_steps,
        "final_time": f"{cfg.n_steps * cfg.dt:.6g}",
    })
    lines += _kv("gating", {
        "w_min": f"{result.w_min:.17e}", "w_max": f"{result.w_max:.17e}",
        "tau_min": f"{result.tau_min:.17e}",
    })
    final = result.probes.values[-1]
    lines += _kv("final_probe_values", {
        f"v_p{k + 1} ({x:g},{y:g})": f"{val:.17e}"
        for k, ((x, y), val) in enumerate(zip(result.probes.points, final))
    })
    (out / "report.txt").write_text("\n".join(lines))
    return result


@dataclass
class GridValidation:
    dofs: list[int]
    triangles: list[int]
    times: np.ndarray
    traces: list[np.ndarray]
    differences: list[float]  # consecutive pairs, relative to the finer range

    @property
    def converging(self) -> bool:
        coarse, fine = self.differences[0], self.differences[-1]
        return fine < coarse or coarse < 1e-12

    @property
    def passed(self) -> bool:
        return self.differences[-1] < GRID_GATE and self.converging


def relative_difference(coarse: np.ndarray, fine: np.ndarray) -> float:
    span = float(np.ptp(fine))
    diff = float(np.max(np.abs(coarse - fine)))
    if span == 0.0:
        return 0.0 if diff == 0.0 else float("inf")
    return diff / span


def grid_validation(cfg: SimConfig, grids=GRID_SIZES, probe=(0.0, 0.0),
                    workers: int = 3) -> GridValidation:
    """Probe trace at ``probe`` on each grid; independent runs go in parallel."""
    def one(n):
        return simulate(cfg, n=n, probes=[probe], snapshot_steps=())

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(one, grids))
    meshes = [cfg.mesh(n) for n in grids]
    traces = [r.probes.trace(0) for r in results]
    diffs = [relative_difference(traces[k], traces[k + 1])
             for k in range(len(traces) - 1)]
    return GridValidation([m.n_nodes for m in meshes], [m.n_triangles for m in meshes],
                          results[0].probes.times, traces, diffs)


def run_grid_validation(cfg: SimConfig, out, timestamp: bool = True) -> GridValidation:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    gv = grid_validation(cfg)
    write_probe_csv(out / "grid_validation_traces.csv", gv.times,
                    np.column_stack(gv.traces), timestamp)
    lines = _header(timestamp)
    lines += _kv("grid_validation", {
        "probe": "(0,0)",
        "dofs": " ".join(map(str, gv.dofs)),
        "triangles": " ".join(map(str, gv.triangles)),
        "columns": " ".join(f"v_p{k + 1}=dofs{d}" for k, d in enumerate(gv.dofs)),
    })
    pairs = {}
    for k, d in enumerate(gv.differences):
        pairs[f"rel_diff_{gv.dofs[k]}_{gv.dofs[k + 1]}"] = f"{d:.6e}"
    pairs["gate"] = GRID_GATE
    pairs["reference_target"] = REFERENCE_GRID_TARGET
    pairs["below_reference_target"] = "yes" if gv.differences[-1] < REFERENCE_GRID_TARGET else "no"
    pairs["converging"] = "yes" if gv.converging else "no"
    pairs["status"] = "pass" if gv.passed else "fail"
    lines += _kv("result", pairs)
    (out / "grid_validation.txt").write_text("\n".join(lines))
    summary = ["coarse_dofs,fine_dofs,relative_difference"]
    summary += [f"{gv.dofs[k]},{gv.dofs[k + 1]},{d:.17e}"
                for k, d in enumerate(gv.differences)]
    (out / "grid_validation_summary.csv").write_text("\n".join(summary) + "\n")
    return gv


@dataclass
class Isochrones:
    steps: list[int]
    minima: list[float]
    maxima: list[float]
    paths: list[Path]

    @property
    def spread_ratio(self) -> float:
        first = self.maxima[0] - self.minima[0]
        last = self.maxima[-1] - self.minima[-1]
        return last / first if first > 0 else float("nan")


def run_isochrones(cfg: SimConfig, out, timestamp: bool = True) -> Isochrones:
    if not cfg.snapshot_steps:
        cfg = replace(cfg, snapshot_steps=tuple(
            s for s in (0, 120, 210, 270, 310, 399) if s <= cfg.n_steps))
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    result = simulate(cfg)
    paths = write_snapshots(out, cfg, result, "isochrone", timestamp)
    steps = sorted(result.snapshots)
    mins = [float(result.snapshots[k]["v"].min()) for k in steps]
    maxs = [float(result.snapshots[k]["v"].max()) for k in steps]
    iso = Isochrones(steps, mins, maxs, paths)
    lines = _header(timestamp)
    for k, lo, hi in zip(steps, mins, maxs):
        lines += _kv(f"step {k}", {"time": f"{k * cfg.dt:.6g}", "v_min": f"{lo:.17e}",
                                   "v_max": f"{hi:.17e}", "spread": f"{hi - lo:.17e}"})
    lines += _kv("summary", {"spread_ratio_last_first": f"{iso.spread_ratio:.6e}"})
    (out / "isochrones.txt").write_text("\n".join(lines))
    summary = ["step,time,v_min,v_max"]
    summary += [f"{k},{k * cfg.dt:.17e},{lo:.17e},{hi:.17e}"
                for k, lo, hi in zip(steps, mins, maxs)]
    (out / "isochrones_summary.csv").write_text("\n".join(summary) + "\n")
    return iso
