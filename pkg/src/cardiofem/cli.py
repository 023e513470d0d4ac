"""Command-line entry point.

Exit codes: 0 success, 1 experiment or verification failure,
2 configuration error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, SimConfig, load_config, validate
from .fem import ConvergenceError, assemble_mass, assemble_stiffness, write_matrix_market
from .io import timestamp_line, write_vtk
from .monodomain import SimulationError


def _config(args) -> SimConfig:
    cfg = load_config(args.config) if args.config else SimConfig()
    validate(cfg)
    return cfg


def _out(args, cfg) -> Path:
    return Path(args.out if args.out else cfg.output_dir)


def cmd_simulate(args) -> int:
    from .experiments import run_simulate

    cfg = _config(args)
    out = _out(args, cfg)
    res = run_simulate(cfg, out, timestamp=not args.no_timestamp)
    print(f"wrote {out}/probes.csv and {len(res.snapshots)} snapshot(s)")
    return 0


def cmd_grid_validation(args) -> int:
    from .experiments import run_grid_validation

    cfg = _config(args)
    out = _out(args, cfg)
    gv = run_grid_validation(cfg, out, timestamp=not args.no_timestamp)
    for k, d in enumerate(gv.differences):
        print(f"dofs {gv.dofs[k]} -> {gv.dofs[k + 1]}: relative difference {d:.3e}")
    print("grid validation", "passed" if gv.passed else "FAILED")
    return 0 if gv.passed else 1


def cmd_isochrones(args) -> int:
    from .experiments import run_isochrones

    cfg = _config(args)
    out = _out(args, cfg)
    iso = run_isochrones(cfg, out, timestamp=not args.no_timestamp)
    for k, lo, hi in zip(iso.steps, iso.minima, iso.maxima):
        print(f"step {k:4d}: v in [{lo:.4f}, {hi:.4f}]")
    print(f"spread ratio last/first: {iso.spread_ratio:.3e}")
    return 0


def cmd_verify(args) -> int:
    from .verify import format_report, verify

    try:
        results = verify(args.suite)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    report = format_report(results)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        text = report if args.no_timestamp else f"# {timestamp_line()}\n{report}"
        (out / "verify.csv").write_text(text)
    sys.stdout.write(report)
    return 0 if all(r.passed for r in results) else 1


def cmd_mesh_info(args) -> int:
    cfg = _config(args)
    mesh = cfg.mesh()
    print(f"domain      [{cfg.domain_a}, {cfg.domain_b}]^2")
    print(f"subdivisions {mesh.n}")
    print(f"dofs        {mesh.n_nodes}")
    print(f"triangles   {mesh.n_triangles}")
    print(f"spacing     {mesh.spacing:.6g}")
    print(f"area        {mesh.area:.12g}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_vtk(out / "mesh.vtk", mesh, title="cardiofem mesh")
        write_matrix_market(out / "mass.mtx", assemble_mass(mesh))
        field = cfg.monodomain_field()
        if field is not None:
            write_matrix_market(out / "stiffness.mtx", assemble_stiffness(mesh, field))
        print(f"wrote mesh and matrices to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cardiofem",
        description="Monodomain/bidomain Morris-Lecar tissue simulations")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--out", help="output directory (default: output_dir key)")
        p.add_argument("--no-timestamp", action="store_true",
                       help="omit generation timestamps so outputs are reproducible")

    common(sub.add_parser("simulate", help="run the configured model"))
    common(sub.add_parser("grid-validation", help="compare the probe (0,0) trace "
                                                  "on 121/441/1681-dof grids"))
    common(sub.add_parser("isochrones", help="write potential snapshots"))
    p_verify = sub.add_parser("verify", help="run the property checks")
    common(p_verify)
    p_verify.add_argument("--suite", action="append",
                          help="mass, nullspace, gating, reduction, stability or all "
                               "(repeatable; default all)")
    common(sub.add_parser("mesh-info", help="describe the mesh; with --out also "
                                            "export it and the matrices"))
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "grid-validation": cmd_grid_validation,
    "isochrones": cmd_isochrones,
    "verify": cmd_verify,
    "mesh-info": cmd_mesh_info,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (SimulationError, ConvergenceError) as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
