"""``key = value`` configuration files.

Every key is optional; an empty file reproduces the reference experiment
(41x41 grid on [-1.25, 1.25]^2, dt = 0.1 ms, 400 steps).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from .fem import ConductivityField
from .ionic import SIGN_CONVENTIONS, MorrisLecarParams
from .mesh import Mesh, build_structured_mesh
from .monodomain import IC_PRESETS, InitialCondition

MODELS = ("monodomain", "bidomain")

_ML = MorrisLecarParams()

DEFAULT_PROBES = ((0.0, 0.0), (0.625, 0.625), (-0.625, 0.625),
                  (-0.625, -0.625), (0.625, -0.625))
DEFAULT_SNAPSHOTS = (0, 120, 210, 270, 310, 399)


class ConfigError(ValueError):
    def __init__(self, message, key=None, line=None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.key = key
        self.line = line


@dataclass
class SimConfig:
    domain_a: float = -1.25
    domain_b: float = 1.25
    grid_n: int = 40
    dt: float = 0.1
    n_steps: int = 400
    model: str = "monodomain"

    v1: float = _ML.v1
    v2: float = _ML.v2
    v3: float = _ML.v3
    v4: float = _ML.v4
    v_ca: float = _ML.v_ca
    v_k: float = _ML.v_k
    v_l: float = _ML.v_l
    g_ca: float = _ML.g_ca
    g_k: float = _ML.g_k
    g_l: float = _ML.g_l
    phi: float = _ML.phi
    c_m: float = _ML.c_m
    sign_convention: str = _ML.sign_convention

    # intracellular conductivities; the monodomain uses lambda/(1+lambda) of them
    sigma_l: float = 1.2e-3
    sigma_t: float = 2.5562e-4
    lambda_ratio: float = 1.0
    fiber_angle: float = 0.0

    ic: str = "quadrant"
    ic_values: tuple = (-40.0, -30.0, -20.0, -10.0)
    ic_blend: float = 0.1
    ic_v0: float = 0.0
    ic_baseline: float = -20.0
    ic_amplitude: float = 20.0
    ic_center: tuple = (0.0, 0.0)
    ic_width: float = 0.5
    ic_v_start: float = -40.0
    ic_v_end: float = -10.0
    ic_axis: int = 0
    ic_w0: Optional[float] = 1e-3
    w_floor: float = 1e-3

    probes: tuple = DEFAULT_PROBES
    snapshot_steps: tuple = DEFAULT_SNAPSHOTS
    epsilon: float = 0.0
    mass_lumping: bool = False
    solver_tol: float = 1e-10
    check_bounds: bool = True
    output_dir: str = "output"

    def params(self) -> MorrisLecarParams:
        return MorrisLecarParams(
            v1=self.v1, v2=self.v2, v3=self.v3, v4=self.v4, v_ca=self.v_ca,
            v_k=self.v_k, v_l=self.v_l, g_ca=self.g_ca, g_k=self.g_k, g_l=self.g_l,
            phi=self.phi, c_m=self.c_m, sign_convention=self.sign_convention)

    def intracellular_field(self) -> ConductivityField | None:
        if self.sigma_l == 0 and self.sigma_t == 0:
            return None
        return ConductivityField(self.sigma_l, self.sigma_t, self.fiber_angle,
                                 self.lambda_ratio)

    def monodomain_field(self) -> ConductivityField | None:
        f = self.intracellular_field()
        return None if f is None else f.monodomain()

    def initial_condition(self) -> InitialCondition:
        return InitialCondition(
            preset=self.ic, v0=self.ic_v0, baseline=self.ic_baseline,
            amplitude=self.ic_amplitude, center=tuple(self.ic_center),
            width=self.ic_width, v_start=self.ic_v_start, v_end=self.ic_v_end,
            axis=self.ic_axis, values=tuple(self.ic_values), blend=self.ic_blend,
            w0=self.ic_w0, w_floor=self.w_floor)

    def mesh(self, n: int | None = None) -> Mesh:
        return build_structured_mesh(self.domain_a, self.domain_b,
                                     self.grid_n if n is None else n)


def _floats(text, count=None):
    vals = tuple(float(x) for x in text.replace(",", " ").split())
    if count is not None and len(vals) != count:
        raise ValueError(f"expected {count} numbers, got {len(vals)}")
    return vals


def _bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text):
    val = float(text)
    if val != int(val):
        raise ValueError(f"not an integer: {text!r}")
    return int(val)


def _points(text):
    pts = []
    for chunk in text.split(";"):
        if chunk.strip():
            pts.append(_floats(chunk, 2))
    if not pts:
        raise ValueError("at least one probe point is required")
    return tuple(pts)


def _optional_float(text):
    return None if text.lower() in ("auto", "none") else float(text)


_PARSERS = {
    "grid_n": _int, "n_steps": _int, "ic_axis": _int,
    "model": str, "sign_convention": str, "ic": str, "output_dir": str,
    "ic_values": lambda s: _floats(s, 4),
    "ic_center": lambda s: _floats(s, 2),
    "ic_w0": _optional_float,
    "probes": _points,
    "snapshot_steps": lambda s: tuple(_int(x) for x in s.replace(",", " ").split()),
    "mass_lumping": _bool, "check_bounds": _bool,
}
KEYS = tuple(f.name for f in fields(SimConfig))


def parse_config(text: str) -> SimConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}",
                              line=lineno)
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", key=key, line=lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", key=key, line=lineno)
        if not val:
            raise ConfigError(f"missing value for {key!r}", key=key, line=lineno)
        try:
            values[key] = _PARSERS.get(key, float)(val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", key=key,
                              line=lineno) from None
    if "snapshot_steps" not in values:
        n_steps = values.get("n_steps", SimConfig.n_steps)
        values["snapshot_steps"] = tuple(s for s in DEFAULT_SNAPSHOTS if s <= n_steps)
    cfg = SimConfig(**values)
    validate(cfg)
    return cfg


def load_config(path) -> SimConfig:
    return parse_config(Path(path).read_text())


def validate(cfg: SimConfig) -> None:
    def fail(key, msg):
        raise ConfigError(f"{key}: {msg}", key=key)

    for f in fields(cfg):
        val = getattr(cfg, f.name)
        nums = val if isinstance(val, tuple) else (val,)
        for x in nums:
            for y in (x if isinstance(x, tuple) else (x,)):
                if isinstance(y, float) and not math.isfinite(y):
                    fail(f.name, "must be finite")

    if not cfg.domain_a < cfg.domain_b:
        fail("domain_b", "must exceed domain_a")
    if cfg.grid_n < 1:
        fail("grid_n", "must be at least 1")
    if not cfg.dt > 0:
        fail("dt", f"must be positive, got {cfg.dt}")
    if cfg.n_steps < 0:
        fail("n_steps", "must be non-negative")
    if cfg.model not in MODELS:
        fail("model", f"must be one of {MODELS}")
    if cfg.sign_convention not in SIGN_CONVENTIONS:
        fail("sign_convention", f"must be one of {SIGN_CONVENTIONS}")
    if cfg.ic not in IC_PRESETS:
        fail("ic", f"must be one of {IC_PRESETS}")
    if not (cfg.v2 > 0):
        fail("v2", "must be positive")
    if not (cfg.v4 > 0):
        fail("v4", "must be positive")
    for key in ("g_ca", "g_k", "g_l", "phi", "epsilon", "ic_blend"):
        if getattr(cfg, key) < 0:
            fail(key, "must be non-negative")
    if not cfg.c_m > 0:
        fail("c_m", "must be positive")
    if cfg.sigma_l < 0 or cfg.sigma_t < 0:
        fail("sigma_l", "conductivities must be non-negative")
    if (cfg.sigma_l == 0) != (cfg.sigma_t == 0):
        fail("sigma_t", "set both conductivities to zero to disable diffusion")
    if not cfg.lambda_ratio > 0:
        fail("lambda_ratio", "must be positive")
    if cfg.ic == "gaussian" and not cfg.ic_width > 0:
        fail("ic_width", "must be positive")
    if cfg.ic_axis not in (0, 1):
        fail("ic_axis", "must be 0 or 1")
    if cfg.check_bounds:
        if cfg.ic_w0 is not None and not 0 < cfg.ic_w0 <= 1:
            fail("ic_w0", "must lie in (0, 1]")
        if not 0 < cfg.w_floor <= 1:
            fail("w_floor", "must lie in (0, 1]")
    if not cfg.solver_tol > 0:
        fail("solver_tol", "must be positive")
    bad = [s for s in cfg.snapshot_steps if s < 0 or s > cfg.n_steps]
    if bad:
        fail("snapshot_steps", f"steps {list(bad)} outside [0, n_steps={cfg.n_steps}]")
    a, b = cfg.domain_a, cfg.domain_b
    for pt in cfg.probes:
        if not all(a <= c <= b for c in pt):
            fail("probes", f"point {pt} outside the domain")
