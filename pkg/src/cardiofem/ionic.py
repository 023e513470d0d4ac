"""Morris-Lecar membrane kinetics.

All functions broadcast over numpy arrays, so the same code drives a single
cell and every node of a mesh.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIGN_CONVENTIONS = ("paper", "standard")


@dataclass(frozen=True)
class MorrisLecarParams:
    """Ionic constants.

    Voltages in mV, conductances in mS/cm^2, ``phi`` in 1/ms, ``c_m`` in
    uF/cm^2.  The defaults are the tissue values used by the reference
    experiment; ``phi`` and ``c_m`` are not given there and are chosen so
    that the depolarised plateau near 2 mV survives for 40 ms.

    ``sign_convention="paper"`` uses I_ion = -(sum of channel currents)/C_m;
    ``"standard"`` flips the sign, giving the classical excitable cell.
    """

    v1: float = -1.2
    v2: float = 18.0
    v3: float = -1.0
    v4: float = 14.5
    v_ca: float = 120.0
    v_k: float = -70.0
    v_l: float = -50.0
    g_ca: float = 3.0
    g_k: float = 8.0
    g_l: float = 4.0
    phi: float = 1e-4
    c_m: float = 1.0
    sign_convention: str = "paper"

    def __post_init__(self):
        if not (self.v2 > 0 and self.v4 > 0):
            raise ValueError("v2 and v4 must be positive")
        if min(self.g_ca, self.g_k, self.g_l) < 0:
            raise ValueError("conductances must be non-negative")
        if not self.c_m > 0:
            raise ValueError("c_m must be positive")
        if self.phi < 0:
            raise ValueError("phi must be non-negative")
        if self.sign_convention not in SIGN_CONVENTIONS:
            raise ValueError(
                f"sign_convention must be one of {SIGN_CONVENTIONS}, "
                f"got {self.sign_convention!r}")


@dataclass
class CellState:
    v: float
    w: float


def m_inf(v, p: MorrisLecarParams):
    return 0.5 * (1.0 + np.tanh((v - p.v1) / p.v2))


def w_inf(v, p: MorrisLecarParams):
    return 0.5 * (1.0 + np.tanh((v - p.v3) / p.v4))


def tau_w(v, p: MorrisLecarParams):
    return 1.0 / np.cosh((v - p.v3) / (2.0 * p.v4))


def channel_sum(v, w, p: MorrisLecarParams):
    """g_Ca m_inf (v - v_Ca) + g_K w (v - v_K) + g_L (v - v_L)."""
    return (p.g_ca * m_inf(v, p) * (v - p.v_ca)
            + p.g_k * w * (v - p.v_k)
            + p.g_l * (v - p.v_l))


def i_ion(v, w, p: MorrisLecarParams):
    """Ionic current density entering C_m dv/dt = div(D grad v) - I_ion."""
    total = channel_sum(v, w, p) / p.c_m
    return -total if p.sign_convention == "paper" else total


def gating_rate(v, w, p: MorrisLecarParams):
    """dw/dt, relaxing w toward w_inf(v) on the time scale tau_w/phi."""
    return p.phi * (w_inf(v, p) - w) / tau_w(v, p)


def step_gating(v, w, dt: float, p: MorrisLecarParams):
    """Exact update of the gating ODE over ``dt`` with ``v`` held fixed."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    decay = np.exp(-p.phi * dt / tau_w(v, p))
    # convex combination: exact for dt = 0 and never below w * decay
    return w * decay + w_inf(v, p) * (1.0 - decay)


def gating_lower_bound(r: float, t: float, p: MorrisLecarParams, tau_min: float) -> float:
    """Guaranteed floor ``r exp(-t phi / tau_min)`` for gates started above ``r``."""
    return r * float(np.exp(-t * p.phi / tau_min))


def rest_state(p: MorrisLecarParams, w_frozen: float | None = None,
               lo: float = -120.0, hi: float = 150.0, step: float = 0.5):
    """Root of the channel-current sum.

    With ``w_frozen`` the gate is held at that value (v-nullcline crossing);
    otherwise ``w = w_inf(v)`` (full equilibrium).  When several roots exist
    the first one that is attracting in v under ``p.sign_convention`` is
    returned, falling back to the lowest root.

    Returns ``(v_star, residual)``.
    """
    def f(v):
        w = w_inf(v, p) if w_frozen is None else w_frozen
        return float(channel_sum(v, w, p))

    grid = np.arange(lo, hi + 0.5 * step, step)
    vals = [f(v) for v in grid]
    roots = []
    for k in range(len(grid)):
        if vals[k] == 0.0:
            roots.append(float(grid[k]))
        elif k + 1 < len(grid) and vals[k] * vals[k + 1] < 0:
            roots.append(_bisect(f, float(grid[k]), float(grid[k + 1])))
    if not roots:
        raise ValueError(
            f"no sign change of the ionic current in [{lo}, {hi}] mV")

    # dv/dt has the sign of +f under the "paper" convention, -f otherwise
    orient = 1.0 if p.sign_convention == "paper" else -1.0
    for v in roots:
        h = 1e-6 * max(1.0, abs(v))
        if orient * (f(v + h) - f(v - h)) < 0:
            return v, abs(f(v))
    return roots[0], abs(f(roots[0]))


def _bisect(f, a, b):
    fa = f(a)
    while True:
        mid = 0.5 * (a + b)
        if mid in (a, b):
            return mid
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm < 0) == (fa < 0):
            a, fa = mid, fm
        else:
            b = mid
