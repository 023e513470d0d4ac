"""Finite-element monodomain and bidomain simulations with Morris-Lecar kinetics."""
from .bidomain import BidomainState, bidomain_step, check_compatibility, reduction_check, run_bidomain
from .config import ConfigError, SimConfig, parse_config
from .fem import (ConductivityField, ConvergenceError, assemble_mass, assemble_stiffness,
                  solve_spd, tensor_at)
from .ionic import MorrisLecarParams, i_ion, m_inf, rest_state, step_gating, tau_w, w_inf
from .mesh import Mesh, build_structured_mesh, element_geometry, locate_node
from .monodomain import InitialCondition, MonodomainState, SimulationError, run, step

__version__ = "0.1.0"
