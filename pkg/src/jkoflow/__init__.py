"""Structure-preserving JKO solvers for Wasserstein gradient flows."""

__version__ = "0.1.0"

from .action import ActionParams, action_hess_diag, action_total, phi, phi_hat
from .driver import FlowConfig, Trajectory, preset, run_flow, scaled
from .energy import EnergyModel, InternalPotential, WallEnergy
from .grid import GridSpec, assemble_constraints, divergence, mass, neumann_laplacian
from .mobility import Mobility
from .precond import build_Ip, build_Iu, solve_Ip
from .prox import ProxCellInput, plan_initial, prox_cell, prox_field
from .solver import SolverParams, prepdjko_step, solve_jko_step

__all__ = [
    "ActionParams", "EnergyModel", "FlowConfig", "GridSpec", "InternalPotential",
    "Mobility", "ProxCellInput", "SolverParams", "Trajectory", "WallEnergy",
    "action_hess_diag", "action_total", "assemble_constraints", "build_Ip",
    "build_Iu", "divergence", "mass", "neumann_laplacian", "phi", "phi_hat",
    "plan_initial", "prepdjko_step", "preset", "prox_cell", "prox_field",
    "run_flow", "scaled", "solve_Ip", "solve_jko_step",
]
