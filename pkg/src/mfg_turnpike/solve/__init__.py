"""Equilibrium solvers: particles (beta = 0, any small d) and a 1-D grid (beta >= 0)."""

from .agent import propagate_on_grid, solve_agent_bvp, value_function_along
from .core import EquilibriumSolution, GridField, SolverConfig, TrajectoryBundle, time_grid
from .grid import solve_equilibrium_grid
from .io import load_solution, save_solution
from .particles import solve_bvp, solve_equilibrium_particles

__all__ = [
    "EquilibriumSolution", "GridField", "SolverConfig", "TrajectoryBundle", "load_solution",
    "propagate_on_grid", "save_solution", "solve_agent_bvp", "solve_bvp", "solve_equilibrium_grid",
    "solve_equilibrium_particles", "time_grid", "value_function_along",
]
