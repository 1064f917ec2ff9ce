"""Turnpike and ergodic-limit laboratory for displacement-monotone mean field games.

Submodules: ``measures`` (empirical measures, Wasserstein distances),
``models`` (Hamiltonians and costs with analytic derivatives), ``verify``
(sampled hypothesis audits), ``solve`` (equilibrium solvers), ``turnpike``
(gap functions, decay fits, ergodic studies) and ``cli``.
"""

from . import errors, measures, models, solve, turnpike, verify
from .measures import EmpiricalMeasure, MeasureFlow, wasserstein
from .models import BuiltinModelSpec, MfgModel, build_model, with_final_cost
from .solve import EquilibriumSolution, SolverConfig, solve_equilibrium_grid, solve_equilibrium_particles
from .turnpike import ergodic_study, fit_decay, gap_functions

__version__ = "0.1.0"

__all__ = [
    "BuiltinModelSpec", "EmpiricalMeasure", "EquilibriumSolution", "MeasureFlow", "MfgModel", "SolverConfig",
    "build_model", "ergodic_study", "errors", "fit_decay", "gap_functions", "measures", "models", "solve",
    "solve_equilibrium_grid", "solve_equilibrium_particles", "turnpike", "verify", "wasserstein",
    "with_final_cost",
]
