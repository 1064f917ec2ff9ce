"""Localized agents: trajectories started from an arbitrary law at time t.

The measure flow of an equilibrium is frozen and an individual (or a cloud
of independent agents) solves its own optimal control problem against it.
For beta = 0 this is the two-point Pontryagin problem; for beta > 0 the
costate is read from the grid value function, Y = -D_x u(s, X_s).
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidParameters, OutsideGrid
from ..measures import EmpiricalMeasure
from ..models import MfgModel, running_cost_along
from .core import EquilibriumSolution, TrajectoryBundle
from .particles import solve_bvp


def _grid_drift(model: MfgModel, sol: EquilibriumSolution, k: int, x: np.ndarray) -> np.ndarray:
    y = -sol.grid.gradient_at(k, x[:, 0])[:, None]
    return model.grad_p_H(x, y, sol.rho(k))


def propagate_on_grid(sol: EquilibriumSolution, k0: int, xi: np.ndarray, *, seed: int = 0,
                      model: MfgModel | None = None):
    """Move agents from node k0 with the optimal feedback of the grid value function.

    Heun's predictor-corrector, with additive noise when beta > 0 (seeded,
    so two calls with the same seed share their noise).  Agents reaching the edge
    of the mesh are held there, mirroring the no-flux walls of the FPK step.
    """
    model = model or sol.model
    g = sol.grid
    lo, hi = g.xs[0], g.xs[-1]
    xi = np.asarray(xi, dtype=float).reshape(-1, 1)
    if np.any(xi < lo) or np.any(xi > hi):
        raise OutsideGrid(f"initial points outside [{lo}, {hi}]")
    K = sol.times.size
    dt = sol.dt
    beta = sol.beta
    rng = np.random.default_rng(seed)
    X = np.empty((K - k0,) + xi.shape)
    X[0] = xi
    for n in range(k0, K - 1):
        x = X[n - k0]
        b0 = _grid_drift(model, sol, n, x)
        noise = np.sqrt(2 * beta * dt) * rng.standard_normal(x.shape) if beta > 0 else 0.0
        pred = np.clip(x + dt * b0 + noise, lo, hi)
        x_new = x + 0.5 * dt * (b0 + _grid_drift(model, sol, n + 1, pred)) + noise
        X[n - k0 + 1] = np.clip(x_new, lo, hi)
    Y = np.stack([-g.gradient_at(k, X[k - k0][:, 0])[:, None] for k in range(k0, K)])
    Z = np.stack([-g.hessian_at(k, X[k - k0][:, 0])[:, None, None] for k in range(k0, K)])
    return X, Y, Z


def solve_agent_bvp(model: MfgModel, equilibrium: EquilibriumSolution, t: float, xi: EmpiricalMeasure,
                    *, want_z: bool = False, seed: int = 0) -> TrajectoryBundle:
    """Aligned agent paths on [t, T] against the frozen equilibrium flow.

    The agents are the support points of ``xi`` (weights are not used for
    the dynamics).  For beta > 0 the equilibrium must come from the grid
    solver.
    """
    eq = equilibrium
    k0 = eq.node(t)
    x0 = np.asarray(xi.points, dtype=float)
    if x0.shape[1] != model.dim:
        raise InvalidParameters("agent dimension differs from the model")
    times = eq.times[k0:]
    if eq.beta > 0:
        if eq.grid is None:
            raise InvalidParameters("beta > 0 agents need the grid value function")
        X, Y, Z = propagate_on_grid(eq, k0, x0, seed=seed, model=model)
        return TrajectoryBundle(times, X, Y, Z, label=f"agent@{t:g}")
    if eq.grid is not None:
        g = eq.grid
        if np.any(x0 < g.xs[0]) or np.any(x0 > g.xs[-1]):
            raise OutsideGrid("agents start outside the mesh")
    flow = eq.sub_flow(k0)
    if times.size == 1:
        Y = -model.grad_x_g(x0, flow[0])[None]
        Z = -model.hess_xx_g(x0, flow[0])[None] if want_z else None
        return TrajectoryBundle(times, x0[None].copy(), Y, Z, label=f"agent@{t:g}")
    X, Y, Z = solve_bvp(model, flow, times, x0, tol=eq.config.bvp_tol, want_z=want_z)
    return TrajectoryBundle(times, X, Y, Z, label=f"agent@{t:g}")


def value_function_along(model: MfgModel, equilibrium: EquilibriumSolution, t: float, x,
                         *, n_paths: int = 4000, seed: int = 0, return_stderr: bool = False):
    """Cost-to-go of an agent at (t, x): trapezoidal running cost plus terminal cost.

    With beta > 0 the expectation is an average over ``n_paths`` noise
    realisations; ``return_stderr`` also returns the Monte Carlo standard
    error (zero when beta = 0).
    """
    eq = equilibrium
    x = np.atleast_1d(np.asarray(x, dtype=float))
    copies = n_paths if eq.beta > 0 else 1
    b = solve_agent_bvp(model, eq, t, EmpiricalMeasure.point_mass(x, copies), seed=seed)
    k0 = eq.node(t)
    flow = eq.sub_flow(k0)
    K = b.times.size
    running = np.stack([running_cost_along(model, b.X[k], b.Y[k], flow[k]) for k in range(K)])
    integral = np.trapezoid(running, b.times, axis=0) if K > 1 else np.zeros(b.size)
    terminal = model.final_cost_g(b.X[-1], flow[K - 1])
    total = integral + terminal
    value = float(np.mean(total))
    if return_stderr:
        err = float(np.std(total) / np.sqrt(total.size)) if total.size > 1 else 0.0
        return value, err
    return value
