"""Shared data types for the equilibrium solvers."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..errors import OutsideGrid
from ..measures import EmpiricalMeasure, MeasureFlow
from ..models import MfgModel


@dataclass(frozen=True)
class SolverConfig:
    """Numerical parameters shared by both solvers.

    ``damping`` of ``None`` defers to the model's recommended Picard damping.
    ``eps_fp`` of ``None`` picks the solver default: 1e-9 for particles and
    1e-6 on the grid, where W2 between nearby grid densities behaves like
    h * sqrt(mass error) and so bottoms out far above machine precision.
    ``L`` and ``h`` are the grid half-width and mesh size (grid solver only);
    ``h`` of ``None`` means ``2L/800``.
    """

    dt: float = 0.01
    N: int = 400
    damping: float | None = None
    max_iter: int = 200
    eps_fp: float | None = None
    bvp_tol: float = 1e-10
    L: float = 6.0
    h: float | None = None
    seed: int = 0
    scheme: str = "upwind2"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.damping is not None and not (0 < self.damping <= 1):
            raise ValueError("damping must lie in (0, 1]")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.L <= 0 or (self.h is not None and self.h <= 0):
            raise ValueError("grid sizes must be positive")
        if self.scheme not in ("upwind1", "upwind2"):
            raise ValueError("scheme must be upwind1 or upwind2")

    def tolerance(self, solver: str) -> float:
        if self.eps_fp is not None:
            return self.eps_fp
        return 1e-6 if solver == "grid" else 1e-9

    @property
    def mesh(self) -> float:
        return self.h if self.h is not None else 2.0 * self.L / 800

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def time_grid(T: float, dt: float) -> np.ndarray:
    """Uniform nodes 0 = t_0 < ... < t_M = T with step as close to dt as possible."""
    M = max(1, int(round(T / dt)))
    return np.linspace(0.0, T, M + 1)


@dataclass
class TrajectoryBundle:
    """Aligned particle trajectories on a common time grid.

    ``X`` and ``Y`` have shape ``(K, N, d)``; ``Z`` (optional) ``(K, N, d, d)``.
    Particle ``i`` of two bundles is read as the same sample point.
    """

    times: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray | None = None
    label: str = ""
    coupling: str = "identity"

    @property
    def size(self) -> int:
        return self.X.shape[1]

    @property
    def dim(self) -> int:
        return self.X.shape[2]

    def law(self, k: int) -> EmpiricalMeasure:
        return EmpiricalMeasure._fast(self.X[k])


@dataclass
class GridField:
    """Value function and density on a 1-D mesh: ``u[k, j] = u(t_k, x_j)``."""

    xs: np.ndarray
    u: np.ndarray
    mass: np.ndarray

    @property
    def h(self) -> float:
        return float(self.xs[1] - self.xs[0])

    def _locate(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        lo, hi = self.xs[0], self.xs[-1]
        if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
            raise OutsideGrid(f"points outside [{lo}, {hi}]")
        s = (np.clip(x, lo, hi) - lo) / self.h
        j = np.clip(np.floor(s).astype(int), 0, self.xs.size - 2)
        return j, s - j

    def gradient(self, k: int) -> np.ndarray:
        """Second-order nodal derivative of u at node k."""
        return np.gradient(self.u[k], self.h, edge_order=2)

    def value_at(self, k: int, x) -> np.ndarray:
        j, w = self._locate(x)
        u = self.u[k]
        return (1 - w) * u[j] + w * u[j + 1]

    def gradient_at(self, k: int, x) -> np.ndarray:
        """D_x u(t_k, x): exact for quadratic u (linear interpolation of centred nodal slopes)."""
        j, w = self._locate(x)
        du = self.gradient(k)
        return (1 - w) * du[j] + w * du[j + 1]

    def hessian(self, k: int) -> np.ndarray:
        u = self.u[k]
        d2 = np.empty_like(u)
        d2[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / self.h**2
        d2[0], d2[-1] = d2[1], d2[-2]
        return d2

    def hessian_at(self, k: int, x) -> np.ndarray:
        j, w = self._locate(x)
        d2 = self.hessian(k)
        return (1 - w) * d2[j] + w * d2[j + 1]

    def density(self, k: int) -> np.ndarray:
        return self.mass[k] / self.h


@dataclass
class EquilibriumSolution:
    """Time-discretised Nash equilibrium.

    ``rho_flow`` is a :class:`MeasureFlow`; for the particle solver it is the
    empirical law of ``X_paths`` node by node, for the grid solver the
    weighted grid measure of the FPK solution.
    """

    model: MfgModel
    T: float
    dt: float
    beta: float
    times: np.ndarray
    rho0: EmpiricalMeasure
    X_paths: np.ndarray
    Y_paths: np.ndarray
    Z_paths: np.ndarray | None
    grid: GridField | None
    residuals: list[float]
    config: SolverConfig
    solver: str
    info: dict[str, Any] = field(default_factory=dict)

    @property
    def rho_flow(self) -> MeasureFlow:
        if self.grid is not None:
            return MeasureFlow(self.grid.xs[:, None], self.grid.mass)
        return MeasureFlow(self.X_paths)

    def sub_flow(self, k0: int) -> MeasureFlow:
        """The measure flow restricted to nodes k0, ..., K-1."""
        if self.grid is not None:
            return MeasureFlow(self.grid.xs[:, None], self.grid.mass[k0:])
        return MeasureFlow(self.X_paths[k0:])

    def rho(self, k: int) -> EmpiricalMeasure:
        return self.rho_flow[k]

    def node(self, t: float) -> int:
        k = int(round(t / self.dt))
        if k < 0 or k >= self.times.size or abs(self.times[k] - t) > 1e-9 * max(1.0, self.T):
            raise ValueError(f"t={t} is not a node of the time grid")
        return k

    def bundle(self, label: str = "") -> TrajectoryBundle:
        return TrajectoryBundle(self.times, self.X_paths, self.Y_paths, self.Z_paths, label=label)

    @property
    def terminal_residual(self) -> float:
        mT = self.rho(self.times.size - 1)
        r = self.Y_paths[-1] + self.model.grad_x_g(self.X_paths[-1], mT)
        return float(np.max(np.abs(r)))
