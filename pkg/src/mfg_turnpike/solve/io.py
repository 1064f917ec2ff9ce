"""Directory serialisation of equilibria.

Layout::

    meta.json           model identity, solver config, horizon, residual history
    rho0.txt            the initial measure
    rho_flow/NNNNN.csv  one weighted cloud per time node ("w,x1..xd")
    paths_X.csv         (K, N*d) state paths, paths_Y.csv likewise
    grid_u.csv          first row the mesh, then one row per node (grid solver)
    grid_mass.csv       node masses (grid solver)

Floats are written with 17 significant digits so a load reproduces the
arrays bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ArtifactCorrupt
from ..measures import EmpiricalMeasure
from ..models import BuiltinModelSpec, MfgModel, build_model
from .core import EquilibriumSolution, GridField, SolverConfig

FORMAT = "%.17g"


def save_solution(sol: EquilibriumSolution, directory: str | Path, *, write_flow: bool = True) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    K, N, dim = sol.X_paths.shape
    meta = {
        "model": sol.model.identity(),
        "config": sol.config.to_dict(),
        "T": sol.T, "dt": sol.dt, "beta": sol.beta, "solver": sol.solver,
        "residuals": list(map(float, sol.residuals)),
        "info": {k: v for k, v in sol.info.items() if isinstance(v, (int, float, str, bool))},
        "shape": [K, N, dim],
    }
    (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    sol.rho0.save(d / "rho0.txt")
    np.savetxt(d / "paths_X.csv", sol.X_paths.reshape(K, -1), fmt=FORMAT, delimiter=",")
    np.savetxt(d / "paths_Y.csv", sol.Y_paths.reshape(K, -1), fmt=FORMAT, delimiter=",")
    if sol.grid is not None:
        np.savetxt(d / "grid_u.csv", np.vstack([sol.grid.xs, sol.grid.u]), fmt=FORMAT, delimiter=",")
        np.savetxt(d / "grid_mass.csv", sol.grid.mass, fmt=FORMAT, delimiter=",")
    if write_flow:
        fd = d / "rho_flow"
        fd.mkdir(exist_ok=True)
        flow = sol.rho_flow
        for k in range(K):
            (fd / f"{k:05d}.csv").write_text(flow[k].to_text())
    return d


def _read_matrix(path: Path, rows: int) -> np.ndarray:
    a = np.loadtxt(path, delimiter=",", ndmin=2)
    if a.shape[0] != rows:
        raise ArtifactCorrupt(f"{path.name}: {a.shape[0]} rows, expected {rows}")
    return a


def load_solution(directory: str | Path, model: MfgModel | None = None) -> EquilibriumSolution:
    """Inverse of :func:`save_solution`; built-in models are rebuilt from their identity."""
    d = Path(directory)
    try:
        meta = json.loads((d / "meta.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactCorrupt(f"unreadable meta.json in {d}") from exc
    if model is None:
        model = build_model(BuiltinModelSpec.from_dict(meta["model"]))
    K, N, dim = meta["shape"]
    cfg = SolverConfig.from_dict(meta["config"])
    X = _read_matrix(d / "paths_X.csv", K).reshape(K, N, dim) if N else np.zeros((K, 0, dim))
    Y = _read_matrix(d / "paths_Y.csv", K).reshape(K, N, dim) if N else np.zeros((K, 0, dim))
    grid = None
    if (d / "grid_u.csv").exists():
        gu = _read_matrix(d / "grid_u.csv", K + 1)
        mass = _read_matrix(d / "grid_mass.csv", K)
        grid = GridField(xs=gu[0], u=gu[1:], mass=mass)
    from .core import time_grid

    return EquilibriumSolution(
        model=model, T=meta["T"], dt=meta["dt"], beta=meta["beta"], times=time_grid(meta["T"], meta["dt"]),
        rho0=EmpiricalMeasure.load(d / "rho0.txt"), X_paths=X, Y_paths=Y, Z_paths=None, grid=grid,
        residuals=meta["residuals"], config=cfg, solver=meta["solver"], info=meta.get("info", {}),
    )
