"""Particle solver for deterministic (beta = 0) equilibria.

Each particle solves the Pontryagin two-point problem

    X' = D_p H(X, Y, rho_t),   Y' = -D_x H(X, Y, rho_t),
    X(0) = xi,                 Y(T) = -D_x g(X(T), rho_T)

against a frozen measure flow, discretised by the trapezoidal rule.  The
nonlinear system is solved by Newton's method; every Newton step is one
backward sweep (a discrete Riccati recursion for the affine decoupling
dY_n = S_n dX_n + s_n) followed by one forward sweep.  The backward sweep is
stable on long horizons, which is what makes turnpike-length runs feasible.
The outer loop is a damped Picard iteration on the measure flow.
"""

from __future__ import annotations

import logging

import numpy as np

from ..errors import BvpNotConverged, FixedPointNotConverged, InvalidParameters
from ..measures import ASSIGNMENT_CAP, EmpiricalMeasure, MeasureFlow, resample, w2_flow_1d
from ..models import MfgModel
from .core import EquilibriumSolution, SolverConfig, TrajectoryBundle, time_grid

logger = logging.getLogger(__name__)


# small batched linear algebra (d <= 3), faster than LAPACK on many tiny blocks
def _inv(A: np.ndarray) -> np.ndarray:
    d = A.shape[-1]
    if d == 1:
        return 1.0 / A
    if d == 2:
        a, b, c, e = A[..., 0, 0], A[..., 0, 1], A[..., 1, 0], A[..., 1, 1]
        det = a * e - b * c
        out = np.empty_like(A)
        out[..., 0, 0], out[..., 0, 1] = e / det, -b / det
        out[..., 1, 0], out[..., 1, 1] = -c / det, a / det
        return out
    return np.linalg.inv(A)


def _mm(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if A.shape[-1] == 1:
        return A * B
    return A @ B


def _mv(A: np.ndarray, v: np.ndarray) -> np.ndarray:
    if A.shape[-1] == 1:
        return A[..., 0] * v
    return np.einsum("...ij,...j->...i", A, v)


def _on_nodes(model: MfgModel, fn, X: np.ndarray, Y: np.ndarray, flow: MeasureFlow) -> np.ndarray:
    if model.accepts_flow:
        return fn(X, Y, flow)
    return np.stack([fn(X[k], Y[k], flow[k]) for k in range(X.shape[0])])


def _residuals(model, X, Y, flow, h):
    F = _on_nodes(model, model.grad_p_H, X, Y, flow)
    G = _on_nodes(model, model.grad_x_H, X, Y, flow)
    RX = X[1:] - X[:-1] - h * (F[1:] + F[:-1])
    RY = Y[1:] - Y[:-1] + h * (G[1:] + G[:-1])
    RT = Y[-1] + model.grad_x_g(X[-1], flow[len(flow) - 1])
    return RX, RY, RT


def _max_abs(*arrs) -> float:
    return max(float(np.max(np.abs(a), initial=0.0)) for a in arrs)


def solve_bvp(
    model: MfgModel,
    flow: MeasureFlow,
    times: np.ndarray,
    xi: np.ndarray,
    *,
    tol: float = 1e-10,
    max_newton: int = 30,
    X0: np.ndarray | None = None,
    Y0: np.ndarray | None = None,
    want_z: bool = False,
):
    """Per-particle two-point problem against a frozen flow (nodes aligned with ``times``).

    Returns ``(X, Y, Z)`` with shapes ``(K, N, d)``, ``(K, N, d)`` and
    ``(K, N, d, d)`` or ``None``.  ``Z`` is the Jacobian dY/dX of the
    linearised decoupling, i.e. -D^2_xx u along the paths.
    """
    K = times.size
    xi = np.asarray(xi, dtype=float)
    N, d = xi.shape
    dt = float(times[1] - times[0])
    h = 0.5 * dt
    if X0 is None or Y0 is None:
        X = np.broadcast_to(xi, (K, N, d)).copy()
        Y = np.broadcast_to(-model.grad_x_g(xi, flow[K - 1]), (K, N, d)).copy()
    else:
        X, Y = X0.copy(), Y0.copy()
        X[0] = xi
    I = np.broadcast_to(np.eye(d), (N, d, d))
    RX, RY, RT = _residuals(model, X, Y, flow, h)
    res = _max_abs(RX, RY, RT)
    S = None
    for it in range(max_newton + 1):
        if res <= tol and (not want_z or S is not None):
            break
        if it == max_newton:
            raise BvpNotConverged(f"Newton residual {res:.3e} after {max_newton} steps")
        Fx = _on_nodes(model, model.hess_px_H, X, Y, flow)
        Fy = _on_nodes(model, model.hess_pp_H, X, Y, flow)
        Gx = _on_nodes(model, model.hess_xx_H, X, Y, flow)
        Gy = np.swapaxes(Fx, -1, -2)
        gxx = model.hess_xx_g(X[-1], flow[K - 1])
        S = np.empty((K, N, d, d))
        s = np.empty((K, N, d))
        E = np.empty((K - 1, N, d, d))
        e = np.empty((K - 1, N, d))
        S[-1] = -gxx
        s[-1] = -RT
        for n in range(K - 2, -1, -1):
            S1, s1 = S[n + 1], s[n + 1]
            P1 = I - h * Fx[n + 1] - h * _mm(Fy[n + 1], S1)
            P2 = S1 + h * Gx[n + 1] + h * _mm(Gy[n + 1], S1)
            r1 = -RX[n] + h * _mv(Fy[n + 1], s1)
            r2 = -RY[n] - s1 - h * _mv(Gy[n + 1], s1)
            Qi = _inv(h * Gy[n] - I)
            W = h * _mm(Fy[n], Qi)
            Ki = _inv(P1 + _mm(W, P2))
            E[n] = _mm(Ki, I + h * Fx[n] - h * _mm(W, Gx[n]))
            e[n] = _mv(Ki, r1 + _mv(W, r2))
            S[n] = _mm(Qi, -h * Gx[n] - _mm(P2, E[n]))
            s[n] = _mv(Qi, r2 - _mv(P2, e[n]))
        if res <= tol:
            break  # only the Jacobian was wanted
        dX = np.zeros((K, N, d))
        for n in range(K - 1):
            dX[n + 1] = _mv(E[n], dX[n]) + e[n]
        dY = _mv(S, dX) + s
        step = 1.0
        for _ in range(12):
            Xt, Yt = X + step * dX, Y + step * dY
            RXt, RYt, RTt = _residuals(model, Xt, Yt, flow, h)
            rt = _max_abs(RXt, RYt, RTt)
            if np.isfinite(rt) and (rt < res or rt <= tol):
                break
            step *= 0.5
        else:
            raise BvpNotConverged(f"line search failed at residual {res:.3e}")
        X, Y, RX, RY, RT, res = Xt, Yt, RXt, RYt, RTt, rt
    Z = S if want_z else None
    return X, Y, Z


def _flow_distance(A: np.ndarray, B: np.ndarray) -> float:
    """sup over nodes of W2 between the clouds A[k] and B[k]."""
    if A.shape[2] == 1:
        return float(np.max(w2_flow_1d(A[..., 0], B[..., 0])))
    # synchronous coupling gives an upper bound on W2 in d >= 2
    return float(np.sqrt(np.max(np.mean(np.sum((A - B) ** 2, -1), -1))))


def solve_equilibrium_particles(
    model: MfgModel, rho0: EmpiricalMeasure, T: float, cfg: SolverConfig, *, want_z: bool = False
) -> EquilibriumSolution:
    """Damped Picard iteration on the measure flow around the per-particle BVP."""
    if model.beta != 0:
        raise InvalidParameters("the particle solver handles beta = 0 only")
    if rho0.dim != model.dim:
        raise InvalidParameters("rho0 and model dimensions differ")
    if T <= 0:
        raise InvalidParameters("horizon must be positive")
    times = time_grid(T, cfg.dt)
    K = times.size
    xi = resample(rho0, cfg.N, seed=cfg.seed).points
    theta = cfg.damping if cfg.damping is not None else model.recommended_damping
    X_in = np.broadcast_to(xi, (K,) + xi.shape).copy()
    X = Y = None
    residuals: list[float] = []
    converged = False
    for it in range(cfg.max_iter):
        flow = MeasureFlow(X_in)
        X, Y, _ = solve_bvp(model, flow, times, xi, tol=cfg.bvp_tol, X0=X, Y0=Y)
        r = _flow_distance(X, X_in)
        residuals.append(r)
        logger.debug("outer iteration %d: residual %.3e", it, r)
        if r < cfg.tolerance("particles"):
            converged = True
            break
        X_in = (1.0 - theta) * X_in + theta * X
    if not converged:
        raise FixedPointNotConverged(
            f"measure flow residual {residuals[-1]:.3e} after {cfg.max_iter} iterations", residuals
        )
    Z = None
    if want_z:
        _, _, Z = solve_bvp(model, MeasureFlow(X_in), times, xi, tol=cfg.bvp_tol, X0=X, Y0=Y, want_z=True)
    return EquilibriumSolution(
        model=model, T=float(T), dt=float(times[1] - times[0]), beta=0.0, times=times, rho0=rho0,
        X_paths=X, Y_paths=Y, Z_paths=Z, grid=None, residuals=residuals, config=cfg,
        solver="particles", info={"damping": theta},
    )
