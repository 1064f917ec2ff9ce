"""Finite-difference HJB/FPK solver in one space dimension (beta >= 0).

HJB, backward in time:  -u_t - beta u_xx + H(x, -u_x, rho_t) = 0,  u(T) = g.
Each step is Crank-Nicolson in time and solved by Newton's method.  The
Hamiltonian is upwinded with the Godunov flux for the convex function
q -> H(x, -q, rho), fed either first-order one-sided differences
(``upwind1``, monotone) or second-order one-sided differences (``upwind2``,
exact on quadratics).  Outside [-L, L] the value function is continued
quadratically, i.e. D_x u is extrapolated linearly.

FPK, forward in time: implicit Euler with the Scharfetter-Gummel flux for
the drift D_p H(x, -u_x, rho_t), conservative with no-flux walls.  It
reduces to the upwind flux when beta = 0.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import exprel

from ..errors import BvpNotConverged, FixedPointNotConverged, InvalidParameters, MassLeak
from ..measures import EmpiricalMeasure, MeasureFlow, _w1d, resample
from ..models import MfgModel, momentum_at_rest
from .core import EquilibriumSolution, GridField, SolverConfig, time_grid

logger = logging.getLogger(__name__)

LEAK_FRACTION = 1e-3

# ghost values u_{-1}, u_{-2} as combinations of (u_0, u_1, u_2)
_GHOST = {1: np.array([3.0, -3.0, 1.0]), 2: np.array([6.0, -8.0, 3.0])}


def _extend(u: np.ndarray) -> np.ndarray:
    left = [_GHOST[2] @ u[:3], _GHOST[1] @ u[:3]]
    right = [_GHOST[1] @ u[-1:-4:-1], _GHOST[2] @ u[-1:-4:-1]]
    return np.concatenate([left, u, right])


def _one_sided(u: np.ndarray, h: float, scheme: str) -> tuple[np.ndarray, np.ndarray, dict, dict]:
    """Backward/forward derivatives and their stencils (offset -> weight)."""
    ue = _extend(u)
    c = ue[2:-2]
    if scheme == "upwind2":
        qm = (3 * c - 4 * ue[1:-3] + ue[:-4]) / (2 * h)
        qp = (-3 * c + 4 * ue[3:-1] - ue[4:]) / (2 * h)
        sm = {0: 1.5 / h, -1: -2.0 / h, -2: 0.5 / h}
        sp = {0: -1.5 / h, 1: 2.0 / h, 2: -0.5 / h}
    else:
        qm = (c - ue[1:-3]) / h
        qp = (ue[3:-1] - c) / h
        sm = {0: 1.0 / h, -1: -1.0 / h}
        sp = {0: -1.0 / h, 1: 1.0 / h}
    return qm, qp, sm, sp


def _banded(J: int, coeffs: dict[int, np.ndarray]) -> np.ndarray:
    """(5, J) band storage of sum_off diag(coeffs[off]) shifted by off, ghosts folded in."""
    ab = np.zeros((5, J))
    rows = np.arange(J)
    for off, c in coeffs.items():
        c = np.broadcast_to(c, (J,))
        cols = rows + off
        ok = (cols >= 0) & (cols < J)
        ab[2 - off, cols[ok]] += c[ok]
        for r in rows[~ok]:
            col = cols[r]
            if col < 0:
                targets, w = np.array([0, 1, 2]), _GHOST[-col]
            else:
                targets, w = np.array([J - 1, J - 2, J - 3]), _GHOST[col - J + 1]
            ab[2 + r - targets, targets] += c[r] * w
    return ab


class _Hamiltonian1D:
    """Godunov numerical Hamiltonian for K(q) = H(x, -q, rho)."""

    def __init__(self, model: MfgModel, xs: np.ndarray, h: float, scheme: str):
        self.model, self.X, self.h, self.scheme = model, xs[:, None], h, scheme

    def __call__(self, u: np.ndarray, rho, qstar: np.ndarray, want_jac: bool):
        m = self.model
        qm, qp, sm, sp = _one_sided(u, self.h, self.scheme)
        a = np.maximum(qm, qstar)
        b = np.minimum(qp, qstar)
        Ka = m.hamiltonian(self.X, -a[:, None], rho)
        Kb = m.hamiltonian(self.X, -b[:, None], rho)
        use_a = Ka >= Kb
        val = np.where(use_a, Ka, Kb)
        if not want_jac:
            return val, None
        dKa = -m.grad_p_H(self.X, -a[:, None], rho)[:, 0]
        dKb = -m.grad_p_H(self.X, -b[:, None], rho)[:, 0]
        wa = np.where(use_a & (qm > qstar), dKa, 0.0)
        wb = np.where(~use_a & (qp < qstar), dKb, 0.0)
        jac: dict[int, np.ndarray] = {}
        for off, s in sm.items():
            jac[off] = jac.get(off, 0.0) + wa * s
        for off, s in sp.items():
            jac[off] = jac.get(off, 0.0) + wb * s
        return val, jac


def _laplacian(u: np.ndarray, h: float) -> np.ndarray:
    ue = _extend(u)
    return (ue[3:-1] - 2 * ue[2:-2] + ue[1:-3]) / h**2


def hjb_backward(model, xs, times, flow: MeasureFlow, beta: float, scheme: str, tol: float = 1e-12):
    """Backward Crank-Nicolson sweep; returns u with shape (K, J)."""
    K, J = times.size, xs.size
    h = float(xs[1] - xs[0])
    dt = float(times[1] - times[0])
    ham = _Hamiltonian1D(model, xs, h, scheme)
    X = xs[:, None]
    u = np.empty((K, J))
    rho_T = flow[K - 1]
    u[-1] = model.final_cost_g(X, rho_T)
    lap = {-1: np.full(J, 1 / h**2), 0: np.full(J, -2 / h**2), 1: np.full(J, 1 / h**2)}
    qs_next = -momentum_at_rest(model, X, rho_T)[:, 0]
    H_next, _ = ham(u[-1], rho_T, qs_next, False)
    for n in range(K - 2, -1, -1):
        rho_n = flow[n]
        qs = -momentum_at_rest(model, X, rho_n)[:, 0]
        un1 = u[n + 1]
        rhs_const = -un1 / dt - 0.5 * beta * _laplacian(un1, h) + 0.5 * H_next
        v = un1.copy()
        scale = 1.0 + np.max(np.abs(un1))
        for it in range(30):
            Hv, jac = ham(v, rho_n, qs, True)
            F = v / dt - 0.5 * beta * _laplacian(v, h) + 0.5 * Hv + rhs_const
            coeffs = {off: 0.5 * c for off, c in jac.items()}
            coeffs[0] = coeffs.get(0, 0.0) + 1.0 / dt
            for off, c in lap.items():
                coeffs[off] = coeffs.get(off, 0.0) - 0.5 * beta * c
            delta = solve_banded((2, 2), _banded(J, coeffs), -F)
            v = v + delta
            if np.max(np.abs(delta)) <= tol * scale:
                break
        else:
            raise BvpNotConverged(f"HJB Newton step failed at t={times[n]:.4g}")
        u[n] = v
        H_next, _ = ham(v, rho_n, qs, False)
    return u


def _bernoulli(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / exprel(z)


def face_drift(model, xs, u_row, rho) -> np.ndarray:
    h = float(xs[1] - xs[0])
    xf = 0.5 * (xs[1:] + xs[:-1])[:, None]
    qf = (u_row[1:] - u_row[:-1]) / h
    return model.grad_p_H(xf, -qf[:, None], rho)[:, 0]


def fpk_forward(model, xs, times, u: np.ndarray, flow: MeasureFlow, mass0: np.ndarray, beta: float):
    """Implicit Euler / Scharfetter-Gummel sweep; returns masses with shape (K, J)."""
    K, J = u.shape
    h = float(xs[1] - xs[0])
    dt = float(times[1] - times[0])
    mass = np.empty((K, J))
    mass[0] = mass0
    for n in range(K - 1):
        b = face_drift(model, xs, u[n + 1], flow[n + 1])
        if beta > 0:
            z = b * h / beta
            out_l = beta / h**2 * _bernoulli(-z)  # coefficient of m_j in the face flux
            in_r = beta / h**2 * _bernoulli(z)    # coefficient of m_{j+1}
        else:
            out_l = np.maximum(b, 0.0) / h
            in_r = -np.minimum(b, 0.0) / h
        # flux_{j+1/2} = out_l m_j - in_r m_{j+1};  dm_j/dt = flux_{j-1/2} - flux_{j+1/2}
        ab = np.zeros((3, J))
        ab[1, :] = 1.0
        ab[1, :-1] += dt * out_l
        ab[1, 1:] += dt * in_r
        ab[0, 1:] = -dt * in_r
        ab[2, :-1] = -dt * out_l
        m = solve_banded((1, 1), ab, mass[n])
        mass[n + 1] = np.clip(m, 0.0, None) / max(np.clip(m, 0.0, None).sum(), 1e-300)
    return mass


def project_to_grid(rho0: EmpiricalMeasure, xs: np.ndarray) -> np.ndarray:
    """Node masses of rho0: exact on nodes, linear (cloud-in-cell) otherwise."""
    h = float(xs[1] - xs[0])
    x = rho0.points[:, 0]
    if np.any(x < xs[0] - 1e-12) or np.any(x > xs[-1] + 1e-12):
        raise MassLeak("initial measure has mass outside the grid")
    s = (np.clip(x, xs[0], xs[-1]) - xs[0]) / h
    j = np.clip(np.floor(s + 1e-9).astype(int), 0, xs.size - 2)
    w = np.clip(s - j, 0.0, 1.0)
    mass = np.zeros(xs.size)
    np.add.at(mass, j, rho0.weights * (1 - w))
    np.add.at(mass, j + 1, rho0.weights * w)
    return mass / mass.sum()


def make_mesh(cfg: SolverConfig) -> np.ndarray:
    J = int(round(2 * cfg.L / cfg.mesh)) + 1
    return np.linspace(-cfg.L, cfg.L, J)


def _leak(xs: np.ndarray, mass: np.ndarray, L: float) -> float:
    outside = np.abs(xs) > 0.5 * L + 1e-12
    return float(np.max(mass[:, outside].sum(axis=1)))


class _Anderson:
    """Anderson mixing on the flattened density flow.

    Translation-invariant couplings leave the plain Picard map with a
    nearly neutral mode (the mean), so damped iteration crawls.  The
    extrapolated iterate is clipped to nonnegative masses and renormalised
    node by node; if that fails the damped step is used instead.
    """

    def __init__(self, depth: int):
        self.depth = depth
        self.xs: list[np.ndarray] = []
        self.fs: list[np.ndarray] = []

    def step(self, x: np.ndarray, gx: np.ndarray, theta: float) -> np.ndarray:
        damped = (1 - theta) * x + theta * gx
        self.xs.append(x.ravel().copy())
        self.fs.append((gx - x).ravel())
        self.xs, self.fs = self.xs[-(self.depth + 1):], self.fs[-(self.depth + 1):]
        if len(self.fs) < 2:
            return damped
        dF = np.stack([b - a for a, b in zip(self.fs[:-1], self.fs[1:])], axis=1)
        dX = np.stack([b - a for a, b in zip(self.xs[:-1], self.xs[1:])], axis=1)
        coef, *_ = np.linalg.lstsq(dF, self.fs[-1], rcond=1e-10)
        new = (self.xs[-1] + theta * self.fs[-1] - (dX + theta * dF) @ coef).reshape(x.shape)
        new = np.clip(new, 0.0, None)
        tot = new.sum(axis=1, keepdims=True)
        if not np.all(np.isfinite(new)) or np.any(tot <= 0):
            self.xs, self.fs = [], []
            return damped
        return new / tot


def solve_equilibrium_grid(model: MfgModel, rho0: EmpiricalMeasure, T: float, cfg: SolverConfig,
                           *, diagnostics: bool = True) -> EquilibriumSolution:
    """Damped fixed point on the density flow around HJB/FPK sweeps (d = 1)."""
    if model.dim != 1 or rho0.dim != 1:
        raise InvalidParameters("the grid solver is one-dimensional")
    if T <= 0:
        raise InvalidParameters("horizon must be positive")
    beta = float(model.beta)
    xs = make_mesh(cfg)
    times = time_grid(T, cfg.dt)
    K = times.size
    mass0 = project_to_grid(rho0, xs)
    if _leak(xs, mass0[None, :], cfg.L) >= LEAK_FRACTION:
        raise MassLeak("initial measure already leaves [-L/2, L/2]")
    theta = cfg.damping if cfg.damping is not None else model.recommended_damping
    mass_in = np.broadcast_to(mass0, (K, xs.size)).copy()
    residuals: list[float] = []
    xcol = xs.copy()
    u = mass = None
    accel = _Anderson(depth=10)
    for it in range(cfg.max_iter):
        flow = MeasureFlow(xs[:, None], mass_in)
        u = hjb_backward(model, xs, times, flow, beta, cfg.scheme)
        mass = fpk_forward(model, xs, times, u, flow, mass0, beta)
        r = max(_w1d(xcol, mass[k], xcol, mass_in[k], 2) for k in range(K))
        residuals.append(r)
        logger.debug("grid outer iteration %d: residual %.3e", it, r)
        if r < cfg.tolerance("grid"):
            break
        mass_in = accel.step(mass_in, mass, theta)
    else:
        raise FixedPointNotConverged(
            f"density flow residual {residuals[-1]:.3e} after {cfg.max_iter} iterations", residuals
        )
    leak = _leak(xs, mass, cfg.L)
    if leak >= LEAK_FRACTION:
        raise MassLeak(f"{leak:.2%} of the mass leaves [-L/2, L/2]")
    grid = GridField(xs=xs, u=u, mass=mass)
    sol = EquilibriumSolution(
        model=model, T=float(T), dt=float(times[1] - times[0]), beta=beta, times=times, rho0=rho0,
        X_paths=np.zeros((K, 0, 1)), Y_paths=np.zeros((K, 0, 1)), Z_paths=None, grid=grid,
        residuals=residuals, config=cfg, solver="grid", info={"damping": theta, "leak": leak},
    )
    if diagnostics:
        from .agent import propagate_on_grid

        xi = resample(rho0, cfg.N, seed=cfg.seed).points
        X, Y, Z = propagate_on_grid(sol, 0, xi, seed=cfg.seed)
        sol.X_paths, sol.Y_paths, sol.Z_paths = X, Y, Z
    return sol
