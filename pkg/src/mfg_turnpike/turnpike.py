"""Long-horizon diagnostics: gap functions, decay fits, ergodic constants.

Two trajectory bundles on a common sample space give the gap functions

    phi(s) = E[(X^1_s - X^2_s).(Y^1_s - Y^2_s)],
    Phi(s) = E|X^1_s - X^2_s|^2 + E|Y^1_s - Y^2_s|^2,

whose exponential decay away from the endpoints is the turnpike property.
The ergodic part tracks lambda^T, the mean running cost over [T/2, T/2 + 1],
and the normalised value u^T(t, x) - lambda^T (T - t) across horizons.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import least_squares

from .errors import HorizonTooShort, IncompatibleStudies, InvalidParameters, MisalignedBundles, WindowTooShort
from .measures import ASSIGNMENT_CAP, EmpiricalMeasure, _w1d, wasserstein
from .models import MfgModel, running_cost_along
from .solve.agent import solve_agent_bvp, value_function_along
from .solve.core import EquilibriumSolution, SolverConfig, TrajectoryBundle
from .verify import _pool_map, workers_from_env

LOG_FLOOR = 1e-300
MIN_FIT_NODES = 6


# ---------------------------------------------------------------------------
# gap functions
# ---------------------------------------------------------------------------
@dataclass
class GapFunctions:
    times: np.ndarray
    phi: np.ndarray
    Phi: np.ndarray
    w2_gap: np.ndarray
    w1_gap: np.ndarray
    provenance: dict = field(default_factory=dict)

    def to_columns(self) -> dict[str, np.ndarray]:
        return {"t": self.times, "phi": self.phi, "Phi": self.Phi, "w2": self.w2_gap}


def _law_distance(A: np.ndarray, B: np.ndarray, p: int) -> tuple[float, str]:
    if A.shape[1] == 1:
        w = np.full(A.shape[0], 1.0 / A.shape[0])
        v = np.full(B.shape[0], 1.0 / B.shape[0])
        return _w1d(A[:, 0], w, B[:, 0], v, p), "exact"
    if A.shape[0] == B.shape[0] and A.shape[0] <= ASSIGNMENT_CAP:
        return wasserstein(EmpiricalMeasure._fast(A), EmpiricalMeasure._fast(B), p), "exact"
    # synchronous coupling: an upper bound
    diff = np.linalg.norm(A - B, axis=1)
    return float(np.mean(diff**p) ** (1.0 / p)), "synchronous_bound"


def gap_functions(b1: TrajectoryBundle, b2: TrajectoryBundle) -> GapFunctions:
    """Exact empirical gap functions of two synchronously coupled bundles."""
    if b1.times.shape != b2.times.shape or not np.allclose(b1.times, b2.times, rtol=0, atol=1e-12):
        raise MisalignedBundles("bundles live on different time grids")
    if b1.X.shape != b2.X.shape or b1.Y.shape != b2.Y.shape:
        raise MisalignedBundles(f"bundle shapes differ: {b1.X.shape} vs {b2.X.shape}")
    if b1.coupling != b2.coupling:
        raise MisalignedBundles("bundles use different couplings")
    dX, dY = b1.X - b2.X, b1.Y - b2.Y
    phi = np.mean(np.sum(dX * dY, -1), -1)
    Phi = np.mean(np.sum(dX * dX, -1), -1) + np.mean(np.sum(dY * dY, -1), -1)
    K = b1.times.size
    w2 = np.empty(K)
    w1 = np.empty(K)
    method = "exact"
    for k in range(K):
        w2[k], method = _law_distance(b1.X[k], b2.X[k], 2)
        w1[k], _ = _law_distance(b1.X[k], b2.X[k], 1)
    return GapFunctions(
        times=b1.times.copy(), phi=phi, Phi=Phi, w2_gap=w2, w1_gap=w1,
        provenance={"first": b1.label, "second": b2.label, "coupling": b1.coupling, "w2_method": method},
    )


@dataclass
class InequalityReport:
    min_slack_phivarphi: float
    min_slack_chain: float
    required_C: float | None
    integral_C: float
    tolerance: float
    violations: list[int]
    passed: bool
    same_rho: bool
    c0: float

    def to_dict(self) -> dict:
        return asdict(self)


def _integral_constant(times, Phi, extra, max_nodes: int = 200) -> float:
    """Smallest C with Phi(s1) <= Phi(s2) + C int_{s1}^{s2} (Phi + extra) for all s1 < s2."""
    step = max(1, int(math.ceil(times.size / max_nodes)))
    idx = np.arange(0, times.size, step)
    t, f = times[idx], Phi[idx]
    cum = np.concatenate([[0.0], cumulative_trapezoid(Phi + extra, times)])[idx]
    num = f[:, None] - f[None, :]
    den = cum[None, :] - cum[:, None]
    upper = np.triu(np.ones_like(num, dtype=bool), 1)
    ok = upper & (den > 0)
    if not np.any(ok):
        return 0.0
    ratios = np.where(ok, num / np.where(ok, den, 1.0), -np.inf)
    return float(max(0.0, np.max(ratios)))


def check_differential_inequality(g: GapFunctions, c0: float, same_rho: bool, *,
                                  C: float | None = None, tol: float | None = None) -> InequalityReport:
    """Check the joint differential inequality satisfied by (phi, Phi).

    Always: c0|phi| <= (c0/2) Phi.  With ``same_rho`` (one flow, or laws
    matched at the start) the chain continues as c0 Phi <= phi'; otherwise
    as (c0/2) Phi <= phi' + C/(2 c0) W1^2 and the report gives the smallest
    C that makes it hold (or tests a supplied ``C``).  phi' uses centred
    differences at interior nodes.  The default tolerance is
    10 dt max(Phi).
    """
    t, phi, Phi = g.times, g.phi, g.Phi
    dt = float(t[1] - t[0]) if t.size > 1 else 1.0
    tol = 10.0 * dt * max(float(np.max(Phi)), 0.0) if tol is None else tol
    s1 = c0 * Phi - 2 * c0 * np.abs(phi) if same_rho else 0.5 * c0 * Phi - c0 * np.abs(phi)
    dphi = np.gradient(phi, t)
    inner = slice(1, t.size - 1)
    required = None
    if same_rho:
        s2 = dphi - c0 * Phi
        extra = np.zeros_like(Phi)
    else:
        w1sq = g.w1_gap**2
        deficit = 0.5 * c0 * Phi - dphi
        if C is None:
            pos = (w1sq > 0) & (deficit > 0)
            req = 2 * c0 * deficit[inner][pos[inner]] / w1sq[inner][pos[inner]] if c0 > 0 else np.array([])
            required = float(np.max(req)) if req.size else 0.0
            Cuse = required
        else:
            Cuse = C
        s2 = dphi + (Cuse / (2 * c0) if c0 > 0 else 0.0) * w1sq - 0.5 * c0 * Phi
        extra = g.w2_gap**2
    s1i, s2i = s1[inner], s2[inner]
    bad = np.nonzero((s1i < -tol) | (s2i < -tol))[0] + 1
    return InequalityReport(
        min_slack_phivarphi=float(np.min(s1i, initial=np.inf)),
        min_slack_chain=float(np.min(s2i, initial=np.inf)),
        required_C=required,
        integral_C=_integral_constant(t, Phi, extra),
        tolerance=float(tol),
        violations=[int(i) for i in bad],
        passed=bool(bad.size == 0),
        same_rho=bool(same_rho),
        c0=float(c0),
    )


# ---------------------------------------------------------------------------
# decay fits
# ---------------------------------------------------------------------------
@dataclass
class DecayReport:
    shape: str
    rate: float
    amplitude: float
    window: tuple[float, float]
    bound: float | None
    passed: bool
    residual: float
    n_nodes: int
    clipped: bool
    slack: float
    rate_forward: float | None = None
    rate_backward: float | None = None
    amplitude_backward: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def default_window(T: float, dt: float, shape: str) -> tuple[float, float]:
    """Boundary layers of width max(1, 5 dt) are excluded; see module docs for the fit windows."""
    b = max(1.0, 5.0 * dt)
    if shape == "forward":
        return (b, 0.75 * T)
    if shape == "backward":
        return (0.25 * T, T - b)
    if shape == "two_sided":
        return (0.25 * T, 0.75 * T)
    raise InvalidParameters(f"unknown shape {shape!r}")


def fit_decay(times, values, window: tuple[float, float] | None = None, shape: str = "forward", *,
              bound: float | None = None, slack: float = 0.15, max_residual: float = 0.1,
              T: float | None = None) -> DecayReport:
    """Fit an exponential decay to a positive series on a window.

    ``forward``: v = A e^{-r t};  ``backward``: v = A e^{-r (T - t)};
    ``two_sided``: v = A e^{-r1 t} + B e^{-r2 (T - t)}, refined by nonlinear
    least squares on log values starting from one-sided fits of the two
    halves (``rate`` is then the smaller of the two).  Passes iff
    rate >= bound (1 - slack) and the RMS log residual <= ``max_residual``.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    T = float(t[-1]) if T is None else float(T)
    if window is None:
        window = default_window(T, float(t[1] - t[0]), shape)
    a, b = window
    sel = (t >= a - 1e-12) & (t <= b + 1e-12)
    n = int(np.sum(sel))
    if n < MIN_FIT_NODES:
        raise WindowTooShort(f"{n} nodes in [{a}, {b}], need {MIN_FIT_NODES}")
    tw, vw = t[sel], v[sel]
    clipped = bool(np.any(vw <= LOG_FLOOR))
    lv = np.log(np.maximum(vw, LOG_FLOOR))
    extra: dict = {}
    if shape in ("forward", "backward"):
        s = tw if shape == "forward" else T - tw
        slope, icpt = np.polyfit(s, lv, 1)
        rate, amp = -float(slope), float(np.exp(icpt))
        resid = lv - (icpt + slope * s)
    elif shape == "two_sided":
        mid = 0.5 * (a + b)
        lo, hi = tw <= mid, tw >= mid
        if lo.sum() < 2 or hi.sum() < 2:
            raise WindowTooShort("two-sided fit needs both halves populated")
        sf, cf = np.polyfit(tw[lo], lv[lo], 1)
        sb, cb = np.polyfit(T - tw[hi], lv[hi], 1)
        x0 = np.array([cf, max(-sf, 1e-6), cb, max(-sb, 1e-6)])

        def model(p, tt):
            return np.logaddexp(p[0] - p[1] * tt, p[2] - p[3] * (T - tt))

        sol = least_squares(lambda p: model(p, tw) - lv, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
        cf, rf, cb, rb = sol.x
        resid = model(sol.x, tw) - lv
        rate, amp = float(min(rf, rb)), float(np.exp(cf))
        extra = {"rate_forward": float(rf), "rate_backward": float(rb), "amplitude_backward": float(np.exp(cb))}
    else:
        raise InvalidParameters(f"unknown shape {shape!r}")
    residual = float(np.sqrt(np.mean(resid**2)))
    target = 0.0 if bound is None else bound * (1.0 - slack)
    passed = bool(rate >= target and residual <= max_residual)
    return DecayReport(shape=shape, rate=rate, amplitude=amp, window=(float(a), float(b)), bound=bound,
                       passed=passed, residual=residual, n_nodes=n, clipped=clipped, slack=slack, **extra)


# ---------------------------------------------------------------------------
# localized gradients and ergodic quantities
# ---------------------------------------------------------------------------
def _check_compatible(e1: EquilibriumSolution, e2: EquilibriumSolution):
    if e1.times.shape != e2.times.shape or not np.allclose(e1.times, e2.times, rtol=0, atol=1e-12):
        raise MisalignedBundles("equilibria use different time grids")
    if e1.model.dynamics_identity() != e2.model.dynamics_identity():
        raise IncompatibleStudies("equilibria belong to different Hamiltonians")


def gradient_at_probes(eq: EquilibriumSolution, t: float, probe_xs) -> np.ndarray:
    """D_x u(t, x) at probe points, read from agents started at delta_x."""
    xs = np.asarray(probe_xs, dtype=float).reshape(-1, eq.model.dim)
    if eq.grid is not None:
        return eq.grid.gradient_at(eq.node(t), xs[:, 0])[:, None]
    b = solve_agent_bvp(eq.model, eq, t, EmpiricalMeasure._fast(xs))
    return -b.Y[0]


def gradient_gap_field(e1: EquilibriumSolution, e2: EquilibriumSolution, t: float, probe_xs) -> np.ndarray:
    """|D_x u^1(t,x) - D_x u^2(t,x)|^2 / (1 + |x|^2) at each probe."""
    _check_compatible(e1, e2)
    xs = np.asarray(probe_xs, dtype=float).reshape(-1, e1.model.dim)
    diff = gradient_at_probes(e1, t, xs) - gradient_at_probes(e2, t, xs)
    return np.sum(diff**2, -1) / (1.0 + np.sum(xs**2, -1))


def running_cost_trace(model: MfgModel, eq: EquilibriumSolution) -> np.ndarray:
    """E L(X_s, D_pH(X_s, Y_s, rho_s), rho_s) at every node.

    On the grid the expectation is taken against the FPK density with
    Y = -D_x u; for particles it is the empirical mean along the paths.
    """
    K = eq.times.size
    if eq.grid is not None:
        g = eq.grid
        xs = g.xs[:, None]
        out = np.empty(K)
        for k in range(K):
            y = -g.gradient(k)[:, None]
            out[k] = g.mass[k] @ running_cost_along(model, xs, y, eq.rho(k))
        return out
    flow = eq.rho_flow
    return np.array([np.mean(running_cost_along(model, eq.X_paths[k], eq.Y_paths[k], flow[k])) for k in range(K)])


def terminal_cost_mean(model: MfgModel, eq: EquilibriumSolution) -> float:
    K = eq.times.size
    if eq.grid is not None:
        g = eq.grid
        return float(g.mass[-1] @ model.final_cost_g(g.xs[:, None], eq.rho(K - 1)))
    return float(np.mean(model.final_cost_g(eq.X_paths[-1], eq.rho(K - 1))))


def lambda_T(model: MfgModel, equilibrium: EquilibriumSolution) -> float:
    """Mean running cost integrated over [T/2, T/2 + 1] (trapezoidal rule)."""
    eq = equilibrium
    if eq.T < 2:
        raise HorizonTooShort(f"T = {eq.T} < 2")
    cum = np.concatenate([[0.0], cumulative_trapezoid(running_cost_trace(model, eq), eq.times)])
    a, b = np.interp([eq.T / 2, eq.T / 2 + 1], eq.times, cum)
    return float(b - a)


def psi_trace(model: MfgModel, eq: EquilibriumSolution, lam: float) -> np.ndarray:
    """Psi^T(t) = E[u^T(t, X_t)] - lam (T - t), via the cost-to-go along the flow."""
    ell = running_cost_trace(model, eq)
    to_go = np.concatenate([[0.0], cumulative_trapezoid(ell[::-1], -eq.times[::-1])])[::-1]
    return to_go + terminal_cost_mean(model, eq) - lam * (eq.T - eq.times)


def psi_envelope_constant(times: np.ndarray, psi: np.ndarray, c0: float) -> float:
    """Smallest C with |dPsi/dt| <= C (e^{-c0 T/2} + e^{-c0 t} + e^{-c0 (T - t)}) at interior nodes."""
    T = float(times[-1])
    d = np.abs(np.gradient(psi, times))[1:-1]
    t = times[1:-1]
    env = np.exp(-c0 * T / 2) + np.exp(-c0 * t) + np.exp(-c0 * (T - t))
    return float(np.max(d / env))


def l1l2_ratios(model: MfgModel, e1: EquilibriumSolution, e2: EquilibriumSolution,
                intervals: Sequence[tuple[float, float]]) -> np.ndarray:
    """|Delta of E int L| / int sqrt(Phi) over each subinterval, for two equilibria."""
    _check_compatible(e1, e2)
    g = gap_functions(e1.bundle("1"), e2.bundle("2"))
    l1 = np.concatenate([[0.0], cumulative_trapezoid(running_cost_trace(model, e1), e1.times)])
    l2 = np.concatenate([[0.0], cumulative_trapezoid(running_cost_trace(e2.model, e2), e2.times)])
    sq = np.concatenate([[0.0], cumulative_trapezoid(np.sqrt(g.Phi), g.times)])
    out = []
    for a, b in intervals:
        da = np.interp([a, b], e1.times, l1 - l2)
        ds = np.interp([a, b], g.times, sq)
        den = ds[1] - ds[0]
        out.append(abs(da[1] - da[0]) / den if den > 0 else 0.0)
    return np.array(out)


# ---------------------------------------------------------------------------
# ergodic study
# ---------------------------------------------------------------------------
def _quantiles(mu: EmpiricalMeasure, n: int = 64) -> list[float]:
    levels = (np.arange(n) + 0.5) / n
    order = np.argsort(mu.points[:, 0], kind="stable")
    cdf = np.cumsum(mu.weights[order])
    idx = np.minimum(np.searchsorted(cdf, levels), mu.size - 1)
    return mu.points[order, 0][idx].tolist()


def measure_fingerprint(mu: EmpiricalMeasure) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(mu.points).tobytes())
    h.update(np.ascontiguousarray(mu.weights).tobytes())
    return h.hexdigest()[:16]


def _log_rate(xs: np.ndarray, gaps: np.ndarray) -> float | None:
    ok = gaps > 0
    if ok.sum() < 2:
        return None
    slope, _ = np.polyfit(xs[ok], np.log(gaps[ok]), 1)
    return float(-slope)


@dataclass
class ErgodicReport:
    horizons: list[float]
    lambda_T: list[float]
    lambda_limit: float
    lambda_error: float
    lambda_gaps: list[float]
    lambda_ratios: list[float]
    lambda_rate: float | None
    probe_times: list[float]
    probe_xs: list[float]
    tilde_u: list[list[list[float]]]
    u_limit: list[list[float]]
    u_error: list[list[float]]
    u_rate: float | None
    du: list[list[list[float]]]
    du_limit: list[list[float]]
    du_error: list[list[float]]
    du_rate: float | None
    rho_gaps: list[float]
    rho_rate: float | None
    rho_probe_quantiles: list[list[float]]
    rho_error: float
    tilde_u_growth: list[float]
    psi_envelope: list[float]
    psi_traces: list[dict]
    model_identity: dict
    dynamics_identity: dict
    rho0_fingerprint: str
    solver: str
    c0: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ErgodicReport":
        return cls(**d)


def _solve(model, rho0, T, cfg, solver):
    from .solve import solve_equilibrium_grid, solve_equilibrium_particles

    if solver == "grid" or (solver == "auto" and model.beta > 0):
        return solve_equilibrium_grid(model, rho0, T, cfg)
    return solve_equilibrium_particles(model, rho0, T, cfg)


def _horizon_record(model, rho0, T, cfg, solver, probe_times, probe_xs):
    eq = _solve(model, rho0, T, cfg, solver)
    lam = lambda_T(model, eq)
    xs = np.asarray(probe_xs, dtype=float)
    ut, du = [], []
    for t in probe_times:
        k = eq.node(t)
        if eq.grid is not None:
            u = eq.grid.value_at(k, xs)
        else:
            u = np.array([value_function_along(model, eq, t, [x]) for x in xs])
        ut.append((u - lam * (T - t)).tolist())
        du.append(gradient_at_probes(eq, t, xs[:, None])[:, 0].tolist())
    psi = psi_trace(model, eq, lam)
    qs = [_quantiles(eq.rho(eq.node(t))) for t in probe_times]
    early = eq.times <= T / 8 + 1e-12
    laws = [eq.rho(k) for k in np.nonzero(early)[0]]
    return {"T": T, "lambda": lam, "tilde_u": ut, "du": du, "psi": psi, "times": eq.times,
            "quantiles": qs, "early_laws": laws, "solver": eq.solver, "dt": eq.dt}


def ergodic_study(model: MfgModel, rho0: EmpiricalMeasure, horizons: Sequence[float],
                  probes: dict | tuple, cfg: SolverConfig, *, solver: str = "auto",
                  c0: float | None = None, workers: int | None = None) -> ErgodicReport:
    """Solve at each horizon and measure how the normalised objects settle.

    ``probes`` is ``{"times": [...], "xs": [...]}`` (d = 1) with every probe
    time at most min(horizons)/8.  The limits are the values at the largest
    horizon; the error bars are the last Cauchy gaps.
    """
    horizons = sorted(float(T) for T in horizons)
    if len(horizons) < 2:
        raise InvalidParameters("an ergodic study needs at least two horizons")
    if horizons[0] < 2:
        raise HorizonTooShort(f"T = {horizons[0]} < 2")
    if model.dim != 1:
        raise InvalidParameters("ergodic studies are implemented in d = 1")
    ptimes = [float(t) for t in (probes["times"] if isinstance(probes, dict) else probes[0])]
    pxs = [float(x) for x in (probes["xs"] if isinstance(probes, dict) else probes[1])]
    if max(ptimes) > horizons[0] / 8 + 1e-12:
        raise InvalidParameters("probe times must lie in [0, min(T)/8]")
    recs = _pool_map(lambda T: _horizon_record(model, rho0, T, cfg, solver, ptimes, pxs),
                     horizons, workers or workers_from_env())
    Ts = np.array(horizons)
    lam = np.array([r["lambda"] for r in recs])
    lam_gaps = np.abs(np.diff(lam))
    ratios = (lam_gaps[1:] / np.where(lam_gaps[:-1] > 0, lam_gaps[:-1], np.nan)).tolist()
    tu = np.array([r["tilde_u"] for r in recs])       # (H, P_t, P_x)
    du = np.array([r["du"] for r in recs])
    tu_gaps = np.max(np.abs(np.diff(tu, axis=0)), axis=(1, 2))
    du_gaps = np.max(np.abs(np.diff(du, axis=0)), axis=(1, 2))
    rho_gaps = []
    for r1, r2 in zip(recs[:-1], recs[1:]):
        n = min(len(r1["early_laws"]), len(r2["early_laws"]))
        gaps = [_law_gap(r1["early_laws"][k], r2["early_laws"][k]) for k in range(n)]
        rho_gaps.append(float(max(gaps)) if gaps else 0.0)
    rho_gaps = np.array(rho_gaps)
    xs = np.array(pxs)
    growth = [float(np.max(np.abs(tu[h]) / (1 + xs[None, :] ** 2))) for h in range(len(horizons))]
    psi_env = [psi_envelope_constant(r["times"], r["psi"], c0) if c0 else math.nan for r in recs]
    psi_traces = []
    for r in recs:
        stride = max(1, r["times"].size // 400)
        psi_traces.append({"T": r["T"], "t": r["times"][::stride].tolist(), "psi": r["psi"][::stride].tolist()})
    last_q = recs[-1]["quantiles"]
    return ErgodicReport(
        horizons=horizons, lambda_T=lam.tolist(), lambda_limit=float(lam[-1]),
        lambda_error=float(lam_gaps[-1]), lambda_gaps=lam_gaps.tolist(), lambda_ratios=ratios,
        lambda_rate=_log_rate(Ts[:-1], lam_gaps),
        probe_times=ptimes, probe_xs=pxs, tilde_u=tu.tolist(),
        u_limit=tu[-1].tolist(), u_error=np.abs(tu[-1] - tu[-2]).tolist(), u_rate=_log_rate(Ts[:-1], tu_gaps),
        du=du.tolist(), du_limit=du[-1].tolist(), du_error=np.abs(du[-1] - du[-2]).tolist(),
        du_rate=_log_rate(Ts[:-1], du_gaps),
        rho_gaps=rho_gaps.tolist(), rho_rate=_log_rate(Ts[:-1], rho_gaps),
        rho_probe_quantiles=last_q, rho_error=float(rho_gaps[-1]),
        tilde_u_growth=growth, psi_envelope=psi_env, psi_traces=psi_traces,
        model_identity=model.identity(), dynamics_identity=model.dynamics_identity(),
        rho0_fingerprint=measure_fingerprint(rho0), solver=recs[-1]["solver"], c0=c0,
    )


def _law_gap(a: EmpiricalMeasure, b: EmpiricalMeasure) -> float:
    return _w1d(a.points[:, 0], a.weights, b.points[:, 0], b.weights, 2)


@dataclass
class UniquenessReport:
    lambda_gap: float
    lambda_tolerance: float
    lambda_ok: bool
    rho_gap: float
    rho_tolerance: float
    rho_ok: bool
    u_variation: list[float]
    u_range: list[float]
    u_ok: bool
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def check_uniqueness_limits(study1: ErgodicReport, study2: ErgodicReport, *, u_rel_tol: float = 0.02,
                            rho_abs_tol: float = 1e-3) -> UniquenessReport:
    """Same ergodic constant, same limiting law, value functions equal up to a constant."""
    if study1.dynamics_identity != study2.dynamics_identity:
        raise IncompatibleStudies("the studies use different Hamiltonians")
    if study1.rho0_fingerprint != study2.rho0_fingerprint:
        raise IncompatibleStudies("the studies start from different initial laws")
    if study1.probe_times != study2.probe_times or study1.probe_xs != study2.probe_xs:
        raise IncompatibleStudies("the studies use different probes")
    lam_gap = abs(study1.lambda_limit - study2.lambda_limit)
    lam_tol = study1.lambda_error + study2.lambda_error + 1e-9
    q1, q2 = np.array(study1.rho_probe_quantiles), np.array(study2.rho_probe_quantiles)
    rho_gap = float(np.max(np.sqrt(np.mean((q1 - q2) ** 2, axis=1))))
    rho_tol = study1.rho_error + study2.rho_error + rho_abs_tol
    u1, u2 = np.array(study1.u_limit), np.array(study2.u_limit)
    diff = u1 - u2
    variation = (diff.max(axis=1) - diff.min(axis=1)).tolist()
    urange = np.maximum(u1.max(axis=1) - u1.min(axis=1), u2.max(axis=1) - u2.min(axis=1)).tolist()
    u_ok = all(v <= u_rel_tol * r + 1e-12 for v, r in zip(variation, urange))
    lam_ok, rho_ok = lam_gap <= lam_tol, rho_gap <= rho_tol
    return UniquenessReport(
        lambda_gap=lam_gap, lambda_tolerance=lam_tol, lambda_ok=bool(lam_ok), rho_gap=rho_gap,
        rho_tolerance=rho_tol, rho_ok=bool(rho_ok), u_variation=variation, u_range=urange,
        u_ok=bool(u_ok), passed=bool(lam_ok and rho_ok and u_ok),
    )
