"""Hamiltonians, final costs and their analytic derivatives.

Array conventions
-----------------
All callables are vectorised over leading axes: ``x`` and ``p`` have shape
``(..., d)``.  ``mu`` is an :class:`EmpiricalMeasure` or, for the built-in
families, a :class:`MeasureFlow` whose node axis is the first leading axis
of ``x``.

* ``hess_px_H[..., i, j] = d^2 H / dp_i dx_j``
* ``measure_grad_p_H[..., i, j]`` is the derivative of ``(D_p H)_i`` when the
  mass sitting at ``xt`` is displaced in direction ``j``; likewise for
  ``measure_grad_x_H``.
* third-order tensors are stored whole, with the index order following the
  key: ``"ppx"[..., i, j, k] = d^3 H / dp_i dp_j dx_k`` and
  ``"pmu_xt"[..., i, j, k] = d/dxt_k measure_grad_p_H[..., i, j]``.
  Contracting with a vector always uses the last index.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import InvalidParameters, NewtonDiverged
from .measures import EmpiricalMeasure, MeasureFlow, gaussian_sample, moment

logger = logging.getLogger(__name__)

FAMILIES = ("mechanical_quadratic", "nonseparable_C0", "remark_translation", "riccati_lq")
THIRD_KEYS = ("ppx", "pxx", "ppp", "xxx", "pmu_xt", "xmu_xt")
BOUND_NAMES = (
    "px", "pmu", "pp", "ppx", "ppp", "pmu_xt",
    "xx", "xp", "xxx", "xpp", "xxp", "xmu_xt", "xmu",
)


@dataclass(frozen=True)
class DerivativeBounds:
    """Declared uniform bounds on the derivatives of H (operator norms)."""

    px: float = 0.0
    pmu: float = 0.0
    pp: float = 0.0
    ppx: float = 0.0
    ppp: float = 0.0
    pmu_xt: float = 0.0
    xx: float = 0.0
    xp: float = 0.0
    xxx: float = 0.0
    xpp: float = 0.0
    xxp: float = 0.0
    xmu_xt: float = 0.0
    xmu: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class BuiltinModelSpec:
    family: str
    parameters: Mapping[str, float] = field(default_factory=dict)
    beta: float = 0.0
    dim: int = 1

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "parameters": {k: float(v) for k, v in sorted(self.parameters.items())},
            "beta": float(self.beta),
            "dim": int(self.dim),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "BuiltinModelSpec":
        try:
            return cls(
                family=str(d["family"]),
                parameters={str(k): float(v) for k, v in dict(d.get("parameters", {})).items()},
                beta=float(d.get("beta", 0.0)),
                dim=int(d.get("dim", 1)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidParameters(f"malformed model spec: {exc}") from exc


@dataclass(frozen=True, eq=False)
class MfgModel:
    dim: int
    hamiltonian: Callable
    grad_x_H: Callable
    grad_p_H: Callable
    hess_xx_H: Callable
    hess_pp_H: Callable
    hess_px_H: Callable
    measure_grad_p_H: Callable
    measure_grad_x_H: Callable
    final_cost_g: Callable
    grad_x_g: Callable
    hess_xx_g: Callable
    derivative_bounds: DerivativeBounds
    third_derivative_kernels: Mapping[str, Callable] | None = None
    beta: float = 0.0
    name: str = "custom"
    spec: BuiltinModelSpec | None = None
    closed_form_lagrangian: Callable | None = None
    momentum_at_rest: Callable | None = None
    measure_independent: bool = False
    accepts_flow: bool = False
    recommended_damping: float = 1.0
    extras: Mapping[str, float] = field(default_factory=dict)

    def identity(self) -> dict:
        """Serializable description used for provenance and compatibility checks."""
        if self.spec is not None:
            return self.spec.to_dict()
        return {"family": self.name, "parameters": {}, "beta": float(self.beta), "dim": self.dim}

    def dynamics_identity(self) -> dict:
        """Identity of H and beta only (final cost parameters dropped)."""
        ident = self.identity()
        params = {k: v for k, v in ident["parameters"].items() if k not in ("gamma", "z", "g_center")}
        return {**ident, "parameters": params}


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------
def mean_of(mu, lead_shape: tuple[int, ...], dim: int) -> np.ndarray:
    """Mean of ``mu`` shaped to broadcast against arrays with ``lead_shape`` + (d,)."""
    if isinstance(mu, MeasureFlow):
        m = mu.means()
        extra = len(lead_shape) - 1
        if extra < 0:
            raise ValueError("a measure flow needs a leading node axis")
        return m.reshape((m.shape[0],) + (1,) * extra + (dim,))
    return np.asarray(mu.mean(), dtype=float)


def _eye(lead: tuple[int, ...], d: int, scale=1.0) -> np.ndarray:
    e = np.zeros(lead + (d, d))
    idx = np.arange(d)
    e[..., idx, idx] = scale
    return e


def _diag(v: np.ndarray) -> np.ndarray:
    d = v.shape[-1]
    out = np.zeros(v.shape + (d,))
    idx = np.arange(d)
    out[..., idx, idx] = v
    return out


def _diag3(v: np.ndarray) -> np.ndarray:
    d = v.shape[-1]
    out = np.zeros(v.shape + (d, d))
    idx = np.arange(d)
    out[..., idx, idx, idx] = v
    return out


def _lead(x: np.ndarray) -> tuple[int, ...]:
    return x.shape[:-1]


# ---------------------------------------------------------------------------
# quadratic-in-p families: H = |p|^2/2 - f(x, m)
# f(x, m) = (k/2)|x|^2 + a x.m + (e/2)|m|^2, g = (gamma/2)|x - center|^2
# ---------------------------------------------------------------------------
def _quadratic_model(
    dim: int, k: float, a: float, e: float, gamma: float, center: np.ndarray,
    beta: float, name: str, spec: BuiltinModelSpec, damping: float,
) -> MfgModel:
    center = np.asarray(center, dtype=float)

    def f(x, mu):
        m = mean_of(mu, _lead(x), dim)
        return 0.5 * k * np.sum(x * x, -1) + a * np.sum(x * m, -1) + 0.5 * e * np.sum(m * m, -1)

    def H(x, p, mu):
        return 0.5 * np.sum(p * p, -1) - f(x, mu)

    def Hx(x, p, mu):
        m = mean_of(mu, _lead(x), dim)
        return -(k * x + a * m)

    def Hp(x, p, mu):
        return np.array(p, dtype=float, copy=True)

    def Hxx(x, p, mu):
        return _eye(_lead(x), dim, -k)

    def Hpp(x, p, mu):
        return _eye(_lead(x), dim, 1.0)

    def Hpx(x, p, mu):
        return np.zeros(_lead(x) + (dim, dim))

    def Mp(x, p, mu, xt):
        return np.zeros(np.broadcast_shapes(_lead(x), _lead(xt)) + (dim, dim))

    def Mx(x, p, mu, xt):
        return _eye(np.broadcast_shapes(_lead(x), _lead(xt)), dim, -a)

    def zero3(x, p, mu):
        return np.zeros(_lead(x) + (dim, dim, dim))

    def zero3_xt(x, p, mu, xt):
        return np.zeros(np.broadcast_shapes(_lead(x), _lead(xt)) + (dim, dim, dim))

    def g(x, mu):
        z = x - center
        return 0.5 * gamma * np.sum(z * z, -1)

    def gx(x, mu):
        return gamma * (x - center)

    def gxx(x, mu):
        return _eye(_lead(x), dim, gamma)

    def L(x, v, mu):
        return 0.5 * np.sum(v * v, -1) + f(x, mu)

    def rest(x, mu):
        return np.zeros_like(x)

    third = {"ppx": zero3, "pxx": zero3, "ppp": zero3, "xxx": zero3,
             "pmu_xt": zero3_xt, "xmu_xt": zero3_xt}
    bounds = DerivativeBounds(pp=1.0, xx=abs(k), xmu=abs(a))
    return MfgModel(
        dim=dim, hamiltonian=H, grad_x_H=Hx, grad_p_H=Hp, hess_xx_H=Hxx, hess_pp_H=Hpp,
        hess_px_H=Hpx, measure_grad_p_H=Mp, measure_grad_x_H=Mx, final_cost_g=g,
        grad_x_g=gx, hess_xx_g=gxx, derivative_bounds=bounds, third_derivative_kernels=third,
        beta=beta, name=name, spec=spec, closed_form_lagrangian=L, momentum_at_rest=rest,
        measure_independent=(a == 0 and e == 0), accepts_flow=True,
        recommended_damping=damping, extras={"k": k, "a": a, "e": e, "gamma": gamma},
    )


# ---------------------------------------------------------------------------
# non-separable family: H = H0 + (C0/2)(|p|^2 - |x|^2)
# H0 = A sum_i [cos(x_i - p_i) + b sin(p_i) sin(m_i)],  m = mean(mu)
# ---------------------------------------------------------------------------
def nonseparable_h0_bounds(A: float, b: float, dim: int) -> dict[str, float]:
    """Uniform bounds of the trigonometric part H0 and its derivatives."""
    return {
        "h0_pp": A * (1.0 + abs(b)),
        "h0_px": A,
        "h0_pmu": A * abs(b),
        "h0_x": A * math.sqrt(dim),
        "h0_sup": A * dim * (1.0 + abs(b)),
    }


def nonseparable_compensation(C0: float, A: float, b: float, dim: int) -> tuple[float, float]:
    """(delta_tilde, c_tilde) of the X-compensation inequality for the C0 family.

    Young's inequality on the cross terms gives
    -E[(D_pp H X).D_x H] >= (C0^2 - C0 c_pp - C0/2 - 1/2) E|X|^2
                            - (c_pp c_x)^2/2 - C0 c_x^2/2
    with c_pp, c_x the bounds of D_pp H0 and D_x H0.
    """
    hb = nonseparable_h0_bounds(A, b, dim)
    cpp, cx = hb["h0_pp"], hb["h0_x"]
    kappa = C0 * C0 - C0 * cpp - 0.5 * C0 - 0.5
    return 2.0 * kappa, -0.5 * (cpp * cx) ** 2 - 0.5 * C0 * cx * cx


def nonseparable_admissible(C0: float, A: float, b: float, beta: float, dim: int) -> tuple[bool, str]:
    hb = nonseparable_h0_bounds(A, b, dim)
    if C0 <= hb["h0_pp"]:
        return False, f"C0={C0} does not dominate the p-curvature bound {hb['h0_pp']}"
    kappa = C0 * C0 - C0 * hb["h0_pp"] - 0.5 * C0 - 0.5
    if kappa <= 0:
        return False, f"C0^2 - C0 c_pp - C0/2 - 1/2 = {kappa} <= 0"
    need = 5.0 * beta + hb["h0_px"] ** 2 + hb["h0_pmu"] ** 2
    if C0 <= need:
        return False, f"C0={C0} <= 5 beta + c_px^2 + c_pmu^2 = {need}"
    if 2.0 * kappa <= need:
        return False, f"compensation constant {2 * kappa} <= {need}"
    return True, ""


def _nonseparable_model(dim, C0, A, b, gamma, beta, spec, damping) -> MfgModel:
    def parts(x, p, mu):
        m = mean_of(mu, _lead(x), dim)
        u = x - p
        return np.sin(u), np.cos(u), np.sin(p), np.cos(p), np.sin(m), np.cos(m)

    def H(x, p, mu):
        su, cu, sp, cp, sm, cm = parts(x, p, mu)
        h0 = A * np.sum(cu + b * sp * sm, -1)
        return h0 + 0.5 * C0 * (np.sum(p * p, -1) - np.sum(x * x, -1))

    def Hx(x, p, mu):
        su, *_ = parts(x, p, mu)
        return -A * su - C0 * x

    def Hp(x, p, mu):
        su, cu, sp, cp, sm, cm = parts(x, p, mu)
        return A * su + A * b * cp * sm + C0 * p

    def Hxx(x, p, mu):
        su, cu, *_ = parts(x, p, mu)
        return _diag(-A * cu - C0)

    def Hpp(x, p, mu):
        su, cu, sp, cp, sm, cm = parts(x, p, mu)
        return _diag(-A * cu - A * b * sp * sm + C0)

    def Hpx(x, p, mu):
        su, cu, *_ = parts(x, p, mu)
        return _diag(A * cu)

    def Mp(x, p, mu, xt):
        su, cu, sp, cp, sm, cm = parts(x, p, mu)
        lead = np.broadcast_shapes(_lead(x), _lead(xt))
        return np.broadcast_to(_diag(A * b * cp * cm), lead + (dim, dim)).copy()

    def Mx(x, p, mu, xt):
        return np.zeros(np.broadcast_shapes(_lead(x), _lead(xt)) + (dim, dim))

    def ppx(x, p, mu):
        su, *_ = parts(x, p, mu)
        return _diag3(A * su)

    def pxx(x, p, mu):
        su, *_ = parts(x, p, mu)
        return _diag3(-A * su)

    def ppp(x, p, mu):
        su, cu, sp, cp, sm, cm = parts(x, p, mu)
        return _diag3(-A * su - A * b * cp * sm)

    def xxx(x, p, mu):
        su, *_ = parts(x, p, mu)
        return _diag3(A * su)

    def zero3_xt(x, p, mu, xt):
        return np.zeros(np.broadcast_shapes(_lead(x), _lead(xt)) + (dim, dim, dim))

    def g(x, mu):
        return 0.5 * gamma * np.sum(x * x, -1)

    def gx(x, mu):
        return gamma * np.asarray(x, dtype=float)

    def gxx(x, mu):
        return _eye(_lead(x), dim, gamma)

    hb = nonseparable_h0_bounds(A, b, dim)
    bounds = DerivativeBounds(
        px=A, pmu=A * abs(b), pp=C0 + hb["h0_pp"], ppx=A, ppp=A * (1 + abs(b)), pmu_xt=0.0,
        xx=C0 + A, xp=A, xxx=A, xpp=A, xxp=A, xmu_xt=0.0, xmu=0.0,
    )
    third = {"ppx": ppx, "pxx": pxx, "ppp": ppp, "xxx": xxx, "pmu_xt": zero3_xt, "xmu_xt": zero3_xt}
    extras = {"C0": C0, "A": A, "b": b, "gamma": gamma, **hb}
    return MfgModel(
        dim=dim, hamiltonian=H, grad_x_H=Hx, grad_p_H=Hp, hess_xx_H=Hxx, hess_pp_H=Hpp,
        hess_px_H=Hpx, measure_grad_p_H=Mp, measure_grad_x_H=Mx, final_cost_g=g,
        grad_x_g=gx, hess_xx_g=gxx, derivative_bounds=bounds, third_derivative_kernels=third,
        beta=beta, name="nonseparable_C0", spec=spec, accepts_flow=True,
        recommended_damping=damping, extras=extras,
    )


# ---------------------------------------------------------------------------
# public builders
# ---------------------------------------------------------------------------
def _param(params: Mapping[str, float], name: str, default: float | None = None) -> float:
    if name in params:
        v = float(params[name])
    elif default is not None:
        v = float(default)
    else:
        raise InvalidParameters(f"missing parameter {name!r}")
    if not math.isfinite(v):
        raise InvalidParameters(f"parameter {name!r} must be finite")
    return v


_KNOWN = {
    "mechanical_quadratic": {"c0", "a", "gamma", "g_center"},
    "riccati_lq": {"c0", "gamma"},
    "remark_translation": {"gamma", "z"},
    "nonseparable_C0": {"C0", "A", "b", "gamma"},
}


def build_model(spec: BuiltinModelSpec) -> MfgModel:
    """Instantiate one of the built-in families with analytic derivatives.

    Families and parameters (defaults in brackets):

    ``mechanical_quadratic``  c0 [1], a [0], gamma [1], g_center [0];
        H = |p|^2/2 - (c0/2)|x|^2 - a x.mean(mu), g = (gamma/2)|x - g_center|^2.
    ``riccati_lq``  c0 [1], gamma [1];  H = |p|^2/2 - (c0/2)|x|^2, g = (gamma/2)|x|^2.
    ``remark_translation``  gamma [sqrt 2], z [0]; d = 1,
        H = p^2/2 - (x - mean(mu))^2, g = (gamma/2)(x + z)^2.
    ``nonseparable_C0``  C0 (required), A [0.25], b [1], gamma [1];
        H = A sum_i[cos(x_i - p_i) + b sin(p_i) sin(mean_i)] + (C0/2)(|p|^2 - |x|^2).
    """
    if spec.family not in FAMILIES:
        raise InvalidParameters(f"unknown family {spec.family!r}; expected one of {FAMILIES}")
    unknown = set(spec.parameters) - _KNOWN[spec.family]
    if unknown:
        raise InvalidParameters(f"unknown parameters for {spec.family}: {sorted(unknown)}")
    if not (spec.beta >= 0 and math.isfinite(spec.beta)):
        raise InvalidParameters("beta must be a finite nonnegative number")
    d = int(spec.dim)
    if d < 1 or d > 3:
        raise InvalidParameters("dim must be 1, 2 or 3")
    P = spec.parameters

    if spec.family == "riccati_lq":
        c0, gamma = _param(P, "c0", 1.0), _param(P, "gamma", 1.0)
        if c0 <= 0 or gamma < 0:
            raise InvalidParameters("riccati_lq needs c0 > 0 and gamma >= 0")
        return _quadratic_model(d, c0, 0.0, 0.0, gamma, np.zeros(d), spec.beta, spec.family, spec, 1.0)

    if spec.family == "mechanical_quadratic":
        c0, a = _param(P, "c0", 1.0), _param(P, "a", 0.0)
        gamma, center = _param(P, "gamma", 1.0), _param(P, "g_center", 0.0)
        if c0 < 0 or gamma < 0:
            raise InvalidParameters("mechanical_quadratic needs c0 >= 0 and gamma >= 0")
        if a < -c0:
            raise InvalidParameters("a < -c0 breaks displacement monotonicity of f")
        # the Picard map on the mean has spectrum in [-a/(c0+1), 0] for a >= 0
        damping = 1.0 if a <= 0 else 1.0 / (1.0 + a / max(c0, 1e-12))
        return _quadratic_model(d, c0, a, 0.0, gamma, np.full(d, center), spec.beta,
                                spec.family, spec, min(1.0, damping))

    if spec.family == "remark_translation":
        if d != 1:
            raise InvalidParameters("remark_translation is defined in d=1")
        gamma, z = _param(P, "gamma", math.sqrt(2.0)), _param(P, "z", 0.0)
        if gamma < 0:
            raise InvalidParameters("gamma must be nonnegative")
        return _quadratic_model(1, 2.0, -2.0, 2.0, gamma, np.array([-z]), spec.beta,
                                spec.family, spec, 1.0)

    C0 = _param(P, "C0")
    A, b, gamma = _param(P, "A", 0.25), _param(P, "b", 1.0), _param(P, "gamma", 1.0)
    if A < 0 or gamma < 0:
        raise InvalidParameters("A and gamma must be nonnegative")
    ok, why = nonseparable_admissible(C0, A, b, spec.beta, d)
    if not ok:
        raise InvalidParameters(f"nonseparable_C0 not admissible: {why}")
    return _nonseparable_model(d, C0, A, b, gamma, spec.beta, spec, 1.0)


def with_final_cost(model: MfgModel, **params: float) -> MfgModel:
    """Rebuild a built-in model with changed final-cost parameters."""
    if model.spec is None:
        raise InvalidParameters("only built-in models can be rebuilt")
    new = dict(model.spec.parameters)
    new.update(params)
    return build_model(dataclasses.replace(model.spec, parameters=new))


# ---------------------------------------------------------------------------
# Legendre dual
# ---------------------------------------------------------------------------
def _solve_batch(A: np.ndarray, r: np.ndarray) -> np.ndarray:
    if A.shape[-1] == 1:
        return r / A[..., 0, :]
    return np.linalg.solve(A, r[..., None])[..., 0]


def legendre_momentum(model: MfgModel, x, v, mu, tol: float = 1e-10, max_iter: int = 60) -> np.ndarray:
    """The maximiser p of v.p - H(x, p, mu), i.e. D_v L(x, v, mu)."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    p = np.array(v, copy=True)
    obj = lambda q: np.sum(v * q, -1) - model.hamiltonian(x, q, mu)
    for _ in range(max_iter):
        r = v - model.grad_p_H(x, p, mu)
        if np.max(np.abs(r), initial=0.0) <= tol:
            return p
        step = _solve_batch(model.hess_pp_H(x, p, mu), r)
        base = obj(p)
        t = np.ones(r.shape[:-1])
        for _ in range(30):
            trial = p + t[..., None] * step
            bad = obj(trial) < base - 1e-14 * (1 + np.abs(base))
            if not np.any(bad):
                break
            t = np.where(bad, 0.5 * t, t)
        p = p + t[..., None] * step
    r = v - model.grad_p_H(x, p, mu)
    if np.max(np.abs(r), initial=0.0) <= tol:
        return p
    raise NewtonDiverged(f"Legendre Newton stalled with residual {np.max(np.abs(r)):.3e}")


def lagrangian(model: MfgModel, x, v, mu) -> np.ndarray | float:
    """L(x, v, mu) = sup_p { v.p - H(x, p, mu) }."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if model.closed_form_lagrangian is not None:
        out = model.closed_form_lagrangian(x, v, mu)
    else:
        p = legendre_momentum(model, x, v, mu)
        out = np.sum(v * p, -1) - model.hamiltonian(x, p, mu)
    return float(out) if np.ndim(out) == 0 else out


def running_cost_along(model: MfgModel, x, y, mu) -> np.ndarray:
    """L(x, D_p H(x, y, mu), mu) evaluated through the duality identity."""
    v = model.grad_p_H(x, y, mu)
    if model.closed_form_lagrangian is not None:
        return model.closed_form_lagrangian(x, v, mu)
    return np.sum(y * v, -1) - model.hamiltonian(x, y, mu)


def momentum_at_rest(model: MfgModel, x, mu) -> np.ndarray:
    """The minimiser p* of p -> H(x, p, mu) (D_p H = 0)."""
    if model.momentum_at_rest is not None:
        return model.momentum_at_rest(np.asarray(x, dtype=float), mu)
    x = np.asarray(x, dtype=float)
    return legendre_momentum(model, x, np.zeros_like(x), mu)


# ---------------------------------------------------------------------------
# derivative audit
# ---------------------------------------------------------------------------
@dataclass
class AuditReport:
    max_rel_errors: dict[str, float]
    failures: list[str]
    observed_bounds: dict[str, float]
    declared_bounds: dict[str, float]
    bound_violations: list[str]
    growth_constant: float
    min_pp_eigenvalue: float
    samples: int
    tol: float

    @property
    def passed(self) -> bool:
        return not self.failures and not self.bound_violations and self.min_pp_eigenvalue > 0

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["passed"] = self.passed
        return d


def _op_norm(m: np.ndarray) -> np.ndarray:
    if m.shape[-1] == 1:
        return np.abs(m[..., 0, 0])
    return np.linalg.norm(m, ord=2, axis=(-2, -1))


def _tensor_norm(t: np.ndarray) -> np.ndarray:
    """max_k of the operator norm of the slice t[..., k] (contraction with e_k)."""
    return np.max(np.stack([_op_norm(t[..., k]) for k in range(t.shape[-1])], -1), -1)


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b)), initial=0.0))


def audit_derivatives(model: MfgModel, samples: int = 64, tol: float = 1e-5, seed: int = 0,
                      scale: float = 2.0, cloud_size: int = 8) -> AuditReport:
    """Finite-difference audit of every supplied derivative plus bound checks."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    d = model.dim
    eps = 1e-5
    errs: dict[str, float] = {}
    obs: dict[str, float] = {k: 0.0 for k in BOUND_NAMES}
    growth = 0.0
    min_eig = math.inf
    third = model.third_derivative_kernels or {}
    eye = np.eye(d)

    def fd(fun, arg_index, args, j):
        a_plus = [np.array(a, copy=True) for a in args]
        a_minus = [np.array(a, copy=True) for a in args]
        a_plus[arg_index][j] += eps
        a_minus[arg_index][j] -= eps
        return (fun(*a_plus) - fun(*a_minus)) / (2 * eps)

    def track(name, value):
        errs[name] = max(errs.get(name, 0.0), value)

    for s in range(samples):
        x = rng.normal(0.0, scale, d)
        p = rng.normal(0.0, scale, d)
        mu = gaussian_sample(rng.normal(0, 1, d), np.eye(d) * rng.uniform(0.1, 2.0), cloud_size,
                             seed=int(rng.integers(2**31)))
        xt = mu.points[0]
        w0 = mu.weights[0]

        H = lambda xx, pp: model.hamiltonian(xx, pp, mu)
        gp = model.grad_p_H(x, p, mu)
        gx = model.grad_x_H(x, p, mu)
        hpp = model.hess_pp_H(x, p, mu)
        hxx = model.hess_xx_H(x, p, mu)
        hpx = model.hess_px_H(x, p, mu)
        track("grad_p_H", _rel_err(np.array([fd(H, 1, (x, p), j) for j in range(d)]), gp))
        track("grad_x_H", _rel_err(np.array([fd(H, 0, (x, p), j) for j in range(d)]), gx))
        Gp = lambda xx, pp: model.grad_p_H(xx, pp, mu)
        Gx = lambda xx, pp: model.grad_x_H(xx, pp, mu)
        track("hess_pp_H", _rel_err(np.stack([fd(Gp, 1, (x, p), j) for j in range(d)], -1), hpp))
        track("hess_px_H", _rel_err(np.stack([fd(Gp, 0, (x, p), j) for j in range(d)], -1), hpx))
        track("hess_xx_H", _rel_err(np.stack([fd(Gx, 0, (x, p), j) for j in range(d)], -1), hxx))
        g = lambda xx: model.final_cost_g(xx, mu)
        gxg = model.grad_x_g(x, mu)
        track("grad_x_g", _rel_err(np.array([fd(g, 0, (x,), j) for j in range(d)]), gxg))
        Gg = lambda xx: model.grad_x_g(xx, mu)
        track("hess_xx_g", _rel_err(np.stack([fd(Gg, 0, (x,), j) for j in range(d)], -1),
                                    model.hess_xx_g(x, mu)))

        # measure kernels: displace the particle sitting at xt
        def displaced(j, sign):
            pts = np.array(mu.points, copy=True)
            pts[0, j] += sign * eps
            return EmpiricalMeasure(pts, mu.weights)

        kp = np.stack([(model.grad_p_H(x, p, displaced(j, 1)) - model.grad_p_H(x, p, displaced(j, -1)))
                       / (2 * eps * w0) for j in range(d)], -1)
        kx = np.stack([(model.grad_x_H(x, p, displaced(j, 1)) - model.grad_x_H(x, p, displaced(j, -1)))
                       / (2 * eps * w0) for j in range(d)], -1)
        mp = model.measure_grad_p_H(x, p, mu, xt)
        mx = model.measure_grad_x_H(x, p, mu, xt)
        track("measure_grad_p_H", _rel_err(kp, mp))
        track("measure_grad_x_H", _rel_err(kx, mx))

        if third:
            Hpp_ = lambda xx, pp: model.hess_pp_H(xx, pp, mu)
            Hpx_ = lambda xx, pp: model.hess_px_H(xx, pp, mu)
            Hxx_ = lambda xx, pp: model.hess_xx_H(xx, pp, mu)
            checks = {
                "ppx": np.stack([fd(Hpp_, 0, (x, p), k) for k in range(d)], -1),
                "pxx": np.stack([fd(Hpx_, 0, (x, p), k) for k in range(d)], -1),
                "ppp": np.stack([fd(Hpp_, 1, (x, p), k) for k in range(d)], -1),
                "xxx": np.stack([fd(Hxx_, 0, (x, p), k) for k in range(d)], -1),
            }
            for key, approx in checks.items():
                if key in third:
                    t = third[key](x, p, mu)
                    track(f"third_{key}", _rel_err(approx, t))
                    obs[{"ppx": "ppx", "pxx": "xxp", "ppp": "ppp", "xxx": "xxx"}[key]] = max(
                        obs[{"ppx": "ppx", "pxx": "xxp", "ppp": "ppp", "xxx": "xxx"}[key]],
                        float(_tensor_norm(t)))
                    if key == "ppx":
                        obs["xpp"] = max(obs["xpp"], float(_tensor_norm(np.moveaxis(t, -1, 0))))
            for key, kern in (("pmu_xt", model.measure_grad_p_H), ("xmu_xt", model.measure_grad_x_H)):
                if key in third:
                    approx = np.stack([(kern(x, p, mu, xt + eps * eye[k]) - kern(x, p, mu, xt - eps * eye[k]))
                                       / (2 * eps) for k in range(d)], -1)
                    t = third[key](x, p, mu, xt)
                    track(f"third_{key}", _rel_err(approx, t))
                    obs[key] = max(obs[key], float(_tensor_norm(t)))

        obs["pp"] = max(obs["pp"], float(_op_norm(hpp)))
        obs["px"] = max(obs["px"], float(_op_norm(hpx)))
        obs["xp"] = max(obs["xp"], float(_op_norm(hpx)))
        obs["xx"] = max(obs["xx"], float(_op_norm(hxx)))
        obs["pmu"] = max(obs["pmu"], float(_op_norm(mp)))
        obs["xmu"] = max(obs["xmu"], float(_op_norm(mx)))
        sym = 0.5 * (hpp + np.swapaxes(hpp, -1, -2))
        min_eig = min(min_eig, float(np.min(np.linalg.eigvalsh(sym))))
        growth = max(growth, float(np.linalg.norm(gp) / (1 + moment(mu, 1) + np.linalg.norm(x) + np.linalg.norm(p))))

    failures = sorted(k for k, v in errs.items() if v > tol)
    declared = model.derivative_bounds.as_dict()
    violations = sorted(k for k, v in obs.items() if v > declared.get(k, math.inf) * (1 + 1e-9) + 1e-9)
    return AuditReport(
        max_rel_errors=errs, failures=failures, observed_bounds=obs, declared_bounds=declared,
        bound_violations=violations, growth_constant=growth, min_pp_eigenvalue=min_eig,
        samples=samples, tol=tol,
    )
