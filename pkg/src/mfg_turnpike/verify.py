"""Sampled audits of the structural hypotheses on H and g.

Random variables on a finite uniform sample space are represented by aligned
particle clouds: entry ``i`` of every array is the value at sample point
``i``.  Two clouds with the same index set are therefore synchronously
coupled.  Independent copies (the tilde variables in the double
expectations) are realised by pairing every index with every other index.

All estimators are sampled searches, so a reported constant is an upper
estimate of the true infimum (for monotonicity ratios) or a fitted
supporting line (for confining properties).  Reports carry the worst-case
witness so the reported extreme value can be reproduced.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import DegeneratePair, InvalidParameters, MissingCompanions, MissingThirdDerivatives
from .measures import EmpiricalMeasure
from .models import DerivativeBounds, MfgModel

PAIR_CAP = 256
CONFINING_HYPOTHESES = ("H5", "H6", "H7", "H8", "H5'", "H6'", "H7'", "H8'")
_DEGENERATE = 1e-14


def workers_from_env(default: int = 1) -> int:
    try:
        return max(1, int(os.environ.get("MFGT_WORKERS", default)))
    except ValueError:
        return default


def _pool_map(fn: Callable, items: Sequence, workers: int) -> list:
    """Order-preserving map; results do not depend on the worker count."""
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# random variables
# ---------------------------------------------------------------------------
@dataclass
class RandomVariableCloud:
    """A random variable ``X`` with optional companions on the same sample space.

    ``X, Y, R, alpha`` have shape ``(N, d)``; ``Z`` has shape ``(N, d, d)``
    and must be symmetric.
    """

    X: np.ndarray
    Y: np.ndarray | None = None
    Z: np.ndarray | None = None
    R: np.ndarray | None = None
    alpha: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        N, d = self.X.shape
        for name in ("Y", "R", "alpha"):
            v = getattr(self, name)
            if v is not None:
                v = np.atleast_2d(np.asarray(v, dtype=float))
                if v.shape != (N, d):
                    raise InvalidParameters(f"{name} has shape {v.shape}, expected {(N, d)}")
                setattr(self, name, v)
        if self.Z is not None:
            Z = np.asarray(self.Z, dtype=float).reshape(N, d, d)
            if np.max(np.abs(Z - np.swapaxes(Z, 1, 2)), initial=0.0) > 1e-12:
                raise InvalidParameters("Z must be symmetric")
            self.Z = Z

    @property
    def size(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def law(self) -> EmpiricalMeasure:
        return EmpiricalMeasure._fast(self.X)

    def to_dict(self) -> dict:
        out = {"X": self.X.tolist()}
        for name in ("Y", "Z", "R", "alpha"):
            v = getattr(self, name)
            if v is not None:
                out[name] = v.tolist()
        return out


@dataclass
class HypothesisReport:
    """Outcome of one sampled audit.

    ``constants`` holds the estimated numbers; ``witness`` the sampled tuple
    at which the tested quantity is extreme, and ``witness_value`` that
    extreme value (re-evaluating the witness reproduces it).
    """

    hypothesis: str
    constants: dict[str, float]
    samples: int
    passed: bool
    threshold: float
    witness: dict[str, Any] = field(default_factory=dict)
    witness_value: float = math.nan
    skipped: int = 0
    trace: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        def conv(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, RandomVariableCloud):
                return v.to_dict()
            if isinstance(v, dict):
                return {k: conv(x) for k, x in v.items()}
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            return v

        return {
            "hypothesis": self.hypothesis,
            "constants": {k: float(v) for k, v in self.constants.items()},
            "samples": self.samples,
            "passed": bool(self.passed),
            "threshold": self.threshold,
            "witness_value": float(self.witness_value),
            "skipped": self.skipped,
            "witness": conv(self.witness),
        }


def sample_points(rng: np.random.Generator, n: int, d: int, radius: float) -> np.ndarray:
    """Gaussian mixture with 1-3 components, random centres and scales."""
    comps = int(rng.integers(1, 4))
    centres = rng.uniform(-radius, radius, size=(comps, d)) * rng.uniform(0, 1)
    scales = radius * np.exp(rng.uniform(np.log(0.02), np.log(0.7), size=comps))
    lab = rng.integers(0, comps, size=n)
    return centres[lab] + scales[lab, None] * rng.standard_normal((n, d))


def _sym(rng: np.random.Generator, n: int, d: int, bound: float) -> np.ndarray:
    A = rng.uniform(-1, 1, size=(n, d, d))
    S = 0.5 * (A + np.swapaxes(A, 1, 2))
    return bound * S / max(1.0, np.max(np.abs(S)))


def _streams(seed: int, trials: int) -> list[np.random.Generator]:
    # one independent stream per trial index: a longer run extends a shorter one
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(trials)]


# ---------------------------------------------------------------------------
# displacement monotonicity
# ---------------------------------------------------------------------------
def h2_terms(model: MfgModel, X1, P1, X2, P2) -> tuple[float, float]:
    """(left side, E[|dX|^2 + |dP|^2]) of the joint monotonicity inequality."""
    m1, m2 = EmpiricalMeasure._fast(X1), EmpiricalMeasure._fast(X2)
    dX, dP = X1 - X2, P1 - P2
    lhs = np.mean(np.sum((-model.grad_x_H(X1, P1, m1) + model.grad_x_H(X2, P2, m2)) * dX, -1))
    lhs += np.mean(np.sum((model.grad_p_H(X1, P1, m1) - model.grad_p_H(X2, P2, m2)) * dP, -1))
    den = np.mean(np.sum(dX * dX, -1) + np.sum(dP * dP, -1))
    return float(lhs), float(den)


def h2_ratio(model: MfgModel, X1, P1, X2, P2) -> float:
    lhs, den = h2_terms(model, X1, P1, X2, P2)
    if den <= _DEGENERATE:
        raise DegeneratePair("the two random variables coincide")
    return lhs / den


def pointwise_monotonicity_ratio(model: MfgModel, x1, p1, x2, p2, mu: EmpiricalMeasure) -> float:
    """Pointwise version of the joint monotonicity ratio at a common measure."""
    x1, p1, x2, p2 = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (x1, p1, x2, p2))
    num = np.sum((-model.grad_x_H(x1, p1, mu) + model.grad_x_H(x2, p2, mu)) * (x1 - x2), -1)
    num += np.sum((model.grad_p_H(x1, p1, mu) - model.grad_p_H(x2, p2, mu)) * (p1 - p2), -1)
    den = np.sum((x1 - x2) ** 2, -1) + np.sum((p1 - p2) ** 2, -1)
    if np.any(den <= _DEGENERATE):
        raise DegeneratePair("coinciding tuples")
    return float(np.min(num / den))


_PAIR_KINDS = ("general", "translation", "perturbation", "same_p", "same_x", "single_point")


def _sample_pair(rng, kind: str, n: int, d: int, radius: float):
    if kind == "single_point":
        n = 1
    X1 = sample_points(rng, n, d, radius)
    P1 = sample_points(rng, n, d, radius)
    if kind == "translation":
        X2, P2 = X1 + rng.uniform(-radius, radius, d), P1.copy()
    elif kind == "perturbation":
        eps = 10 ** rng.uniform(-4, -1)
        X2 = X1 + eps * rng.standard_normal(X1.shape)
        P2 = P1 + eps * rng.standard_normal(P1.shape)
    elif kind == "same_p":
        X2, P2 = sample_points(rng, n, d, radius), P1.copy()
    elif kind == "same_x":
        X2, P2 = X1.copy(), sample_points(rng, n, d, radius)
    else:
        X2, P2 = sample_points(rng, n, d, radius), sample_points(rng, n, d, radius)
    return X1, P1, X2, P2


def estimate_c0(model: MfgModel, trials: int, cloud_size: int, *, seed: int = 0, radius: float = 3.0,
                threshold: float = 0.0, workers: int | None = None) -> HypothesisReport:
    """Minimum over sampled synchronous pairs of the joint monotonicity ratio.

    Trial ``i`` always draws from the ``i``-th child stream of ``seed`` and
    cycles through structured pair kinds (translations, small perturbations,
    equal momenta, equal positions, single points), so the estimate is
    non-increasing in ``trials``.
    """
    if trials < 1 or cloud_size < 1:
        raise InvalidParameters("trials and cloud_size must be positive")
    d = model.dim
    rngs = _streams(seed, trials)

    def one(i):
        kind = _PAIR_KINDS[i % len(_PAIR_KINDS)]
        X1, P1, X2, P2 = _sample_pair(rngs[i], kind, cloud_size, d, radius)
        lhs, den = h2_terms(model, X1, P1, X2, P2)
        if den <= _DEGENERATE:
            return None
        return lhs / den, {"kind": kind, "X1": X1, "P1": P1, "X2": X2, "P2": P2}

    results = _pool_map(one, range(trials), workers or workers_from_env())
    valid = [(i, r) for i, r in enumerate(results) if r is not None]
    if not valid:
        raise DegeneratePair("every sampled pair was degenerate")
    i_min, (val, wit) = min(valid, key=lambda t: (t[1][0], t[0]))
    return HypothesisReport(
        hypothesis="H2", constants={"c0": val}, samples=len(valid), passed=val > threshold,
        threshold=threshold, witness={"trial": i_min, **wit}, witness_value=val,
        skipped=trials - len(valid),
        trace={"ratio": np.array([r[0] for _, r in valid])},
    )


def g_monotone_ratio(model: MfgModel, X1, X2) -> float:
    m1, m2 = EmpiricalMeasure._fast(X1), EmpiricalMeasure._fast(X2)
    dX = X1 - X2
    den = float(np.mean(np.sum(dX * dX, -1)))
    if den <= _DEGENERATE:
        raise DegeneratePair("the two random variables coincide")
    num = np.mean(np.sum((model.grad_x_g(X1, m1) - model.grad_x_g(X2, m2)) * dX, -1))
    return float(num) / den


def check_g_monotone(model: MfgModel, trials: int, cloud_size: int, *, seed: int = 0,
                     radius: float = 3.0, tol: float = 1e-9,
                     workers: int | None = None) -> HypothesisReport:
    """Infimum over sampled pairs of E[(D_x g^1 - D_x g^2).(X^1 - X^2)] / E|X^1 - X^2|^2."""
    if trials < 1 or cloud_size < 1:
        raise InvalidParameters("trials and cloud_size must be positive")
    d = model.dim
    rngs = _streams(seed, trials)
    kinds = ("general", "translation", "perturbation")

    def one(i):
        kind = kinds[i % len(kinds)]
        X1, _, X2, _ = _sample_pair(rngs[i], kind, cloud_size, d, radius)
        try:
            return g_monotone_ratio(model, X1, X2), {"kind": kind, "X1": X1, "X2": X2}
        except DegeneratePair:
            return None

    results = _pool_map(one, range(trials), workers or workers_from_env())
    valid = [(i, r) for i, r in enumerate(results) if r is not None]
    if not valid:
        raise DegeneratePair("every sampled pair was degenerate")
    i_min, (val, wit) = min(valid, key=lambda t: (t[1][0], t[0]))
    return HypothesisReport(
        hypothesis="H4", constants={"infimum": val}, samples=len(valid), passed=val >= -tol,
        threshold=-tol, witness={"trial": i_min, **wit}, witness_value=val,
        skipped=trials - len(valid),
        trace={"ratio": np.array([r[0] for _, r in valid])},
    )


# ---------------------------------------------------------------------------
# confining functionals
# ---------------------------------------------------------------------------
def _pairs(N: int, cap: int, seed: int):
    if N <= cap:
        i, j = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
        return i.ravel(), j.ravel()
    rng = np.random.default_rng(seed)
    m = cap * cap
    return rng.integers(0, N, m), rng.integers(0, N, m)


def _tr(M: np.ndarray) -> np.ndarray:
    return np.trace(M, axis1=-2, axis2=-1)


def _mv(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...j->...i", M, v)


def eval_Q(model: MfgModel, which: int, cloud: RandomVariableCloud, beta: float, *,
           pair_cap: int = PAIR_CAP, seed: int = 0) -> float:
    """Exact empirical value of the confining functional ``which`` in {1, 2, 3, 4}.

    Functionals 1 and 2 use rho = law(X) and the independent copy of (X, Y);
    3 and 4 use rho = law(R) and the independent copy of (R, alpha).  Double
    expectations run over all ordered index pairs while N <= ``pair_cap``
    and over ``pair_cap**2`` seeded random pairs beyond.
    """
    if which not in (1, 2, 3, 4):
        raise InvalidParameters("which must be 1, 2, 3 or 4")
    if cloud.Y is None:
        raise MissingCompanions("the functionals need Y")
    if which in (3, 4) and (cloud.R is None or cloud.alpha is None):
        raise MissingCompanions("functionals 3 and 4 need R and alpha")
    if beta < 0:
        raise InvalidParameters("beta must be nonnegative")
    third = model.third_derivative_kernels
    if beta > 0:
        if third is None:
            raise MissingThirdDerivatives("beta > 0 needs the third-derivative kernels")
        if cloud.Z is None:
            raise MissingCompanions("beta > 0 needs Z")
    X, Y = cloud.X, cloud.Y
    if which in (1, 2):
        rho = cloud.law()
        Rt, At = X, model.grad_p_H(X, Y, rho)
    else:
        rho = EmpiricalMeasure._fast(cloud.R)
        Rt, At = cloud.R, cloud.alpha
    Hp = model.grad_p_H(X, Y, rho)
    Hx = model.grad_x_H(X, Y, rho)
    ii, jj = _pairs(X.shape[0], pair_cap, seed)
    Xi, Yi, Rj, Aj = X[ii], Y[ii], Rt[jj], At[jj]

    if which in (1, 3):
        Hpx = model.hess_px_H(X, Y, rho)
        Hpp = model.hess_pp_H(X, Y, rho)
        val = np.mean(np.sum(Hp * Hp, -1) + np.sum(_mv(Hpx, X) * Hp, -1) - np.sum(_mv(Hpp, X) * Hx, -1))
        Mp = model.measure_grad_p_H(Xi, Yi, rho, Rj)
        val += np.mean(np.sum(_mv(Mp, Xi) * Aj, -1))
        if beta > 0:
            Z = cloud.Z
            pxx = third["pxx"](X, Y, rho)
            ppp = third["ppp"](X, Y, rho)
            ppx = third["ppx"](X, Y, rho)
            d_p_tr_xx = np.einsum("...kii->...k", pxx)
            t1 = np.sum(d_p_tr_xx * X, -1) + 2 * _tr(Hpx)
            t2 = _tr(np.einsum("...ijk,...k->...ij", ppp, X) @ (Z @ Z))
            t3 = 2 * _tr((np.einsum("...ijk,...k->...ij", ppx, X) + Hpp) @ Z)
            val += beta * np.mean(t1 + t2 + t3)
            T = third["pmu_xt"](Xi, Yi, rho, Rj)
            val += beta * np.mean(_tr(np.einsum("...ijk,...k->...ij", T, Xi)))
        return float(val)

    Hxx = model.hess_xx_H(X, Y, rho)
    Hxp = np.swapaxes(model.hess_px_H(X, Y, rho), -1, -2)
    val = np.mean(-np.sum(_mv(Hxx, Y) * Hp, -1) + np.sum(Hx * Hx, -1) + np.sum(_mv(Hxp, Y) * Hx, -1))
    Mx = model.measure_grad_x_H(Xi, Yi, rho, Rj)
    val -= np.mean(np.sum(_mv(Mx, Yi) * Aj, -1))
    if beta > 0:
        Z = cloud.Z
        xxx = third["xxx"](X, Y, rho)
        ppx = third["ppx"](X, Y, rho)
        pxx = third["pxx"](X, Y, rho)
        Hpx = np.swapaxes(Hxp, -1, -2)
        d_x_tr_xx = np.einsum("...kii->...k", xxx)
        xpp_Y = np.einsum("...jki,...k->...ij", ppx, Y)   # (D^3_xpp Y)_ij = sum_k H_{x_i p_j p_k} Y_k
        xxp_Y = np.einsum("...kij,...k->...ij", pxx, Y)   # (D^3_xxp Y)_ij = sum_k H_{x_i x_j p_k} Y_k
        t1 = np.sum(d_x_tr_xx * Y, -1)
        t2 = _tr((xpp_Y + 2 * Hpx) @ (Z @ Z))
        t3 = 2 * _tr((xxp_Y + Hxx) @ Z)
        val -= beta * np.mean(t1 + t2 + t3)
        T = third["xmu_xt"](Xi, Yi, rho, Rj)
        val -= beta * np.mean(_tr(np.einsum("...ijk,...k->...ij", T, Yi)))
    return float(val)


def h7_value(model: MfgModel, cloud: RandomVariableCloud, c: float, mu: EmpiricalMeasure | None = None) -> float:
    """E[c|Y|^2 - Y.D_x H(X, Y, mu)] with mu = law(X) unless given."""
    mu = mu if mu is not None else cloud.law()
    Y = cloud.Y
    return float(np.mean(c * np.sum(Y * Y, -1) - np.sum(Y * model.grad_x_H(cloud.X, Y, mu), -1)))


def g_confining_value(model: MfgModel, X: np.ndarray, mu: EmpiricalMeasure | None = None) -> float:
    """E[X.D_p H(X, -D_x g(X, mu), mu)] with mu = law(X) unless given."""
    mu = mu if mu is not None else EmpiricalMeasure._fast(X)
    return float(np.mean(np.sum(X * model.grad_p_H(X, -model.grad_x_g(X, mu), mu), -1)))


def lower_envelope_line(s: np.ndarray, q: np.ndarray, anchor: float) -> tuple[float, float]:
    """Best supporting line q >= c + k s, i.e. max c + k*anchor subject to the samples."""
    A = np.column_stack([np.ones_like(s), s])
    res = linprog(c=[-1.0, -anchor], A_ub=A, b_ub=q, bounds=[(None, None), (None, None)], method="highs")
    if res.status != 0:
        raise InvalidParameters(f"envelope fit failed: {res.message}")
    return float(res.x[0]), float(res.x[1])


def _spread_or_concentrated(rng, n, d, radius):
    """Either a random mixture or a nearly deterministic cloud far out (a translate)."""
    if rng.uniform() < 0.3:
        centre = rng.uniform(-1, 1, d) * radius * 10 ** rng.uniform(0, 1)
        return centre + 1e-3 * radius * rng.standard_normal((n, d))
    return sample_points(rng, n, d, radius) * 10 ** rng.uniform(-1, 1.5)


def _confining_sample(model, hyp, rng, n, d, radius, z_bound, beta, h7_c, base_X):
    base = hyp.rstrip("'")
    primed = hyp.endswith("'")
    if base in ("H5", "H8"):
        X = _spread_or_concentrated(rng, n, d, radius)
        kind = int(rng.integers(0, 3))
        Y = [np.zeros((n, d)), 0.05 * rng.standard_normal((n, d)), sample_points(rng, n, d, radius)][kind]
    else:
        X = base_X.copy()
        Y = _spread_or_concentrated(rng, n, d, radius)
    Z = _sym(rng, n, d, z_bound) if beta > 0 else None
    R = sample_points(rng, n, d, radius) if primed else None
    alpha = sample_points(rng, n, d, radius) if primed else None
    cloud = RandomVariableCloud(X, Y, Z, R, alpha)
    if base == "H5":
        return cloud, float(np.mean(np.sum(X * X, -1))), eval_Q(model, 3 if primed else 1, cloud, beta)
    if base == "H6":
        return cloud, float(np.mean(np.sum(Y * Y, -1))), eval_Q(model, 4 if primed else 2, cloud, beta)
    mu = EmpiricalMeasure._fast(R) if primed else None
    if base == "H7":
        return cloud, float(np.mean(np.sum(Y * Y, -1))), h7_value(model, cloud, h7_c, mu)
    # g-form, written as -E[X.D_pH] >= -c_g + (delta_g/2) E|X|^2
    return cloud, float(np.mean(np.sum(X * X, -1))), -g_confining_value(model, X, mu)


def check_confining(model: MfgModel, which_hypothesis: str, trials: int, cloud_size: int, beta: float,
                    *, seed: int = 0, radius: float = 3.0, z_bound: float = 0.5, h7_c: float = 0.5,
                    threshold: float = 0.05, anchor_quantile: float = 0.9,
                    workers: int | None = None) -> HypothesisReport:
    """Fit Q >= c + (delta/2) * (second moment) on sampled clouds and test delta > threshold.

    The abscissa is E|X|^2 for H5, H8 and E|Y|^2 for H6, H7.  For the
    Y-forms the cloud X is frozen across trials (their constants may depend
    on it).  The fitted line is the supporting line of the sample scatter at
    the ``anchor_quantile`` abscissa, found by a two-variable LP; anchoring
    high matters because the hypotheses are asymptotic and the envelope
    is typically convex (a linear cross term costs a sqrt of the moment).  For H8 the
    constants are reported in the g-form: ``c`` is c_g and the line bounds
    E[X.D_pH(X, -D_xg)] from above.  H7 is tested at the single constant
    ``h7_c``.
    """
    if which_hypothesis not in CONFINING_HYPOTHESES:
        raise InvalidParameters(f"unknown hypothesis {which_hypothesis!r}")
    if trials < 3:
        raise InvalidParameters("at least 3 trials are needed for a line fit")
    d = model.dim
    base_X = sample_points(np.random.default_rng([seed, 7]), cloud_size, d, radius)
    rngs = _streams(seed, trials)
    rows = _pool_map(
        lambda i: _confining_sample(model, which_hypothesis, rngs[i], cloud_size, d, radius,
                                    z_bound, beta, h7_c, base_X),
        range(trials), workers or workers_from_env(),
    )
    s = np.array([r[1] for r in rows])
    q = np.array([r[2] for r in rows])
    anchor = float(np.quantile(s, anchor_quantile))
    c, k = lower_envelope_line(s, q, anchor)
    gaps = q - k * s
    w = int(np.argmin(gaps))
    delta = 2.0 * k
    constants = {"delta": delta, "slope": k, "c": -c if which_hypothesis.startswith("H8") else c}
    if which_hypothesis.startswith("H7"):
        constants["h7_c"] = h7_c
    return HypothesisReport(
        hypothesis=which_hypothesis, constants=constants, samples=trials, passed=delta > threshold,
        threshold=threshold, witness={"trial": w, "cloud": rows[w][0], "moment": s[w], "value": q[w]},
        witness_value=float(gaps[w]), trace={"moment": s, "value": q},
    )


# ---------------------------------------------------------------------------
# closed-form sufficient constants
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class SufficientConstants:
    delta: float
    c: float
    admissible: bool

    def to_dict(self) -> dict:
        return {"delta": self.delta, "c": self.c, "admissible": self.admissible}


def genH_sufficient_constants(model: MfgModel | DerivativeBounds, delta_tilde: float, c_tilde: float,
                              which: str, beta: float, z_bound: float) -> SufficientConstants:
    """Confining constants implied by a compensation inequality and derivative bounds.

    ``which="i"`` gives the X-form constants, ``which="ii"`` the Y-form ones.
    ``z_bound`` is the sup bound on Z.
    """
    b = model if isinstance(model, DerivativeBounds) else model.derivative_bounds
    Cz = float(z_bound)
    if which == "i":
        delta = delta_tilde - (5 * beta + b.px**2 + b.pmu**2)
        c = c_tilde - beta * (
            b.ppx**2 / 2 + 2 * b.xp + b.ppp**2 * Cz**4 / 2 + b.ppx**2 * Cz**2 + 2 * b.pp * Cz
            + b.pmu_xt**2 / 2
        )
    elif which == "ii":
        delta = delta_tilde - (5 * beta + b.px**2)
        c = c_tilde + beta * (
            -b.xxx**2 / 2 - b.xpp**2 * Cz**4 / 2 - 2 * b.xp * Cz**2 - b.xxp**2 * Cz**2
            - 2 * b.xx * Cz - b.xmu_xt**2 / 2
        )
    else:
        raise InvalidParameters("which must be 'i' or 'ii'")
    return SufficientConstants(delta=float(delta), c=float(c), admissible=bool(delta > 0))
