"""Property checks shared by the hypothesis suites and the acceptance run.

Each check takes a seed (plus a few parameters), builds its own random
inputs, and raises AssertionError on violation.
"""

from __future__ import annotations

import numpy as np

from mfg_turnpike.measures import EmpiricalMeasure, wasserstein
from mfg_turnpike.models import BuiltinModelSpec, build_model, lagrangian, legendre_momentum, with_final_cost
from mfg_turnpike.solve import SolverConfig, TrajectoryBundle, solve_equilibrium_particles
from mfg_turnpike.turnpike import check_differential_inequality, gap_functions
from mfg_turnpike.verify import RandomVariableCloud, eval_Q


def phivarphi(seed: int, n: int = 12, k: int = 5, d: int = 1) -> None:
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 1, k)
    b1 = TrajectoryBundle(t, rng.normal(size=(k, n, d)), rng.normal(size=(k, n, d)), None)
    b2 = TrajectoryBundle(t, rng.normal(size=(k, n, d)) * 3, rng.normal(size=(k, n, d)), None)
    g = gap_functions(b1, b2)
    assert np.all(g.Phi >= 0)
    assert np.all(np.abs(g.phi) <= 0.5 * g.Phi * (1 + 1e-12) + 1e-15)


def differential_inequality(seed: int) -> None:
    """Two equilibria of a strongly monotone linear-quadratic model satisfy the joint inequality."""
    rng = np.random.default_rng(seed)
    c0 = float(rng.uniform(0.5, 2.0))
    g1, g2 = rng.uniform(0.0, 3.0, size=2)
    m1 = build_model(BuiltinModelSpec("riccati_lq", {"c0": c0, "gamma": float(g1)}))
    m2 = with_final_cost(m1, gamma=float(g2))
    mu = EmpiricalMeasure(rng.normal(size=(16, 1)))
    cfg = SolverConfig(dt=0.05, N=16)
    e1 = solve_equilibrium_particles(m1, mu, 4.0, cfg)
    e2 = solve_equilibrium_particles(m2, mu, 4.0, cfg)
    rep = check_differential_inequality(gap_functions(e1.bundle(), e2.bundle()), min(c0, 1.0), same_rho=False)
    assert rep.passed, rep


def synchronous_specialisation(seed: int, beta: float = 0.3, n: int = 7) -> None:
    """With R = X and alpha = D_pH(X, Y, law X) the primed functionals reduce to the unprimed ones."""
    rng = np.random.default_rng(seed)
    model = build_model(BuiltinModelSpec("nonseparable_C0", {"C0": 5.0}, beta=beta))
    X, Y = rng.normal(size=(n, 1)), rng.normal(size=(n, 1))
    Z = rng.uniform(-0.5, 0.5, size=(n, 1, 1))
    alpha = model.grad_p_H(X, Y, EmpiricalMeasure(X))
    cloud = RandomVariableCloud(X, Y, Z, R=X, alpha=alpha)
    for primed, plain in ((3, 1), (4, 2)):
        a, b = eval_Q(model, primed, cloud, beta), eval_Q(model, plain, cloud, beta)
        assert abs(a - b) <= 1e-10 * max(1.0, abs(b)), (primed, a, b)


def legendre_round_trip(seed: int, n: int = 6) -> None:
    """p -> v = D_pH -> p, and the Fenchel equality L + H = v.p, on a non-quadratic Hamiltonian."""
    rng = np.random.default_rng(seed)
    model = build_model(BuiltinModelSpec("nonseparable_C0", {"C0": 3.0}))
    x, p = rng.normal(size=(n, 1)), rng.normal(size=(n, 1)) * 2
    mu = EmpiricalMeasure(rng.normal(size=(5, 1)))
    v = model.grad_p_H(x, p, mu)
    p_back = legendre_momentum(model, x, v, mu)
    assert np.allclose(p_back, p, atol=1e-8)
    L = lagrangian(model, x, v, mu)
    assert np.allclose(L + model.hamiltonian(x, p, mu), np.sum(v * p, -1), atol=1e-8)


def w2_axioms(seed: int, n: int = 7, d: int = 1) -> None:
    rng = np.random.default_rng(seed)
    a, b, c = (EmpiricalMeasure(rng.normal(size=(n, d)) * s) for s in (1.0, 2.0, 0.5))
    ab, ba = wasserstein(a, b), wasserstein(b, a)
    assert abs(ab - ba) <= 1e-12
    assert wasserstein(a, a) <= 1e-12
    assert ab <= wasserstein(a, c) + wasserstein(c, b) + 1e-12
    v = rng.normal(size=d)
    assert abs(wasserstein(a, a.translate(v)) - np.linalg.norm(v)) <= 1e-10
