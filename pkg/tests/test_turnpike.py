import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfg_turnpike.errors import HorizonTooShort, IncompatibleStudies, MisalignedBundles, WindowTooShort
from mfg_turnpike.measures import gaussian_quantiles
from mfg_turnpike.models import BuiltinModelSpec, build_model, with_final_cost
from mfg_turnpike.solve import SolverConfig, TrajectoryBundle, solve_equilibrium_particles
from mfg_turnpike.turnpike import (
    check_differential_inequality,
    check_uniqueness_limits,
    ergodic_study,
    fit_decay,
    gap_functions,
    gradient_gap_field,
    lambda_T,
    psi_envelope_constant,
)

import properties
from oracles import riccati_P


def spec(family, beta=0.0, **params):
    return build_model(BuiltinModelSpec(family, params, beta=beta))


def bundle(X, Y, t=None, label=""):
    X, Y = np.asarray(X, float), np.asarray(Y, float)
    t = np.linspace(0, 1, X.shape[0]) if t is None else t
    return TrajectoryBundle(t, X, Y, None, label=label)


class TestGaps:
    def test_identical_bundles(self):
        rng = np.random.default_rng(0)
        b = bundle(rng.normal(size=(4, 6, 1)), rng.normal(size=(4, 6, 1)))
        g = gap_functions(b, b)
        assert np.all(g.phi == 0) and np.all(g.Phi == 0) and np.all(g.w2_gap == 0)

    def test_shift_by_hand(self):
        # X shifted by 1, Y by 2: phi = 2, Phi = 5, W2 = 1
        rng = np.random.default_rng(1)
        X, Y = rng.normal(size=(3, 5, 1)), rng.normal(size=(3, 5, 1))
        g = gap_functions(bundle(X + 1, Y + 2), bundle(X, Y))
        assert np.allclose(g.phi, 2.0) and np.allclose(g.Phi, 5.0) and np.allclose(g.w2_gap, 1.0)

    def test_misaligned(self):
        X = np.zeros((3, 4, 1))
        with pytest.raises(MisalignedBundles):
            gap_functions(bundle(X, X), bundle(X, X, t=np.array([0, 0.4, 1.0])))
        with pytest.raises(MisalignedBundles):
            gap_functions(bundle(X, X), bundle(np.zeros((3, 5, 1)), np.zeros((3, 5, 1))))

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), d=st.sampled_from([1, 2]))
    def test_phivarphi(self, seed, d):
        properties.phivarphi(seed, d=d)


class TestFit:
    t = np.linspace(0, 8, 401)

    def test_exponential(self):
        r = fit_decay(self.t, 2 * np.exp(-3 * self.t), shape="forward")
        assert r.rate == pytest.approx(3.0, abs=1e-6) and r.amplitude == pytest.approx(2.0, rel=1e-6)

    def test_backward(self):
        r = fit_decay(self.t, np.exp(-1.5 * (8 - self.t)), shape="backward", bound=1.5)
        assert r.rate == pytest.approx(1.5, abs=1e-6) and r.passed

    def test_constant_has_no_rate(self):
        r = fit_decay(self.t, np.ones_like(self.t), shape="forward", bound=1.0)
        assert r.rate == pytest.approx(0.0, abs=1e-12) and not r.passed

    def test_two_sided(self):
        v = np.exp(-2 * self.t) + 0.5 * np.exp(-3 * (8 - self.t))
        r = fit_decay(self.t, v, shape="two_sided")
        assert r.rate == pytest.approx(2.0, abs=1e-3)

    def test_window_too_short(self):
        with pytest.raises(WindowTooShort):
            fit_decay(self.t, np.exp(-self.t), window=(1.0, 1.05))


class TestInequality:
    def test_identical_bundles_pass(self):
        b = bundle(np.ones((5, 3, 1)), np.ones((5, 3, 1)))
        assert check_differential_inequality(gap_functions(b, b), 1.0, same_rho=True).passed

    def test_translated_equilibria(self):
        # two shifted copies of the translation example: the gap never grows
        m = spec("remark_translation")
        cfg = SolverConfig(dt=0.05, N=10)
        e1 = solve_equilibrium_particles(m, gaussian_quantiles(0.0, 0.5, 10), 2.0, cfg)
        e2 = solve_equilibrium_particles(m, gaussian_quantiles(0.3, 0.5, 10), 2.0, cfg)
        g = gap_functions(e1.bundle(), e2.bundle())
        assert np.all(np.diff(g.Phi) <= 1e-12)

    def test_violation_is_reported(self):
        t = np.linspace(0, 1, 11)
        X = np.zeros((11, 2, 1))
        Y = np.zeros_like(X)
        Y[:, 0, 0] = 1.0 - t
        g = gap_functions(bundle(X + np.linspace(1, 0, 11)[:, None, None], Y, t), bundle(X, -Y, t))
        rep = check_differential_inequality(g, 1.0, same_rho=True, tol=0.0)
        assert not rep.passed and rep.violations

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_linear_quadratic_pairs(self, seed):
        properties.differential_inequality(seed)


def test_gradient_gap_matches_riccati():
    m1 = spec("riccati_lq", c0=1.0, gamma=1.0)
    m2 = with_final_cost(m1, gamma=2.0)
    cfg = SolverConfig(dt=0.01, N=20)
    rho0 = gaussian_quantiles(0.0, 1.0, 20)
    e1, e2 = (solve_equilibrium_particles(m, rho0, 4.0, cfg) for m in (m1, m2))
    xs = np.array([[-1.0], [0.5], [2.0]])
    for t in (1.0, 3.0):
        dP = riccati_P(1.0, 1.0, 4.0, t)[0] - riccati_P(1.0, 2.0, 4.0, t)[0]
        ref = dP**2 * xs[:, 0] ** 2 / (1 + xs[:, 0] ** 2)
        assert np.allclose(gradient_gap_field(e1, e2, t, xs), ref, rtol=2e-2, atol=1e-10)


def test_lambda_needs_long_horizon():
    m = spec("riccati_lq")
    eq = solve_equilibrium_particles(m, gaussian_quantiles(0, 1, 5), 1.0, SolverConfig(dt=0.05, N=5))
    with pytest.raises(HorizonTooShort):
        lambda_T(m, eq)


def test_psi_envelope_of_pure_boundary_layer():
    t = np.linspace(0, 10, 1001)
    psi = np.exp(-2 * t)  # |psi'| = 2 e^{-2t} <= 2 * envelope
    assert psi_envelope_constant(t, psi, 2.0) == pytest.approx(2.0, rel=1e-3)


@pytest.fixture(scope="module")
def small_studies():
    cfg = SolverConfig(dt=0.05, N=12)
    rho0 = gaussian_quantiles(0.0, 1.0, 12)
    probes = {"times": [0.0, 0.25], "xs": [-1.0, 0.0, 1.0]}
    m1 = spec("riccati_lq", c0=1.0, gamma=1.0)
    s1 = ergodic_study(m1, rho0, [2.0, 4.0, 6.0], probes, cfg, c0=1.0)
    s2 = ergodic_study(with_final_cost(m1, gamma=2.0), rho0, [2.0, 4.0, 6.0], probes, cfg, c0=1.0)
    return s1, s2


def test_lambda_gaps_decay_geometrically(small_studies):
    # horizons 2 apart, c0 = 1: successive gaps shrink by at least about e^{-1}
    for s in small_studies:
        assert all(r <= math.exp(-1.0) for r in s.lambda_ratios)
        assert s.lambda_limit == pytest.approx(0.0, abs=5 * s.lambda_error)


def test_uniqueness_across_final_costs(small_studies):
    s1, s2 = small_studies
    rep = check_uniqueness_limits(s1, s2, u_rel_tol=0.05)
    assert rep.lambda_ok and rep.rho_ok


def test_incompatible_studies(small_studies):
    s1, _ = small_studies
    with pytest.raises(IncompatibleStudies):
        check_uniqueness_limits(s1, dataclasses.replace(s1, rho0_fingerprint="other"))
    with pytest.raises(IncompatibleStudies):
        check_uniqueness_limits(s1, dataclasses.replace(s1, probe_xs=[0.0]))


def test_study_round_trips_through_dict(small_studies):
    s1, _ = small_studies
    assert type(s1).from_dict(s1.to_dict()) == s1


def test_ergodic_study_rejects_late_probes():
    from mfg_turnpike.errors import InvalidParameters

    with pytest.raises(InvalidParameters):
        ergodic_study(spec("riccati_lq"), gaussian_quantiles(0, 1, 4), [2.0, 4.0],
                      {"times": [1.0], "xs": [0.0]}, SolverConfig(dt=0.05, N=4))
