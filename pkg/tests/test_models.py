import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfg_turnpike.errors import InvalidParameters
from mfg_turnpike.measures import EmpiricalMeasure
from mfg_turnpike.models import (
    BuiltinModelSpec,
    audit_derivatives,
    build_model,
    lagrangian,
    momentum_at_rest,
    with_final_cost,
)

import properties

MU = EmpiricalMeasure([[0.5], [-1.0], [2.0]])


def spec(family, beta=0.0, dim=1, **params):
    return build_model(BuiltinModelSpec(family, params, beta=beta, dim=dim))


ALL = [
    ("riccati_lq", {"c0": 1.0, "gamma": 2.0}),
    ("mechanical_quadratic", {"c0": 1.0, "a": 0.5}),
    ("remark_translation", {}),
    ("nonseparable_C0", {"C0": 3.0}),
]


@pytest.mark.parametrize("family,params", ALL)
def test_audit_passes_for_builtins(family, params):
    rep = audit_derivatives(spec(family, beta=0.2, **params))
    assert rep.passed, rep.failures + rep.bound_violations


@pytest.mark.parametrize("dim", [2, 3])
def test_audit_in_higher_dimension(dim):
    assert audit_derivatives(spec("nonseparable_C0", dim=dim, C0=6.0), samples=16).passed


def test_riccati_declared_bounds():
    b = spec("riccati_lq", c0=0.7).derivative_bounds
    assert b.pp == 1.0 and b.xx == pytest.approx(0.7)


def test_translation_measure_kernel_bound():
    assert spec("remark_translation").derivative_bounds.xmu == 2.0


def test_fault_injection_is_flagged():
    m = spec("riccati_lq")
    broken = dataclasses.replace(m, grad_x_H=lambda x, p, mu: 1.1 * m.grad_x_H(x, p, mu))
    rep = audit_derivatives(broken)
    assert not rep.passed and rep.max_rel_errors["grad_x_H"] > rep.tol


def test_mechanical_without_coupling_is_separable():
    m = spec("mechanical_quadratic", a=0.0)
    x = np.array([[1.0], [2.0]])
    assert np.all(m.measure_grad_p_H(x, x, MU, x) == 0)
    assert m.measure_independent


def test_quadratic_lagrangian_by_hand():
    # H = |p|^2/2 - f gives L = |v|^2/2 + f
    m = spec("riccati_lq", c0=1.0)
    x, v = np.array([0.0]), np.array([2.0])
    assert lagrangian(m, x, v, MU) == pytest.approx(2.0)  # f(0) = 0 for this family
    rm = spec("remark_translation")
    mu = EmpiricalMeasure([[math.sqrt(3.0)]])
    # translation example: H = p^2/2 - (x - m)^2, so f(0) = m^2 = 3
    assert lagrangian(rm, x, v, mu) == pytest.approx(5.0)


def test_lagrangian_at_rest_is_minus_hamiltonian():
    m = spec("nonseparable_C0", C0=3.0)
    x = np.array([[0.4]])
    p_star = momentum_at_rest(m, x, MU)
    assert np.allclose(m.grad_p_H(x, p_star, MU), 0.0, atol=1e-10)
    assert lagrangian(m, x, np.zeros((1, 1)), MU) == pytest.approx(-m.hamiltonian(x, p_star, MU)[0], abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_legendre_round_trip(seed):
    properties.legendre_round_trip(seed)


def test_unknown_family_and_parameters():
    with pytest.raises(InvalidParameters):
        spec("no_such_family")
    with pytest.raises(InvalidParameters):
        spec("riccati_lq", c0=1.0, zeta=2.0)
    with pytest.raises(InvalidParameters):
        spec("riccati_lq", c0=-1.0)
    with pytest.raises(InvalidParameters):
        spec("remark_translation", dim=2)


def test_nonseparable_admissibility_is_enforced():
    with pytest.raises(InvalidParameters):
        spec("nonseparable_C0", C0=0.1)


def test_with_final_cost_changes_only_g():
    m = spec("mechanical_quadratic", c0=1.0, a=0.5, gamma=1.0)
    m2 = with_final_cost(m, gamma=3.0)
    x = np.array([[2.0]])
    assert m2.grad_x_g(x, MU)[0, 0] == pytest.approx(6.0)
    assert m.dynamics_identity() == m2.dynamics_identity()
    assert m.identity() != m2.identity()


def test_spec_round_trip():
    s = BuiltinModelSpec("mechanical_quadratic", {"a": 0.5, "c0": 2.0}, beta=0.1, dim=2)
    assert BuiltinModelSpec.from_dict(s.to_dict()) == s
