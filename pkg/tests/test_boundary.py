import math
from types import SimpleNamespace

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from charpic.boundary import (
    AffineTheta,
    BoundaryData,
    GeneralTheta,
    QuadraticTheta,
    affine_theta_linear,
    build_theta_elementary,
    build_theta_linear,
    build_theta_positive_demo,
    check_theta_elementary,
    check_theta_linear,
    sigma_base,
    theta_affine_next,
    theta_from_spec,
)
from charpic.errors import PositivityUnachievable, SingularConstraint
from charpic.fields import FieldTriple, GridSpec
from charpic.geometry import AffineCurve, CurvePair, Region

E = math.e


def exp_data():
    return BoundaryData("exp(3*y)", "exp(3*x)")


def test_phi_prime_symbolic_and_fallback():
    d = exp_data()
    assert d.phi_prime_kind == "symbolic"
    assert d.phi_prime(0.2) == pytest.approx(3 * math.exp(0.6), rel=1e-14)
    cb = BoundaryData(lambda y: np.sin(y), lambda x: 0 * x)
    assert cb.phi_prime_kind == "finite-difference"
    assert cb.phi_prime(0.3) == pytest.approx(math.cos(0.3), abs=1e-8)


def test_zero_case_defect(region22):
    theta = AffineTheta(region22.y_A, 0.0, 0.0)
    rep = check_theta_elementary(theta, BoundaryData.zero(), lambda x, y: 0 * x, region22)
    assert rep.defect == 0.0


def test_exponential_theta_compatible(region22):
    # u = exp(x + y): theta'(y_A) = e^1.5 = 3e^1.5 - 2e^3 + 2(e^3 - e^1.5)
    assert 3 * E**1.5 - 2 * E**3 + 2 * (E**3 - E**1.5) == pytest.approx(E**1.5)
    rep = check_theta_elementary(GeneralTheta("exp(1+y)"), exp_data(), lambda x, y: np.exp(x + y), region22)
    assert rep.defect <= 1e-6
    assert rep.anchor_defect <= 1e-12


def test_wrong_slope_defect(region22):
    theta = AffineTheta(region22.y_A, E**1.5, 0.0)
    rep = check_theta_elementary(theta, exp_data(), lambda x, y: np.exp(x + y), region22)
    assert rep.defect == pytest.approx(E**1.5, rel=1e-9)
    assert rep.defect == pytest.approx(4.4817, abs=1e-4)


def test_linear_theta_closed_form(region22):
    a_, d_, al, be = sympy.symbols("a d alpha beta")
    sol = sympy.solve(sympy.Eq(al, a_ * (al * d_**2 / 2 + be * d_**3 / 3)), be)[0]
    beta_ref = float(sol.subs({a_: 2, d_: sympy.Rational(3, 2), al: 1}))
    assert beta_ref == pytest.approx(-0.555556, abs=1e-6)
    theta = build_theta_positive_demo(region22)
    assert theta.alpha == 1.0
    assert theta.beta == pytest.approx(beta_ref, rel=1e-14)
    assert theta.integral(region22.y_A, region22.y_B) == pytest.approx(0.5, rel=1e-14)
    assert theta(region22.y_B) == pytest.approx(0.25, rel=1e-13)
    assert check_theta_linear(theta, BoundaryData.zero(), region22).defect <= 1e-14


def test_constant_theta_rejected(region22):
    data = BoundaryData("1", "0")
    const = AffineTheta(region22.y_A, 1.0, 0.0)
    assert check_theta_linear(const, data, region22).defect == pytest.approx(2 * 1.5)
    theta = build_theta_linear(data, region22)
    assert theta.beta != 0.0
    assert check_theta_linear(theta, data, region22).defect <= 1e-12


def test_degenerate_segment():
    fake = SimpleNamespace(y_A=0.5, y_B=0.5, x_A=1.0, a=AffineCurve(2.0))
    with pytest.raises(SingularConstraint):
        build_theta_linear(BoundaryData.zero(), fake)


def test_positivity_boundary_case():
    fake = SimpleNamespace(y_A=0.5, y_B=1.5, x_A=3.0, a=AffineCurve(6.0))  # a d^2 = 6
    with pytest.raises(PositivityUnachievable):
        build_theta_positive_demo(fake)


@settings(max_examples=40, deadline=None)
@given(st.floats(1.1, 4.0), st.floats(1.1, 4.0), st.floats(0.05, 1.5))
def test_demo_theta_properties(a, b, x_A):
    r = Region.from_curves(CurvePair.affine(a, b, x_A))
    d = r.y_B - r.y_A
    if a * d**2 >= 6:
        with pytest.raises(PositivityUnachievable):
            build_theta_positive_demo(r)
        return
    theta = build_theta_positive_demo(r)
    assert theta(r.y_A) == 0.0
    ys = np.linspace(r.y_A, r.y_B, 101)[1:-1]
    assert np.all(theta(ys) > 0)
    # slope condition for zero data: theta'(y_A) = a * integral of theta
    assert theta.derivative(r.y_A) == pytest.approx(a * theta.integral(r.y_A, r.y_B), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 1), st.floats(1, 3))
def test_quadratic_integral_closed_form(c0, al, be, lo, hi):
    s = sympy.Symbol("s")
    th = QuadraticTheta(0.3, c0, al, be)
    ref = float(sympy.integrate(c0 + al * (s - 0.3) + be * (s - 0.3) ** 2, (s, lo, hi)))
    assert th.integral(lo, hi) == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_elementary_theta_affine(region22):
    th = build_theta_elementary(BoundaryData.zero(), lambda x, y: np.ones_like(x), region22)
    assert isinstance(th, AffineTheta)
    assert th.anchor == 0.0
    # sigma = a * integral of f(x_A, eta) over AB = 2 * 1.5
    assert th.slope == pytest.approx(3.0, rel=1e-12)


def test_sigma_updates(region22):
    grid = GridSpec.over(region22, 33)
    zero = FieldTriple.zeros(grid)
    data = BoundaryData("y", "0")
    th = AffineTheta(region22.y_A, 0.5, 7.0)
    nxt = theta_affine_next(zero, th, data, lambda x, y, u, p, q: 0 * x, region22)
    assert nxt.slope == sigma_base(data, region22) == 1.0
    z = theta_affine_next(zero, AffineTheta(region22.y_A, 0, 0), BoundaryData.zero(),
                          lambda x, y, u, p, q: 0 * x, region22)
    assert z.slope == 0.0 and z.anchor == 0.0


def test_affine_theta_linear_is_fixed_point(region22):
    data = exp_data()
    th = affine_theta_linear(data, region22)
    a1 = 2.0
    rhs = data.phi_prime(0.5) - a1 * data.psi(1.0) + a1 * th.integral(0.5, 2.0)
    assert th.slope == pytest.approx(float(rhs), rel=1e-12)


def test_theta_modes(region22):
    data = BoundaryData.zero()
    assert isinstance(theta_from_spec("positive_demo", data, region22), QuadraticTheta)
    assert isinstance(theta_from_spec("explicit: y - 0.5", data, region22), GeneralTheta)
    with pytest.raises(ValueError):
        theta_from_spec("nope", data, region22)
