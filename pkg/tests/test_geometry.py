from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from charpic.errors import (
    DegenerateConfiguration,
    GeometryError,
    NotAffine,
    NotCaseI,
    NotCaseII,
    PointOutsideRegion,
)
from charpic.geometry import (
    AffineCurve,
    Case,
    CurvePair,
    ExprCurve,
    Membership,
    Region,
    StableRegion,
    build_ladder,
    classify_configuration,
    curves_from_spec,
    membership,
    trapezoid_T,
    trapezoid_tau,
)


def test_affine_unstable():
    assert classify_configuration(CurvePair.affine(2, 2, 1)).case is Case.UNSTABLE_CASE_II


def test_affine_stable():
    assert classify_configuration(CurvePair.affine(1, 0.5, 1)).case is Case.STABLE_CASE_I


def test_coincident_curves_are_degenerate():
    assert classify_configuration(CurvePair.affine(1, 1, 1)).case is Case.DEGENERATE


def test_crossing_curves_raise():
    # b(a(y)) - y = y(y - 0.5) changes sign at 0.5
    curves = CurvePair(ExprCurve("y", "y"), ExprCurve("x + x^2 - 0.5*x", "x"), 1.0)
    with pytest.raises(DegenerateConfiguration):
        classify_configuration(curves)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(0.1, 5.0))
def test_affine_classification_matches_product(a, b):
    if abs(a * b - 1) < 1e-3:
        return
    case = classify_configuration(CurvePair.affine(a, b, 1.0)).case
    assert (case is Case.UNSTABLE_CASE_II) == (a * b > 1)


def test_region_points(region22):
    r = region22
    assert r.A == pytest.approx((1.0, 0.5))
    assert r.B == pytest.approx((1.0, 2.0))
    assert r.C == pytest.approx((0.25, 0.5))
    assert r.l == 1.0 and r.h == 2.0


def test_region_rejects_stable_pair():
    with pytest.raises(NotCaseII):
        Region.from_curves(CurvePair.affine(1, 0.5, 1))
    with pytest.raises(NotCaseI):
        StableRegion.from_curves(CurvePair.affine(2, 2, 1))


def test_curve_validation():
    with pytest.raises(GeometryError):
        CurvePair.affine(2, 2, -1)
    with pytest.raises(GeometryError):
        CurvePair(ExprCurve("1 + y", "y"), AffineCurve(2.0), 1.0)


@pytest.mark.parametrize(
    "point, expected",
    [((0.5, 0.4), Membership.IN_OAC), ((0.9, 1.0), Membership.IN_ABC), ((2, 2), Membership.OUTSIDE),
     ((0.5, 0.5), Membership.ON_AC)],
)
def test_membership(region22, point, expected):
    assert membership(region22, point) is expected


def test_tau_strip(region22):
    s = trapezoid_tau(region22, (0.5, 0.4))
    assert (s.xi_lo, s.xi_hi, s.y) == pytest.approx((0.5, 0.8, 0.4))
    assert s.upper(0.7) == pytest.approx(1.4)


def test_tau_collapses_on_M(region22):
    s = trapezoid_tau(region22, (0.6, 0.3))
    assert s.xi_hi - s.xi_lo == pytest.approx(0.0, abs=1e-15)


def test_T_strip(region22):
    s = trapezoid_T(region22, (0.9, 1.0))
    assert (s.xi_lo, s.xi_hi, s.y) == pytest.approx((0.9, 1.0, 1.0))
    a = trapezoid_T(region22, region22.A)
    assert a.xi_lo == a.xi_hi == 1.0


def test_T_on_N_lower_limit_is_curve(region22):
    s = trapezoid_T(region22, (0.75, 1.5))
    assert s.y == pytest.approx(float(region22.b(0.75)))


def test_strips_coincide_on_AC(region22):
    tau, T = trapezoid_tau(region22, (0.25, 0.5)), trapezoid_T(region22, (0.25, 0.5))
    assert (tau.xi_lo, tau.xi_hi, tau.y) == (T.xi_lo, T.xi_hi, T.y)


def test_wrong_triangle_raises(region22):
    with pytest.raises(PointOutsideRegion):
        trapezoid_T(region22, (0.5, 0.4))
    with pytest.raises(PointOutsideRegion):
        trapezoid_tau(region22, (0.9, 1.0))


def test_ladder_points_exact(region22):
    lad = build_ladder(region22, 4)
    # independent exact recursion in rationals
    a = b = Fraction(2)
    A, C = [(Fraction(1), Fraction(1, 2))], [(Fraction(1, 4), Fraction(1, 2))]
    for _ in range(4):
        x = C[-1][0]
        A.append((x, x / a))
        C.append((x / a / b, x / a))
    assert lad.A[1] == pytest.approx((0.25, 0.125))
    assert lad.C[1] == pytest.approx((0.0625, 0.125))
    for i in range(5):
        assert lad.A[i] == pytest.approx(tuple(float(v) for v in A[i]), rel=1e-15)
        assert lad.C[i] == pytest.approx(tuple(float(v) for v in C[i]), rel=1e-15)
        assert lad.A[i][0] == pytest.approx(4.0**-i)


def test_ladder_zero_depth(region22):
    lad = build_ladder(region22, 0)
    assert lad.depth == 0 and lad.A == (region22.A,) and lad.C == (region22.C,)


def test_ladder_levels_disjoint(region22):
    lad = build_ladder(region22, 6)
    rng = np.random.default_rng(1)
    x, y = rng.uniform(0, 1, 20000), rng.uniform(0, 0.5, 20000)
    inside = region22.contains(x, y) & (y < 0.5)
    lvl = lad.level_of(x, y)
    # every level found lies in OAC, and level bands are ordered in y
    assert np.all(inside[lvl > 0])
    for n in range(1, 7):
        ys = y[lvl == n]
        if ys.size:
            assert ys.min() > lad.A[n][1] and ys.max() <= lad.A[n - 1][1] + 1e-12


def test_ladder_needs_affine():
    curves = CurvePair(ExprCurve("2*y + y^2", "y"), ExprCurve("2*x", "x"), 1.0)
    with pytest.raises(NotAffine):
        build_ladder(Region.from_curves(curves), 3)


def test_expr_and_sampled_curves_agree_with_affine():
    spec_e = {"type": "expr", "a": "2*y", "b": "2*x", "x_A": 1}
    ys = np.linspace(0, 1, 11)
    spec_s = {"type": "sampled", "a_points": [[y, 2 * y] for y in ys], "b_points": [[x, 2 * x] for x in ys],
              "x_A": 1}
    for spec in (spec_e, spec_s):
        c = curves_from_spec(spec)
        assert c.y_A == pytest.approx(0.5) and c.y_B == pytest.approx(2.0)
        r = Region.from_curves(c)
        assert r.C == pytest.approx((0.25, 0.5))


@settings(max_examples=40, deadline=None)
@given(st.floats(1.2, 4.0), st.floats(1.2, 4.0), st.floats(0.2, 2.0))
def test_region_invariants(a, b, x_A):
    r = Region.from_curves(CurvePair.affine(a, b, x_A))
    assert r.y_A < r.y_B
    assert 0 < r.x_C < r.x_A
    assert r.area <= r.l * r.h
    assert r.area == pytest.approx(x_A**2 * (b / 2 - 1 / (2 * a)))
