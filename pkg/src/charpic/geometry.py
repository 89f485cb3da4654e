"""Data curves, configuration classification and the solution regions.

The u-data curve M is the graph x = a(y); the u_x-data curve N is y = b(x).
Both pass through the origin and are strictly increasing.  When N lies above
M (b(a(y)) > y) the curvilinear triangle OAB with A = (x_A, a^-1(x_A)) on M
and B = (x_A, b(x_A)) on N is split by the horizontal segment AC into OAC and
ABC.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateConfiguration,
    GeometryError,
    NotAffine,
    NotCaseI,
    NotCaseII,
    PointOutsideRegion,
)
from .expr import Expr

CHECK_SAMPLES = 10_001
BOUNDARY_RTOL = 1e-12


# --------------------------------------------------------------------------
# curves

class Curve:
    """Strictly increasing scalar map t -> v with v(0) = 0."""

    kind = "curve"

    def __call__(self, t):
        raise NotImplementedError

    def derivative(self, t):
        raise NotImplementedError

    def inverse(self, v):
        """Solve curve(t) = v by bisection (relative tolerance ~1e-14)."""
        v = np.asarray(v, dtype=float)
        hi = np.ones_like(v)
        for _ in range(200):
            short = self(hi) < v
            if not np.any(short):
                break
            hi = np.where(short, 2 * hi, hi)
        lo = np.zeros_like(v)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            below = self(mid) < v
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 1e-14 * np.maximum(np.abs(hi), 1e-300)):
                break
        out = 0.5 * (lo + hi)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class AffineCurve(Curve):
    slope: float
    kind = "affine"

    def __post_init__(self):
        if not self.slope > 0:
            raise GeometryError(f"affine slope must be positive, got {self.slope}")

    def __call__(self, t):
        return self.slope * np.asarray(t, dtype=float) if np.ndim(t) else self.slope * float(t)

    def derivative(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.slope) if np.ndim(t) else self.slope

    def inverse(self, v):
        return np.asarray(v, dtype=float) / self.slope if np.ndim(v) else float(v) / self.slope


@dataclass(frozen=True, eq=False)
class SampledCurve(Curve):
    """Monotone piecewise-linear curve through ``points`` = [[t, v], ...]."""

    points: np.ndarray
    kind = "sampled"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise GeometryError("sampled curve needs at least two [t, v] pairs")
        if pts[0, 0] != 0 or pts[0, 1] != 0:
            raise GeometryError("sampled curve must start at the origin")
        if np.any(np.diff(pts[:, 0]) <= 0) or np.any(np.diff(pts[:, 1]) <= 0):
            raise GeometryError("sampled curve must be strictly increasing in both coordinates")
        object.__setattr__(self, "points", pts)

    @property
    def t(self):
        return self.points[:, 0]

    @property
    def v(self):
        return self.points[:, 1]

    def __call__(self, t):
        out = np.interp(t, self.t, self.v)
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self, t):
        slopes = np.diff(self.v) / np.diff(self.t)
        # right-hand slope at knots, left-hand at the last knot
        k = np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, len(slopes) - 1)
        out = slopes[k]
        return float(out) if np.ndim(out) == 0 else out

    def inverse(self, v):
        out = np.interp(v, self.v, self.t)
        return float(out) if np.ndim(out) == 0 else out


class ExprCurve(Curve):
    """Curve given by an expression in a single variable."""

    kind = "expr"

    def __init__(self, source: str, var: str):
        self.var = var
        self.expr = Expr.parse(source, {var})
        try:
            self.dexpr = self.expr.derivative(var)
        except Exception:
            self.dexpr = None

    def __call__(self, t):
        out = self.expr(**{self.var: np.asarray(t, dtype=float)})
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self, t):
        if self.dexpr is not None:
            out = self.dexpr(**{self.var: np.asarray(t, dtype=float)})
        else:
            t = np.asarray(t, dtype=float)
            step = 1e-6 * np.maximum(1.0, np.abs(t))
            out = (self(t + step) - self(np.maximum(t - step, 0.0))) / (t + step - np.maximum(t - step, 0.0))
        return float(out) if np.ndim(out) == 0 else out

    def __repr__(self):
        return f"ExprCurve({self.expr.source!r}, {self.var!r})"


@dataclass(frozen=True)
class CurvePair:
    """The data curves x = a(y) (u-data) and y = b(x) (u_x-data) up to x = x_A."""

    a: Curve
    b: Curve
    x_A: float
    y_A: float = field(init=False)
    y_B: float = field(init=False)

    def __post_init__(self):
        if not self.x_A > 0:
            raise GeometryError("x_A must be positive")
        object.__setattr__(self, "y_A", float(self.a.inverse(self.x_A)))
        object.__setattr__(self, "y_B", float(self.b(self.x_A)))
        self._validate()

    def _validate(self):
        if abs(float(self.a(0.0))) > 1e-14 or abs(float(self.b(0.0))) > 1e-14:
            raise GeometryError("data curves must pass through the origin")
        ys = np.linspace(0.0, self.y_A, CHECK_SAMPLES)
        xs = np.linspace(0.0, self.x_A, CHECK_SAMPLES)
        if np.any(np.diff(self.a(ys)) <= 0):
            raise GeometryError("a must be strictly increasing on [0, y_A]")
        if np.any(np.diff(self.b(xs)) <= 0):
            raise GeometryError("b must be strictly increasing on [0, x_A]")
        if not np.all(np.isfinite(self.a.derivative(ys))):
            raise GeometryError("a' must be finite on [0, y_A]")

    @property
    def is_affine(self) -> bool:
        return isinstance(self.a, AffineCurve) and isinstance(self.b, AffineCurve)

    def with_extent(self, x_A: float) -> "CurvePair":
        return CurvePair(self.a, self.b, x_A)

    @classmethod
    def affine(cls, a_slope: float, b_slope: float, x_A: float) -> "CurvePair":
        return cls(AffineCurve(float(a_slope)), AffineCurve(float(b_slope)), float(x_A))


# --------------------------------------------------------------------------
# classification

class Case(enum.Enum):
    STABLE_CASE_I = "StableCaseI"
    UNSTABLE_CASE_II = "UnstableCaseII"
    DEGENERATE = "Degenerate"


@dataclass(frozen=True)
class Configuration:
    case: Case
    margin: float


def classify_configuration(curves: CurvePair, samples: int = CHECK_SAMPLES) -> Configuration:
    """Sign of b(a(y)) - y on (0, y_A]: positive is Case II, negative Case I."""
    ys = np.linspace(0.0, curves.y_A, int(samples) + 1)[1:]
    d = curves.b(curves.a(ys)) - ys
    tol = BOUNDARY_RTOL * max(curves.y_A, np.finfo(float).tiny)
    margin = float(np.min(d))
    pos, neg = np.any(d > tol), np.any(d < -tol)
    if pos and neg:
        raise DegenerateConfiguration("b(a(y)) - y changes sign on (0, y_A]: the data curves cross")
    if pos and np.all(d > tol):
        return Configuration(Case.UNSTABLE_CASE_II, margin)
    if neg and np.all(d < -tol):
        return Configuration(Case.STABLE_CASE_I, margin)
    return Configuration(Case.DEGENERATE, margin)


# --------------------------------------------------------------------------
# regions

class Membership(enum.Enum):
    IN_OAC = "InOAC"
    IN_ABC = "InABC"
    ON_AC = "OnAC"
    OUTSIDE = "Outside"


@dataclass(frozen=True)
class Strip:
    """Quadrature region xi in [xi_lo, xi_hi], eta in [y, upper(xi)]."""

    xi_lo: float
    xi_hi: float
    y: float
    upper: Curve

    @property
    def vertices(self):
        return (
            (self.xi_lo, self.y),
            (self.xi_hi, self.y),
            (self.xi_hi, float(self.upper(self.xi_hi))),
            (self.xi_lo, float(self.upper(self.xi_lo))),
        )

    def contains(self, xi, eta, tol=0.0):
        xi = np.asarray(xi, dtype=float)
        eta = np.asarray(eta, dtype=float)
        return (
            (xi >= self.xi_lo - tol)
            & (xi <= self.xi_hi + tol)
            & (eta >= self.y - tol)
            & (eta <= self.upper(xi) + tol)
        )


@dataclass(frozen=True)
class Region:
    """Closed curvilinear triangle OAB for an unstable (Case II) curve pair."""

    curves: CurvePair
    configuration: Configuration
    x_C: float
    gamma: float
    area: float

    @classmethod
    def from_curves(cls, curves: CurvePair) -> "Region":
        conf = classify_configuration(curves)
        if conf.case is not Case.UNSTABLE_CASE_II:
            raise NotCaseII(f"data curves are in configuration {conf.case.value}")
        x_C = float(curves.b.inverse(curves.y_A))
        if isinstance(curves.a, AffineCurve):
            gamma = abs(curves.a.slope)
        else:
            gamma = float(np.max(np.abs(curves.a.derivative(np.linspace(0, curves.y_A, CHECK_SAMPLES)))))
        xs = np.linspace(0.0, curves.x_A, CHECK_SAMPLES)
        area = float(np.trapezoid(curves.b(xs) - curves.a.inverse(xs), xs))
        return cls(curves, conf, x_C, gamma, area)

    # coordinates -----------------------------------------------------------
    @property
    def x_A(self):
        return self.curves.x_A

    @property
    def y_A(self):
        return self.curves.y_A

    @property
    def y_B(self):
        return self.curves.y_B

    @property
    def l(self):
        return self.curves.x_A

    @property
    def h(self):
        return self.curves.y_B

    @property
    def O(self):
        return (0.0, 0.0)

    @property
    def A(self):
        return (self.x_A, self.y_A)

    @property
    def B(self):
        return (self.x_A, self.y_B)

    @property
    def C(self):
        return (self.x_C, self.y_A)

    @property
    def a(self):
        return self.curves.a

    @property
    def b(self):
        return self.curves.b

    @property
    def tol(self):
        return BOUNDARY_RTOL * self.y_B

    @property
    def extent(self):
        return self.x_A, self.y_B

    # predicates ------------------------------------------------------------
    def outer_limit(self, y):
        """Right end of the x-integration: a(y) below AC, x_A on and above it."""
        y = np.asarray(y, dtype=float)
        on_abc = y >= self.y_A - self.tol
        out = np.where(on_abc, self.x_A, self.a(np.clip(y, 0.0, self.y_A)))
        return float(out) if out.ndim == 0 else out

    def contains(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        tol = self.tol
        return (
            (x >= -tol)
            & (x <= self.x_A + tol)
            & (y >= -tol)
            & (y <= self.b(np.clip(x, 0.0, self.x_A)) + tol)
            & (x <= self.a(np.clip(y, 0.0, self.y_A)) + tol)
        )

    def membership(self, point) -> Membership:
        x, y = float(point[0]), float(point[1])
        if not self.contains(x, y):
            return Membership.OUTSIDE
        if abs(y - self.y_A) <= self.tol and x >= self.x_C - self.tol:
            return Membership.ON_AC
        return Membership.IN_OAC if y < self.y_A else Membership.IN_ABC

    def trapezoid_tau(self, point) -> Strip:
        m = self.membership(point)
        if m not in (Membership.IN_OAC, Membership.ON_AC):
            raise PointOutsideRegion(point, "point is not in the closed triangle OAC")
        x, y = float(point[0]), float(point[1])
        return Strip(x, float(self.outer_limit(y)), y, self.b)

    def trapezoid_T(self, point) -> Strip:
        m = self.membership(point)
        if m not in (Membership.IN_ABC, Membership.ON_AC):
            raise PointOutsideRegion(point, "point is not in the closed triangle ABC")
        x, y = float(point[0]), float(point[1])
        return Strip(x, self.x_A, y, self.b)


def membership(region: Region, point) -> Membership:
    return region.membership(point)


def trapezoid_tau(region: Region, point) -> Strip:
    return region.trapezoid_tau(point)


def trapezoid_T(region: Region, point) -> Strip:
    return region.trapezoid_T(point)


@dataclass(frozen=True)
class StableRegion:
    """Region between N (below) and M (above) for a Case I curve pair, 0 <= x <= x_A."""

    curves: CurvePair
    configuration: Configuration

    @classmethod
    def from_curves(cls, curves: CurvePair) -> "StableRegion":
        conf = classify_configuration(curves)
        if conf.case is not Case.STABLE_CASE_I:
            raise NotCaseI(f"data curves are in configuration {conf.case.value}")
        return cls(curves, conf)

    @property
    def x_A(self):
        return self.curves.x_A

    @property
    def y_top(self):
        return self.curves.y_A

    @property
    def y_A(self):
        # A = (x_A, a^-1(x_A)) is the top corner on M here
        return self.curves.y_A

    @property
    def y_B(self):
        return self.curves.y_B

    @property
    def a(self):
        return self.curves.a

    @property
    def b(self):
        return self.curves.b

    @property
    def tol(self):
        return BOUNDARY_RTOL * self.y_top

    @property
    def extent(self):
        return self.x_A, self.y_top

    def contains(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        tol = self.tol
        return (
            (x >= -tol)
            & (x <= self.x_A + tol)
            & (y <= self.y_top + tol)
            & (y >= self.b(np.clip(x, 0.0, self.x_A)) - tol)
            & (self.a(np.clip(y, 0.0, self.y_top)) <= x + tol)
        )


# --------------------------------------------------------------------------
# trapezoid ladder for the non-uniqueness construction

@dataclass(frozen=True)
class TrapezoidLadder:
    """Points A_i on M and C_i on N with A_0 = A, C_0 = C (affine curves only).

    Level N >= 1 is the trapezoid A_N A_{N-1} C_{N-1} C_N with its top side
    (open segment C_{N-1} A_{N-1}) included and the other three sides excluded.
    """

    region: Region
    A: tuple
    C: tuple

    @property
    def depth(self) -> int:
        return len(self.A) - 1

    def level_of(self, x, y):
        """Ladder level N (1..depth) of each point, 0 when in none of them."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        tol = self.region.tol
        a, b = self.region.a, self.region.b
        inside = (x > b.inverse(np.clip(y, 0, None)) + tol) & (x < a(np.clip(y, 0, self.region.y_A)) - tol)
        out = np.zeros(np.broadcast(x, y).shape, dtype=int)
        for n in range(1, self.depth + 1):
            top, bottom = self.A[n - 1][1], self.A[n][1]
            sel = inside & (y > bottom + tol) & (y <= top + tol)
            if n == 1:
                sel &= y <= self.region.y_A + tol
            out = np.where(sel & (out == 0), n, out)
        return out

    def in_triangle(self, n: int, x, y):
        """Closed triangle O A_n C_n."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        tol = self.region.tol
        a, b = self.region.a, self.region.b
        return (
            (y >= -tol)
            & (y <= self.A[n][1] + tol)
            & (x >= b.inverse(np.clip(y, 0, None)) - tol)
            & (x <= a(np.clip(y, 0, self.region.y_A)) + tol)
        )


def build_ladder(region: Region, N_max: int) -> TrapezoidLadder:
    if not region.curves.is_affine:
        raise NotAffine("the trapezoid ladder is defined for affine data curves only")
    if region.configuration.case is not Case.UNSTABLE_CASE_II:
        raise NotCaseII("the trapezoid ladder needs an unstable configuration")
    a = region.a.slope
    b = region.b.slope
    A = [region.A]
    C = [region.C]
    for _ in range(int(N_max)):
        x_prev = C[-1][0]
        Ai = (x_prev, x_prev / a)
        A.append(Ai)
        C.append((Ai[1] / b, Ai[1]))
    return TrapezoidLadder(region, tuple(A), tuple(C))


def curves_from_spec(spec: dict) -> CurvePair:
    """Build a CurvePair from a config ``geometry`` block."""
    kind = spec.get("type")
    if kind == "affine":
        return CurvePair.affine(spec["a_slope"], spec["b_slope"], spec["x_A"])
    if kind == "expr":
        return CurvePair(ExprCurve(spec["a"], "y"), ExprCurve(spec["b"], "x"), float(spec["x_A"]))
    if kind == "sampled":
        a = SampledCurve(np.asarray(spec["a_points"], dtype=float))
        b = SampledCurve(np.asarray(spec["b_points"], dtype=float))
        x_A = float(spec.get("x_A") or a.v[-1])
        return CurvePair(a, b, x_A)
    raise GeometryError(f"unknown geometry type {kind!r}")


