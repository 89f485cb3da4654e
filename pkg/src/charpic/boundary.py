"""Boundary data phi, psi and the auxiliary u-data theta on the segment AB.

In the unstable configuration u on the triangle ABC is not determined by
phi and psi alone, so u-values theta(y) are prescribed on AB.  For the split
solution to be C^1 across AC, theta must match phi at y_A and its slope there
must equal phi'(y_A) - a'(y_A) * [psi(x_A) - (integral of f along AB)].
"""

from __future__ import annotations

import numbers
from dataclasses import dataclass

import numpy as np

from .errors import (
    EvalDomainError,
    NotDifferentiable,
    PositivityUnachievable,
    SingularConstraint,
)
from .expr import Expr
from .quadrature import trapezoid_richardson


def _vectorize(fn):
    """Wrap a scalar-or-array callable so it always returns float arrays of the input shape."""

    def wrapped(t):
        t_arr = np.asarray(t, dtype=float)
        out = np.asarray(fn(t_arr), dtype=float)
        if out.shape != t_arr.shape:
            out = np.broadcast_to(out, t_arr.shape).copy()
        return out

    return wrapped


def as_function(spec, var: str):
    """Turn a DSL string, number, Expr or callable into a vectorized function of one variable."""
    if isinstance(spec, numbers.Real):
        c = float(spec)
        return _vectorize(lambda t: np.full_like(t, c)), Expr.parse(repr(c), {var})
    if isinstance(spec, str):
        spec = Expr.parse(spec, {var})
    if isinstance(spec, Expr):
        e = spec
        return _vectorize(lambda t: e(**{var: t})), e
    return _vectorize(spec), None


def make_rhs(f):
    """Right-hand side f(x, y, u, p, q) as a vectorized callable."""
    if isinstance(f, numbers.Real):
        c = float(f)
        return lambda x, y, u, p, q: np.full(np.broadcast(x, y, u, p, q).shape, c)
    if isinstance(f, str):
        f = Expr.parse(f)
    if isinstance(f, Expr):
        e = f
        return lambda x, y, u, p, q: e(x=x, y=y, u=u, p=p, q=q)
    return f


class BoundaryData:
    """phi on M (function of y), psi on N (function of x) and phi'."""

    def __init__(self, phi, psi, phi_prime=None, fd_scale: float = 1.0):
        self.phi, self.phi_expr = as_function(phi, "y")
        self.psi, self.psi_expr = as_function(psi, "x")
        self.phi_prime_kind = "given"
        if phi_prime is not None:
            self.phi_prime, _ = as_function(phi_prime, "y")
        elif self.phi_expr is not None:
            try:
                d = self.phi_expr.derivative("y")
                self.phi_prime = _vectorize(lambda t: d(y=t))
                self.phi_prime_kind = "symbolic"
            except NotDifferentiable:
                self.phi_prime = self._finite_difference(fd_scale)
                self.phi_prime_kind = "finite-difference"
        else:
            self.phi_prime = self._finite_difference(fd_scale)
            self.phi_prime_kind = "finite-difference"

    def _finite_difference(self, scale):
        step = 1e-6 * scale
        phi = self.phi
        return _vectorize(lambda t: (phi(t + step) - phi(t - step)) / (2 * step))

    @property
    def is_zero(self) -> bool:
        return (
            self.phi_expr is not None
            and self.psi_expr is not None
            and self.phi_expr.is_constant()
            and self.psi_expr.is_constant()
            and float(self.phi_expr()) == 0.0
            and float(self.psi_expr()) == 0.0
        )

    @classmethod
    def zero(cls) -> "BoundaryData":
        return cls("0", "0")

    @classmethod
    def for_region(cls, phi, psi, region, phi_prime=None) -> "BoundaryData":
        """Data whose finite-difference fallback step is scaled by y_A."""
        return cls(phi, psi, phi_prime, fd_scale=region.y_A)

    def __repr__(self):
        p = self.phi_expr.source if self.phi_expr is not None else "<callable>"
        s = self.psi_expr.source if self.psi_expr is not None else "<callable>"
        return f"BoundaryData(phi={p!r}, psi={s!r})"


# --------------------------------------------------------------------------
# theta families

class ThetaFunction:
    kind = "general"

    def __call__(self, y):
        raise NotImplementedError

    def derivative(self, y):
        raise NotImplementedError

    def integral(self, lo: float, hi: float) -> float:
        return trapezoid_richardson(self, lo, hi, 512)

    def describe(self) -> dict:
        return {"kind": self.kind}


class GeneralTheta(ThetaFunction):
    """theta given by a function of y and its derivative."""

    def __init__(self, fn, dfn=None, label: str = "explicit"):
        self.fn, expr = as_function(fn, "y")
        self.label = label if expr is None else expr.source
        if dfn is not None:
            self.dfn, _ = as_function(dfn, "y")
        elif expr is not None:
            d = expr.derivative("y")
            self.dfn = _vectorize(lambda t: d(y=t))
        else:
            fn_ = self.fn
            self.dfn = _vectorize(lambda t: (fn_(t + 1e-6) - fn_(t - 1e-6)) / 2e-6)

    def __call__(self, y):
        return self.fn(y)

    def derivative(self, y):
        return self.dfn(y)

    def describe(self):
        return {"kind": self.kind, "expression": self.label}


@dataclass(frozen=True)
class QuadraticTheta(ThetaFunction):
    """c0 + alpha*s + beta*s^2 with s = y - y_A."""

    y_A: float
    c0: float
    alpha: float
    beta: float
    kind = "quadratic"

    def __call__(self, y):
        s = np.asarray(y, dtype=float) - self.y_A
        return self.c0 + s * (self.alpha + self.beta * s)

    def derivative(self, y):
        s = np.asarray(y, dtype=float) - self.y_A
        return self.alpha + 2 * self.beta * s

    def integral(self, lo, hi):
        def prim(y):
            s = y - self.y_A
            return self.c0 * s + self.alpha * s**2 / 2 + self.beta * s**3 / 3

        return float(prim(hi) - prim(lo))

    def describe(self):
        return {"kind": self.kind, "y_A": self.y_A, "c0": self.c0, "alpha": self.alpha, "beta": self.beta}


class AffineTheta(QuadraticTheta):
    """anchor + slope * (y - y_A)."""

    kind = "affine"

    def __init__(self, y_A: float, anchor: float, slope: float):
        super().__init__(float(y_A), float(anchor), float(slope), 0.0)

    @property
    def anchor(self):
        return self.c0

    @property
    def slope(self):
        return self.alpha

    def describe(self):
        return {"kind": self.kind, "y_A": self.y_A, "anchor": self.c0, "slope": self.alpha}


# --------------------------------------------------------------------------
# compatibility

@dataclass(frozen=True)
class ThetaCompatibilityReport:
    lhs: float
    rhs: float
    defect: float
    anchor_defect: float

    def to_dict(self):
        return {"lhs": self.lhs, "rhs": self.rhs, "defect": self.defect, "anchor_defect": self.anchor_defect}


def _slope_a(region) -> float:
    return float(region.a.derivative(region.y_A))


def _report(theta, data, region, rhs) -> ThetaCompatibilityReport:
    lhs = float(theta.derivative(region.y_A))
    anchor = abs(float(theta(region.y_A)) - float(data.phi(region.y_A)))
    return ThetaCompatibilityReport(lhs, float(rhs), abs(lhs - float(rhs)), anchor)


def elementary_slope(data: BoundaryData, f_xy, region, n: int = 256) -> float:
    """Right-hand side of the slope condition when f depends on (x, y) only."""
    a1 = _slope_a(region)
    x_A = region.x_A
    integral = trapezoid_richardson(lambda eta: f_xy(np.full_like(eta, x_A), eta), region.y_A, region.y_B, n)
    return float(data.phi_prime(region.y_A) - a1 * data.psi(x_A) + a1 * integral)


def check_theta_elementary(theta, data, f_xy, region, n: int = 256) -> ThetaCompatibilityReport:
    """Anchor and slope conditions for u_xy = f(x, y)."""
    return _report(theta, data, region, elementary_slope(data, f_xy, region, n))


def check_theta_linear(theta, data, region) -> ThetaCompatibilityReport:
    """Anchor and slope conditions for u_xy = u, where f on AB is theta itself."""
    a1 = _slope_a(region)
    rhs = data.phi_prime(region.y_A) - a1 * data.psi(region.x_A) + a1 * theta.integral(region.y_A, region.y_B)
    return _report(theta, data, region, rhs)


def build_theta_elementary(data, f_xy, region, n: int = 256) -> AffineTheta:
    """Affine theta meeting the anchor and slope conditions for u_xy = f(x, y)."""
    return AffineTheta(region.y_A, float(data.phi(region.y_A)), elementary_slope(data, f_xy, region, n))


def _linear_rhs(data, region):
    a1 = _slope_a(region)
    c0 = float(data.phi(region.y_A))
    d = region.y_B - region.y_A
    return a1, c0, d, float(data.phi_prime(region.y_A) - a1 * data.psi(region.x_A) + a1 * c0 * d)


def build_theta_linear(data, region, end_rise: float = 1.0) -> QuadraticTheta:
    """Quadratic theta satisfying the self-referential slope condition of u_xy = u.

    The family c0 + alpha*s + beta*s^2 (c0 = phi(y_A)) has one free parameter
    after the slope condition; it is fixed by theta(y_B) = c0 + end_rise.
    """
    a1, c0, d, r = _linear_rhs(data, region)
    if d <= 0:
        raise SingularConstraint("segment AB has zero length")
    M = np.array([[1 - a1 * d**2 / 2, -a1 * d**3 / 3], [d, d**2]])
    det = d**2 * (1 - a1 * d**2 / 6)
    if abs(det) <= 1e-14 * max(d**2, 1e-300):
        raise SingularConstraint(f"a*d^2 = {a1 * d**2:.6g} makes the theta system singular")
    alpha, beta = np.linalg.solve(M, np.array([r, end_rise]))
    return QuadraticTheta(region.y_A, c0, float(alpha), float(beta))


def affine_theta_linear(data, region) -> AffineTheta:
    """The affine theta satisfying the slope condition of u_xy = u.

    This is the fixed point of the affine slope update with f = u.
    """
    a1, c0, d, r = _linear_rhs(data, region)
    denom = 1 - a1 * d**2 / 2
    if d <= 0 or abs(denom) <= 1e-14:
        raise SingularConstraint(f"a*d^2 = {a1 * d**2:.6g}: no affine theta exists")
    return AffineTheta(region.y_A, c0, r / denom)


def build_theta_positive_demo(region, samples: int = 1001) -> QuadraticTheta:
    """theta = s*(1 + beta*s), zero at y_A, positive inside AB, with zero-data slope condition."""
    a1 = _slope_a(region)
    d = region.y_B - region.y_A
    ad2 = a1 * d**2
    if d <= 0 or ad2 >= 6:
        raise PositivityUnachievable(f"a*d^2 = {ad2:.6g} >= 6: theta cannot stay positive on AB; shrink x_A")
    beta = 3 * (1 - ad2 / 2) / (a1 * d**3)
    theta = QuadraticTheta(region.y_A, 0.0, 1.0, float(beta))
    ys = np.linspace(region.y_A, region.y_B, samples + 2)[1:-1]
    if not np.all(theta(ys) > 0):
        raise PositivityUnachievable("demo theta is not positive on the interior of AB")
    return theta


def sigma_base(data, region) -> float:
    """Slope of the first affine theta: phi'(y_A) - a'(y_A) psi(x_A)."""
    return float(data.phi_prime(region.y_A) - _slope_a(region) * data.psi(region.x_A))


def _column_nodes(y_lo, y_hi, hy):
    inner = np.arange(np.floor(y_lo / hy) + 1, np.ceil(y_hi / hy)) * hy
    inner = inner[(inner > y_lo) & (inner < y_hi)]
    return np.concatenate([[y_lo], inner, [y_hi]])


def theta_affine_next(prev, theta: AffineTheta, data, f, region) -> AffineTheta:
    """Next affine theta from the previous triple and slope.

    The integral of f(x_A, eta, theta(eta), p(x_A, eta), sigma) along AB uses
    the grid rows between y_A and y_B as trapezoid nodes.
    """
    rhs = make_rhs(f)
    grid = prev.grid
    eta = _column_nodes(region.y_A, region.y_B, grid.hy)
    xa = np.full_like(eta, region.x_A)
    vals = rhs(xa, eta, theta(eta), prev.p.sample(xa, eta), np.full_like(eta, theta.slope))
    vals = np.asarray(vals, dtype=float)
    if not np.all(np.isfinite(vals)):
        raise EvalDomainError("f is not finite along AB")
    integral = float(np.trapezoid(vals, eta))
    a1 = _slope_a(region)
    sigma = float(data.phi_prime(region.y_A) - a1 * (data.psi(region.x_A) - integral))
    return AffineTheta(region.y_A, float(data.phi(region.y_A)), sigma)


def theta_from_spec(mode: str, data, region, f_xy=None):
    """Resolve a config ``theta.mode`` string for the linear and elementary solvers."""
    if mode.startswith("explicit:"):
        return GeneralTheta(mode[len("explicit:"):].strip())
    if mode == "positive_demo":
        return build_theta_positive_demo(region)
    if mode == "auto_linear":
        if f_xy is not None:
            return build_theta_elementary(data, f_xy, region)
        return build_theta_linear(data, region)
    if mode == "affine_iterated":
        return affine_theta_linear(data, region)
    raise ValueError(f"unknown theta mode {mode!r}")
