"""Solvers for u_xy = f(x, y) and u_xy = u, and the non-uniqueness experiment."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .boundary import (
    AffineTheta,
    BoundaryData,
    build_theta_positive_demo,
    check_theta_elementary,
)
from .errors import MaxIterationsExceeded, ThetaIncompatible
from .fields import FieldTriple, GridField, GridSpec
from .geometry import build_ladder
from .quadrature import Antiderivative, StripQuadrature

PSI_REFINE = 64
DEFECT_SAMPLES = 257


class SplitOperator:
    """Evaluates the split solution formulas for a region and its data.

    Below AC (and everywhere for a stable region):
        u = phi(y) - int_x^{a(y)} psi + int_x^{a(y)} int_y^{b(xi)} g
        q = phi'(y) - a'(y) [psi(a(y)) - int_y^{b(a(y))} g(a(y), .)] - int_x^{a(y)} g(., y)
    On and above AC, with theta the u-data on AB:
        u = theta(y) - int_x^{x_A} psi + int_x^{x_A} int_y^{b(xi)} g
        q = theta'(y) - int_x^{x_A} g(., y)
    and everywhere p = psi(x) - int_y^{b(x)} g(x, .).
    """

    def __init__(self, region, grid: GridSpec, data: BoundaryData, stable: bool = False):
        self.region = region
        self.grid = grid
        self.data = data
        self.stable = stable
        outer = region.a if stable else region.outer_limit
        self.outer = outer
        self.split_y = math.inf if stable else region.y_A - region.tol
        self.quad = StripQuadrature(grid, region.b, outer, region.tol)
        x_hi = max(region.x_A, grid.x_max)
        self.Psi = Antiderivative(data.psi, 0.0, x_hi, PSI_REFINE * (grid.nx - 1))
        self.x, self.y, self.ii, self.jj = grid.masked_points()

    def upper(self, y):
        return np.asarray(y) >= self.split_y

    def base(self, x, y, theta=None):
        """u with the double integral dropped."""
        X = np.asarray(self.outer(y), dtype=float)
        psi_int = self.Psi(X) - self.Psi(x)
        lead = self.data.phi(y)
        if theta is not None:
            lead = np.where(self.upper(y), theta(y), lead)
        return lead - psi_int

    def evaluate(self, g, x, y, theta=None, G=None, slope=None):
        """(u, p, q) at points; ``slope`` overrides theta' (affine iterates)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        s = self.quad.sweep(g, x, y, G)
        u = self.base(x, y, theta) + s.double
        p = self.data.psi(x) - s.col
        a1 = self.region.a.derivative(np.clip(y, 0.0, self.region.y_A))
        q_low = self.data.phi_prime(y) - a1 * (self.data.psi(s.outer) - s.edge) - s.row
        if theta is None:
            q = q_low
        else:
            top = theta.derivative(y) if slope is None else np.full_like(y, slope)
            q = np.where(self.upper(y), top - s.row, q_low)
        return u, p, q

    def at_nodes(self, g, theta=None, G=None, slope=None):
        return self.evaluate(g, self.x, self.y, theta, G, slope)

    def to_field(self, vals) -> GridField:
        out = np.full(self.grid.shape, np.nan)
        out[self.ii, self.jj] = vals
        return GridField(self.grid, out)

    def to_triple(self, u, p, q) -> FieldTriple:
        return FieldTriple(self.to_field(u), self.to_field(p), self.to_field(q))

    def boundary_points(self, samples: int = DEFECT_SAMPLES):
        """Sample points on M (up to A), on N (up to B) and on AB."""
        r = self.region
        ym = np.linspace(0.0, r.y_A, samples)
        xn = np.linspace(0.0, r.x_A, samples)
        ya = np.linspace(r.y_A, r.y_B, samples)
        return (r.a(ym), ym), (xn, r.b(xn)), (np.full_like(ya, r.x_A), ya)

    def boundary_defects(self, g, theta=None, samples: int = DEFECT_SAMPLES, G=None, slope=None) -> dict:
        (xm, ym), (xn, yn), (xa, ya) = self.boundary_points(samples)
        um, _, _ = self.evaluate(g, xm, ym, theta, G, slope)
        _, pn, _ = self.evaluate(g, xn, yn, theta, G, slope)
        out = {
            "u_on_M": float(np.max(np.abs(um - self.data.phi(ym)))),
            "ux_on_N": float(np.max(np.abs(pn - self.data.psi(xn)))),
        }
        if theta is not None and not self.stable:
            ua, _, qa = self.evaluate(g, xa, ya, theta, G, slope)
            out["u_on_AB"] = float(np.max(np.abs(ua - theta(ya))))
            dtheta = theta.derivative(ya) if slope is None else slope
            out["uy_on_AB"] = float(np.max(np.abs(qa - dtheta)))
        return out


def field_integrand(field: GridField):
    """g(x, y) = bilinear interpolant of the (cut-cell extended) field."""
    return field.sample


# --------------------------------------------------------------------------
# u_xy = f(x, y)

@dataclass
class ElementarySolution:
    fields: FieldTriple
    defects: dict
    theta_report: object
    operator: SplitOperator = field(repr=False)
    f_xy: object = field(repr=False)
    theta: object = field(repr=False)

    @property
    def u(self) -> GridField:
        return self.fields.u

    def at(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        u, p, q = self.operator.evaluate(self.f_xy, pts[:, 0], pts[:, 1], self.theta)
        return u, p, q


def _xy_callable(f_xy):
    if isinstance(f_xy, (int, float)):
        c = float(f_xy)
        return lambda x, y: np.full(np.broadcast(x, y).shape, c)
    if isinstance(f_xy, str):
        from .expr import Expr

        e = Expr.parse(f_xy, {"x", "y"})
        return lambda x, y: e(x=x, y=y)
    if hasattr(f_xy, "used") and hasattr(f_xy, "ast"):
        e = f_xy
        return lambda x, y: e(x=x, y=y)
    return f_xy


def solve_elementary(f_xy, data: BoundaryData, theta, region, grid: GridSpec, rule=None) -> ElementarySolution:
    """Evaluate the split formula with a known right-hand side f(x, y) at every node."""
    g = _xy_callable(f_xy)
    scale = max(1.0, abs(float(data.phi(region.y_A))))
    report = check_theta_elementary(theta, data, g, region)
    if report.anchor_defect > 1e-9 * scale:
        raise ThetaIncompatible(f"theta(y_A) differs from phi(y_A) by {report.anchor_defect:.3g}")
    if report.defect > 1e-6 * scale:
        warnings.warn(f"theta slope condition violated by {report.defect:.3g}", stacklevel=2)
    op = SplitOperator(region, grid, data)
    u, p, q = op.at_nodes(g, theta)
    defects = op.boundary_defects(g, theta)
    return ElementarySolution(op.to_triple(u, p, q), defects, report, op, g, theta)


# --------------------------------------------------------------------------
# u_xy = u

@dataclass
class LinearIterationState:
    n: int
    u: GridField
    deltas: list
    converged: bool
    extent: float
    iterates: list = field(default_factory=list, repr=False)

    def bound_ratios(self) -> np.ndarray:
        """delta_n (n!)^2 / K^n for n = 1, 2, ... with K = x_A y_B."""
        d = np.asarray(self.deltas, dtype=float)
        n = np.arange(1, d.size + 1)
        logs = np.array([2 * math.lgamma(k + 1) - k * math.log(self.extent) for k in n])
        with np.errstate(divide="ignore"):
            return np.exp(np.log(d) + logs)

    def fitted_constant(self) -> float:
        """c fitted from the first two differences."""
        r = self.bound_ratios()[:2]
        return float(np.max(r)) if r.size else 0.0

    def decay_ratios(self) -> np.ndarray:
        d = np.asarray(self.deltas, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return d[1:] / d[:-1]


@dataclass
class LinearSolution:
    fields: FieldTriple
    state: LinearIterationState
    defects: dict
    operator: SplitOperator = field(repr=False)
    theta: object = field(repr=False)

    @property
    def u(self):
        return self.fields.u

    @property
    def converged(self):
        return self.state.converged

    def at(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        g = field_integrand(self.fields.u)
        return self.operator.evaluate(g, pts[:, 0], pts[:, 1], self.theta)


def picard_iterate(op: SplitOperator, theta, tol: float, max_iter: int, keep_iterates: bool = False):
    """Fixed-point iteration u <- base + double integral of u on the operator's grid."""
    base = op.base(op.x, op.y, theta)
    u = base
    deltas = []
    iterates = [op.to_field(u)] if keep_iterates else []
    converged = False
    p = q = None
    for n in range(1, max_iter + 1):
        field_n = op.to_field(u)
        u_new, p, q = op.at_nodes(field_integrand(field_n), theta, G=field_n.extended)
        delta = float(np.max(np.abs(u_new - u))) if u.size else 0.0
        deltas.append(delta)
        u = u_new
        if keep_iterates:
            iterates.append(op.to_field(u))
        if delta == 0.0 or (delta < tol and n >= 3):
            converged = True
            break
    if p is None:
        raise ValueError("max_iter must be at least 1")
    return u, p, q, deltas, converged, iterates


def picard_linear(data: BoundaryData, theta, region, grid: GridSpec, rule=None, tol: float = 1e-10,
                  max_iter: int = 60, keep_iterates: bool = False, strict: bool = False) -> LinearSolution:
    """Successive approximation for u_xy = u starting from the data-only field."""
    op = SplitOperator(region, grid, data)
    u, p, q, deltas, converged, iterates = picard_iterate(op, theta, tol, max_iter, keep_iterates)
    triple = op.to_triple(u, p, q)
    state = LinearIterationState(len(deltas), triple.u, deltas, converged, region.x_A * region.y_B, iterates)
    g = field_integrand(triple.u)
    sol = LinearSolution(triple, state, op.boundary_defects(g, theta, G=triple.u.extended), op, theta)
    if strict and not converged:
        raise MaxIterationsExceeded(f"no convergence in {max_iter} iterations", result=sol)
    return sol


# --------------------------------------------------------------------------
# non-uniqueness

def _ladder_depth(region, hy: float, cap: int = 40) -> int:
    """Smallest N with y_{A_N} below one grid row (capped)."""
    y = region.y_A
    q = region.a.slope * region.b.slope
    n = 0
    while y >= hy and n < cap:
        y /= q
        n += 1
    return max(n, 3)


def interior_oac(region, x, y):
    tol = region.tol
    return (
        (y > tol)
        & (y < region.y_A - tol)
        & (x > region.b.inverse(np.clip(y, 0, None)) + tol)
        & (x < region.a(np.clip(y, 0, region.y_A)) - tol)
    )


@dataclass
class DemoResult:
    zero: LinearSolution
    theta_run: LinearSolution
    theta: object
    ladder: object
    report: dict

    @property
    def u_zero(self):
        return self.zero.u

    @property
    def u_theta(self):
        return self.theta_run.u


def nonuniqueness_report(region, grid, sol: LinearSolution, ladder) -> dict:
    x, y, ii, jj = grid.masked_points()
    u = sol.u.values[ii, jj]
    level = ladder.level_of(x, y)
    interior = interior_oac(region, x, y)
    per_level = {}
    for N in range(1, ladder.depth + 1):
        sel = level == N
        if np.any(sel):
            k = np.argmin(np.where(sel, u, np.inf))
            per_level[str(N)] = {"count": int(sel.sum()), "min": float(u[k]), "argmin": [float(x[k]), float(y[k])]}
    first3 = (level >= 1) & (level <= 3)
    its = sol.state.iterates
    vanish = {}
    for n in range(1, min(len(its), ladder.depth + 1)):
        tri = ladder.in_triangle(n, x, y)
        vanish[str(n)] = float(np.max(np.abs(its[n].values[ii, jj][tri]), initial=0.0))
    abc = y >= region.y_A - region.tol
    mono_abc, mono_levels, min_iter = [], {}, []
    for n in range(len(its)):
        un = its[n].values[ii, jj]
        min_iter.append(float(np.min(un)))
        if n + 1 < len(its):
            step = its[n + 1].values[ii, jj] - un
            mono_abc.append(float(np.min(step[abc], initial=np.inf)))
            for N in range(1, min(n, ladder.depth) + 1):
                sel = level == N
                if np.any(sel):
                    cur = mono_levels.get(str(N), np.inf)
                    mono_levels[str(N)] = float(min(cur, np.min(step[sel])))
    return {
        "interior_oac_nodes": int(interior.sum()),
        "interior_oac_min": float(np.min(u[interior], initial=np.inf)),
        "all_interior_positive": bool(np.all(u[interior] > 0)),
        "ladder_min_T1_T3": float(np.min(u[first3], initial=np.inf)),
        "per_level": per_level,
        "vanishing": vanish,
        "monotone_abc_min_step": float(min(mono_abc, default=np.inf)),
        "monotone_level_min_step": mono_levels,
        "iterate_min": float(min(min_iter, default=0.0)),
    }


def demo_nonuniqueness(region, grid: GridSpec, rule=None, tol: float = 1e-10, max_iter: int = 60) -> DemoResult:
    """Zero data solved twice: theta = 0 gives u = 0, the positive theta gives u > 0 in OAC."""
    data = BoundaryData.zero()
    theta0 = AffineTheta(region.y_A, 0.0, 0.0)
    zero = picard_linear(data, theta0, region, grid, tol=tol, max_iter=max_iter)
    theta = build_theta_positive_demo(region)
    run = picard_linear(data, theta, region, grid, tol=tol, max_iter=max_iter, keep_iterates=True)
    ladder = build_ladder(region, _ladder_depth(region, grid.hy))
    report = nonuniqueness_report(region, grid, run, ladder)
    report["zero_run_sup"] = zero.u.sup()
    return DemoResult(zero, run, theta, ladder, report)


def common_values(fine: GridField, coarse: GridSpec) -> np.ndarray:
    """Values of a fine-grid field at the masked nodes of a coarser nested grid."""
    sx = (fine.grid.nx - 1) // (coarse.nx - 1)
    sy = (fine.grid.ny - 1) // (coarse.ny - 1)
    _, _, ii, jj = coarse.masked_points()
    return fine.values[ii * sx, jj * sy]


def richardson_positivity(region, grids=(65, 129, 257), tol: float = 1e-10) -> dict:
    """Demo on nested grids; Richardson error of u and of the ladder minimum at coarse nodes."""
    runs = [demo_nonuniqueness(region, GridSpec.over(region, n), tol=tol) for n in grids]
    coarse = runs[0].theta_run.u.grid
    vals = [common_values(r.theta_run.u, coarse) for r in runs]
    x, y, _, _ = coarse.masked_points()
    level = runs[-1].ladder.level_of(x, y)
    sel = (level >= 1) & (level <= 3)
    d1 = float(np.max(np.abs(vals[0] - vals[1])))
    d2 = float(np.max(np.abs(vals[1] - vals[2])))
    order = math.log2(d1 / d2) if d1 > 0 and d2 > 0 else float("nan")
    p = order if np.isfinite(order) and order > 0.5 else 2.0
    eps_quad = d2 / (2**p - 1)
    mins = [float(np.min(v[sel])) for v in vals]
    min_err = abs(mins[2] - mins[1]) / (2**p - 1)
    return {
        "runs": runs,
        "order": order,
        "eps_quad": eps_quad,
        "ladder_min_common": mins,
        "ladder_min_error": min_err,
    }
