"""Independent checks: the stable-configuration solver, the Bessel series,
finite-difference residuals and grid-refinement estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .boundary import BoundaryData, make_rhs
from .fields import FieldTriple, GridField, GridSpec
from .geometry import StableRegion
from .linear import LinearIterationState, SplitOperator, _xy_callable, picard_iterate


# --------------------------------------------------------------------------
# stable configuration

@dataclass
class StableSolution:
    fields: FieldTriple
    state: LinearIterationState
    defects: dict
    operator: SplitOperator = field(repr=False)

    @property
    def u(self):
        return self.fields.u

    @property
    def converged(self):
        return self.state.converged


def solve_stable_case_I(data: BoundaryData, region: StableRegion, grid: GridSpec, rule=None,
                        tol: float = 1e-10, max_iter: int = 60, f_xy=None) -> StableSolution:
    """Picard iteration for u_xy = u (or one evaluation for u_xy = f(x, y)) when N lies below M.

    Every strip then reaches only towards the origin, so no data beyond M
    and N is needed.
    """
    if not isinstance(region, StableRegion):
        region = StableRegion.from_curves(region.curves if hasattr(region, "curves") else region)
    op = SplitOperator(region, grid, data, stable=True)
    if f_xy is not None:
        g = _xy_callable(f_xy)
        u, p, q = op.at_nodes(g)
        triple = op.to_triple(u, p, q)
        state = LinearIterationState(1, triple.u, [0.0], True, region.x_A * region.y_top)
        return StableSolution(triple, state, op.boundary_defects(g), op)
    u, p, q, deltas, converged, _ = picard_iterate(op, None, tol, max_iter)
    triple = op.to_triple(u, p, q)
    state = LinearIterationState(len(deltas), triple.u, deltas, converged, region.x_A * region.y_top)
    defects = op.boundary_defects(triple.u.sample, G=triple.u.extended)
    return StableSolution(triple, state, defects, op)


# --------------------------------------------------------------------------
# Bessel series

def bessel_series(z: float, n_terms: int) -> float:
    """Partial sum of z^n/(n!)^2 over n < n_terms; the full sum is I_0(2 sqrt(z))."""
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    term = 1.0
    total = 0.0
    for n in range(n_terms):
        total += term
        term *= z / (n + 1) ** 2
    return total


def bessel_truncation_bound(z: float, n_terms: int) -> float:
    """Twice the first omitted term; valid for 0 <= z <= n_terms."""
    first = abs(z) ** n_terms / math.factorial(n_terms) ** 2
    return 2.0 * first


# --------------------------------------------------------------------------
# residuals

@dataclass
class ResidualReport:
    max: float
    mean: float
    step: tuple
    probes: int
    values: np.ndarray = field(repr=False, default=None)
    points: np.ndarray = field(repr=False, default=None)
    signed: np.ndarray = field(repr=False, default=None)

    def to_dict(self):
        return {"max": self.max, "mean": self.mean, "step": list(self.step), "probes": self.probes}


def _neighbourhood_ok(mask, ii, jj, reach):
    nx, ny = mask.shape
    ok = (ii - reach >= 0) & (ii + reach < nx) & (jj - reach >= 0) & (jj + reach < ny)
    for di in range(-reach, reach + 1):
        for dj in range(-reach, reach + 1):
            i2 = np.clip(ii + di, 0, nx - 1)
            j2 = np.clip(jj + dj, 0, ny - 1)
            ok &= mask[i2, j2]
    return ok


def residual_mixed_derivative(v, f, region, grid: GridSpec | None = None, stencil: int = 1,
                              layers: int = 2, at=None) -> ResidualReport:
    """Max and mean of |D_xy u - f(x, y, u, p, q)| at interior probe nodes.

    D_xy is the centred four-point stencil with steps stencil*hx, stencil*hy.
    Probes keep ``layers`` masked nodes between the stencil and the boundary,
    and stencils crossing the line AC (where u is only C^1) are skipped.
    ``at`` restricts the probes to given node coordinates.
    """
    if isinstance(v, GridField):
        u, p, q = v, None, None
    else:
        u, p, q = v.u, v.p, v.q
    grid = grid or u.grid
    if at is None:
        _, _, ii, jj = grid.masked_points()
    else:
        xs, ys = np.asarray(at[0], dtype=float), np.asarray(at[1], dtype=float)
        ii = np.rint(xs / grid.hx).astype(int)
        jj = np.rint(ys / grid.hy).astype(int)
    s = int(stencil)
    ok = _neighbourhood_ok(grid.mask, ii, jj, s + layers)
    y_split = getattr(region, "y_A", None)
    if y_split is not None and not isinstance(region, StableRegion):
        ok &= np.abs(grid.ys[jj] - y_split) >= s * grid.hy - region.tol
    ii, jj = ii[ok], jj[ok]
    U = u.values
    hx, hy = s * grid.hx, s * grid.hy
    dxy = (U[ii + s, jj + s] - U[ii + s, jj - s] - U[ii - s, jj + s] + U[ii - s, jj - s]) / (4 * hx * hy)
    x, y = grid.xs[ii], grid.ys[jj]
    rhs = make_rhs(f)
    pv = p.values[ii, jj] if p is not None else np.full(x.shape, np.nan)
    qv = q.values[ii, jj] if q is not None else np.full(x.shape, np.nan)
    fv = np.asarray(rhs(x, y, U[ii, jj], pv, qv), dtype=float)
    res = np.abs(dxy - fv)
    return ResidualReport(
        max=float(np.max(res, initial=0.0)),
        mean=float(np.mean(res)) if res.size else 0.0,
        step=(hx, hy),
        probes=int(res.size),
        values=res,
        points=np.column_stack([x, y]),
        signed=dxy - fv,
    )


# --------------------------------------------------------------------------
# grid refinement

@dataclass
class ConvergenceResult:
    grids: tuple
    diffs: list
    order: float
    richardson_error: float
    non_monotone: bool

    def to_dict(self):
        return {
            "grids": list(self.grids),
            "diffs": self.diffs,
            "order": self.order,
            "richardson_error": self.richardson_error,
            "non_monotone": self.non_monotone,
        }


def nested_values(field: GridField, coarse: GridSpec) -> np.ndarray:
    sx = (field.grid.nx - 1) // (coarse.nx - 1)
    sy = (field.grid.ny - 1) // (coarse.ny - 1)
    _, _, ii, jj = coarse.masked_points()
    return field.values[ii * sx, jj * sy]


def grid_convergence(solve, grids=(65, 129, 257)) -> ConvergenceResult:
    """Empirical order from successive differences on the coarsest grid's nodes.

    ``solve(n)`` returns a GridField on an n-by-n grid; grids must be nested
    (n_k - 1 doubling).
    """
    return convergence_from_fields([solve(n) for n in grids])


def convergence_from_fields(fields) -> ConvergenceResult:
    """Same estimate as grid_convergence for fields already computed on nested grids."""
    grids = [f.grid.nx for f in fields]
    coarse = fields[0].grid
    vals = [nested_values(f, coarse) for f in fields]
    diffs = [float(np.max(np.abs(a - b))) for a, b in zip(vals[:-1], vals[1:])]
    orders = []
    for d1, d2 in zip(diffs[:-1], diffs[1:]):
        orders.append(math.log2(d1 / d2) if d1 > 0 and d2 > 0 else float("nan"))
    order = orders[-1] if orders else float("nan")
    non_monotone = not all(d1 > d2 for d1, d2 in zip(diffs[:-1], diffs[1:])) or not math.isfinite(order)
    if math.isfinite(order) and order > 0:
        rich = diffs[-1] / (2**order - 1)
    else:
        rich = float("nan")
    return ConvergenceResult(tuple(grids), diffs, order, rich, non_monotone)


def residual_order(reports) -> list:
    """log2 ratios of successive maximum residuals."""
    out = []
    for r1, r2 in zip(reports[:-1], reports[1:]):
        out.append(math.log2(r1.max / r2.max) if r1.max > 0 and r2.max > 0 else float("nan"))
    return out


def stencil_error(v, f, region, grid=None, at=None) -> float:
    """Richardson estimate of the stencil truncation: |D(h) - D(2h)|/3 at common probes."""
    r1 = residual_mixed_derivative(v, f, region, grid, stencil=1, at=at)
    r2 = residual_mixed_derivative(v, f, region, grid, stencil=2, at=at)
    if not r1.probes or not r2.probes:
        return 0.0
    common = {tuple(p): k for k, p in enumerate(r2.points)}
    d = [abs(r1.signed[k] - r2.signed[common[tuple(p)]]) for k, p in enumerate(r1.points) if tuple(p) in common]
    return float(max(d, default=0.0)) / 3.0


def residual_study(triples, f, region):
    """Residuals on nested grids at one fixed set of physical probes.

    The probes are those admissible on the coarsest grid; finer grids reuse
    them so the ratio of maxima measures the order and not the probe set.
    """
    first = residual_mixed_derivative(triples[0], f, region)
    at = (first.points[:, 0], first.points[:, 1])
    reports = [first] + [residual_mixed_derivative(t, f, region, at=at) for t in triples[1:]]
    return reports, residual_order(reports)
