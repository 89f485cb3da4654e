"""Iteration of the triple v = (u, u_x, u_y) for u_xy = f(x, y, u, u_x, u_y).

The auxiliary data on AB are affine, theta_n(y) = phi(y_A) + sigma_n (y - y_A),
and the slope is updated before each sweep so the split solution stays C^1
across AC.  With L the Lipschitz constant of f in v (sum norm), successive
differences contract by mu = L (2 gamma h + 2 l + h), where l = x_A, h = y_B
and gamma = max |a'|; the region can be shrunk until mu < 1.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .boundary import AffineTheta, make_rhs, sigma_base, theta_affine_next
from .errors import ContractionUnachievable, MaxIterationsExceeded
from .expr import Expr, estimate_lipschitz
from .fields import FieldTriple, GridSpec
from .geometry import Region
from .linear import SplitOperator

log = logging.getLogger(__name__)

AUDIT_FLOOR = 1e-13
MAX_HALVINGS = 8


@dataclass(frozen=True)
class ContractionParams:
    L: float
    gamma: float
    l: float
    h: float
    area: float

    @property
    def mu(self) -> float:
        return self.L * (2 * self.gamma * self.h + 2 * self.l + self.h)

    @property
    def contracts(self) -> bool:
        return self.mu < 1

    @property
    def u_factor(self):
        return self.L * self.h * (self.gamma * self.h + self.l)

    @property
    def p_factor(self):
        return self.L * self.h

    @property
    def q_factor(self):
        return self.L * (self.gamma * self.h + self.l)

    @property
    def slope_factor(self):
        return self.gamma * self.L * self.h

    def to_dict(self):
        return {"L": self.L, "gamma": self.gamma, "l": self.l, "h": self.h, "area": self.area, "mu": self.mu}


def contraction_params(region: Region, L: float) -> ContractionParams:
    return ContractionParams(float(L), region.gamma, region.l, region.h, region.area)


@dataclass
class NonlinearState:
    n: int
    v: FieldTriple
    theta: AffineTheta
    deltas: list = field(default_factory=list)
    sigma_diffs: list = field(default_factory=list)
    du: list = field(default_factory=list)
    dp: list = field(default_factory=list)
    dq: list = field(default_factory=list)
    ac_jump: list = field(default_factory=list)

    @property
    def sigma(self):
        return self.theta.slope


def _triple_integrand(rhs, v: FieldTriple):
    U, P, Q = v.u, v.p, v.q

    def g(x, y):
        return rhs(x, y, U.sample(x, y), P.sample(x, y), Q.sample(x, y))

    return g


def base_step(data, region, grid: GridSpec, op: SplitOperator | None = None):
    """v0 from the data alone and the first affine theta."""
    op = op or SplitOperator(region, grid, data)
    sigma0 = sigma_base(data, region)
    theta0 = AffineTheta(region.y_A, float(data.phi(region.y_A)), sigma0)
    x, y = op.x, op.y
    u = op.base(x, y, theta0)
    p = data.psi(x)
    a1 = region.a.derivative(np.clip(y, 0.0, region.y_A))
    q = np.where(op.upper(y), sigma0, data.phi_prime(y) - a1 * data.psi(region.a(np.clip(y, 0.0, region.y_A))))
    return op.to_triple(u, p, np.asarray(q, dtype=float)), theta0


def _ac_points(op: SplitOperator, region):
    sel = np.abs(op.y - region.y_A) <= region.tol
    return op.x[sel], op.y[sel]


def iterate_step(state: NonlinearState, f, data, region, op: SplitOperator) -> NonlinearState:
    """Update the slope on AB, then (u, p, q) at every node, from the previous triple."""
    rhs = make_rhs(f)
    theta = theta_affine_next(state.v, state.theta, data, rhs, region)
    g = _triple_integrand(rhs, state.v)
    u, p, q = op.at_nodes(g, theta, slope=theta.slope)
    new = op.to_triple(u, p, q)
    xa, ya = _ac_points(op, region)
    if xa.size:
        lu, _, lq = op.evaluate(g, xa, ya, None)
        hu, _, hq = op.evaluate(g, xa, ya, theta, slope=theta.slope)
        jump = float(max(np.max(np.abs(lu - hu)), np.max(np.abs(lq - hq))))
    else:
        jump = 0.0
    du = (new.u - state.v.u).sup()
    dp = (new.p - state.v.p).sup()
    dq = (new.q - state.v.q).sup()
    return NonlinearState(
        n=state.n + 1,
        v=new,
        theta=theta,
        deltas=state.deltas + [du + dp + dq],
        sigma_diffs=state.sigma_diffs + [abs(theta.slope - state.theta.slope)],
        du=state.du + [du],
        dp=state.dp + [dp],
        dq=state.dq + [dq],
        ac_jump=state.ac_jump + [jump],
    )


def lipschitz_box(f, v: FieldTriple, region):
    """Estimate L over the base-step ranges inflated by sup|f| times the reach of each integral."""
    expr = f if isinstance(f, Expr) else Expr.parse(f) if isinstance(f, str) else None
    if expr is None:
        raise ValueError("Lipschitz estimation needs an expression for f; pass L explicitly")
    ranges = {}
    for name, fld in (("u", v.u), ("p", v.p), ("q", v.q)):
        m = fld.masked()
        lo, hi = float(np.min(m)), float(np.max(m))
        ranges[name] = (lo, hi) if hi > lo else (lo - 1e-3, hi + 1e-3)
    ranges["x"] = (0.0, region.x_A)
    ranges["y"] = (0.0, region.y_B)
    first = estimate_lipschitz(expr, ranges)
    s = first.sup_abs
    reach = {"u": region.area, "p": region.h, "q": region.l + region.gamma * region.h}
    box = dict(ranges)
    for name, r in reach.items():
        lo, hi = ranges[name]
        box[name] = (lo - s * r, hi + s * r)
    return estimate_lipschitz(expr, box)


@dataclass
class NonlinearResult:
    fields: FieldTriple
    theta: AffineTheta
    report: dict
    region: Region
    grid: GridSpec
    state: NonlinearState = field(repr=False)
    operator: SplitOperator = field(repr=False)
    f: object = field(repr=False)

    @property
    def converged(self):
        return self.report["converged"]

    @property
    def u(self):
        return self.fields.u


def audit(state: NonlinearState, params: ContractionParams, slack: float = 0.1, floor: float = AUDIT_FLOOR) -> dict:
    """Compare measured differences against the contraction estimates.

    deltas[k] = ||v^{k+1} - v^k||; the bounds for step k use deltas[k-1].
    """
    scale = max(state.deltas[:1] + [1.0])
    rows = []
    ok = {"ratio": True, "u": True, "p": True, "q": True, "slope": True}
    for k in range(1, len(state.deltas)):
        prev = state.deltas[k - 1]
        if prev <= floor * scale:
            break
        row = {
            "n": k,
            "delta_prev": prev,
            "ratio": state.deltas[k] / prev,
            "u_ratio": state.du[k] / (params.u_factor * prev) if params.u_factor else math.inf,
            "p_ratio": state.dp[k] / (params.p_factor * prev) if params.p_factor else math.inf,
            "q_ratio": state.dq[k] / (params.q_factor * prev) if params.q_factor else math.inf,
            "slope_ratio": state.sigma_diffs[k] / (params.slope_factor * prev) if params.slope_factor else math.inf,
        }
        rows.append(row)
        if k >= 2 and params.contracts and row["ratio"] > params.mu + slack:
            ok["ratio"] = False
        for key in ("u", "p", "q", "slope"):
            if row[f"{key}_ratio"] > 1 + slack:
                ok[key] = False
    return {"rows": rows, "pass": ok, "slack": slack}


def solve_nonlinear(f, data, region: Region, grid=None, rule=None, tol: float = 1e-10, max_iter: int = 100,
                    shrink: bool = True, L: float | None = None, strict: bool = False) -> NonlinearResult:
    """Shrink the region until mu < 1 (optionally), then iterate to ||v^{n+1} - v^n|| < tol.

    ``grid`` is a GridSpec or an (nx, ny) pair; after shrinking, the same node
    counts are laid over the smaller region.
    """
    t0 = time.perf_counter()
    if isinstance(grid, GridSpec):
        nx, ny = grid.nx, grid.ny
    else:
        nx, ny = grid if grid is not None else (257, 257)
    rhs = make_rhs(f)
    history = []
    halvings = 0
    while True:
        if isinstance(grid, GridSpec) and grid.region is region:
            g = grid
        else:
            g = GridSpec.over(region, nx, ny)
        op = SplitOperator(region, g, data)
        v0, theta0 = base_step(data, region, g, op)
        if L is None:
            box = lipschitz_box(f, v0, region)
            L_used, L_source, sup_f = box.L, "estimated", box.sup_abs
        else:
            L_used, L_source, sup_f = float(L), "supplied", None
        params = contraction_params(region, L_used)
        history.append({"x_A": region.x_A, "y_A": region.y_A, "y_B": region.y_B, "L": L_used, "mu": params.mu})
        if params.contracts or not shrink:
            break
        if halvings >= MAX_HALVINGS:
            raise ContractionUnachievable(
                f"mu = {params.mu:.4g} >= 1 after {halvings} halvings of x_A"
            )
        halvings += 1
        log.info("mu = %.4g >= 1, halving x_A to %.6g", params.mu, region.x_A / 2)
        region = Region.from_curves(region.curves.with_extent(region.x_A / 2))

    state = NonlinearState(0, v0, theta0)
    converged = False
    while state.n < max_iter:
        state = iterate_step(state, rhs, data, region, op)
        if state.deltas[-1] < tol:
            converged = True
            break
    report = {
        "converged": converged,
        "iterations": state.n,
        "params": params.to_dict(),
        "mu_flagged": not params.contracts,
        "L_source": L_source,
        "sup_f": sup_f,
        "shrink_history": history,
        "halvings": halvings,
        "deltas": list(state.deltas),
        "sigma": theta0.slope if state.n == 0 else state.theta.slope,
        "sigma_diffs": list(state.sigma_diffs),
        "component_diffs": {"u": list(state.du), "p": list(state.dp), "q": list(state.dq)},
        "ac_jump_max": float(max(state.ac_jump, default=0.0)),
        "audit": audit(state, params),
        "wall_time_s": time.perf_counter() - t0,
    }
    res = NonlinearResult(state.v, state.theta, report, region, op.grid, state, op, rhs)
    g_final = _triple_integrand(rhs, state.v)
    report["boundary_defects"] = op.boundary_defects(g_final, state.theta, slope=state.theta.slope)
    if strict and not converged:
        raise MaxIterationsExceeded(f"no convergence in {max_iter} iterations", result=res)
    return res


def _probe_indices(grid: GridSpec, n_probe: int):
    sx = max(1, (grid.nx - 1) // (n_probe - 1))
    sy = max(1, (grid.ny - 1) // (n_probe - 1))
    ii, jj = np.meshgrid(np.arange(0, grid.nx, sx), np.arange(0, grid.ny, sy), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    keep = grid.mask[ii, jj]
    return ii[keep], jj[keep]


def _fully_inside(grid: GridSpec, ii, jj, layers: int):
    ok = np.ones(ii.shape, dtype=bool)
    for di in range(-layers, layers + 1):
        for dj in range(-layers, layers + 1):
            i2, j2 = ii + di, jj + dj
            inside = (i2 >= 0) & (i2 < grid.nx) & (j2 >= 0) & (j2 < grid.ny)
            ok &= inside
            ok[inside] &= grid.mask[i2[inside], j2[inside]]
    return ok


def verify_fixed_point(result: NonlinearResult, v: FieldTriple | None = None, n_probe: int = 17) -> dict:
    """Integral-identity defects of a converged triple at a probe subgrid.

    The identities are the split formulas with f evaluated on the triple
    itself; p and q are also compared with centred differences of u.
    """
    v = v or result.fields
    op, theta = result.operator, result.theta
    grid = v.grid
    g = _triple_integrand(result.f, v)
    ii, jj = _probe_indices(grid, n_probe)
    x, y = grid.xs[ii], grid.ys[jj]
    u, p, q = op.evaluate(g, x, y, theta, slope=theta.slope)
    du = np.abs(u - v.u.values[ii, jj])
    dp = np.abs(p - v.p.values[ii, jj])
    dq = np.abs(q - v.q.values[ii, jj])
    inner = _fully_inside(grid, ii, jj, 2)
    U = v.u.values
    i2, j2 = ii[inner], jj[inner]
    ux = (U[i2 + 1, j2] - U[i2 - 1, j2]) / (2 * grid.hx)
    uy = (U[i2, j2 + 1] - U[i2, j2 - 1]) / (2 * grid.hy)
    # u is only C^1 across AC: use a one-sided stencil from below on that row
    on_ac = np.abs(grid.ys[j2] - result.region.y_A) <= result.region.tol
    if np.any(on_ac):
        ia, ja = i2[on_ac], j2[on_ac]
        uy[on_ac] = (3 * U[ia, ja] - 4 * U[ia, ja - 1] + U[ia, ja - 2]) / (2 * grid.hy)
    fd_p = np.abs(ux - v.p.values[i2, j2])
    fd_q = np.abs(uy - v.q.values[i2, j2])
    worst = int(np.argmax(du)) if du.size else 0
    return {
        "probes": int(ii.size),
        "u_identity_max": float(np.max(du, initial=0.0)),
        "p_identity_max": float(np.max(dp, initial=0.0)),
        "q_identity_max": float(np.max(dq, initial=0.0)),
        "worst_u_probe": [float(x[worst]), float(y[worst])] if du.size else None,
        "fd_probes": int(inner.sum()),
        "p_vs_dx_u_max": float(np.max(fd_p, initial=0.0)),
        "q_vs_dy_u_max": float(np.max(fd_q, initial=0.0)),
    }
