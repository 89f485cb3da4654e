"""Composite trapezoid quadrature for 1D integrals and iterated strip integrals.

Two layers live here.  ``integrate_1d`` and ``integrate_strip`` are plain
uniform-rule integrators for callables.  ``StripQuadrature`` is the engine the
solvers use: it integrates over strips {x <= xi <= X(y), y <= eta <= b(xi)}
for many points at once, taking as quadrature nodes the strip endpoints plus
every grid line in between.  That is the exact integral of the
piecewise-linear interpolant along each line, and it lets one sweep over a
whole grid reuse column and row prefix sums instead of redoing the nested
sums per node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    n_outer: int = 64
    n_inner_min: int = 2

    def __post_init__(self):
        for name in ("n_outer", "n_inner_min"):
            n = getattr(self, name)
            if n < 2 or n % 2:
                raise ValueError(f"{name} must be an even integer >= 2, got {n}")

    def inner_count(self, height: float, hy: float | None = None) -> int:
        if hy is None:
            return self.n_outer
        n = max(self.n_inner_min, math.ceil(abs(height) / hy))
        return n + (n % 2)


def _uniform(g, lo, hi, n):
    t = np.linspace(lo, hi, n + 1)
    v = np.broadcast_to(np.asarray(g(t), dtype=float), t.shape)
    return float(np.trapezoid(v, t))


def integrate_1d(g, lo: float, hi: float, rule: QuadratureRule = QuadratureRule()) -> float:
    """Signed composite trapezoid of g over [lo, hi] with ``rule.n_outer`` cells."""
    lo, hi = float(lo), float(hi)
    if lo == hi:
        return 0.0
    if lo > hi:
        return -_uniform(g, hi, lo, rule.n_outer)
    return _uniform(g, lo, hi, rule.n_outer)


def integrate_strip(g, xi_lo, xi_hi, y, b_curve, rule: QuadratureRule = QuadratureRule(), hy=None) -> float:
    """Signed iterated integral of g(xi, eta) for xi from xi_lo to xi_hi, eta from y to b(xi).

    The outer rule has ``rule.n_outer`` cells; the inner count follows the
    strip height when a grid spacing ``hy`` is given and equals n_outer
    otherwise.
    """
    xi_lo, xi_hi, y = float(xi_lo), float(xi_hi), float(y)
    if xi_lo == xi_hi:
        return 0.0
    sign = 1.0
    if xi_lo > xi_hi:
        xi_lo, xi_hi, sign = xi_hi, xi_lo, -1.0
    xi = np.linspace(xi_lo, xi_hi, rule.n_outer + 1)
    tops = np.asarray(b_curve(xi), dtype=float)
    inner = np.empty_like(xi)
    for k, (s, top) in enumerate(zip(xi, tops)):
        m = rule.inner_count(top - y, hy)
        inner[k] = integrate_1d(lambda eta, s=s: g(np.full_like(eta, s), eta), y, top, QuadratureRule(m))
    return sign * float(np.trapezoid(inner, xi))


def integrate_over(g, strip, rule: QuadratureRule = QuadratureRule(), hy=None) -> float:
    """``integrate_strip`` driven by a geometry Strip descriptor."""
    return integrate_strip(g, strip.xi_lo, strip.xi_hi, strip.y, strip.upper, rule, hy)


def trapezoid_richardson(g, lo: float, hi: float, n: int) -> float:
    """Trapezoid with n and 2n cells combined as T_2n + (T_2n - T_n)/3."""
    t_n = integrate_1d(g, lo, hi, QuadratureRule(n))
    t_2n = integrate_1d(g, lo, hi, QuadratureRule(2 * n))
    return t_2n + (t_2n - t_n) / 3.0


# --------------------------------------------------------------------------
# grid-aligned engine

def _cumulative(vals, h):
    """cum[..., k] = trapezoid of vals[..., :k+1] with uniform spacing h."""
    cum = np.zeros_like(vals)
    cum[..., 1:] = np.cumsum(0.5 * h * (vals[..., 1:] + vals[..., :-1]), axis=-1)
    return cum


def _segment(nodes, vals, cum, line, lo, hi, g_lo, g_hi, tol):
    """Signed integral from lo to hi along ``vals[line, :]`` sampled at ``nodes``.

    g_lo and g_hi are the integrand at the (generally off-node) end points;
    nodes strictly inside [lo, hi] (up to tol) are used as quadrature nodes.
    """
    flip = hi < lo
    a = np.where(flip, hi, lo)
    b = np.where(flip, lo, hi)
    ga = np.where(flip, g_hi, g_lo)
    gb = np.where(flip, g_lo, g_hi)
    n = len(nodes)
    k1 = np.searchsorted(nodes, a - tol, side="left")
    k2 = np.searchsorted(nodes, b + tol, side="right") - 1
    c1 = np.clip(k1, 0, n - 1)
    c2 = np.clip(k2, 0, n - 1)
    v1 = vals[line, c1]
    v2 = vals[line, c2]
    inner = cum[line, c2] - cum[line, c1] + 0.5 * (nodes[c1] - a) * (ga + v1) + 0.5 * (b - nodes[c2]) * (v2 + gb)
    short = 0.5 * (b - a) * (ga + gb)
    out = np.where(k1 <= k2, inner, short)
    out = np.where(a == b, 0.0, out)
    return np.where(flip, -out, out)


def _dilate(mask):
    out = mask.copy()
    out[1:, :] |= mask[:-1, :]
    out[:-1, :] |= mask[1:, :]
    grown = out.copy()
    grown[:, 1:] |= out[:, :-1]
    grown[:, :-1] |= out[:, 1:]
    return grown


class Antiderivative:
    """Psi(t) = integral of psi from lo to t via a fine cumulative trapezoid."""

    def __init__(self, fn, lo: float, hi: float, n: int):
        self.t = np.linspace(lo, hi, int(n) + 1)
        self.v = np.broadcast_to(np.asarray(fn(self.t), dtype=float), self.t.shape).copy()
        self.h = (hi - lo) / int(n)
        self.cum = _cumulative(self.v, self.h)
        self.lo = lo

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        k = np.clip(np.floor((s - self.lo) / self.h).astype(int), 0, len(self.t) - 2)
        vs = np.interp(s, self.t, self.v)
        out = self.cum[k] + 0.5 * (s - self.t[k]) * (self.v[k] + vs)
        return float(out) if out.ndim == 0 else out

    def between(self, lo, hi):
        """Signed integral from lo to hi."""
        return self(hi) - self(lo)


@dataclass
class Sweep:
    """Per-point strip quantities for integrand g at points (x, y).

    double: integral over xi from x to X(y) of col(xi, y)
    col:    integral of g(x, eta) for eta from y to b(x)
    row:    integral of g(xi, y) for xi from x to X(y)
    edge:   integral of g(X(y), eta) for eta from y to b(X(y))
    outer:  X(y)
    """

    double: np.ndarray
    col: np.ndarray
    row: np.ndarray
    edge: np.ndarray
    outer: np.ndarray


class StripQuadrature:
    """Grid-aligned integrator for strips bounded by the curve eta = b(xi).

    ``outer`` maps y to the far end X(y) of the xi-integration (a(y) below
    AC and x_A above it for the unstable region, a(y) for the stable one).
    Integrands are vectorized callables g(x, y) that must be evaluable on the
    closed region and one grid cell beyond it.
    """

    def __init__(self, grid, b_curve, outer, tol: float):
        self.grid = grid
        self.xs = grid.xs
        self.ys = grid.ys
        self.hx = grid.hx
        self.hy = grid.hy
        self.b = b_curve
        self.outer = outer
        self.tol = tol
        self.tops = np.asarray(b_curve(self.xs), dtype=float)
        self.eval_mask = _dilate(grid.mask)
        self._eval_idx = np.nonzero(self.eval_mask)

    def node_values(self, g) -> np.ndarray:
        G = np.zeros(self.grid.shape)
        i, j = self._eval_idx
        G[i, j] = g(self.xs[i], self.ys[j])
        return G

    def column_integral(self, g, xc, lo, hi) -> np.ndarray:
        """Signed integral of g(xc, eta) for eta from lo to hi (vectorized over xc)."""
        xc, lo, hi = (np.atleast_1d(np.asarray(v, dtype=float)) for v in np.broadcast_arrays(xc, lo, hi))
        m = xc.size
        if m == 0:
            return np.zeros(0)
        a = np.minimum(lo, hi)
        b = np.maximum(lo, hi)
        k1 = np.searchsorted(self.ys, a - self.tol, side="left")
        k2 = np.searchsorted(self.ys, b + self.tol, side="right") - 1
        jj = np.arange(len(self.ys))
        need = (jj[None, :] >= k1[:, None]) & (jj[None, :] <= k2[:, None])
        V = np.zeros((m, len(self.ys)))
        r, c = np.nonzero(need)
        if r.size:
            V[r, c] = g(xc[r], self.ys[c])
        ends = g(np.concatenate([xc, xc]), np.concatenate([lo, hi]))
        g_lo, g_hi = ends[:m], ends[m:]
        cum = _cumulative(V, self.hy)
        return _segment(self.ys, V, cum, np.arange(m), lo, hi, g_lo, g_hi, self.tol)

    def _on_grid(self, v, h, n):
        k = np.clip(np.rint(v / h).astype(int), 0, n - 1)
        return k, np.abs(v - k * h) <= self.tol

    def sweep(self, g, x, y, G: np.ndarray | None = None) -> Sweep:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        nx, ny = self.grid.shape
        if G is None:
            G = self.node_values(g)
        cumG = _cumulative(G, self.hy)
        gtop = np.asarray(g(self.xs, self.tops), dtype=float)

        uy, inv = np.unique(y, return_inverse=True)
        nu = uy.size
        X = np.broadcast_to(np.asarray(self.outer(uy), dtype=float), uy.shape)
        lo_x = X.copy()
        hi_x = X.copy()
        np.minimum.at(lo_x, inv, x)
        np.maximum.at(hi_x, inv, x)
        need = (self.xs[None, :] >= lo_x[:, None] - self.tol) & (self.xs[None, :] <= hi_x[:, None] + self.tol)
        ru, ri = np.nonzero(need)

        # g along each row at the grid columns
        jrow, onrow = self._on_grid(uy, self.hy, ny)
        Grow = np.zeros((nu, nx))
        from_grid = onrow[ru]
        Grow[ru[from_grid], ri[from_grid]] = G[ri[from_grid], jrow[ru[from_grid]]]
        off = ~from_grid
        if np.any(off):
            Grow[ru[off], ri[off]] = g(self.xs[ri[off]], uy[ru[off]])

        # column integrals from each row height up to N
        H = np.zeros((nu, nx))
        H[ru, ri] = _segment(
            self.ys, G, cumG, ri, uy[ru], self.tops[ri], Grow[ru, ri], gtop[ri], self.tol
        )
        cumH = _cumulative(H, self.hx)
        cumGrow = _cumulative(Grow, self.hx)

        # far end X(y): edge column integral and g value
        cX, onX = self._on_grid(X, self.hx, nx)
        E = np.where(onX, H[np.arange(nu), cX], 0.0)
        gX = np.where(onX, Grow[np.arange(nu), cX], 0.0)
        if np.any(~onX):
            k = ~onX
            E[k] = self.column_integral(g, X[k], uy[k], self.b(X[k]))
            gX[k] = g(X[k], uy[k])

        # per-point start values
        cx, onx = self._on_grid(x, self.hx, nx)
        Hx = np.where(onx, H[inv, cx], 0.0)
        gx = np.where(onx, Grow[inv, cx], 0.0)
        if np.any(~onx):
            k = ~onx
            Hx[k] = self.column_integral(g, x[k], y[k], self.b(x[k]))
            gx[k] = g(x[k], y[k])

        Xp = X[inv]
        double = _segment(self.xs, H, cumH, inv, x, Xp, Hx, E[inv], self.tol)
        row = _segment(self.xs, Grow, cumGrow, inv, x, Xp, gx, gX[inv], self.tol)
        return Sweep(double=double, col=Hx, row=row, edge=E[inv], outer=Xp)
