"""Scalar fields on a masked structured grid, with bilinear interpolation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import GridMismatch, PointOutsideRegion

MIN_NODES = 9
SNAP = 1e-12


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Uniform nx-by-ny node lattice on [0, x_max] x [0, y_max].

    Arrays indexed ``[i, j]`` hold the value at ``(xs[i], ys[j])``.  ``mask``
    marks nodes inside the closed region (same tolerance as the region's
    own ``contains``).
    """

    nx: int
    ny: int
    x_max: float
    y_max: float
    region: object = field(repr=False)
    xs: np.ndarray = field(init=False, repr=False)
    ys: np.ndarray = field(init=False, repr=False)
    mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.nx < MIN_NODES or self.ny < MIN_NODES:
            raise ValueError(f"grid needs at least {MIN_NODES} nodes per axis")
        xs = np.linspace(0.0, self.x_max, self.nx)
        ys = np.linspace(0.0, self.y_max, self.ny)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        object.__setattr__(self, "mask", np.asarray(self.region.contains(X, Y), dtype=bool))

    @classmethod
    def over(cls, region, nx: int, ny: int | None = None) -> "GridSpec":
        x_max, y_max = region.extent
        return cls(int(nx), int(ny if ny is not None else nx), float(x_max), float(y_max), region)

    @property
    def hx(self):
        return self.x_max / (self.nx - 1)

    @property
    def hy(self):
        return self.y_max / (self.ny - 1)

    @property
    def shape(self):
        return (self.nx, self.ny)

    def mesh(self):
        return np.meshgrid(self.xs, self.ys, indexing="ij")

    def masked_points(self):
        """Masked nodes, row-major in y then x."""
        jj, ii = np.nonzero(self.mask.T)
        return self.xs[ii], self.ys[jj], ii, jj

    def compatible(self, other: "GridSpec") -> bool:
        return (
            self is other
            or (
                self.shape == other.shape
                and self.x_max == other.x_max
                and self.y_max == other.y_max
                and np.array_equal(self.mask, other.mask)
            )
        )

    def empty(self) -> "GridField":
        return GridField(self, np.where(self.mask, 0.0, np.nan))

    def sample(self, fn) -> "GridField":
        """Field with fn(x, y) at the masked nodes."""
        X, Y = self.mesh()
        vals = np.full(self.shape, np.nan)
        vals[self.mask] = np.broadcast_to(fn(X[self.mask], Y[self.mask]), (int(self.mask.sum()),))
        return GridField(self, vals)


def extend_field(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Fill unmasked nodes so bilinear interpolation is usable in cut cells.

    Along each row the masked run is extended linearly from its two outermost
    nodes on each side.  A row with a single masked node borrows the end
    slope of the nearest row that has two.  Rows without masked nodes are
    filled by linear interpolation between the nearest filled rows, constant
    past the last one.
    """
    out = np.array(values, dtype=float, copy=True)
    nx, ny = out.shape
    ii = np.arange(nx, dtype=float)
    filled = np.zeros(ny, dtype=bool)
    counts = mask.sum(axis=0)
    wide = np.flatnonzero(counts >= 2)
    single = []
    for j in range(ny):
        if counts[j] == 1:
            single.append(j)
        idx = np.flatnonzero(mask[:, j])
        if idx.size == 0:
            continue
        filled[j] = True
        col = out[idx, j]
        row = np.interp(ii, idx, col)
        if idx.size >= 2:
            lo, hi = idx[0], idx[-1]
            left = ii < lo
            right = ii > hi
            s_lo = (out[idx[1], j] - out[lo, j]) / (idx[1] - lo)
            s_hi = (out[hi, j] - out[idx[-2], j]) / (hi - idx[-2])
            row[left] = out[lo, j] + s_lo * (ii[left] - lo)
            row[right] = out[hi, j] + s_hi * (ii[right] - hi)
        row[idx] = col
        out[:, j] = row
    for j in single:
        i0 = int(np.flatnonzero(mask[:, j])[0])
        if wide.size == 0:
            continue
        jn = int(wide[np.argmin(np.abs(wide - j))])
        idx = np.flatnonzero(mask[:, jn])
        left = ii < i0
        right = ii > i0
        s_lo = (out[idx[1], jn] - out[idx[0], jn]) / (idx[1] - idx[0])
        s_hi = (out[idx[-1], jn] - out[idx[-2], jn]) / (idx[-1] - idx[-2])
        out[left, j] = out[i0, j] + s_lo * (ii[left] - i0)
        out[right, j] = out[i0, j] + s_hi * (ii[right] - i0)
    if not filled.any():
        raise ValueError("grid mask is empty")
    if not filled.all():
        jf = np.flatnonzero(filled)
        jj = np.arange(ny, dtype=float)
        for i in range(nx):
            out[i, ~filled] = np.interp(jj[~filled], jf, out[i, jf])
    return out


def bilinear(table: np.ndarray, xs: np.ndarray, ys: np.ndarray, x, y):
    """Bilinear interpolation on a uniform lattice; exact at the nodes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx, ny = table.shape
    hx = (xs[-1] - xs[0]) / (nx - 1)
    hy = (ys[-1] - ys[0]) / (ny - 1)
    sx = (x - xs[0]) / hx
    sy = (y - ys[0]) / hy
    rx = np.rint(sx)
    ry = np.rint(sy)
    sx = np.where(np.abs(sx - rx) < SNAP, rx, sx)
    sy = np.where(np.abs(sy - ry) < SNAP, ry, sy)
    i = np.clip(np.floor(sx).astype(int), 0, nx - 2)
    j = np.clip(np.floor(sy).astype(int), 0, ny - 2)
    tx = sx - i
    ty = sy - j
    v00 = table[i, j]
    v10 = table[i + 1, j]
    v01 = table[i, j + 1]
    v11 = table[i + 1, j + 1]
    out = (1 - tx) * ((1 - ty) * v00 + ty * v01) + tx * ((1 - ty) * v10 + ty * v11)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class GridField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise GridMismatch(f"values of shape {vals.shape} on a {self.grid.shape} grid")
        vals = np.where(self.grid.mask, vals, np.nan)
        if not np.all(np.isfinite(vals[self.grid.mask])):
            raise ValueError("field has non-finite values at masked nodes")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @cached_property
    def extended(self) -> np.ndarray:
        ext = extend_field(np.nan_to_num(self.values), self.grid.mask)
        ext.setflags(write=False)
        return ext

    def sample(self, x, y):
        """Interpolate without the region check (used inside quadrature sweeps)."""
        return bilinear(self.extended, self.grid.xs, self.grid.ys, x, y)

    def interpolate(self, point):
        x, y = float(point[0]), float(point[1])
        if not self.grid.region.contains(x, y):
            raise PointOutsideRegion((x, y), "cannot interpolate outside the region")
        return self.sample(x, y)

    def masked(self) -> np.ndarray:
        return self.values[self.grid.mask]

    def sup(self) -> float:
        m = self.masked()
        return float(np.max(np.abs(m))) if m.size else 0.0

    def __sub__(self, other: "GridField") -> "GridField":
        _check(self.grid, other.grid)
        return GridField(self.grid, self.values - other.values)

    def __add__(self, other: "GridField") -> "GridField":
        _check(self.grid, other.grid)
        return GridField(self.grid, self.values + other.values)

    def shifted(self, c: float) -> "GridField":
        return GridField(self.grid, self.values + c)


def _check(g1: GridSpec, g2: GridSpec):
    if not g1.compatible(g2):
        raise GridMismatch("fields live on different grids")


@dataclass(frozen=True, eq=False)
class FieldTriple:
    """u together with p ~ u_x and q ~ u_y."""

    u: GridField
    p: GridField
    q: GridField

    def __post_init__(self):
        _check(self.u.grid, self.p.grid)
        _check(self.u.grid, self.q.grid)

    @property
    def grid(self):
        return self.u.grid

    @classmethod
    def zeros(cls, grid: GridSpec) -> "FieldTriple":
        z = grid.empty()
        return cls(z, z, z)


def sup_norm(f: GridField) -> float:
    return f.sup()


def sup_norm_diff(a, b) -> float:
    """Sum of the sup-norm differences of u, p and q (or of single fields)."""
    if isinstance(a, GridField) and isinstance(b, GridField):
        return (a - b).sup()
    _check(a.grid, b.grid)
    return (a.u - b.u).sup() + (a.p - b.p).sup() + (a.q - b.q).sup()


def interpolate(f: GridField, point):
    return f.interpolate(point)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_field_csv(path, u: GridField, p: GridField | None = None, q: GridField | None = None):
    """CSV with header x,y,u,p,q; one row per masked node, y-major."""
    if isinstance(u, FieldTriple):
        u, p, q = u.u, u.p, u.q
    grid = u.grid
    x, y, ii, jj = grid.masked_points()
    cols = [x, y, u.values[ii, jj]]
    for extra in (p, q):
        cols.append(extra.values[ii, jj] if extra is not None else np.full(x.shape, np.nan))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "u", "p", "q"])
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])


def read_field_csv(path, grid: GridSpec) -> FieldTriple:
    """Load a CSV written by write_field_csv back onto ``grid``."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    data = np.atleast_1d(data)
    ii = np.rint(data["x"] / grid.hx).astype(int)
    jj = np.rint(data["y"] / grid.hy).astype(int)
    if (
        np.any(ii < 0) or np.any(ii >= grid.nx) or np.any(jj < 0) or np.any(jj >= grid.ny)
        or np.max(np.abs(grid.xs[np.clip(ii, 0, grid.nx - 1)] - data["x"]), initial=0) > 1e-9 * grid.x_max
    ):
        raise GridMismatch("CSV nodes do not lie on the configured grid")
    mask = np.zeros(grid.shape, dtype=bool)
    mask[ii, jj] = True
    if not np.array_equal(mask, grid.mask):
        raise GridMismatch("CSV node set differs from the configured grid mask")
    out = []
    for name in ("u", "p", "q"):
        vals = np.full(grid.shape, np.nan)
        vals[ii, jj] = data[name]
        if np.any(np.isnan(data[name])):
            vals[ii, jj] = np.nan_to_num(data[name])
        out.append(GridField(grid, vals))
    return FieldTriple(*out)
