"""Run configuration: JSON document, dotted overrides, validation."""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass

from .boundary import BoundaryData
from .errors import CharpicError, ConfigError
from .expr import Expr
from .fields import GridSpec
from .geometry import CurvePair, Region, StableRegion, curves_from_spec
from .quadrature import QuadratureRule

DEFAULTS = {
    "geometry": {"type": "affine", "a_slope": 2.0, "b_slope": 2.0, "x_A": 1.0},
    "data": {"phi": "0", "psi": "0"},
    "theta": {"mode": "auto_linear"},
    "f": "u",
    "grid": {"nx": 257, "ny": 257},
    "quad": {"n_outer": 64, "n_inner_min": 2},
    "solver": {"tol": 1e-10, "max_iter": 60, "shrink": True},
    "lipschitz": {"L": None, "box": {"u": [-1.0, 1.0], "p": [-1.0, 1.0], "q": [-1.0, 1.0]}},
    "output": {"dir": "charpic_out"},
    "seed": 0,
    "runtime": {"threads": None},
    "study": {"solver": "linear", "grids": [65, 129, 257]},
}

GEOMETRY_KEYS = {
    "affine": {"type", "a_slope", "b_slope", "x_A"},
    "expr": {"type", "a", "b", "x_A"},
    "sampled": {"type", "a_points", "b_points", "x_A"},
}
THETA_MODES = ("auto_linear", "positive_demo", "affine_iterated")
STUDY_SOLVERS = ("elementary", "linear", "stable", "nonlinear")


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if key == "geometry":
            out[key] = copy.deepcopy(val)
        elif key == "lipschitz" and isinstance(val, dict) and "box" in val:
            out[key] = _merge(base[key], {k: v for k, v in val.items() if k != "box"}, where + ".")
            out[key]["box"] = copy.deepcopy(val["box"])
        elif isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {where!r} must be an object")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> None:
    """Apply ``a.b.c=value`` in place; value is JSON when it parses, else a string."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    path, text = assignment.split("=", 1)
    keys = path.strip().split(".")
    node = cfg
    for k in keys[:-1]:
        if k not in node or not isinstance(node[k], dict):
            if node is cfg.get("geometry") or k == "geometry":
                node = node.setdefault(k, {})
                continue
            raise ConfigError(f"unknown config key {path!r}")
        node = node[k]
    last = keys[-1]
    in_free = node is cfg.get("geometry") or node is cfg.get("lipschitz", {}).get("box")
    if last not in node and not in_free:
        raise ConfigError(f"unknown config key {path!r}")
    node[last] = _parse_value(text)


def _number(val, name, positive=False, integer=False, minimum=None):
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{name} must be a number, got {val!r}")
    if integer and int(val) != val:
        raise ConfigError(f"{name} must be an integer, got {val!r}")
    if positive and not val > 0:
        raise ConfigError(f"{name} must be positive, got {val!r}")
    if minimum is not None and val < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {val!r}")
    return int(val) if integer else float(val)


def _parse_expr(src, allowed, name):
    if not isinstance(src, (str, int, float)) or isinstance(src, bool):
        raise ConfigError(f"{name} must be an expression string")
    try:
        return Expr.parse(str(src), allowed)
    except CharpicError as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def validate(cfg: dict) -> None:
    geo = cfg["geometry"]
    kind = geo.get("type")
    if kind not in GEOMETRY_KEYS:
        raise ConfigError(f"geometry.type must be one of {sorted(GEOMETRY_KEYS)}, got {kind!r}")
    extra = set(geo) - GEOMETRY_KEYS[kind]
    if extra:
        raise ConfigError(f"unknown geometry keys for type {kind!r}: {sorted(extra)}")
    if kind == "affine":
        for k in ("a_slope", "b_slope", "x_A"):
            _number(geo.get(k), f"geometry.{k}", positive=True)
    elif kind == "expr":
        _parse_expr(geo.get("a"), {"y"}, "geometry.a")
        _parse_expr(geo.get("b"), {"x"}, "geometry.b")
        _number(geo.get("x_A"), "geometry.x_A", positive=True)
    else:
        for k in ("a_points", "b_points"):
            pts = geo.get(k)
            if not isinstance(pts, list) or len(pts) < 2 or not all(isinstance(p, list) and len(p) == 2 for p in pts):
                raise ConfigError(f"geometry.{k} must be a list of [t, v] pairs")
        if geo.get("x_A") is not None:
            _number(geo["x_A"], "geometry.x_A", positive=True)
    _parse_expr(cfg["data"]["phi"], {"y"}, "data.phi")
    _parse_expr(cfg["data"]["psi"], {"x"}, "data.psi")
    mode = cfg["theta"]["mode"]
    if not isinstance(mode, str) or not (mode in THETA_MODES or mode.startswith("explicit:")):
        raise ConfigError(f"theta.mode must be one of {THETA_MODES} or 'explicit:<expr>', got {mode!r}")
    if mode.startswith("explicit:"):
        _parse_expr(mode[len("explicit:"):], {"y"}, "theta.mode")
    _parse_expr(cfg["f"], {"x", "y", "u", "p", "q"}, "f")
    _number(cfg["grid"]["nx"], "grid.nx", integer=True, minimum=9)
    _number(cfg["grid"]["ny"], "grid.ny", integer=True, minimum=9)
    for k in ("n_outer", "n_inner_min"):
        n = _number(cfg["quad"][k], f"quad.{k}", integer=True, minimum=2)
        if n % 2:
            raise ConfigError(f"quad.{k} must be even")
    _number(cfg["solver"]["tol"], "solver.tol", positive=True)
    _number(cfg["solver"]["max_iter"], "solver.max_iter", integer=True, minimum=1)
    if not isinstance(cfg["solver"]["shrink"], bool):
        raise ConfigError("solver.shrink must be true or false")
    if cfg["lipschitz"]["L"] is not None:
        _number(cfg["lipschitz"]["L"], "lipschitz.L", minimum=0)
    box = cfg["lipschitz"]["box"]
    if not isinstance(box, dict) or set(box) - {"u", "p", "q", "x", "y"}:
        raise ConfigError("lipschitz.box must map a subset of u, p, q, x, y to [lo, hi]")
    for k, v in box.items():
        if not (isinstance(v, list) and len(v) == 2):
            raise ConfigError(f"lipschitz.box.{k} must be [lo, hi]")
        lo = _number(v[0], f"lipschitz.box.{k}[0]")
        hi = _number(v[1], f"lipschitz.box.{k}[1]")
        if hi < lo:
            raise ConfigError(f"lipschitz.box.{k} has hi < lo")
    if not isinstance(cfg["output"]["dir"], str) or not cfg["output"]["dir"]:
        raise ConfigError("output.dir must be a non-empty string")
    _number(cfg["seed"], "seed", integer=True)
    if cfg["runtime"]["threads"] is not None:
        _number(cfg["runtime"]["threads"], "runtime.threads", integer=True, minimum=1)
    study = cfg["study"]
    if study["solver"] not in STUDY_SOLVERS:
        raise ConfigError(f"study.solver must be one of {STUDY_SOLVERS}")
    grids = study["grids"]
    if not isinstance(grids, list) or len(grids) < 2:
        raise ConfigError("study.grids needs at least two grid sizes")
    for a, b in zip(grids[:-1], grids[1:]):
        _number(a, "study.grids", integer=True, minimum=9)
        if b - 1 != 2 * (a - 1):
            raise ConfigError("study.grids must be nested: n_{k+1} - 1 = 2 (n_k - 1)")


@dataclass
class RunConfig:
    raw: dict

    @property
    def geometry(self):
        return self.raw["geometry"]

    def curves(self) -> CurvePair:
        try:
            return curves_from_spec(self.geometry)
        except KeyError as exc:
            raise ConfigError(f"geometry is missing key {exc}") from exc

    def region(self) -> Region:
        return Region.from_curves(self.curves())

    def stable_region(self) -> StableRegion:
        return StableRegion.from_curves(self.curves())

    def data(self, region=None) -> BoundaryData:
        d = self.raw["data"]
        if region is not None:
            return BoundaryData.for_region(d["phi"], d["psi"], region)
        return BoundaryData(d["phi"], d["psi"])

    def grid(self, region) -> GridSpec:
        return GridSpec.over(region, self.raw["grid"]["nx"], self.raw["grid"]["ny"])

    def rule(self) -> QuadratureRule:
        q = self.raw["quad"]
        return QuadratureRule(int(q["n_outer"]), int(q["n_inner_min"]))

    @property
    def f(self) -> str:
        return str(self.raw["f"])

    @property
    def theta_mode(self) -> str:
        return self.raw["theta"]["mode"]

    @property
    def solver(self) -> dict:
        return self.raw["solver"]

    @property
    def L(self):
        return self.raw["lipschitz"]["L"]

    def output_dir(self, override: str | None = None) -> str:
        if override:
            return override
        return os.environ.get("CHARPIC_OUT") or self.raw["output"]["dir"]


def resolve(doc: dict, overrides=()) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    cfg = _merge(DEFAULTS, doc)
    for o in overrides:
        apply_override(cfg, o)
    validate(cfg)
    return RunConfig(cfg)


def load_config(path: str | None, overrides=()) -> RunConfig:
    doc = {}
    if path:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from exc
    return resolve(doc, overrides)
