"""Command-line driver: ``charpic <command> --config run.json [--set key=value ...]``.

Every command writes ``report.json`` into the output directory.  Exit status
is 0 on success, 2 on invalid input and 3 when a solver does not converge
(the best iterate is still written).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .boundary import build_theta_positive_demo, theta_from_spec
from .config import RunConfig, load_config
from .errors import CharpicError, ConfigError, ContractionUnachievable, MaxIterationsExceeded
from .expr import Expr, estimate_lipschitz
from .fields import GridSpec, read_field_csv, write_field_csv
from .geometry import Case, build_ladder, classify_configuration
from .linear import _ladder_depth, demo_nonuniqueness, picard_linear, solve_elementary
from .nonlinear import contraction_params, solve_nonlinear
from .verification import (
    convergence_from_fields,
    residual_mixed_derivative,
    residual_study,
    solve_stable_case_I,
    stencil_error,
)

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_INTERNAL = 0, 2, 3, 1
COMMANDS = (
    "check-config",
    "solve-elementary",
    "solve-linear",
    "solve-nonlinear",
    "solve-stable",
    "demo-nonuniqueness",
    "verify",
    "convergence-study",
)


class NotConverged(Exception):
    pass


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if obj is None or isinstance(obj, (int, str)):
        return obj
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    return repr(obj)


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


class Run:
    """Output directory, report and manifest of one command invocation."""

    def __init__(self, command: str, out_dir: str):
        self.command = command
        self.out = out_dir
        self.report = {"command": command, "errors": [], "outputs": [], "version": __version__}
        self.t0 = time.perf_counter()

    def path(self, name: str) -> str:
        if name not in self.report["outputs"]:
            self.report["outputs"].append(name)
        return os.path.join(self.out, name)

    def error(self, kind: str, message: str):
        self.report["errors"].append({"type": kind, "message": message})

    def finish(self):
        self.report["timings"] = {"total_s": time.perf_counter() - self.t0}
        os.makedirs(self.out, exist_ok=True)
        self.report["outputs"] = sorted(set(self.report["outputs"]) | {"report.json"})
        write_json(os.path.join(self.out, "report.json"), self.report)


# --------------------------------------------------------------------------
# helpers

def _f_expr(cfg: RunConfig) -> Expr:
    return Expr.parse(cfg.f, {"x", "y", "u", "p", "q"})


def _xy_only(cfg: RunConfig) -> Expr:
    e = _f_expr(cfg)
    if set(e.used) - {"x", "y"}:
        raise ConfigError(f"f = {cfg.f!r} depends on the solution; this command needs f(x, y)")
    return e


def _require_linear(cfg: RunConfig):
    if cfg.f.replace(" ", "") != "u":
        raise ConfigError(f"this command solves u_xy = u; got f = {cfg.f!r} (use solve-nonlinear)")


def _convergence_csv(run: Run, deltas):
    write_rows(run.path("convergence.csv"), ["n", "delta_n"], [(n + 1, d) for n, d in enumerate(deltas)])


def _residual_summary(v, f, region):
    r = residual_mixed_derivative(v, f, region)
    return r.to_dict()


def _ladder_minima(region, grid, u):
    if not region.curves.is_affine:
        return None
    ladder = build_ladder(region, _ladder_depth(region, grid.hy))
    x, y, ii, jj = grid.masked_points()
    vals = u.values[ii, jj]
    level = ladder.level_of(x, y)
    out = {}
    for N in range(1, ladder.depth + 1):
        sel = level == N
        if np.any(sel):
            out[str(N)] = float(np.min(vals[sel]))
    return out


def _theta_rows(region, grid, theta):
    ys = grid.ys[(grid.ys > region.y_A + region.tol) & (grid.ys < region.y_B - region.tol)]
    ys = np.concatenate([[region.y_A], ys, [region.y_B]])
    return [(y, float(theta(y))) for y in ys]


# --------------------------------------------------------------------------
# commands

def cmd_check_config(cfg: RunConfig, run: Run, args):
    curves = cfg.curves()
    conf = classify_configuration(curves)
    run.report["case"] = conf.case.value
    run.report["margin"] = conf.margin
    lines = [f"case={conf.case.value}"]
    e = _f_expr(cfg)
    box = {k: tuple(v) for k, v in cfg.raw["lipschitz"]["box"].items()}
    if conf.case is Case.UNSTABLE_CASE_II:
        region = cfg.region()
        d = region.y_B - region.y_A
        ad2 = float(region.a.derivative(region.y_A)) * d**2
        run.report["ad2"] = ad2
        run.report["region"] = {"x_A": region.x_A, "y_A": region.y_A, "y_B": region.y_B, "x_C": region.x_C,
                                "gamma": region.gamma, "area": region.area}
        lines.append(f"ad^2 = {ad2:.6g}")
        try:
            build_theta_positive_demo(region)
            run.report["theta_positivity"] = "OK"
            lines.append("theta positivity OK")
        except CharpicError as exc:
            run.report["theta_positivity"] = str(exc)
            lines.append(f"theta positivity FAILED: {exc}")
        box.setdefault("x", (0.0, region.x_A))
        box.setdefault("y", (0.0, region.y_B))
    else:
        ext = curves.x_A if curves.x_A is not None else 1.0
        box.setdefault("x", (0.0, ext))
        box.setdefault("y", (0.0, float(curves.b(ext))))
    for k in e.used:
        box.setdefault(k, (-1.0, 1.0))
    lb = estimate_lipschitz(e, box)
    rng = np.random.default_rng(int(cfg.raw["seed"]))
    ratio = _sampled_lipschitz(e, box, rng)
    L = cfg.L if cfg.L is not None else lb.L
    run.report["lipschitz"] = {"L_estimate": lb.L, "sup_abs_f": lb.sup_abs, "box": box,
                               "sampled_ratio_max": ratio, "L_used": L,
                               "L_source": "supplied" if cfg.L is not None else "estimated"}
    lines.append(f"L = {lb.L:.6g}, sup|f| = {lb.sup_abs:.6g} on the declared box")
    if conf.case is Case.UNSTABLE_CASE_II:
        mu = contraction_params(region, L).mu
        run.report["mu"] = mu
        lines.append(f"mu = {mu:.6g}" + ("" if mu < 1 else " (>= 1: solve-nonlinear will shrink x_A)"))
    for line in lines:
        print(line)


def _sampled_lipschitz(e: Expr, box, rng, n: int = 2000) -> float:
    """Largest |f(v) - f(w)| / |v - w|_1 over random pairs sharing x, y."""
    dep = [k for k in ("u", "p", "q") if k in e.used]
    if not dep:
        return 0.0
    pts = {k: rng.uniform(*box[k], size=(2, n)) for k in e.used}
    for k in ("x", "y"):
        if k in pts:
            pts[k][1] = pts[k][0]
    v = e(**{k: pts[k][0] for k in e.used})
    w = e(**{k: pts[k][1] for k in e.used})
    dist = sum(np.abs(pts[k][0] - pts[k][1]) for k in dep)
    ok = dist > 0
    return float(np.max(np.abs(v - w)[ok] / dist[ok], initial=0.0))


def cmd_solve_elementary(cfg, run, args):
    f_xy = _xy_only(cfg)
    region = cfg.region()
    data = cfg.data(region)
    grid = cfg.grid(region)
    theta = theta_from_spec(cfg.theta_mode, data, region, f_xy=lambda x, y: f_xy(x=x, y=y))
    sol = solve_elementary(f_xy, data, theta, region, grid, cfg.rule())
    write_field_csv(run.path("field.csv"), sol.fields)
    _convergence_csv(run, [0.0])
    run.report.update({
        "case": region.configuration.case.value,
        "theta": theta.describe(),
        "theta_check": sol.theta_report.to_dict(),
        "boundary_defects": sol.defects,
        "residual": _residual_summary(sol.fields, f_xy, region),
    })


def cmd_solve_linear(cfg, run, args):
    _require_linear(cfg)
    region = cfg.region()
    data = cfg.data(region)
    grid = cfg.grid(region)
    theta = theta_from_spec(cfg.theta_mode, data, region)
    s = cfg.solver
    sol = picard_linear(data, theta, region, grid, cfg.rule(), tol=s["tol"], max_iter=s["max_iter"])
    write_field_csv(run.path("field.csv"), sol.fields)
    _convergence_csv(run, sol.state.deltas)
    run.report.update({
        "case": region.configuration.case.value,
        "theta": theta.describe(),
        "iterations": sol.state.n,
        "converged": sol.converged,
        "deltas": sol.state.deltas,
        "fitted_c": sol.state.fitted_constant(),
        "bound_ratios": sol.state.bound_ratios(),
        "boundary_defects": sol.defects,
        "positivity_minima": _ladder_minima(region, grid, sol.u),
        "residual": _residual_summary(sol.fields, "u", region),
    })
    if not sol.converged:
        raise NotConverged(f"no convergence in {s['max_iter']} iterations (last delta {sol.state.deltas[-1]:.3g})")


def cmd_solve_nonlinear(cfg, run, args):
    f = _f_expr(cfg)
    region = cfg.region()
    data = cfg.data(region)
    s = cfg.solver
    grid = (cfg.raw["grid"]["nx"], cfg.raw["grid"]["ny"])
    res = solve_nonlinear(f, data, region, grid, cfg.rule(), tol=s["tol"], max_iter=s["max_iter"],
                          shrink=s["shrink"], L=cfg.L)
    st = res.state
    write_field_csv(run.path("field.csv"), res.fields)
    mu = res.report["params"]["mu"]
    rows = []
    for k, d in enumerate(st.deltas):
        ratio = d / st.deltas[k - 1] if k and st.deltas[k - 1] > 0 else float("nan")
        rows.append((k + 1, d, st.du[k], st.dp[k], st.dq[k], st.sigma_diffs[k], ratio, mu))
    write_rows(run.path("convergence.csv"),
               ["n", "delta_n", "du", "dp", "dq", "dsigma", "ratio", "mu"], rows)
    write_rows(run.path("theta.csv"), ["y", "theta"], _theta_rows(res.region, res.grid, res.theta))
    run.report.update(res.report)
    run.report["case"] = res.region.configuration.case.value
    run.report["theta"] = res.theta.describe()
    run.report["residual"] = _residual_summary(res.fields, f, res.region)
    if not res.converged:
        raise NotConverged(f"no convergence in {s['max_iter']} iterations (last delta {st.deltas[-1]:.3g})")


def cmd_solve_stable(cfg, run, args):
    region = cfg.stable_region()
    data = cfg.data(region)
    grid = cfg.grid(region)
    e = _f_expr(cfg)
    s = cfg.solver
    if set(e.used) <= {"x", "y"}:
        sol = solve_stable_case_I(data, region, grid, cfg.rule(), f_xy=lambda x, y: e(x=x, y=y))
    else:
        _require_linear(cfg)
        sol = solve_stable_case_I(data, region, grid, cfg.rule(), tol=s["tol"], max_iter=s["max_iter"])
    write_field_csv(run.path("field.csv"), sol.fields)
    _convergence_csv(run, sol.state.deltas)
    run.report.update({
        "case": Case.STABLE_CASE_I.value,
        "iterations": sol.state.n,
        "converged": sol.converged,
        "deltas": sol.state.deltas,
        "boundary_defects": sol.defects,
        "residual": _residual_summary(sol.fields, e, region),
    })
    if not sol.converged:
        raise NotConverged(f"no convergence in {s['max_iter']} iterations")


def cmd_demo(cfg, run, args):
    region = cfg.region()
    grid = cfg.grid(region)
    s = cfg.solver
    demo = demo_nonuniqueness(region, grid, cfg.rule(), tol=s["tol"], max_iter=s["max_iter"])
    write_field_csv(run.path("field_zero.csv"), demo.zero.fields)
    write_field_csv(run.path("field_theta.csv"), demo.theta_run.fields)
    _convergence_csv(run, demo.theta_run.state.deltas)
    rep = demo.report
    positivity = {
        "per_level": rep["per_level"],
        "interior_oac_min": rep["interior_oac_min"],
        "all_interior_positive": rep["all_interior_positive"],
        "ladder_min_T1_T3": rep["ladder_min_T1_T3"],
        "zero_run_sup": rep["zero_run_sup"],
    }
    write_json(run.path("positivity.json"), positivity)
    run.report.update({
        "case": region.configuration.case.value,
        "theta": demo.theta.describe(),
        "demo": rep,
        "iterations": {"zero": demo.zero.state.n, "theta": demo.theta_run.state.n},
        "converged": demo.zero.converged and demo.theta_run.converged,
        "boundary_defects": demo.theta_run.defects,
        "positivity_minima": {k: v["min"] for k, v in rep["per_level"].items()},
    })
    if not run.report["converged"]:
        raise NotConverged("demo runs did not converge")


def _verify_region(cfg):
    conf = classify_configuration(cfg.curves())
    return cfg.stable_region() if conf.case is Case.STABLE_CASE_I else cfg.region()


def cmd_verify(cfg, run, args):
    if not args.against:
        raise ConfigError("verify needs --against <field.csv>")
    region = _verify_region(cfg)
    grid = GridSpec.over(region, cfg.raw["grid"]["nx"], cfg.raw["grid"]["ny"])
    try:
        triple = read_field_csv(args.against, grid)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.against!r}: {exc}") from exc
    f = _f_expr(cfg)
    r1 = residual_mixed_derivative(triple, f, region)
    at = (r1.points[:, 0], r1.points[:, 1])
    r2 = residual_mixed_derivative(triple, f, region, stencil=2, at=at)
    write_rows(run.path("residuals.csv"), ["x", "y", "residual"],
               [(x, y, r) for (x, y), r in zip(r1.points, r1.signed)])
    r1c = residual_mixed_derivative(triple, f, region, at=(r2.points[:, 0], r2.points[:, 1]))
    order = math.log2(r2.max / r1c.max) if r1c.max > 0 and r2.max > 0 else float("nan")
    payload = {
        "residual_h": r1.to_dict(),
        "residual_2h": r2.to_dict(),
        "residual_h_common": r1c.to_dict(),
        "stencil_order": order,
        "stencil_error": stencil_error(triple, f, region),
    }
    write_json(run.path("convergence_order.json"), payload)
    run.report.update({"case": getattr(getattr(region, "configuration", None), "case", Case.STABLE_CASE_I).value,
                       "residual": r1.to_dict(), "against": args.against, "stencil_order": order})


def _study_solver(cfg, name):
    s = cfg.solver
    if name == "stable":
        region = cfg.stable_region()
        data = cfg.data(region)
        e = _f_expr(cfg)
        if set(e.used) <= {"x", "y"}:
            return region, e, lambda n: solve_stable_case_I(
                data, region, GridSpec.over(region, n), f_xy=lambda x, y: e(x=x, y=y)).fields
        _require_linear(cfg)
        return region, e, lambda n: solve_stable_case_I(
            data, region, GridSpec.over(region, n), tol=s["tol"], max_iter=s["max_iter"]).fields
    region = cfg.region()
    data = cfg.data(region)
    if name == "elementary":
        e = _xy_only(cfg)
        fxy = lambda x, y: e(x=x, y=y)  # noqa: E731
        theta = theta_from_spec(cfg.theta_mode, data, region, f_xy=fxy)
        return region, e, lambda n: solve_elementary(e, data, theta, region, GridSpec.over(region, n)).fields
    if name == "linear":
        _require_linear(cfg)
        theta = theta_from_spec(cfg.theta_mode, data, region)
        return region, "u", lambda n: picard_linear(
            data, theta, region, GridSpec.over(region, n), tol=s["tol"], max_iter=s["max_iter"]).fields
    e = _f_expr(cfg)
    first = solve_nonlinear(e, data, region, (9, 9), tol=s["tol"], max_iter=1, shrink=s["shrink"], L=cfg.L)
    shrunk = first.region
    return shrunk, e, lambda n: solve_nonlinear(
        e, data, shrunk, (n, n), tol=s["tol"], max_iter=s["max_iter"], shrink=False, L=cfg.L).fields


def cmd_convergence_study(cfg, run, args):
    name = cfg.raw["study"]["solver"]
    grids = [int(n) for n in cfg.raw["study"]["grids"]]
    region, f, solve = _study_solver(cfg, name)
    triples = [solve(n) for n in grids]
    conv = convergence_from_fields([t.u for t in triples])
    reports, orders = residual_study(triples, f, region)
    payload = {
        "solver": name,
        "solution": conv.to_dict(),
        "residual_max": [r.max for r in reports],
        "residual_probes": reports[0].probes,
        "residual_order": orders,
    }
    write_json(run.path("convergence_order.json"), payload)
    write_rows(run.path("convergence.csv"), ["n", "delta_n"],
               [(n, d) for n, d in zip(grids[1:], conv.diffs)])
    run.report.update({"case": region.configuration.case.value if hasattr(region, "configuration")
                       else Case.STABLE_CASE_I.value, "study": payload})


HANDLERS = {
    "check-config": cmd_check_config,
    "solve-elementary": cmd_solve_elementary,
    "solve-linear": cmd_solve_linear,
    "solve-nonlinear": cmd_solve_nonlinear,
    "solve-stable": cmd_solve_stable,
    "demo-nonuniqueness": cmd_demo,
    "verify": cmd_verify,
    "convergence-study": cmd_convergence_study,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="charpic", description="Picard solvers for u_xy = f on a curvilinear triangle.")
    ap.add_argument("--version", action="version", version=f"charpic {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", "-c", help="JSON run configuration (defaults apply when omitted)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value by dotted path, e.g. solver.tol=1e-8")
        p.add_argument("--out", help="output directory (beats CHARPIC_OUT and output.dir)")
        if name == "verify":
            p.add_argument("--against", help="field CSV to check")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = args.out or os.environ.get("CHARPIC_OUT") or "charpic_out"
    cfg = None
    try:
        cfg = load_config(args.config, args.overrides)
        out = cfg.output_dir(args.out)
    except ConfigError as exc:
        run = Run(args.command, out)
        run.error(type(exc).__name__, str(exc))
        run.report["config"] = None
        run.finish()
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    run = Run(args.command, out)
    run.report["config"] = cfg.raw
    os.makedirs(out, exist_ok=True)
    status = EXIT_OK
    try:
        HANDLERS[args.command](cfg, run, args)
    except (NotConverged, MaxIterationsExceeded, ContractionUnachievable) as exc:
        kind = "MaxIterationsExceeded" if isinstance(exc, NotConverged) else type(exc).__name__
        run.error(kind, str(exc))
        print(f"not converged: {exc}", file=sys.stderr)
        status = EXIT_NOT_CONVERGED
    except (CharpicError, ValueError, ArithmeticError) as exc:
        run.error(type(exc).__name__, str(exc))
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_INVALID
    except Exception as exc:  # still leave a report behind
        run.error(type(exc).__name__, str(exc))
        run.report["exit_status"] = EXIT_INTERNAL
        run.finish()
        raise
    run.report["exit_status"] = status
    run.finish()
    return status


if __name__ == "__main__":
    sys.exit(main())
