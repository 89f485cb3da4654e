import json

import pytest

from charpic.cli import main
from charpic.config import DEFAULTS, load_config, resolve
from charpic.errors import ConfigError

DEMO = {"geometry": {"type": "affine", "a_slope": 2, "b_slope": 2, "x_A": 1},
        "theta": {"mode": "positive_demo"}, "grid": {"nx": 33, "ny": 33}}
EXP = {"geometry": {"type": "affine", "a_slope": 2, "b_slope": 2, "x_A": 1},
       "data": {"phi": "exp(3*y)", "psi": "exp(3*x)"}, "grid": {"nx": 33, "ny": 33}}


def write(tmp_path, doc, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def report(out):
    return json.loads((out / "report.json").read_text())


def test_defaults_resolve():
    cfg = resolve({})
    assert cfg.raw["grid"] == DEFAULTS["grid"]
    assert cfg.rule().n_outer == 64


@pytest.mark.parametrize("doc", [
    {"bogus": 1},
    {"solver": {"tolerance": 1e-8}},
    {"grid": {"nx": 4}},
    {"theta": {"mode": "whatever"}},
    {"data": {"phi": "x"}},
    {"f": "sin(z)"},
    {"quad": {"n_outer": 63}},
    {"study": {"grids": [65, 128]}},
    {"geometry": {"type": "affine", "a_slope": 2, "b_slope": 2, "x_A": 1, "extra": 3}},
])
def test_invalid_configs(doc):
    with pytest.raises(ConfigError):
        resolve(doc)


def test_overrides():
    cfg = resolve({}, ["solver.tol=1e-8", "data.phi=exp(y)", "solver.shrink=false", "geometry.x_A=0.5"])
    assert cfg.solver["tol"] == 1e-8 and cfg.raw["data"]["phi"] == "exp(y)"
    assert cfg.solver["shrink"] is False and cfg.geometry["x_A"] == 0.5
    with pytest.raises(ConfigError):
        resolve({}, ["solver.nope=1"])
    with pytest.raises(ConfigError):
        resolve({}, ["solver.tol"])


def test_load_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(str(bad))
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.json"))


def test_check_config(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["check-config", "--config", write(tmp_path, DEMO), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "case=UnstableCaseII" in text
    assert "ad^2 = 4.5" in text
    assert "theta positivity OK" in text
    rep = report(out)
    assert rep["ad2"] == pytest.approx(4.5)
    assert rep["config"]["geometry"]["a_slope"] == 2


def test_check_config_sincos_L(tmp_path):
    out = tmp_path / "o"
    doc = dict(DEMO, f="(sin(u)+cos(p))/4")
    assert main(["check-config", "--config", write(tmp_path, doc), "--out", str(out)]) == 0
    lip = report(out)["lipschitz"]
    assert lip["L_estimate"] == pytest.approx(0.25, rel=0.05)
    assert lip["sampled_ratio_max"] <= lip["L_estimate"] * 1.01


def test_forced_nonconvergence(tmp_path):
    out = tmp_path / "o"
    code = main(["solve-linear", "--config", write(tmp_path, EXP), "--set", "theta.mode=explicit:exp(1+y)",
                 "--set", "solver.max_iter=1", "--out", str(out)])
    assert code == 3
    rep = report(out)
    assert rep["errors"][0]["type"] == "MaxIterationsExceeded"
    assert (out / "field.csv").exists() and (out / "convergence.csv").exists()


def test_validation_exit_code(tmp_path):
    out = tmp_path / "o"
    assert main(["solve-linear", "--config", write(tmp_path, {"grid": {"nx": 3}}), "--out", str(out)]) == 2
    rep = report(out)
    assert rep["errors"] and rep["errors"][0]["type"] == "ConfigError"


def test_wrong_case_exit_code(tmp_path):
    out = tmp_path / "o"
    assert main(["solve-stable", "--config", write(tmp_path, EXP), "--out", str(out)]) == 2
    assert report(out)["errors"][0]["type"] == "NotCaseI"


def test_demo_outputs(tmp_path):
    out = tmp_path / "o"
    assert main(["demo-nonuniqueness", "--config", write(tmp_path, DEMO), "--out", str(out)]) == 0
    for name in ("field_zero.csv", "field_theta.csv", "positivity.json", "report.json", "convergence.csv"):
        assert (out / name).exists()
    pos = json.loads((out / "positivity.json").read_text())
    assert pos["all_interior_positive"]
    assert all(v["min"] > 0 for v in pos["per_level"].values())
    assert report(out)["outputs"] == sorted(report(out)["outputs"])


def test_determinism(tmp_path):
    cfg = write(tmp_path, EXP)
    for d in ("a", "b"):
        assert main(["solve-nonlinear", "--config", cfg, "--out", str(tmp_path / d)]) == 0
    for name in ("field.csv", "convergence.csv", "theta.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("CHARPIC_OUT", str(tmp_path / "env"))
    assert main(["solve-linear", "--config", write(tmp_path, EXP)]) == 0
    assert (tmp_path / "env" / "report.json").exists()


def test_report_sorted(tmp_path):
    out = tmp_path / "o"
    main(["solve-linear", "--config", write(tmp_path, EXP), "--out", str(out)])
    text = (out / "report.json").read_text()
    keys = list(json.loads(text).keys())
    assert keys == sorted(keys)
    assert "timings" in keys and "boundary_defects" in keys and "residual" in keys


def test_verify_command(tmp_path):
    cfg = write(tmp_path, EXP)
    main(["solve-linear", "--config", cfg, "--out", str(tmp_path / "s")])
    out = tmp_path / "v"
    assert main(["verify", "--config", cfg, "--against", str(tmp_path / "s" / "field.csv"), "--out", str(out)]) == 0
    assert (out / "residuals.csv").read_text().startswith("x,y,residual")
    order = json.loads((out / "convergence_order.json").read_text())
    assert order["residual_h"]["probes"] > 0


def test_verify_grid_mismatch(tmp_path):
    cfg = write(tmp_path, EXP)
    main(["solve-linear", "--config", cfg, "--out", str(tmp_path / "s")])
    out = tmp_path / "v"
    code = main(["verify", "--config", cfg, "--set", "grid.nx=65", "--against", str(tmp_path / "s" / "field.csv"),
                 "--out", str(out)])
    assert code == 2 and report(out)["errors"][0]["type"] == "GridMismatch"


def test_convergence_study(tmp_path):
    out = tmp_path / "o"
    code = main(["convergence-study", "--config", write(tmp_path, EXP), "--set", "study.grids=[17,33,65]",
                 "--out", str(out)])
    assert code == 0
    order = json.loads((out / "convergence_order.json").read_text())
    assert 1.8 <= order["solution"]["order"] <= 2.2
