import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from palmkit.cli import (ConfigError, RunConfig, build_model, emit_config, main, parse_config, read_pattern,
                         write_pattern)
from palmkit.core import PointPattern, Window
from palmkit.models import LgcpModel, PoissonModel
from palmkit.plotting import render_curve_svg
from palmkit.summaries import SummaryCurve

UNIT = Window.unit()


def test_minimal_config_defaults():
    cfg = parse_config("[model]\nkind = poisson\nrho = 50\n")
    assert cfg.command == "simulate" and cfg.window == UNIT and cfg.reps == 1 and cfg.seed is None
    assert cfg.model == {"kind": "poisson", "rho": "50.0", "slope": "0.0,0.0"}
    cfg = parse_config("[model]\nkind=lgcp\n")
    assert cfg.model["cov"] == "exponential" and float(cfg.model["phi"]) == 0.2
    assert isinstance(build_model(cfg.model, UNIT), LgcpModel)


@pytest.mark.parametrize("text,fragment", [
    ("[model]\nkind = lgcp\nsigma2 = -1\n", "line 3: sigma2"),
    ("[model]\nkind = lgcp\nbogus = 1\n", "line 3: bogus"),
    ("[model]\nkind = strauss\ntheta2 = 1\n", "R: required"),
    ("[model]\nkind = cox\n", "kind"),
    ("[run]\nreps = 0\n", "line 2: reps"),
    ("[run]\nwindow = 0,0,0,1\n", "line 2: window"),
    ("[run]\nfoo = 1\n", "line 2: foo"),
    ("[extra]\n", "line 1: unknown section"),
    ("[model]\nkind = poisson\nrho = 1\nrho = 2\n", "line 4: duplicate"),
    ("kind = poisson\n", "line 1"),
])
def test_config_errors(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(text)


models = st.one_of(
    st.fixed_dictionaries({"kind": st.just("poisson"), "rho": st.floats(0, 1e4)}),
    st.fixed_dictionaries({"kind": st.just("lgcp"), "mean": st.floats(-10, 10), "sigma2": st.floats(1e-6, 10),
                           "phi": st.floats(1e-3, 1), "cov": st.sampled_from(["exponential", "gaussian"])}),
    st.fixed_dictionaries({"kind": st.just("strauss"), "theta1": st.floats(-10, 10), "theta2": st.floats(0, 10),
                           "R": st.floats(1e-3, 0.2)}),
    st.fixed_dictionaries({"kind": st.just("sncp"), "kappa": st.floats(1e-2, 100), "gamma": st.floats(1e-2, 100),
                           "scale": st.floats(1e-3, 0.1), "kernel": st.sampled_from(["thomas", "matern"])}),
)


@settings(max_examples=100)
@given(models, st.sampled_from(["simulate", "summarize", "fit", "verify", "palm"]), st.integers(0, 2**63),
       st.integers(1, 1000), st.floats(-5, 5), st.floats(0.1, 5), st.booleans())
def test_config_round_trip(model, command, seed, reps, x0, side, with_palm):
    body = "\n".join(f"{k} = {v}" for k, v in model.items())
    if with_palm:
        body += "\npalm_at = 0.5,0.25;0.125,0.75"
    text = (f"[run]\ncommand = {command}\nseed = {seed}\nreps = {reps}\nwindow = {x0},{x0},{x0 + side},{x0 + side}\n"
            f"out = result.csv\n\n[model]\n{body}\n")
    cfg = parse_config(text)
    assert parse_config(emit_config(cfg)) == cfg


def test_write_read_identity_on_random_patterns(tmp_path):
    g = np.random.default_rng(0)
    path = tmp_path / "p.csv"
    W = Window((-2.5, 1.0), (3.0, 7.25))
    for k in range(1000):
        n = int(g.integers(0, 40))
        pts = W.uniform(g, n) if k % 2 else np.column_stack([g.uniform(-2.5, 3.0, n), g.uniform(1.0, 7.25, n)]) * 1.0
        x = PointPattern(pts, W)
        write_pattern(x, path)
        y = read_pattern(path, W)
        assert np.array_equal(x.points, y.points)


def test_read_pattern_cases(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text("x,y\n")
    assert len(read_pattern(p, UNIT)) == 0
    p.write_text("x,y\n0.1,0.2\n0.1,0.2\n")
    with pytest.raises(ConfigError, match="line 2: duplicate"):
        read_pattern(p, UNIT)
    p.write_text("x,y\n0.1,0.2\n1.5,0.2\n")
    with pytest.raises(ConfigError, match="line 3: point"):
        read_pattern(p, UNIT)
    p.write_text("x,y\n0.1,0.2\n0.3,abc\n")
    with pytest.raises(ConfigError, match="line 3: non-numeric"):
        read_pattern(p, UNIT)
    p.write_text("x,y\n0.1\n")
    with pytest.raises(ConfigError, match="line 2: expected 2"):
        read_pattern(p, UNIT)
    p.write_text("a,b\n")
    with pytest.raises(ConfigError, match="header"):
        read_pattern(p, UNIT)


def _ids(path):
    root = ET.parse(path).getroot()
    return [e.get("id") for e in root.iter() if e.get("id") in ("estimate", "theoretical", "se-band")]


def test_svg_constant_curve(tmp_path):
    r = np.linspace(0, 0.2, 11)
    render_curve_svg(SummaryCurve(r, np.full(11, 2.0)), tmp_path / "c.svg")
    assert _ids(tmp_path / "c.svg") == ["estimate"]


def test_svg_overlay_and_band(tmp_path):
    r = np.linspace(0, 0.2, 11)
    render_curve_svg(SummaryCurve(r, math.pi * r ** 2, theoretical=math.pi * r ** 2, name="K"), tmp_path / "k.svg")
    assert sorted(_ids(tmp_path / "k.svg")) == ["estimate", "theoretical"]
    render_curve_svg(SummaryCurve(r, r, se=np.full(11, 0.01), theoretical=r), tmp_path / "b.svg")
    assert sorted(_ids(tmp_path / "b.svg")) == ["estimate", "se-band", "theoretical"]


def test_cli_exit_codes(tmp_path):
    poisson = tmp_path / "poisson.cfg"
    poisson.write_text("[model]\nkind = poisson\nrho = 20\n")
    dpp = tmp_path / "dpp.cfg"
    dpp.write_text("[model]\nkind = dpp\nrho = 50\nalpha = 0.05\n")
    bad = tmp_path / "bad.cfg"
    bad.write_text("[model]\nkind = lgcp\nsigma2 = -1\n")
    assert main(["simulate", "--model", str(poisson), "--seed", "1", "--out", str(tmp_path / "s")]) == 0
    assert main(["simulate", "--model", str(poisson), "--out", str(tmp_path / "s")]) == 1
    assert main(["simulate", "--model", str(bad), "--seed", "1", "--out", str(tmp_path / "s")]) == 1
    assert main(["simulate", "--model", str(dpp), "--seed", "1", "--out", str(tmp_path / "s")]) == 2
    assert main(["verify", "--suite", "dpp", "--seed", "1", "--reps", "5", "--out", str(tmp_path / "r.csv")]) == 0
    assert main(["verify", "--suite", "dpp", "--seed", "1", "--reps", "5", "--rhs-scale", "1.1",
                 "--out", str(tmp_path / "r.csv")]) == 3
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "name,lhs,rhs,se,z,pass,reps,seed"


def test_cli_palm_round_trip(tmp_path):
    base = tmp_path / "lgcp.cfg"
    base.write_text("[model]\nkind = lgcp\nmean = 3\n")
    one = tmp_path / "one.cfg"
    two = tmp_path / "two.cfg"
    assert main(["palm", "--model", str(base), "--at", "0.5,0.5", "--out", str(one)]) == 0
    assert main(["palm", "--model", str(one), "--at", "0.2,0.3", "--out", str(two)]) == 0
    direct = tmp_path / "direct.cfg"
    assert main(["palm", "--model", str(base), "--at", "0.5,0.5,0.2,0.3", "--out", str(direct)]) == 0
    assert two.read_text() == direct.read_text()
    cfg = parse_config(two.read_text())
    assert parse_config(emit_config(cfg)) == cfg
    assert main(["simulate", "--model", str(two), "--seed", "2", "--resolution", "16",
                 "--out", str(tmp_path / "sim")]) == 0
    sncp = tmp_path / "sncp.cfg"
    sncp.write_text("[model]\nkind = sncp\nkappa = 25\ngamma = 4\nscale = 0.03\n")
    assert main(["palm", "--model", str(sncp), "--at", "0.5,0.5,0.2,0.3", "--out", str(tmp_path / "x.cfg")]) == 2


def test_cli_summarize_and_fit(tmp_path):
    cfg = tmp_path / "thomas.cfg"
    cfg.write_text("[model]\nkind = sncp\nkappa = 25\ngamma = 4\nscale = 0.03\n")
    assert main(["simulate", "--model", str(cfg), "--seed", "4", "--reps", "2", "--out", str(tmp_path / "s")]) == 0
    files = sorted(str(p) for p in (tmp_path / "s").glob("*.csv"))
    assert len(files) == 2
    for stat in ("K", "Kinhom", "G"):
        out = tmp_path / f"{stat}.csv"
        assert main(["summarize", "--in", *files, "--stat", stat, "--rmax", "0.2", "--bins", "11",
                     "--out", str(out), "--svg", str(tmp_path / f"{stat}.svg")]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "r,estimate,se,theoretical" and len(lines) == 12
    assert main(["summarize", "--in", files[0], "--rmax", "0.6", "--out", str(tmp_path / "x.csv")]) == 1
    fit = tmp_path / "fit.csv"
    assert main(["fit", "--in", files[0], "--R", "0.1", "--init", "20,0.05", "--seed", "1", "--out", str(fit)]) == 0
    rows = dict(line.split(",", 1) for line in fit.read_text().splitlines()[1:])
    assert {"kappa", "sigma", "converged", "boundary_solution"} <= set(rows)
    assert float(rows["kappa"]) > 0
