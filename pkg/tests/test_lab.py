import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from weightlab.convex import ball_field, segment_field
from weightlab.fieldio import write_field
from weightlab.grid import Cube, DomainError, DyadicGrid, Field
from weightlab.lab.chains import (
    ChainReport, verify_convex_sparse_w2_chain, verify_extrapolation_chain, verify_sparse_a2_chain,
)
from weightlab.lab.cli import main
from weightlab.lab.config import ConfigError, ExperimentConfig, make_weight, parse_weight_spec
from weightlab.lab.sweep import fit_slope, sweep_exponents, sweep_sharp_constants
from weightlab.operators.sparse import family, sparse_generate

# ---------------------------------------------------------------- chain reports


def test_chain_report_passes_iff_all_rows():
    rep = ChainReport("demo")
    rep.add("a", 1.0, 2.0)
    rep.add("b", 3.0, 3.0, "=")
    assert rep.passed
    rep.add("c", 2.0, 1.0)
    assert not rep.passed
    assert rep.row("c").to_dict()["satisfied"] is False
    assert [r["line"] for r in rep.to_dict()["rows"]] == ["a", "b", "c"]


def test_sparse_chain_trivial():
    g = DyadicGrid(1, 4)
    one = Field(g, np.ones(16))
    rep = verify_sparse_a2_chain(one, one, sparse_generate(g, "single"))
    assert rep.passed
    assert rep.measured["ratio"] == pytest.approx(1.0)
    assert rep.row("headline").rhs == pytest.approx(8.0)


def test_sparse_chain_power_weight(rng):
    g = DyadicGrid(1, 8)
    w = make_weight("power(0.9)", g)
    S = sparse_generate(g, "nested-halves")
    for _ in range(10):
        rep = verify_sparse_a2_chain(w, Field(g, rng.lognormal(0, 1.5, 256)), S)
        assert rep.passed and rep.measured["ratio_over_a2"] <= 8
    spike = np.zeros(256)
    spike[0] = 1.0
    assert verify_sparse_a2_chain(w, Field(g, spike), S).passed


def test_sparse_chain_with_vanishing_image():
    g = DyadicGrid(1, 3)
    S = family(g, [Cube(1, (0,))])
    f = np.zeros(8)
    f[6] = 1.0
    rep = verify_sparse_a2_chain(Field(g, np.ones(8)), Field(g, f), S)
    assert rep.passed and rep.row("headline").lhs == 0


def test_sparse_chain_errors():
    g = DyadicGrid(1, 3)
    one = Field(g, np.ones(8))
    S = sparse_generate(g, "single")
    with pytest.raises(DomainError):
        verify_sparse_a2_chain(one, Field(g, np.zeros(8)), S)
    with pytest.raises(DomainError):
        verify_sparse_a2_chain(one, Field(g, -np.ones(8)), S)
    members = list(g.all_cubes())
    with pytest.raises(DomainError):
        verify_sparse_a2_chain(one, one, family(g, members))


def test_extrapolation_chain_examples(rng):
    g = DyadicGrid(1, 6)
    one = Field(g, np.ones(64))
    rep = verify_extrapolation_chain(one, one, sparse_generate(g, "nested-halves"), 4.0)
    assert rep.passed
    assert rep.row("E7 I2 <= 4||f||").lhs <= 4 + 1e-12
    w = make_weight("power(0.5)", g)
    spike = np.zeros(64)
    spike[5] = 2.0
    for f in (rng.lognormal(size=64), spike):
        assert verify_extrapolation_chain(w, Field(g, f), sparse_generate(g, "random", seed=3), 3.0).passed
    with pytest.raises(DomainError):
        verify_extrapolation_chain(one, one, sparse_generate(g, "single"), 2.0)
    with pytest.raises(DomainError):
        verify_extrapolation_chain(one, Field(g, np.zeros(64)), sparse_generate(g, "single"), 3.0)


def test_convex_chain_identity_weight(rng):
    g = DyadicGrid(2, 2)
    I = Field(g, np.broadcast_to(np.eye(2), (16, 2, 2)), "matrix")
    F = segment_field(Field(g, rng.standard_normal((16, 2)), "vector"))
    rep = verify_convex_sparse_w2_chain(I, F, sparse_generate(g, "nested-halves"), estimate_trials=None)
    assert rep.passed
    assert rep.measured["W_a2"] == pytest.approx(1.0)


def test_convex_chain_zero_field():
    g = DyadicGrid(2, 2)
    W = make_weight("rotated-diagonal(0,0.5,0.5)", g, 2)
    F = ball_field(Field(g, np.zeros((16, 2, 2)), "matrix"))
    rep = verify_convex_sparse_w2_chain(W, F, sparse_generate(g, "random"), estimate_trials=None)
    assert rep.passed
    for row in rep.rows[1:]:
        assert row.lhs == 0


def test_convex_chain_rejects_d3(rng):
    g = DyadicGrid(1, 2)
    W = Field(g, np.broadcast_to(np.eye(3), (4, 3, 3)), "matrix")
    with pytest.raises(DomainError):
        verify_convex_sparse_w2_chain(W, ball_field(W), sparse_generate(g, "single"))


# ---------------------------------------------------------------- sweep


def test_fit_slope():
    x = np.exp(np.linspace(0, 3, 10))
    s, e = fit_slope(x, 5 * x ** 1.5)
    assert s == pytest.approx(1.5) and e == pytest.approx(0, abs=1e-10)
    assert fit_slope([1.0], [1.0]) == (None, None)
    assert fit_slope([2.0, 2.0, 2.0, 2.0], [1.0, 2.0, 3.0, 4.0]) == (None, None)
    s, e = fit_slope([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 4.0])
    assert s == pytest.approx(1.0) and e is None


def test_sweep_small():
    assert sweep_exponents(1, 2.0)[0] == 0 and max(sweep_exponents(1, 2.0)) == pytest.approx(0.9)
    res = sweep_sharp_constants(depth=6, p=2.0, trials=2, exponents=[0.0, 0.3, 0.6, 0.9])
    assert res.passed
    first = [r for r in res.rows if r["a"] == 0.0]
    assert all(r["characteristic"] == pytest.approx(1.0) for r in first)
    assert all(r["running_slope"] is None for r in first)
    lines = res.to_csv().split("\r\n")
    assert lines[0] == "a,characteristic,operator,ratio,running_slope,slope_stderr,flag"


# ---------------------------------------------------------------- config


def test_config_round_trip():
    cfg = ExperimentConfig(experiment="sweep", depth=9, p=3.0, weight="power(0.4)", trials=7, seed=11)
    assert ExperimentConfig.from_text(cfg.to_text()) == cfg


@given(st.sampled_from(["duality", "john", "sweep"]), st.integers(0, 14), st.sampled_from([1, 2]),
       st.integers(1, 4), st.floats(1, 8), st.integers(1, 500), st.integers(0, 2 ** 31))
def test_config_round_trip_property(exp, depth, n, d, p, trials, seed):
    cfg = ExperimentConfig(experiment=exp, depth=depth, n=n, d=d, p=p, trials=trials, seed=seed)
    assert ExperimentConfig.from_text(cfg.to_text()) == cfg


@pytest.mark.parametrize("text, field", [
    ("experiment=nope", "experiment"),
    ("depth=99", "depth"),
    ("depth=abc", "depth"),
    ("p=0.5", "p"),
    ("trials=0", "trials"),
    ("weight=cubic(2)", "weight"),
    ("colour=red", "colour"),
    ("just words", "line 1"),
])
def test_config_errors_name_the_field(text, field):
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.from_text(text)
    assert err.value.field == field


def test_weight_generators():
    g = DyadicGrid(1, 4)
    assert parse_weight_spec("power(0.5)") == ("power", [0.5])
    assert np.allclose(make_weight("constant", g).values, 1)
    w = make_weight("power(1)", g)
    assert np.allclose(w.values, g.cell_centers()[:, 0] + 1 / 16)
    W = make_weight("rotated-diagonal(3,0.5,0.5)", DyadicGrid(2, 3), 2)
    assert W.kind == "matrix" and np.allclose(W.values, np.swapaxes(W.values, 1, 2))
    D = make_weight("diagonal(0.5,-0.5)", g, 2)
    assert np.allclose(D.values[:, 0, 1], 0)
    assert np.array_equal(make_weight("random(4,1.0)", g).values, make_weight("random(4,1.0)", g).values)


# ---------------------------------------------------------------- CLI


def test_cli_missing_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as err:
        main(["characteristics", "--p", "2"])
    assert err.value.code == 2
    with pytest.raises(SystemExit) as err:
        main(["run"])
    assert err.value.code == 2


def test_cli_characteristics(tmp_path, capsys):
    path = tmp_path / "w.field"
    write_field(Field(DyadicGrid(1, 1), np.array([2.0, 1.0])), path)
    assert main(["characteristics", "--in", str(path), "--p", "2", "--variant", "roudenko"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["value"] == pytest.approx(9 / 8)
    assert set(rec) >= {"variant", "p", "value", "argmax_cube", "clamped"}
    Wpath = tmp_path / "W.field"
    write_field(Field(DyadicGrid(1, 1), np.array([np.diag([2.0, 1.0]), np.eye(2)]), "matrix"), Wpath)
    assert main(["characteristics", "--in", str(Wpath), "--variant", "tv"]) == 0
    assert json.loads(capsys.readouterr().out)["value"] == pytest.approx((9 / 8) ** 0.5)


def test_cli_missing_file_exit_code(tmp_path, capsys):
    assert main(["maximal", "--in", str(tmp_path / "absent.field")]) == 2


def test_cli_field_commands(tmp_path, capsys):
    path = tmp_path / "f.field"
    write_field(Field(DyadicGrid(1, 3), np.arange(8.0)), path)
    for argv in (["maximal", "--in", str(path)], ["sparse", "--in", str(path), "--strategy", "nested-halves"],
                 ["hilbert", "--in", str(path)], ["hilbert", "--in", str(path), "--eps", "0.1"]):
        out = tmp_path / "out.field"
        assert main(argv + ["--out", str(out)]) == 0
        assert out.read_text().strip()
    assert main(["opnorm", "--operator", "maximal", "--depth", "5", "--trials", "2"]) == 0
    rec = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert rec["operator"] == "maximal" and 1 <= rec["estimate"] <= 2


def test_cli_run_duality_and_config(tmp_path, capsys):
    out = tmp_path / "a"
    assert main(["run", "--experiment", "duality", "--depth", "6", "--p", "3", "--trials", "5",
                 "--out", str(out)]) == 0
    res = json.loads((out / "duality.json").read_text())
    assert res["passed"] is True
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("experiment=duality\ndepth=6\np=3\ntrials=5\nout=%s\n" % (tmp_path / "b"))
    assert main(["run", "--config", str(cfg)]) == 0
    assert (tmp_path / "b" / "duality.json").read_bytes() == (out / "duality.json").read_bytes()
