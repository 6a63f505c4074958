"""Tests for the command-line interface and its CSV/report plumbing."""
import math
import os

import numpy as np
import pytest

import rkfem.symbolic as sym
from rkfem import cli, tableaux
from rkfem.cli import (format_value, main, make_scheme, render_csv,
                       resolve_schemes, symplecticity_residual, write_csv)
from rkfem.stepper import NonIntegerStepCount


# ---------------------------------------------------------------------------
# CSV cells and rows


def test_format_value_goldens():
    assert format_value(True) == "True"
    assert format_value(np.bool_(False)) == "False"
    assert format_value(3) == "3"
    assert format_value(np.int64(-7)) == "-7"
    assert format_value(1.0) == "1"
    assert format_value(0.1) == "0.10000000000000001"
    assert format_value(np.float64(1.0 / 3.0)) == "0.33333333333333331"
    assert format_value("QinZhang") == "QinZhang"


def test_format_value_roundtrips_floats():
    rng = np.random.default_rng(20260814)
    for v in rng.standard_normal(50) * 10.0 ** rng.integers(-12, 13, 50):
        assert float(format_value(float(v))) == v  # 17 digits are lossless


def test_render_csv_accepts_tuples_and_dicts():
    header = ("a", "b")
    text = render_csv(header, [(1, 0.5), {"b": 2.5, "a": 4}])
    assert text == "a,b\n1,0.5\n4,2.5\n"
    assert "\r" not in text


def test_write_csv_stdout(capsys):
    write_csv("-", ("x",), [(1,)])
    write_csv(None, ("x",), [(2,)])
    out = capsys.readouterr().out
    assert out == "x\n1\nx\n2\n"


def test_write_csv_is_deterministic(tmp_path):
    path = tmp_path / "out.csv"
    rows = [(8, 0.125, 1.0 / 3.0), (16, 0.0625, 2.0 / 3.0)]
    write_csv(str(path), ("N", "dt", "v"), rows)
    first = path.read_bytes()
    write_csv(str(path), ("N", "dt", "v"), rows)
    assert path.read_bytes() == first
    assert b"\r" not in first
    assert first.decode("utf-8").splitlines()[0] == "N,dt,v"


def test_write_csv_leaves_no_debris_on_failure(tmp_path, monkeypatch):
    path = tmp_path / "out.csv"

    def boom(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(OSError):
        write_csv(str(path), ("x",), [(1,)])
    assert not path.exists()
    assert list(tmp_path.iterdir()) == []  # temp file was cleaned up


# ---------------------------------------------------------------------------
# scheme resolution


def test_make_scheme_aliases():
    assert make_scheme("Radau-IIA", 2).name == "RadauIIA(2)"
    assert make_scheme("gauss", 1).name == "GaussLegendre(1)"
    assert make_scheme("lobatto-iiic", 3).name == "LobattoIIIC(3)"
    with pytest.raises(ValueError):
        make_scheme("chebyshev", 2)


def test_resolve_schemes_combinations():
    named = resolve_schemes(named="rk4,qin-zhang")
    assert [t.name for t in named] == ["RK4", "QinZhang"]
    fam = resolve_schemes(family="gauss", stages="1,2")
    assert [t.num_stages for t in fam] == [1, 2]
    both = resolve_schemes(family="radau", stages="1,2", named="rk4")
    assert [t.name for t in both] == ["RK4", "RadauIIA(1)", "RadauIIA(2)"]
    with pytest.raises(ValueError):
        resolve_schemes()
    with pytest.raises(ValueError):
        resolve_schemes(family="gauss")  # stages missing


# ---------------------------------------------------------------------------
# tableau command


def rows_by_key(rows):
    return {(kind, i, j): value for kind, i, j, value in rows}


def test_tableau_radau1_is_backward_euler():
    header, rows = cli.cmd_tableau(make_scheme("radau", 1))
    assert header == ("kind", "i", "j", "value")
    table = rows_by_key(rows)
    assert table[("name", "", "")] == "RadauIIA(1)"
    assert table[("stages", "", "")] == 1
    assert table[("order", "", "")] == 1
    assert table[("classification", "", "")] == "DiagonallyImplicit"
    assert table[("A", 0, 0)] == pytest.approx(1.0, abs=1e-14)
    assert table[("b", "", 0)] == pytest.approx(1.0, abs=1e-14)
    assert table[("c", 0, "")] == pytest.approx(1.0, abs=1e-14)
    assert abs(float(table[("R_infinity", "", "")])) < 1e-12  # L-stable


def test_tableau_gauss2_reports_symplecticity():
    tab = make_scheme("gauss", 2)
    table = rows_by_key(cli.cmd_tableau(tab)[1])
    assert table[("symplecticity", "", "")] <= 1e-12
    assert abs(float(table[("R_infinity", "", "")]) - 1.0) <= 1e-12
    conds = [v for (kind, _, _), v in table.items()
             if kind == "order_condition"]
    assert conds and all(abs(v) <= 1e-10 for v in conds)


def test_tableau_r_infinity_undefined_for_singular_a():
    for tab in (tableaux.make_collocation(tableaux.LOBATTO_IIIA, 3),
                tableaux.make_named("forward-euler")):
        table = rows_by_key(cli.cmd_tableau(tab)[1])
        assert table[("R_infinity", "", "")] == "undefined"


def test_symplecticity_residual_values():
    assert symplecticity_residual(make_scheme("gauss", 3)) <= 1e-12
    assert symplecticity_residual(tableaux.make_named("qin-zhang")) <= 1e-15
    assert symplecticity_residual(make_scheme("radau", 2)) > 1e-3


# ---------------------------------------------------------------------------
# heat command


def test_heat_default_manufactured_solution():
    form, bcs, exact = cli.heat_problem()
    got = sym.evaluate(exact, {sym.t: 0.25, sym.x: 0.3})
    assert abs(got - math.exp(-0.25) * math.sin(0.3 * math.pi)) < 1e-15
    assert len(bcs) == 2


def test_heat_errors_halve_like_h_squared():
    tab = make_scheme("gauss", 2)  # high-order time: spatial error dominates
    header, rows = cli.cmd_heat((8, 16), 1, tab, (1.0,), 0.5)
    assert header == ("N", "dt", "l2", "h1", "bc_drift")
    l2 = [r[2] for r in rows]
    h1 = [r[3] for r in rows]
    assert 3.2 < l2[0] / l2[1] < 4.8     # P1: L2 contracts like 2^(k+1)
    assert 1.6 < h1[0] / h1[1] < 2.4     # ... and H1 like 2^k
    assert all(r[4] < 1e-12 for r in rows)  # boundary rows pinned exactly


def test_heat_zero_data_gives_zero_errors():
    tab = make_scheme("radau", 1)
    _, rows = cli.cmd_heat((8,), 1, tab, (1.0,), 0.5, exact=sym.Const(0.0))
    assert rows[0][2] == 0.0 and rows[0][3] == 0.0 and rows[0][4] == 0.0


# ---------------------------------------------------------------------------
# wave and precond commands


def test_wave_energy_gauss_conserves_radau_dissipates():
    gl1 = make_scheme("gauss", 1)
    assert abs(cli.run_wave(10, 2, gl1, 0.5, 2.0) - 1.0) < 1e-10
    r1 = make_scheme("radau", 1)
    assert cli.run_wave(10, 2, r1, 0.5, 2.0) < 0.01


def test_precond_exact_block_solves_take_one_iteration():
    avg, _ = cli.run_precond(64, 1, make_scheme("radau", 1), "blockdiag",
                             4.0, 4)
    assert avg == 1.0
    avg, _ = cli.run_precond(64, 1, tableaux.make_named("qin-zhang"),
                             "blocktri", 4.0, 4)
    assert avg == 1.0


# ---------------------------------------------------------------------------
# BBM helpers


def test_bbm_initial_profile_peak():
    # amplitude 3 c^2 / (1 - c^2) = 1 for c = 1/2, peaked at x = 40
    expr = cli.bbm_initial_expr()
    assert abs(sym.evaluate(expr, {sym.x: 40.0}) - 1.0) < 1e-15
    assert sym.evaluate(expr, {sym.x: 0.0}) < 1e-4


def test_bbm_exact_profile_wraps_periodically():
    profile = cli.bbm_exact_profile(45.0)  # peak advected to x = 100 == 0
    assert abs(profile(np.array([0.0]))[0] - 1.0) < 1e-12
    t13 = cli.bbm_exact_profile(18.0)  # peak at 40 + 24 = 64
    assert abs(t13(np.array([64.0]))[0] - 1.0) < 1e-12


# ---------------------------------------------------------------------------
# entry point


def test_main_writes_tableau_csv(tmp_path):
    out = tmp_path / "tab.csv"
    assert main(["tableau", "--named", "rk4", "--out", str(out)]) == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "kind,i,j,value"
    assert "name,,,RK4" in lines


def test_main_bad_family_exits_2(tmp_path, capsys):
    out = tmp_path / "never.csv"
    code = main(["tableau", "--family", "chebyshev", "--stages", "2",
                 "--out", str(out)])
    assert code == 2
    assert not out.exists()
    assert capsys.readouterr().err.startswith("rkfem:")


def test_main_solver_failure_exits_1(tmp_path, capsys):
    out = tmp_path / "never.csv"
    code = main(["wave", "--named", "rk4", "--dt", "0.3", "--T", "1.0",
                 "--out", str(out)])
    assert code == 1
    assert not out.exists()  # nothing partial on disk
    assert "solver failure" in capsys.readouterr().err


def test_main_named_overrides_default_family(tmp_path):
    out = tmp_path / "pc.csv"
    code = main(["precond", "--named", "qin-zhang", "--pc", "blocktri",
                 "--N", "32", "--steps", "2", "--out", str(out)])
    assert code == 0
    header, row = out.read_text(encoding="utf-8").splitlines()
    assert header == "N,stages,avg_gmres_iterations,wall_time"
    cells = row.split(",")
    assert cells[:3] == ["32", "2", "1"]


def test_main_plot_renders_figure(tmp_path):
    out = tmp_path / "tab.csv"
    fig = tmp_path / "stability.png"
    code = main(["tableau", "--named", "qin-zhang", "--out", str(out),
                 "--plot", str(fig)])
    assert code == 0
    assert fig.exists() and fig.stat().st_size > 1000
