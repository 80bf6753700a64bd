import math
import subprocess
import sys

import numpy as np
import pytest

from chemolab import io
from chemolab.cli import main

EQUILIBRIUM = """
[grid]
n_cells = 64
[model]
mu = 0.5
[initial]
kind = constant
c = 1.0
[scheme]
dt_init = 0.01
dt_max = 0.01
t_end = 0.5
[diagnostics]
every = 10
"""

SUBCRITICAL = """
[grid]
n_cells = 128
[initial]
kind = gaussian_bump
width = 0.3
mass = 18.84955592153876
[scheme]
dt_init = 0.001
dt_max = 0.05
adaptive = true
t_end = 5.0
[diagnostics]
every = 5
snapshot_times = 0.5, 2.0
checkpoint_every = 25
"""

SUPERCRITICAL = """
[grid]
n_cells = 1024
[initial]
kind = blowup
Lambda = 31.41592653589793
lam = 1000.0
[scheme]
dt_init = 0.001
dt_max = 0.05
adaptive = true
t_end = 200.0
[diagnostics]
every = 20
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run_cli(*argv):
    return main([str(a) for a in argv])


def test_equilibrium_run(tmp_path, capsys):
    cfg = write(tmp_path, "eq.ini", EQUILIBRIUM)
    out = tmp_path / "eq"
    assert run_cli("run", "--config", cfg, "--out", out) == 0
    meta, cols, rows = io.read_table(out / "series.csv")
    assert meta["schema"] == io.SERIES_SCHEMA and len(meta["config_hash"]) == 16
    assert len(rows) == 6
    for r in rows:
        assert r["u_inf"] == pytest.approx(1.0, abs=1e-14)
        assert r["mass"] == pytest.approx(math.pi, rel=1e-14)
        assert r["energy"] == pytest.approx(-math.pi / 2, rel=1e-13)
    for name in ("config.ini", "final.npz", "final_state.csv", "series.png", "final_state.png"):
        assert (out / name).exists()
    assert "status = finished" in capsys.readouterr().out


def test_subcritical_run_bounded_with_snapshots(tmp_path):
    cfg = write(tmp_path, "sub.ini", SUBCRITICAL)
    out = tmp_path / "sub"
    assert run_cli("run", "--config", cfg, "--out", out, "--no-plots") == 0
    _, _, rows = io.read_table(out / "series.csv")
    u_inf = np.array([r["u_inf"] for r in rows])
    # a mild initial rise is fine; the run must stay far from any blowup
    assert np.all(np.isfinite(u_inf)) and u_inf.max() <= 1.05 * u_inf[0]
    assert (out / "snapshot_t0.5.csv").exists() and (out / "snapshot_t2.csv").exists()
    assert sorted(p.name for p in out.glob("checkpoint_*.npz"))
    assert not (out / "series.png").exists()


def test_malformed_config_writes_nothing(tmp_path, capsys):
    cfg = write(tmp_path, "bad.ini", "[grid]\nn_cells = many\n")
    out = tmp_path / "bad"
    assert run_cli("run", "--config", cfg, "--out", out) == 2
    assert not out.exists()
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and "configuration error" in err[0]


def test_unresolvable_recipe_is_config_error(tmp_path):
    cfg = write(tmp_path, "r.ini", SUPERCRITICAL.replace("n_cells = 1024", "n_cells = 64"))
    assert run_cli("run", "--config", cfg, "--out", tmp_path / "r") == 2
    assert not (tmp_path / "r").exists()


def test_missing_config_file(tmp_path):
    assert run_cli("run", "--config", tmp_path / "none.ini", "--out", tmp_path / "o") == 2


def test_overflow_exit_code(tmp_path, capsys):
    text = SUBCRITICAL.replace("t_end = 5.0", "t_end = 5.0\noverflow_cap = 10.0")
    cfg = write(tmp_path, "o.ini", text)
    assert run_cli("run", "--config", cfg, "--out", tmp_path / "o", "--no-plots") == 3
    assert "overflow" in capsys.readouterr().err


def test_dt_collapse_exit_code(tmp_path, capsys):
    text = SUBCRITICAL.replace("t_end = 5.0", "t_end = 5.0\nmax_dv = 1e-14\ndt_min = 1e-4")
    cfg = write(tmp_path, "c.ini", text)
    assert run_cli("run", "--config", cfg, "--out", tmp_path / "c", "--no-plots") == 4
    assert "dt_min" in capsys.readouterr().err


def test_rerun_is_byte_identical(tmp_path):
    cfg = write(tmp_path, "sub.ini", SUBCRITICAL)
    run_cli("run", "--config", cfg, "--out", tmp_path / "a", "--no-plots")
    run_cli("run", "--config", cfg, "--out", tmp_path / "b", "--no-plots")
    assert (tmp_path / "a/series.csv").read_bytes() == (tmp_path / "b/series.csv").read_bytes()


def test_resume_from_checkpoint_is_exact(tmp_path):
    cfg = write(tmp_path, "sub.ini", SUBCRITICAL)
    run_cli("run", "--config", cfg, "--out", tmp_path / "a", "--no-plots")
    ck = sorted((tmp_path / "a").glob("checkpoint_*.npz"))[1]
    assert run_cli("run", "--config", cfg, "--out", tmp_path / "b", "--resume", ck, "--no-plots") == 0
    _, sa, _, _ = io.load_checkpoint(tmp_path / "a/final.npz")
    _, sb, _, _ = io.load_checkpoint(tmp_path / "b/final.npz")
    assert np.array_equal(sa.u, sb.u) and sa.step == sb.step and sa.t == sb.t
    # the resumed series continues the original one row for row
    _, _, ra = io.read_table(tmp_path / "a/series.csv")
    _, _, rb = io.read_table(tmp_path / "b/series.csv")
    tail = [r for r in ra if r["t"] >= rb[0]["t"]]
    for x, y in zip(tail[1:], rb[1:]):
        assert x == y or all(x[k] == y[k] or (math.isnan(x[k]) and math.isnan(y[k])) for k in x)


def test_resume_with_wrong_grid(tmp_path):
    cfg = write(tmp_path, "sub.ini", SUBCRITICAL)
    run_cli("run", "--config", cfg, "--out", tmp_path / "a", "--no-plots")
    other = write(tmp_path, "o.ini", SUBCRITICAL.replace("n_cells = 128", "n_cells = 64"))
    code = run_cli("run", "--config", other, "--out", tmp_path / "b", "--resume", tmp_path / "a/final.npz")
    assert code == 2


CHECKS = """
[mass_drift]
max = 1e-10
[pte1]
rel_tol = 1e-6
[mass_balance]
max_rel = 1e-10
[energy_variation]
max_rel = 1e-3
"""


def test_check_pass_and_fail(tmp_path, capsys):
    cfg = write(tmp_path, "sub.ini", SUBCRITICAL)
    run_cli("run", "--config", cfg, "--out", tmp_path / "a", "--no-plots")
    series = tmp_path / "a/series.csv"
    spec = write(tmp_path, "checks.ini", CHECKS)
    assert run_cli("check", series, "--spec", spec) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 4 and "FAIL" not in out
    strict = write(tmp_path, "strict.ini", "[mass_drift]\nmax = 0\n[trend]\ncolumns = u_inf\n")
    assert run_cli("check", series, "--spec", strict) == 5
    assert "FAIL" in capsys.readouterr().out


def test_check_schema_errors(tmp_path):
    bad = tmp_path / "s.csv"
    with io.CsvTable(bad, ["t", "mass"], io.SERIES_SCHEMA) as out:
        out.write_row({"t": 0.0, "mass": 1.0})
    spec = write(tmp_path, "c.ini", "[pte1]\n")
    assert run_cli("check", bad, "--spec", spec) == 6
    other = tmp_path / "b.csv"
    with io.CsvTable(other, ["Lambda"], io.BRANCH_SCHEMA) as out:
        out.write_row({"Lambda": 1.0})
    assert run_cli("check", other, "--spec", write(tmp_path, "d.ini", "[mass_drift]\n")) == 6
    assert run_cli("check", tmp_path / "missing.csv", "--spec", spec) == 6
    assert run_cli("check", bad, "--spec", write(tmp_path, "u.ini", "[nonsense]\n")) == 6


def test_trend_check_on_supercritical_run(tmp_path, capsys):
    cfg = write(tmp_path, "super.ini", SUPERCRITICAL)
    assert run_cli("run", "--config", cfg, "--out", tmp_path / "s", "--no-plots") == 0
    spec = write(tmp_path, "t.ini", "[trend]\ncolumns = interaction, u_inf\nexpect = growing\n")
    assert run_cli("check", tmp_path / "s/series.csv", "--spec", spec) == 0
    assert "PASS" in capsys.readouterr().out


def test_steady_subcommand(tmp_path):
    cfg = write(tmp_path, "st.ini", "[grid]\nn_cells = 64\n[experiment]\nkind = steady\nsteps = 4\n")
    assert run_cli("steady", "--config", cfg, "--out", tmp_path / "st") == 0
    meta, cols, rows = io.read_table(tmp_path / "st/branch.csv")
    assert meta["schema"] == io.BRANCH_SCHEMA
    assert cols[:5] == ["Lambda", "E", "residual", "converged", "v_max"]
    assert len(rows) == 5 and all(r["converged"] == 1 for r in rows)
    assert (tmp_path / "st/branch.png").exists()


def test_construct_subcommand(tmp_path, capsys):
    cfg = write(tmp_path, "c.ini", SUPERCRITICAL)
    assert run_cli("construct", "--config", cfg, "--out", tmp_path / "c") == 0
    _, _, rows = io.read_table(tmp_path / "c/construct.csv")
    r = rows[0]
    assert r["a_lower"] < r["a"] < r["a_upper"]
    assert r["mass"] == pytest.approx(10 * math.pi, rel=1e-12)
    assert r["energy"] < r["E_star_best_found"] and r["below_E_star_best_found"] == 1
    assert (tmp_path / "c/initial_state.csv").exists()


def _asymptotics_config(tmp_path, name="asym.ini"):
    return write(tmp_path, name, "[grid]\nn_cells = 8192\n[initial]\nkind = blowup\n"
                                 "[experiment]\nkind = asymptotics\nlambdas = 100, 1000, 10000\n")


def test_sweep_asymptotics_and_isolation(tmp_path, capsys):
    good = _asymptotics_config(tmp_path)
    write(tmp_path, "bad.ini", "[grid]\nn_cells = -1\n")
    eq = write(tmp_path, "eq.ini", EQUILIBRIUM)
    manifest = write(tmp_path, "m.txt", f"# comment\n{good}\nbad.ini\n\n{eq}\n")
    code = run_cli("sweep", manifest, "--out", tmp_path / "sw", "--jobs", 2)
    assert code == 1
    meta, cols, rows = io.read_table(tmp_path / "sw/summary.csv")
    assert meta["schema"] == io.SUMMARY_SCHEMA
    assert [r["exit_code"] for r in rows] == [0.0, 2.0, 0.0]
    assert rows[0]["kind"] == "asymptotics"
    assert rows[0]["energy_slope"] <= -15.0 and rows[0]["entropy_slope"] <= 66
    assert rows[0]["interaction_slope"] >= 142
    assert "configuration error" in rows[1]["message"]
    assert (tmp_path / "sw/entry_002/series.csv").exists()


def test_empty_sweep(tmp_path):
    manifest = write(tmp_path, "empty.txt", "# nothing here\n")
    assert run_cli("sweep", manifest, "--out", tmp_path / "e") == 0
    meta, cols, rows = io.read_table(tmp_path / "e/summary.csv")
    assert rows == [] and cols == ["entry", "config", "kind", "exit_code", "message"]


def test_sweep_missing_manifest(tmp_path):
    assert run_cli("sweep", tmp_path / "none.txt", "--out", tmp_path / "e") == 7


def test_jobs_must_be_positive(tmp_path):
    manifest = write(tmp_path, "m.txt", "")
    assert run_cli("sweep", manifest, "--out", tmp_path / "e", "--jobs", 0) == 2


def test_help_lists_exit_codes(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for code in range(8):
        assert f"  {code}  " in text


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "chemolab", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "sweep" in res.stdout
