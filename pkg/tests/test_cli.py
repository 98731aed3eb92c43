import subprocess
import sys

from evload.cli import main

CFG = """
fleet.n_users=10
fleet.power_kw=3
arrival.family=gaussian
arrival.mu=19
arrival.variance=10
charging.family=uniform
charging.c=1
charging.d=11
grid.analytic_resolution_hours=0.25
"""


def cfg_file(tmp_path, text=CFG):
    p = tmp_path / "c.cfg"
    p.write_text(text)
    return str(p)


def test_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", cfg_file(tmp_path), "--out-dir", str(out), "--per-user"]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"no_ev.csv", "uncoordinated.csv", "dr.csv", "dr_v2g.csv", "summary.txt",
            "dr_schedules.csv"} <= names
    assert "status=ok" in capsys.readouterr().out


def test_run_cases_flag(tmp_path):
    out = tmp_path / "out"
    assert main(["run", cfg_file(tmp_path), "--out-dir", str(out), "--cases", "no_ev"]) == 0
    assert {p.name for p in out.iterdir()} == {"no_ev.csv", "summary.txt"}


def test_expected_command(tmp_path):
    out = tmp_path / "exp"
    rc = main(["expected", cfg_file(tmp_path), "--out-dir", str(out),
               "--samples", "2000", "--emit-extended"])
    assert rc == 0
    names = {p.name for p in out.iterdir()}
    assert {"expected.csv", "expected_extended.csv", "empirical.csv", "expected_rician.csv"} <= names
    head = (out / "empirical.csv").read_text().splitlines()[0]
    assert head == "time_hours,value_kw,stderr_kw"


def test_validate_prints_resolved(tmp_path, capsys):
    assert main(["validate", cfg_file(tmp_path), "--seed", "42"]) == 0
    out = capsys.readouterr().out
    assert "fleet.seed=42" in out and "arrival.sigma=3.16228" in out


def test_exit_codes(tmp_path, capsys):
    assert main(["validate", cfg_file(tmp_path, CFG + "oops.key=1\n")]) == 2
    assert "oops.key" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "missing.cfg")]) == 2
    infeasible = CFG + "departure.family=gaussian\ndeparture.mu=50\ndeparture.sigma=0.1\n"
    out = tmp_path / "bad"
    assert main(["run", cfg_file(tmp_path, infeasible), "--out-dir", str(out), "--cases", "dr"]) == 4
    assert (out / "summary.txt").read_text().startswith("status=failed")


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "evload.cli", "validate", cfg_file(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "fleet.n_users=10" in r.stdout
