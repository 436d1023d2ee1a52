import csv
import io
import os
import subprocess
import sys
from importlib import resources

import numpy as np
import pytest

from biphoton import cli

DATA = resources.files("biphoton") / "data"
BUNDLED = ["paper_fig2.exp", "paper_fig3.exp", "paper_fig4.exp", "paper_fig5.exp"]


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def fields(line):
    return dict(kv.split("=", 1) for kv in line.split() if "=" in kv)


def report(capsys, path, observable="A"):
    code, out, _ = run(capsys, "report", path)
    assert code == 0
    for line in out.splitlines():
        if line.startswith(f"observable={observable} "):
            return line
    raise AssertionError(out)


def variant(tmp_path, src, old, new, name="v.exp"):
    text = (DATA / src).read_text()
    assert old in text
    p = tmp_path / name
    p.write_text(text.replace(old, new))
    return p


def rows(text):
    return list(csv.reader(io.StringIO(text)))


@pytest.mark.parametrize("name", BUNDLED)
def test_scan_is_byte_deterministic(capsys, tmp_path, name):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(capsys, "scan", DATA / name, "--output", a)[0] == 0
    assert run(capsys, "scan", DATA / name, "-o", b)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    raw = a.read_bytes()
    assert b"\r" not in raw
    table = rows(raw.decode())
    assert table[0] == ["phi_S", "phi_I", "rate_A", "rate_D", "rate_coinc"]
    assert all(len(r) == 5 for r in table)


def test_fig2_csv_has_full_fringes(capsys):
    code, out, _ = run(capsys, "scan", DATA / "paper_fig2.exp")
    assert code == 0
    data = np.array(rows(out)[1:], dtype=float)
    assert len(data) == 257
    r = data[:, 2]
    assert (r.max() - r.min()) / (r.max() + r.min()) == pytest.approx(1.0, abs=1e-12)


def test_fig4_csv_background_is_third_crystal(capsys, tmp_path):
    full = np.array(rows(run(capsys, "scan", DATA / "paper_fig4.exp")[1])[1:], dtype=float)
    only3 = variant(tmp_path, "paper_fig4.exp", "BBO1: {magnitude: 0.1, phase: 0.0}\n"
                    "  BBO2: {magnitude: 0.1, phase: 0.0}",
                    "BBO1: {magnitude: 0.0, phase: 0.0}\n  BBO2: {magnitude: 0.0, phase: 0.0}")
    bg = np.array(rows(run(capsys, "scan", only3)[1])[1:], dtype=float)
    two = variant(tmp_path, "paper_fig4.exp", "BBO3: {magnitude: 0.1, phase: 0.0}",
                  "BBO3: {magnitude: 0.0, phase: 0.0}", "two.exp")
    fringes = np.array(rows(run(capsys, "scan", two)[1])[1:], dtype=float)
    assert np.ptp(bg[:, 2]) <= 1e-15
    assert np.allclose(full[:, 2] - fringes[:, 2], bg[:, 2], rtol=0, atol=1e-14)


def test_fig5_csv_near_zero_minima(capsys):
    data = np.array(rows(run(capsys, "scan", DATA / "paper_fig5.exp")[1])[1:], dtype=float)
    assert len(data) == 10_000
    c = data[:, 4]
    assert c.min() <= 1e-6 * c.max()


def test_output_directory_from_environment(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path / "out"))
    code, out, _ = run(capsys, "scan", DATA / "paper_fig3.exp")
    assert code == 0 and out == ""
    assert (tmp_path / "out" / "paper_fig3.csv").exists()


def test_gnuplot_script(capsys, tmp_path):
    csv_path = tmp_path / "s.csv"
    gp = tmp_path / "s.gp"
    assert run(capsys, "scan", DATA / "paper_fig2.exp", "-o", csv_path, "--gnuplot", gp)[0] == 0
    assert str(csv_path) in gp.read_text()


def test_report_two_equal_crystals(capsys):
    line = report(capsys, DATA / "paper_fig2.exp")
    assert "V=1.000 K=0.000 V2K2=1.000" in line
    assert fields(line)["leading_order"] == "2"


def test_report_three_equal_crystals(capsys):
    f = fields(report(capsys, DATA / "paper_fig4.exp"))
    assert f["V"] == "0.667"
    assert f["background_fraction"] == "0.333"


def test_report_no_partner_crystal(capsys, tmp_path):
    p = variant(tmp_path, "paper_fig2.exp", "BBO2: {magnitude: 0.1, phase: 0.0}",
                "BBO2: {magnitude: 0.0, phase: 0.0}")
    f = fields(report(capsys, p))
    assert (f["K"], f["V"]) == ("1.000", "0.000")


def test_report_fig5_coincidence(capsys):
    f = fields(report(capsys, DATA / "paper_fig5.exp", "A*D"))
    assert float(f["r_min"]) <= 1e-6 * float(f["r_max"])


def test_oracle_check_passes(capsys):
    code, out, _ = run(capsys, "oracle-check", DATA / "paper_fig4.exp", "--trials", 100)
    assert code == 0
    assert out.strip().endswith("PASS")
    assert float(fields(out)["max_rel_deviation"]) < cli.ORACLE_TOL


def test_oracle_check_high_coupling_reports_leakage(capsys, tmp_path):
    low = fields(run(capsys, "oracle-check", DATA / "paper_fig4.exp", "--trials", 10)[1])
    p = variant(tmp_path, "paper_fig4.exp", "BBO1: {magnitude: 0.1", "BBO1: {magnitude: 0.5")
    code, out, _ = run(capsys, "oracle-check", p, "--trials", 10)
    high = fields(out)
    print(f"leakage at 0.1: {low['second_order_leakage']}, at 0.5: {high['second_order_leakage']}")
    assert float(high["second_order_leakage"]) > float(low["second_order_leakage"])
    assert "code=low-gain" in out


def test_oracle_check_zero_trials_is_usage_error(capsys):
    code, _, err = run_exit(capsys, "oracle-check", DATA / "paper_fig2.exp", "--trials", 0)
    assert code == 1
    assert "trials" in err


def run_exit(capsys, *argv):
    with pytest.raises(SystemExit) as info:
        cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return info.value.code, out, err


def test_validate(capsys, tmp_path):
    code, out, _ = run(capsys, "validate", DATA / "paper_fig2.exp")
    assert (code, out.strip()) == (0, "ok")
    p = variant(tmp_path, "paper_fig2.exp", "in_a: s2, in_b: s1", "in_a: s3, in_b: s1")
    code, out, _ = run(capsys, "validate", p)
    assert code == 1 and "aliased-ports" in out


def test_missing_file_exit_code(capsys, tmp_path):
    for cmd in ("scan", "report", "oracle-check", "validate"):
        code, _, err = run(capsys, cmd, tmp_path / "missing.exp")
        assert code == 2, cmd
        assert "missing.exp" in err


def test_unwritable_output_exit_code(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, _ = run(capsys, "scan", DATA / "paper_fig2.exp", "-o", blocker / "sub" / "o.csv")
    assert code == 2


def test_invalid_file_exit_code(capsys, tmp_path):
    p = variant(tmp_path, "paper_fig2.exp", "schema: biphoton-experiment/1", "schema: other")
    code, _, err = run(capsys, "scan", p)
    assert code == 1
    assert "v.exp:" in err and "schema" in err


def test_physics_error_exit_code(capsys, tmp_path):
    p = variant(tmp_path, "paper_fig2.exp", "in_a: s2, in_b: s1", "in_a: s3, in_b: s1")
    assert run(capsys, "scan", p)[0] == 1


def test_bad_flag_exit_code(capsys):
    assert run_exit(capsys, "scan", DATA / "paper_fig2.exp", "--truncation-order", 0)[0] == 1
    assert run_exit(capsys, "frobnicate")[0] == 1


def test_flags_change_engine(capsys, tmp_path):
    base = rows(run(capsys, "scan", DATA / "paper_fig2.exp")[1])
    norm = rows(run(capsys, "scan", DATA / "paper_fig2.exp", "--paper-normalization")[1])
    ratio = float(norm[1][2]) / float(base[1][2])
    assert ratio == pytest.approx(2.0)
    second = rows(run(capsys, "scan", DATA / "paper_fig2.exp", "--truncation-order", 2)[1])
    assert np.allclose(np.array(second[1:], float), np.array(base[1:], float), rtol=1e-12)


def test_console_script(tmp_path):
    env = dict(os.environ)
    env.pop(cli.OUTPUT_DIR_ENV, None)
    res = subprocess.run([sys.executable, "-m", "biphoton.cli", "validate",
                          str(DATA / "paper_fig4.exp")], capture_output=True, text=True, env=env)
    assert res.returncode == 0
    assert res.stdout.strip() == "ok"
