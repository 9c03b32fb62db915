import json
import subprocess
import sys
from pathlib import Path

import pytest

from rfh.cli import COMMANDS, main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if code == 0 and out else None), err


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_all_commands_registered():
    assert set(COMMANDS) >= {"spectrum", "check-h", "select-s", "action", "grad-check", "flow",
                             "homotopy", "critical", "index", "complex", "homology",
                             "solve-dirac", "report"}


def test_spectrum(capsys):
    code, out, _ = run(capsys, "spectrum", "--config", CONFIGS / "circle.toml")
    assert code == 0 and out["schema_version"] == 1
    ks = [row["k"] for row in out["l_spectrum"]]
    assert 0 not in ks and min(ks) == -8 and max(ks) == 8


def test_check_h_and_select_s(capsys):
    code, out, _ = run(capsys, "check-h", "--config", CONFIGS / "circle.toml")
    assert code == 0 and all(c["passed"] for c in out["checks"].values())
    code, out, _ = run(capsys, "select-s", "--config", CONFIGS / "power33.toml")
    assert code == 0 and out["interval"] == [0.25, 0.75] and out["s"] == 0.5


def test_action_at_h0_point(capsys):
    code, out, _ = run(capsys, "action", "--config", CONFIGS / "circle.toml")
    assert code == 0
    assert out["grad_norm"] < 1e-12 and out["integral_H"] == pytest.approx(1.0)


def test_grad_check(capsys):
    code, out, _ = run(capsys, "grad-check", "--config", CONFIGS / "circle.toml")
    assert code == 0 and out["gradient_rel_error"] < 1e-6 and out["hessian_rel_error"] < 1e-6


def test_index_reports_both_conventions(capsys):
    code, out, _ = run(capsys, "index", "--config", CONFIGS / "circle.toml", "--k", "2")
    assert code == 0
    assert out["i_rel"] == 5 and out["stabilized"]
    assert out["analytic"]["closed-form"]["i_rel"] == 5
    code, out, _ = run(capsys, "index", "--config", CONFIGS / "circle.toml", "--k", "-1")
    assert out["i_rel"] == -3
    assert out["analytic"]["closed-form"]["i_rel"] == -4 and out["analytic"]["inertia"]["i_rel"] == -3


def test_homology_degree_minus_one(capsys):
    code, out, _ = run(capsys, "homology", "--config", CONFIGS / "circle.toml")
    assert code == 0
    row = next(r for r in out["homology"] if r["degree"] == -1)
    assert row == {"degree": -1, "dim": 1, "confidence": "exact"}


def test_complex_window_flag(capsys):
    code, out, _ = run(capsys, "complex", "--config", CONFIGS / "synthetic_m1.toml",
                       "--window", "-2", "2")
    assert code == 0
    assert sorted(g["nu"] for g in out["complex"]["generators"]) == [-2, -1, 1, 2]


def test_solve_dirac(capsys, golden):
    code, out, _ = run(capsys, "solve-dirac", "--config", CONFIGS / "power33.toml")
    assert code == 0
    sol = out["dirac_solution"]
    assert sol["residual"] < 1e-8


def test_flow_writes_csv(capsys, tmp_path):
    csv = tmp_path / "traj.csv"
    code, out, _ = run(capsys, "flow", "--config", CONFIGS / "flow.toml", "--csv", csv)
    assert code == 0 and out["energy"]["passed"]
    lines = csv.read_text().splitlines()
    assert lines[0].startswith("t,action")
    assert len(lines) > 2


def test_out_file(capsys, tmp_path):
    dest = tmp_path / "spec.json"
    assert main(["spectrum", "--config", str(CONFIGS / "circle.toml"), "--out", str(dest)]) == 0
    assert json.loads(dest.read_text())["command"] == "spectrum"


def test_report_is_byte_identical(tmp_path):
    outs = []
    for i in range(2):
        dest = tmp_path / f"r{i}.json"
        assert main(["report", "--config", str(CONFIGS / "circle.toml"), "--out",
                     str(dest)]) == 0
        outs.append(dest.read_bytes())
    assert outs[0] == outs[1]


def test_zero_k_rejected(capsys):
    code, _, err = run(capsys, "index", "--config", CONFIGS / "circle.toml", "--k", "0")
    assert code == 2 and "validation error" in err


def test_bad_s_reports_line(capsys, tmp_path):
    cfg = write(tmp_path, 's = 2.0\n[spectrum]\nmodel = "circle"\nnum_modes = 4\n')
    code, _, err = run(capsys, "spectrum", "--config", cfg)
    assert code == 2
    assert ":1:" in err and "s" in err


def test_unknown_key_rejected(capsys, tmp_path):
    cfg = write(tmp_path, 's = 0.4\n[spectrum]\nmodel = "circle"\nnum_modes = 4\nbogus = 1\n')
    code, _, err = run(capsys, "spectrum", "--config", cfg)
    assert code == 2 and "bogus" in err


def test_window_beyond_truncation_exits_2(capsys):
    code, _, err = run(capsys, "homology", "--config", CONFIGS / "circle.toml",
                       "--window", "-100", "0")
    assert code == 2 and "enlarge" in err


def test_nonconvergence_exits_3(capsys):
    code, _, err = run(capsys, "critical", "--config", CONFIGS / "flow.toml")
    assert code == 3
    assert "structurally singular" in err


def test_bad_truncation(capsys):
    code, _, _ = run(capsys, "index", "--config", CONFIGS / "circle.toml",
                     "--truncation", "4,99")
    assert code == 2


def test_console_script_entry():
    res = subprocess.run([sys.executable, "-m", "rfh.cli", "spectrum", "--config",
                          str(CONFIGS / "flow.toml")], capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["num_modes"] == 8
