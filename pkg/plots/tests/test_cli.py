"""Command surface: exit codes, stdout, and error reporting."""

import subprocess
import sys
from pathlib import Path

import pytest

from probatch_plots.cli import main

SAMPLES = Path(__file__).parents[1] / "sample_data"


def test_convergence_command(tmp_path, capsys):
    out = tmp_path / "fig.png"
    code = main(["convergence", "--x", "evals_cum", "--out", str(out),
                 str(SAMPLES / "trace_lm_0.csv"),
                 str(SAMPLES / "trace_problm-relaxed_0.csv")])
    assert code == 0
    assert capsys.readouterr().out.strip() == str(out)
    assert out.stat().st_size > 0


def test_profile_command(tmp_path):
    out = tmp_path / "prof.png"
    code = main(["profile", "--logx", "--out", str(out),
                 str(SAMPLES / "profile_lm.csv"),
                 str(SAMPLES / "profile_problm-relaxed.csv")])
    assert code == 0
    assert out.stat().st_size > 0


def test_missing_input_exits_4(tmp_path, capsys):
    code = main(["convergence", "--out", str(tmp_path / "f.png"),
                 str(tmp_path / "absent.csv")])
    assert code == 4
    assert "error:" in capsys.readouterr().err


def test_malformed_input_reports_the_line(tmp_path, capsys):
    bad = tmp_path / "p.csv"
    bad.write_text("tau,rho\n1.0,0.0\n2.0,oops\n")
    code = main(["profile", "--out", str(tmp_path / "f.png"), str(bad)])
    assert code == 4
    err = capsys.readouterr().err
    assert f"{bad}:3:" in err and "rho" in err


def test_label_mismatch_exits_2(tmp_path, capsys):
    code = main(["profile", "--label", "a", "--label", "b",
                 "--out", str(tmp_path / "f.png"),
                 str(SAMPLES / "profile_lm.csv")])
    assert code == 2
    assert "labels" in capsys.readouterr().err


def test_unknown_axis_is_a_usage_error(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["convergence", "--x", "iter", "--out", str(tmp_path / "f.png"),
              str(SAMPLES / "trace_lm_0.csv")])
    assert info.value.code == 2


def test_module_entry_point(tmp_path):
    out = tmp_path / "fig.png"
    proc = subprocess.run(
        [sys.executable, "-m", "probatch_plots", "convergence",
         "--out", str(out), str(SAMPLES / "trace_lm_0.csv")],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert out.exists()
