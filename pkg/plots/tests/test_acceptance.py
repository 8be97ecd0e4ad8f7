"""Release gate: the plotting component's acceptance criterion.

Shipped sample CSVs regenerate both figure kinds, every plotted rho is
bit for bit the CSV text after one float round-trip, and the solver
package neither imports nor needs anything from this component.
"""

import struct
import subprocess
import sys
from pathlib import Path

from probatch_plots import PlotSpec, plot_convergence, plot_profile, profile_figure

SAMPLES = Path(__file__).parents[1] / "sample_data"
REPO = Path(__file__).parents[2]


def test_figures_regenerate_from_shipped_samples(tmp_path):
    conv = PlotSpec(
        inputs=(SAMPLES / "trace_lm_0.csv",
                SAMPLES / "trace_problm-relaxed_0.csv",
                SAMPLES / "trace_problm_audited.csv"),
        out=tmp_path / "convergence.png", log_y=True)
    prof = PlotSpec(
        inputs=(SAMPLES / "profile_lm.csv",
                SAMPLES / "profile_problm-relaxed.csv"),
        out=tmp_path / "profiles.png", log_x=True)
    for _ in range(2):
        assert plot_convergence(conv).stat().st_size > 0
        assert plot_profile(prof).stat().st_size > 0


def test_plotted_rho_is_bit_for_bit_the_csv_value():
    for path in sorted(SAMPLES.glob("profile_*.csv")):
        rows = path.read_text().splitlines()[1:]
        taus = [float(r.split(",")[0]) for r in rows]
        rhos = [float(r.split(",")[1]) for r in rows]
        fig = profile_figure(PlotSpec(inputs=(path,), out=Path("unused.png")))
        (line,) = fig.axes[0].lines
        assert len(line.get_ydata()) == len(rhos) > 0
        for drawn, parsed in zip(line.get_ydata(), rhos):
            assert struct.pack("<d", drawn) == struct.pack("<d", parsed)
        for drawn, parsed in zip(line.get_xdata(), taus):
            assert struct.pack("<d", drawn) == struct.pack("<d", parsed)


def test_solver_package_stands_alone():
    # Monorepo layout: the solver lives one level up from plots/.
    sources = list((REPO / "src" / "probatch").rglob("*.py"))
    sources += (REPO / "tests").glob("*.py")
    assert len(sources) > 10
    for path in sources:
        text = path.read_text()
        assert "probatch_plots" not in text, path
        assert "matplotlib" not in text, path
    pyproject = (REPO / "pyproject.toml").read_text()
    assert "matplotlib" not in pyproject

    # Import the full solver surface with this component masked out.
    code = ("import sys\n"
            "sys.modules['probatch_plots'] = None\n"
            "sys.modules['matplotlib'] = None\n"
            "import probatch, probatch.cli, probatch.problems\n"
            "print('ok')\n")
    proc = subprocess.run([sys.executable, "-c", code],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip() == "ok"
