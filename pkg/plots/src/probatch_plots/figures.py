"""Convergence-curve and performance-profile figures.

Everything here draws exactly the numbers the readers hand over.  The
only transformations are the optional log axis scales, so any value
picked off a curve equals the CSV text after one float round-trip.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

# Figures only ever go to files; never probe for a display.
matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .readers import TraceRun, read_profile, read_trace

X_AXES = ("evals_cum", "wall_ns")

_X_LABELS = {"evals_cum": "cumulative block evaluations",
             "wall_ns": "wall time [ns]"}


@dataclass(frozen=True)
class PlotSpec:
    """What to draw: input CSVs, axis choices, and the output path.

    ``labels`` override the derived series names in drawing order; when
    given there must be exactly one per curve.
    """

    inputs: tuple[Path, ...]
    out: Path
    x_axis: str = "evals_cum"
    log_x: bool = False
    log_y: bool = False
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.inputs:
            raise ValueError("need at least one input CSV")
        if self.x_axis not in X_AXES:
            raise ValueError(f"unknown x axis {self.x_axis!r}")


def trace_series(run: TraceRun, x_axis: str) -> tuple[list[int], list[float]]:
    """Pick one run's curve: audited full costs when any row has them.

    The solver fills full_cost only on the rows it audited; those rows
    form the curve when present, otherwise every row contributes its
    batch cost.  x values are the CSV column entries for the kept rows.
    """
    kept = [i for i, v in enumerate(run.full_costs) if v is not None]
    xs = run.axis(x_axis)
    if kept:
        return [xs[i] for i in kept], [run.full_costs[i] for i in kept]
    return list(xs), list(run.batch_costs)


def _series_names(derived: list[str], labels: tuple[str, ...]) -> list[str]:
    if not labels:
        return derived
    if len(labels) != len(derived):
        raise ValueError(
            f"got {len(labels)} labels for {len(derived)} series")
    return list(labels)


def convergence_figure(spec: PlotSpec):
    """Build (without saving) the cost-curve figure, one line per run."""
    curves = []
    for path in spec.inputs:
        for run in read_trace(path):
            x, y = trace_series(run, spec.x_axis)
            curves.append((run.run_id, x, y))
    names = _series_names([run_id for run_id, _, _ in curves], spec.labels)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for name, (_, x, y) in zip(names, curves):
        ax.plot(x, y, label=name)
    if spec.log_x:
        ax.set_xscale("log")
    if spec.log_y:
        ax.set_yscale("log")
    ax.set_xlabel(_X_LABELS[spec.x_axis])
    ax.set_ylabel("cost")
    ax.legend()
    fig.tight_layout()
    return fig


def profile_figure(spec: PlotSpec):
    """Build the rho(tau) step figure, one step curve per profile CSV."""
    if spec.log_y:
        raise ValueError("profile y axis is a fixed [0, 1] fraction")
    curves = [read_profile(path) for path in spec.inputs]
    names = _series_names([c.label for c in curves], spec.labels)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for name, curve in zip(names, curves):
        ax.step(curve.taus, curve.rhos, where="post", label=name)
    if spec.log_x:
        ax.set_xscale("log")
    ax.set_ylim(0.0, 1.0)
    ax.set_xlabel("cost ratio to best")
    ax.set_ylabel("fraction of runs")
    ax.legend()
    fig.tight_layout()
    return fig


def _save(fig, out) -> Path:
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        fig.savefig(out)
    finally:
        plt.close(fig)
    return out


def plot_convergence(spec: PlotSpec) -> Path:
    """Render the convergence figure and write it to ``spec.out``."""
    return _save(convergence_figure(spec), spec.out)


def plot_profile(spec: PlotSpec) -> Path:
    """Render the performance-profile figure and write it to ``spec.out``."""
    return _save(profile_figure(spec), spec.out)
