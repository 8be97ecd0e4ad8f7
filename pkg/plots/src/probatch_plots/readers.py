"""Parsers for the bench CSV formats.

Readers validate the header and every row before a number reaches a
figure, and report failures as ``path:line: reason`` so one bad column
in a ten-thousand-row trace is findable.  Values pass through builtin
``float`` untouched; nothing here rounds, resamples, or interpolates.
The writers never quote or embed commas, so a plain split is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

TRACE_FIELDS = ("run_id", "iter", "wall_ns", "K", "lambda", "outcome",
                "batch_cost", "full_cost", "evals_cum")
PROFILE_FIELDS = ("tau", "rho")


class ParseError(Exception):
    """An input file does not follow the bench CSV schemas."""

    def __init__(self, path, line: int, reason: str):
        super().__init__(f"{path}:{line}: {reason}")
        self.path = Path(path)
        self.line = line


@dataclass
class TraceRun:
    """Plottable columns of one solver run, split out of a trace file."""

    run_id: str
    wall_ns: list[int]
    batch_costs: list[float]
    full_costs: list[float | None]
    evals_cum: list[int]

    def axis(self, name: str) -> list[int]:
        if name == "wall_ns":
            return self.wall_ns
        if name == "evals_cum":
            return self.evals_cum
        raise ValueError(f"unknown x axis {name!r}")


@dataclass
class ProfileCurve:
    """One performance-profile curve: rho over the tau grid."""

    label: str
    taus: list[float]
    rhos: list[float]


def _fields(path, line_no: int, line: str, count: int) -> list[str]:
    fields = line.split(",")
    if len(fields) != count:
        raise ParseError(path, line_no,
                         f"expected {count} fields, got {len(fields)}")
    return fields


def _float(path, line_no: int, text: str, name: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(path, line_no,
                         f"bad {name} value {text!r}") from None
    if not math.isfinite(value):
        raise ParseError(path, line_no, f"non-finite {name} value {text!r}")
    return value


def _int(path, line_no: int, text: str, name: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ParseError(path, line_no,
                         f"bad {name} value {text!r}") from None


def _data_lines(path) -> list[str]:
    with open(path, newline="") as fh:
        return fh.read().splitlines()


def read_trace(path) -> list[TraceRun]:
    """Parse one trace CSV into runs, grouped by run_id in file order.

    full_cost is empty on every row the solver did not audit; those
    entries come back as None so the caller can tell "not measured"
    from any real cost.
    """
    path = Path(path)
    lines = _data_lines(path)
    if not lines or tuple(lines[0].split(",")) != TRACE_FIELDS:
        raise ParseError(path, 1, "not a trace CSV (header mismatch)")
    runs: dict[str, TraceRun] = {}
    for line_no, line in enumerate(lines[1:], start=2):
        f = _fields(path, line_no, line, len(TRACE_FIELDS))
        if not f[0]:
            raise ParseError(path, line_no, "empty run_id")
        if not f[5]:
            raise ParseError(path, line_no, "empty outcome")
        _int(path, line_no, f[1], "iter")
        _int(path, line_no, f[3], "K")
        _float(path, line_no, f[4], "lambda")
        run = runs.get(f[0])
        if run is None:
            run = runs[f[0]] = TraceRun(f[0], [], [], [], [])
        run.wall_ns.append(_int(path, line_no, f[2], "wall_ns"))
        run.batch_costs.append(_float(path, line_no, f[6], "batch_cost"))
        run.full_costs.append(
            None if f[7] == "" else _float(path, line_no, f[7], "full_cost"))
        run.evals_cum.append(_int(path, line_no, f[8], "evals_cum"))
    if not runs:
        raise ParseError(path, 2, "expected at least one data row")
    return list(runs.values())


def read_profile(path) -> ProfileCurve:
    """Parse one profile CSV, re-checking its shape invariants.

    tau must increase strictly and rho must be a non-decreasing value
    in [0, 1]; a violation is reported at the offending line instead of
    being drawn.
    """
    path = Path(path)
    lines = _data_lines(path)
    if not lines or tuple(lines[0].split(",")) != PROFILE_FIELDS:
        raise ParseError(path, 1, "not a profile CSV (header mismatch)")
    taus: list[float] = []
    rhos: list[float] = []
    for line_no, line in enumerate(lines[1:], start=2):
        f = _fields(path, line_no, line, len(PROFILE_FIELDS))
        tau = _float(path, line_no, f[0], "tau")
        rho = _float(path, line_no, f[1], "rho")
        if taus and tau <= taus[-1]:
            raise ParseError(path, line_no,
                             f"tau not increasing: {tau!r} after {taus[-1]!r}")
        if not 0.0 <= rho <= 1.0:
            raise ParseError(path, line_no, f"rho outside [0, 1]: {rho!r}")
        if rhos and rho < rhos[-1]:
            raise ParseError(path, line_no,
                             f"rho decreasing: {rho!r} after {rhos[-1]!r}")
        taus.append(tau)
        rhos.append(rho)
    if not taus:
        raise ParseError(path, 2, "expected at least one data row")
    return ProfileCurve(default_label(path), taus, rhos)


def default_label(path) -> str:
    """Series label from a file name: profile_lm.csv becomes "lm"."""
    return Path(path).stem.removeprefix("profile_")
