"""Companion plotting tool for the bench CSV outputs.

Reads the iteration traces and performance-profile tables written by
the benchmark harness and renders the comparison figures: cost against
cumulative evaluations or wall time, and rho(tau) step profiles.  Drawn
values are exactly the parsed CSV values; axes may be log scaled but
data is never resampled.
"""

from .figures import (PlotSpec, X_AXES, convergence_figure, plot_convergence,
                      plot_profile, profile_figure, trace_series)
from .readers import (PROFILE_FIELDS, TRACE_FIELDS, ParseError, ProfileCurve,
                      TraceRun, default_label, read_profile, read_trace)

__version__ = "0.1.0"

__all__ = [
    "PROFILE_FIELDS",
    "ParseError",
    "PlotSpec",
    "ProfileCurve",
    "TRACE_FIELDS",
    "TraceRun",
    "X_AXES",
    "convergence_figure",
    "default_label",
    "plot_convergence",
    "plot_profile",
    "profile_figure",
    "read_profile",
    "read_trace",
    "trace_series",
]
