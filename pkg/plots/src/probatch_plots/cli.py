"""Figure rendering front end.

Two subcommands mirror the bench outputs: ``convergence`` draws cost
curves from trace CSVs and ``profile`` draws performance profiles.
Prints the written image path on success.  Exit codes: 0 success,
2 invalid arguments, 4 unreadable or malformed files.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import X_AXES, PlotSpec, plot_convergence, plot_profile
from .readers import ParseError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 4


def _convergence(args) -> int:
    spec = PlotSpec(inputs=tuple(args.inputs), out=args.out, x_axis=args.x,
                    log_x=args.logx, log_y=args.logy,
                    labels=tuple(args.label or ()))
    print(plot_convergence(spec))
    return EXIT_OK


def _profile(args) -> int:
    spec = PlotSpec(inputs=tuple(args.inputs), out=args.out,
                    log_x=args.logx, labels=tuple(args.label or ()))
    print(plot_profile(spec))
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot", description="render figures from bench CSV outputs")
    subs = parser.add_subparsers(dest="command", required=True)

    conv = subs.add_parser("convergence", help="cost curves from trace CSVs")
    conv.add_argument("inputs", nargs="+", type=Path, metavar="trace.csv")
    conv.add_argument("--x", choices=X_AXES, default="evals_cum",
                      help="x axis column")
    conv.add_argument("--logx", action="store_true")
    conv.add_argument("--logy", action="store_true")
    conv.add_argument("--label", action="append",
                      help="series label, repeatable, drawing order")
    conv.add_argument("--out", type=Path, required=True)

    prof = subs.add_parser("profile", help="profiles from profile CSVs")
    prof.add_argument("inputs", nargs="+", type=Path, metavar="profile.csv")
    prof.add_argument("--logx", action="store_true")
    prof.add_argument("--label", action="append",
                      help="series label, repeatable, drawing order")
    prof.add_argument("--out", type=Path, required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"convergence": _convergence, "profile": _profile}
    try:
        return handlers[args.command](args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
