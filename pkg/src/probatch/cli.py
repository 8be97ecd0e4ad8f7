"""Command-line benchmark harness.

Subcommands: ``generate`` writes a synthetic instance to a directory,
``solve`` runs one solver on an instance and writes the iteration trace,
``bench`` repeats solves over seeded random starts for several methods,
and ``profile`` turns a bench summary into performance-profile curves.

Option precedence is defaults, then a ``--config`` file of flat
"key = value" lines, then explicit command-line flags.  With a fixed
seed every output is byte identical across reruns; pass ``--no-timing``
to zero the wall-clock column when traces are compared as golden files.

Exit codes: 0 success, 2 invalid arguments, 3 numerical or evaluation
failure, 4 unreadable or malformed files.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .core import (NumericalFailure, SolveResult, SolverConfig, TraceRecord,
                   classical_lm_run)
from .model import (EvaluationError, InvalidStartError,
                    UnderdeterminedPointError)
from .progressive import problm_relaxed_run, problm_run
from .robust import KERNEL_KINDS, RobustKernel, gnc_run, robustify
from .problems import (SampsonModel, WeakPerspectiveModel,
                       generate_bundle_instance, generate_essential_instance,
                       generate_homography_instance, random_essential_state)
from .problems.bundle import BundleCameras, perturb_bundle_cameras
from .problems.homography import (PhotometricModel, identity_homography,
                                  random_homography_params)
from .problems.geometry import so3_exp, so3_log
from .problems import io as pio

TRACE_HEADER = "run_id,iter,wall_ns,K,lambda,outcome,batch_cost,full_cost,evals_cum"
METHODS = ("lm", "problm", "problm-relaxed")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _fmt(value) -> str:
    return repr(float(value))


def write_trace_csv(path, records: list[TraceRecord],
                    no_timing: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(TRACE_HEADER + "\n")
        for rec in records:
            wall = 0 if no_timing else rec.wall_ns
            full = "" if rec.full_cost is None else _fmt(rec.full_cost)
            fh.write(f"{rec.run_id},{rec.iteration},{wall},{rec.batch_size},"
                     f"{_fmt(rec.lam)},{rec.outcome},{_fmt(rec.batch_cost)},"
                     f"{full},{rec.evals_cum}\n")


def read_trace_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRACE_HEADER.split(","):
            raise ValueError(f"{path}: unexpected trace header")
        return list(reader)


def compute_performance_profile(costs: np.ndarray, tau_grid: np.ndarray,
                                f_star: float | None = None) -> np.ndarray:
    """Fraction of runs with final cost within a factor tau of the best.

    f_star defaults to the best cost in ``costs``; pass the best over all
    compared methods to share one reference.
    """
    costs = np.asarray(costs, dtype=float)
    if costs.size == 0:
        raise ValueError("no costs to profile")
    if f_star is None:
        f_star = float(costs.min())
    if f_star < 0.0:
        raise ValueError("profiles need non-negative costs")
    return np.array([(costs <= tau * f_star).mean() for tau in tau_grid])


# -- configuration -----------------------------------------------------

_OPTION_TYPES = {
    "method": str, "seed": int, "delta": float, "alpha": float, "eta": float,
    "k0_frac": float, "kernel": str, "tau": float, "gnc_levels": int,
    "budget_ms": float, "max_iter": int, "audit": bool, "no_timing": bool,
}

_OPTION_DEFAULTS = {
    "method": "problm", "seed": 0, "delta": 0.1, "alpha": 0.9, "eta": 0.5,
    "k0_frac": 0.1, "kernel": "none", "tau": 0.01, "gnc_levels": 1,
    "budget_ms": None, "max_iter": 1000, "audit": False, "no_timing": False,
}


def _parse_config_file(path) -> dict:
    try:
        raw = pio.read_manifest(path)
    except OSError as exc:
        raise CliError(f"cannot read config file: {exc}", EXIT_IO) from exc
    except ValueError as exc:
        raise CliError(str(exc), EXIT_IO) from exc
    options = {}
    for key, value in raw.items():
        if key not in _OPTION_TYPES:
            raise CliError(f"unknown config key {key!r}", EXIT_USAGE)
        kind = _OPTION_TYPES[key]
        try:
            if kind is bool:
                options[key] = value.lower() in ("1", "true", "yes", "on")
            else:
                options[key] = kind(value)
        except ValueError as exc:
            raise CliError(f"bad value for config key {key!r}: {value!r}",
                           EXIT_USAGE) from exc
    return options


def _merge_options(args) -> dict:
    options = dict(_OPTION_DEFAULTS)
    if getattr(args, "config", None):
        options.update(_parse_config_file(args.config))
    for key in _OPTION_TYPES:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            options[key] = value
    if options["method"] not in METHODS:
        raise CliError(f"unknown method {options['method']!r}", EXIT_USAGE)
    if options["kernel"] not in KERNEL_KINDS:
        raise CliError(f"unknown kernel {options['kernel']!r}", EXIT_USAGE)
    return options


def _solver_config(options: dict) -> SolverConfig:
    budget = options["budget_ms"]
    try:
        return SolverConfig(
            delta=options["delta"], alpha=options["alpha"],
            eta=options["eta"], k0_fraction=options["k0_frac"],
            seed=options["seed"], max_iter=options["max_iter"],
            time_budget_s=None if budget is None else budget / 1000.0,
            audit=options["audit"])
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from exc


def _add_solver_flags(sub) -> None:
    sub.add_argument("--method", choices=METHODS, default=None)
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--delta", type=float, default=None)
    sub.add_argument("--alpha", type=float, default=None)
    sub.add_argument("--eta", type=float, default=None)
    sub.add_argument("--k0-frac", dest="k0_frac", type=float, default=None)
    sub.add_argument("--kernel", choices=KERNEL_KINDS, default=None)
    sub.add_argument("--tau", type=float, default=None)
    sub.add_argument("--gnc-levels", dest="gnc_levels", type=int, default=None)
    sub.add_argument("--budget-ms", dest="budget_ms", type=float, default=None)
    sub.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    sub.add_argument("--audit", action="store_true", default=False)
    sub.add_argument("--no-timing", dest="no_timing", action="store_true",
                     default=False)
    sub.add_argument("--config", type=Path, default=None)
    sub.add_argument("--out", type=Path, default=Path("."))


# -- instance files ----------------------------------------------------

def _generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind in ("essential", "essential-robust"):
        outliers = args.outliers
        if outliers is None:
            outliers = 0.5 if args.kind == "essential-robust" else 0.0
        if args.kind == "essential-robust" and outliers <= 0.0:
            raise CliError("essential-robust needs a positive outlier "
                           "fraction", EXIT_USAGE)
        inst = generate_essential_instance(args.seed, args.n,
                                           noise=args.sigma,
                                           outlier_fraction=outliers)
        mask = inst.inlier_mask if outliers > 0 else None
        pio.write_correspondences(out / "correspondences.txt",
                                  inst.x1, inst.x2, mask)
        pio.write_manifest(out / "manifest.txt", {
            "kind": args.kind, "seed": args.seed, "n": inst.n,
            "sigma": args.sigma, "outlier_fraction": outliers,
            "gt_rotation": inst.state_true.rotation,
            "gt_translation": inst.state_true.translation,
        })
    elif args.kind == "homography":
        rng = np.random.default_rng(args.seed)
        theta_true = random_homography_params(rng, args.width, args.height,
                                              scale=args.warp_scale)
        inst = generate_homography_instance(args.seed, args.width,
                                            args.height, theta_true,
                                            noise=args.sigma)
        pio.write_pgm(out / "image1.pgm", inst.image1)
        pio.write_pgm(out / "image2.pgm", inst.image2)
        pio.write_manifest(out / "manifest.txt", {
            "kind": "homography", "seed": args.seed,
            "width": args.width, "height": args.height,
            "sigma": args.sigma, "theta_true": inst.theta_true,
        })
    elif args.kind == "ba":
        inst = generate_bundle_instance(args.seed, args.cameras, args.points,
                                        noise=args.sigma)
        pio.write_observations(out / "observations.txt", inst.observations)
        entries = {
            "kind": "ba", "seed": args.seed, "cameras": inst.n_cameras,
            "points": inst.n_points, "sigma": args.sigma,
            "depths": inst.depths,
        }
        for i in range(inst.n_cameras):
            entries[f"gt_cam{i}_rotation"] = so3_log(inst.rotations[i])
            entries[f"gt_cam{i}_translation"] = inst.translations[i]
        pio.write_manifest(out / "manifest.txt", entries)
    else:
        raise CliError(f"unknown kind {args.kind!r}", EXIT_USAGE)
    return EXIT_OK


def _load_instance(instance_dir: Path):
    manifest_path = instance_dir / "manifest.txt"
    entries = pio.read_manifest(manifest_path)
    kind = entries.get("kind")
    if kind in ("essential", "essential-robust"):
        x1, x2, mask = pio.read_correspondences(
            instance_dir / "correspondences.txt")
        return "essential", entries, SampsonModel(x1, x2)
    if kind == "homography":
        image1 = pio.read_pgm(instance_dir / "image1.pgm")
        image2 = pio.read_pgm(instance_dir / "image2.pgm")
        return kind, entries, PhotometricModel(image1, image2)
    if kind == "ba":
        obs = pio.read_observations(instance_dir / "observations.txt")
        depths = pio.manifest_floats(entries, "depths")
        return kind, entries, WeakPerspectiveModel(obs, depths)
    raise ValueError(f"{manifest_path}: unknown instance kind {kind!r}")


def _initial_point(kind: str, entries: dict, model, seed: int):
    rng = np.random.default_rng(seed)
    if kind == "essential":
        return random_essential_state(rng)
    if kind == "homography":
        return identity_homography()
    if kind == "ba":
        C = model.n_cameras
        rotations = np.stack([
            so3_exp(pio.manifest_floats(entries, f"gt_cam{i}_rotation"))
            for i in range(C)])
        translations = np.stack([
            pio.manifest_floats(entries, f"gt_cam{i}_translation")
            for i in range(C)])
        cams = BundleCameras(rotations, translations)
        return perturb_bundle_cameras(cams, rng)
    raise AssertionError(kind)


def _run_method(model, theta0, options: dict, config: SolverConfig,
                run_id: str) -> SolveResult:
    method = options["method"]
    kernel_kind = options["kernel"]
    if kernel_kind != "none":
        kernel = RobustKernel(kernel_kind, options["tau"])
        levels = options["gnc_levels"]
        if levels > 1:
            return gnc_run(model, kernel, theta0, config, levels=levels,
                           method=method, run_id=run_id)
        model = robustify(model, kernel)
    if method == "lm":
        return classical_lm_run(model, theta0, config, run_id)
    if method == "problm":
        return problm_run(model, theta0, config, run_id)
    return problm_relaxed_run(model, theta0, config, run_id)


def _solve(args) -> int:
    options = _merge_options(args)
    config = _solver_config(options)
    kind, entries, model = _load_instance(Path(args.instance))
    theta0 = _initial_point(kind, entries, model, options["seed"])
    run_id = f"{options['method']}-{options['seed']}"
    result = _run_method(model, theta0, options, config, run_id)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(out / "trace.csv", result.trace, options["no_timing"])
    print(f"final_cost={_fmt(result.final_cost)} evals={result.evals}")
    return EXIT_OK


def _bench(args) -> int:
    options = _merge_options(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in METHODS:
            raise CliError(f"unknown method {m!r}", EXIT_USAGE)
    if args.runs < 1:
        raise CliError("need at least one run", EXIT_USAGE)
    kind, entries, model = _load_instance(Path(args.instance))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    instance_name = Path(args.instance).name
    rows = []
    for r in range(args.runs):
        run_seed = options["seed"] + r
        theta0 = _initial_point(kind, entries, model, run_seed)
        for method in methods:
            run_options = dict(options, method=method, seed=run_seed)
            config = _solver_config(run_options)
            run_id = f"{method}-{run_seed}"
            try:
                result = _run_method(model, theta0, run_options, config,
                                     run_id)
            except (EvaluationError, InvalidStartError, NumericalFailure,
                    UnderdeterminedPointError) as exc:
                rows.append((instance_name, method, r, run_seed, "", "",
                             f"failed:{type(exc).__name__}"))
                continue
            write_trace_csv(out / f"trace_{method}_{r}.csv", result.trace,
                            options["no_timing"])
            rows.append((instance_name, method, r, run_seed,
                         _fmt(result.final_cost), result.evals, "ok"))
    with open(out / "summary.csv", "w", newline="") as fh:
        fh.write("instance,method,run,seed,final_cost,evals,status\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")
    return EXIT_OK


def _profile(args) -> int:
    if args.tau_max <= 1.0 or args.tau_steps < 2:
        raise CliError("profile needs tau-max > 1 and at least 2 steps",
                       EXIT_USAGE)
    with open(args.summary, newline="") as fh:
        reader = csv.DictReader(fh)
        needed = {"method", "final_cost", "status"}
        if not needed.issubset(reader.fieldnames or ()):
            raise ValueError(f"{args.summary}: not a bench summary")
        rows = [row for row in reader if row["status"] == "ok"]
    if not rows:
        raise CliError("summary has no successful runs", EXIT_USAGE)
    by_method: dict[str, list[float]] = {}
    for row in rows:
        by_method.setdefault(row["method"], []).append(
            float(row["final_cost"]))
    f_star = min(min(v) for v in by_method.values())
    tau_grid = np.geomspace(1.0, args.tau_max, args.tau_steps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for method, costs in by_method.items():
        rho = compute_performance_profile(np.array(costs), tau_grid, f_star)
        with open(out / f"profile_{method}.csv", "w", newline="") as fh:
            fh.write("tau,rho\n")
            for tau, r in zip(tau_grid, rho):
                fh.write(f"{_fmt(tau)},{_fmt(r)}\n")
    return EXIT_OK


# -- entry point -------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="probatch",
        description="benchmark harness for batched Levenberg-Marquardt")
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("generate", help="write a synthetic instance")
    gen.add_argument("--kind", required=True,
                     choices=("essential", "essential-robust", "homography",
                              "ba"))
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("-n", type=int, default=2000,
                     help="correspondence count (essential)")
    gen.add_argument("--sigma", type=float, default=1e-3,
                     help="observation noise")
    gen.add_argument("--outliers", type=float, default=None,
                     help="outlier fraction (essential-robust default 0.5)")
    gen.add_argument("--width", type=int, default=64)
    gen.add_argument("--height", type=int, default=64)
    gen.add_argument("--warp-scale", dest="warp_scale", type=float,
                     default=1.0, help="ground-truth warp magnitude")
    gen.add_argument("--cameras", type=int, default=3)
    gen.add_argument("--points", type=int, default=100)
    gen.add_argument("--out", type=Path, required=True)

    solve = subs.add_parser("solve", help="run one solver on an instance")
    solve.add_argument("instance", type=Path)
    _add_solver_flags(solve)

    bench = subs.add_parser("bench", help="seeded repeats over random starts")
    bench.add_argument("instance", type=Path)
    bench.add_argument("--methods", default="lm,problm")
    bench.add_argument("--runs", type=int, default=20)
    _add_solver_flags(bench)

    prof = subs.add_parser("profile", help="performance profiles from a summary")
    prof.add_argument("summary", type=Path)
    prof.add_argument("--tau-max", dest="tau_max", type=float, default=10.0)
    prof.add_argument("--tau-steps", dest="tau_steps", type=int, default=101)
    prof.add_argument("--out", type=Path, default=Path("."))
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"generate": _generate, "solve": _solve, "bench": _bench,
                "profile": _profile}
    try:
        return handlers[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (EvaluationError, InvalidStartError, NumericalFailure,
            UnderdeterminedPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
