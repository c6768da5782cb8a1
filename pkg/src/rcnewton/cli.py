"""``rcnewton`` command line: solve, ensemble, landscape and check subcommands.

Exit codes: 0 success/converged, 1 finished without converging (or a failed
check), 2 invalid input, 3 infeasible starting gain.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .bench import EnsembleSpec, landscape_summary, parse_grid, run_ensemble, run_landscape
from .checks import run_checks
from .errors import ContractError, RCNewtonError
from .io import (
    SCHEMA_VERSION,
    ConfigError,
    load_json,
    parse_config,
    rows_csv,
    trace_csv,
    trace_summary,
    write_json,
    write_text,
)
from .optimizer import Method, Status, run

log = logging.getLogger("rcnewton")

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2, 3


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("."), help="output directory (default: current)")
    common.add_argument("--seed", type=_u64, default=None, help="override the configured seed")
    common.add_argument("--max-iters", type=_positive_int, default=None, help="iteration cap")
    common.add_argument("--tol", type=_positive_float, default=None, help="Riemannian gradient-norm tolerance")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="rcnewton", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    methods = [m.value for m in Method]

    p = sub.add_parser("solve", parents=[common], help="run one optimization from a JSON config")
    p.add_argument("config", type=Path)
    p.add_argument("--method", choices=methods, default=None)

    p = sub.add_parser("ensemble", parents=[common], help="run a random ensemble from a JSON spec")
    p.add_argument("spec", type=Path)
    p.add_argument("--method", choices=[m for m in methods if m != "hewer"], action="append", default=None,
                   help="method to run (repeatable; default: the spec's list)")
    p.add_argument("--workers", type=_positive_int, default=1, help="worker processes (default 1)")

    p = sub.add_parser("landscape", parents=[common], help="evaluate cost and Hessian spectra on a grid")
    p.add_argument("config", type=Path)
    p.add_argument("--grid", required=True, help="xmin:xmax:nx,ymin:ymax:ny in frame coordinates")

    p = sub.add_parser("check", parents=[common], help="run the randomized invariant suite")
    p.add_argument("--full", action="store_true", help="use the full instance counts")
    return parser


def _solve(args) -> int:
    cfg = parse_config(load_json(args.config), seed=args.seed, method=args.method,
                       max_iters=args.max_iters, tol=args.tol)
    trace = run(cfg.plant, cfg.constraint, cfg.K0, cfg.settings)
    out: Path = args.out
    write_text(out / "trace.csv", trace_csv(trace, (cfg.plant.m, cfg.plant.n)))
    summary = trace_summary(trace, cfg)
    write_json(out / "summary.json", summary)
    print(json.dumps({k: summary[k] for k in ("status", "iterations", "final_cost", "final_grad_norm")}))
    if trace.status is Status.INFEASIBLE_START:
        print(f"error: {trace.message}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK if trace.converged else EXIT_NOT_CONVERGED


def _ensemble(args) -> int:
    data = load_json(args.spec)
    try:
        if args.seed is not None:
            data = {**data, "seed": args.seed}
        if args.max_iters is not None:
            data = {**data, "max_iters": args.max_iters}
        if args.tol is not None:
            data = {**data, "grad_tol": args.tol}
        spec = EnsembleSpec.from_dict(data)
    except ContractError as exc:
        raise ConfigError("spec", str(exc)) from exc
    result = run_ensemble(spec, methods=args.method, workers=args.workers)
    header = ["index", "method", "status", "iterations", "converged_within_budget",
              "final_cost", "final_grad_norm", "final_error"]
    rows = [[r["index"], r["method"], r["status"], r["iterations"],
             r["status"] == "converged" and r["iterations"] <= spec.budget,
             r["final_cost"], r["final_grad_norm"], r["final_error"]] for r in result.rows]
    write_text(args.out / "ensemble_runs.csv", rows_csv(header, rows))
    curve_rows = []
    for method in result.spec.methods:
        env = result.curves[method]
        for t in range(env.shape[0]):
            curve_rows.append([method, t, env[t, 0], env[t, 1], env[t, 2]])
    write_text(args.out / "ensemble_curves.csv",
               rows_csv(["method", "t", "min_error", "median_error", "max_error"], curve_rows))
    summary = {"schema_version": SCHEMA_VERSION, **result.summary()}
    write_json(args.out / "ensemble_summary.json", summary)
    for method, s in summary["methods"].items():
        print(f"{method}: {s['converged_within_budget']}/{spec.count} converged within {spec.budget} iterations")
    return EXIT_OK


def _landscape(args) -> int:
    cfg = parse_config(load_json(args.config), seed=args.seed)
    grid = parse_grid(args.grid)
    rows = run_landscape(cfg.plant, cfg.constraint, grid)
    header = ["x", "y", "stabilizing", "cost", "riem_min_eig", "euc_min_eig"]
    write_text(args.out / "landscape.csv", rows_csv(header, rows))
    summary = {"schema_version": SCHEMA_VERSION, "grid": args.grid, **landscape_summary(rows, grid)}
    write_json(args.out / "landscape_summary.json", summary)
    print(json.dumps(summary))
    return EXIT_OK


def _check(args) -> int:
    results = run_checks(seed=0 if args.seed is None else args.seed, full=args.full)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_NOT_CONVERGED


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"solve": _solve, "ensemble": _ensemble, "landscape": _landscape, "check": _check}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RCNewtonError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
