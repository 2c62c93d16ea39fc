"""Command line interface.

Exit codes: 0 success, 2 non-convergence, 3 degeneracy, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import io
from .harness import (Design, GroundTruth, fd_divergence, mc_dof, mc_sure_risk,
                      select_lambda)
from .purification import PurificationError, purify
from .sensitivity import DegeneracyError, dof_estimate, sensitivity_report
from .solver import DEFAULT_TOL, GroupLassoProblem, NonConvergenceError, solve

EXIT_NONCONVERGENCE = 2
EXIT_DEGENERACY = 3
EXIT_IO = 4


class InputError(Exception):
    pass


def parse_grid(text: str) -> list[float]:
    """``a,b,c`` or ``geom:start:stop:num`` / ``lin:start:stop:num``."""
    if text.startswith(("geom:", "lin:")):
        kind, a, b, num = text.split(":")
        fn = np.geomspace if kind == "geom" else np.linspace
        return sorted(float(v) for v in fn(float(a), float(b), int(num)))
    return sorted(float(v) for v in text.split(","))


def _design(args, n_hint: int | None = None) -> Design:
    if getattr(args, "problem", None):
        desc = io.read_problem_descriptor(args.problem)
        return Design(io.read_matrix(desc["x_path"]), desc["partition"])
    if args.partition is None:
        raise InputError("--partition is required")
    part = io.read_partition(args.partition)
    if args.design == "identity":
        return Design.identity(part)
    if args.x is None:
        raise InputError("--x is required unless --design identity")
    return Design(io.read_matrix(args.x), part)


def _problem(args) -> GroupLassoProblem:
    if args.problem:
        desc = io.read_problem_descriptor(args.problem)
        lam = args.lam if args.lam is not None else float(desc["lambda"])
        return GroupLassoProblem(io.read_vector(desc["y_path"]),
                                 io.read_matrix(desc["x_path"]),
                                 desc["partition"], lam)
    if args.y is None:
        raise InputError("--y is required")
    design = _design(args)
    lam = args.lam
    if lam is None:
        if getattr(args, "lambda_grid", None) is None:
            raise InputError("--lambda is required")
        lam = 1.0
    return design.problem(io.read_vector(args.y), lam)


def _truth(args, design: Design) -> GroundTruth:
    if args.beta0 is None:
        raise InputError("--beta0 is required for Monte Carlo runs")
    if args.sigma is None:
        raise InputError("--sigma is required")
    return GroundTruth.from_design(design, io.read_vector(args.beta0),
                                   args.sigma, args.seed)


def cmd_solve(args) -> dict:
    problem = _problem(args)
    sol = solve(problem, tol=args.tol, max_iter=args.max_iter)
    if args.purify:
        sol = purify(problem, sol, tol=args.tol)
    return sol.to_dict()


def cmd_sensitivity(args) -> dict:
    problem = _problem(args)
    sol = solve(problem, tol=args.tol, max_iter=args.max_iter)
    sol = purify(problem, sol, tol=args.tol)
    rep = sensitivity_report(problem, sol, sigma=args.sigma,
                             mu0_norm=args.mu0_norm)
    if args.emit_csv:
        io.write_matrix(args.emit_csv, rep.jacobian_d)
    out = rep.to_dict(include_matrix=not args.emit_csv)
    out["solution"] = sol.to_dict()
    return out


def cmd_mc_dof(args) -> dict:
    design = _design(args)
    truth = _truth(args, design)
    if args.lam is None:
        raise InputError("--lambda is required")
    rep = mc_dof(truth, design, args.lam, args.replicates, workers=args.workers)
    return rep.to_dict()


def cmd_sure_path(args) -> dict:
    design = _design(args)
    truth = _truth(args, design)
    if args.lambda_grid is None:
        raise InputError("--lambda-grid is required")
    reports = mc_sure_risk(truth, design, args.lambda_grid, args.replicates,
                           workers=args.workers)
    rows = [r.to_dict() for r in reports]
    if args.emit_csv:
        header = list(rows[0])
        io.write_curve_csv(args.emit_csv, header,
                           [[r[h] for h in header] for r in rows])
    return {"seed": args.seed, "reports": rows}


def cmd_fd_check(args) -> dict:
    problem = _problem(args)
    fd = fd_divergence(problem, h=args.h)
    sol = purify(problem, solve(problem, tol=1e-12), tol=1e-12)
    dof = dof_estimate(problem, sol)
    rel = abs(fd.value - dof) / max(abs(dof), 1e-12)
    return {"fd_divergence": fd.value, "dof_estimate": dof,
            "relative_error": rel, "flagged": fd.flagged,
            "unstable_coordinates": list(fd.unstable)}


def cmd_select_lambda(args) -> dict:
    problem = _problem(args)
    if args.lambda_grid is None or args.sigma is None:
        raise InputError("--lambda-grid and --sigma are required")
    sel = select_lambda(problem, args.lambda_grid, args.sigma)
    out = sel.to_dict()
    if args.emit_csv:
        io.write_curve_csv(args.emit_csv, ["lambda", "sure", "dof"],
                           [[c["lambda"], c["sure"], c["dof"]]
                            for c in out["curve"]])
    return out


COMMANDS = {
    "solve": cmd_solve,
    "sensitivity": cmd_sensitivity,
    "mc-dof": cmd_mc_dof,
    "sure-path": cmd_sure_path,
    "fd-check": cmd_fd_check,
    "select-lambda": cmd_select_lambda,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glsure",
        description="Group Lasso solver with DOF and SURE estimates.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--problem", help="JSON {lambda, partition, x_path, y_path}")
    common.add_argument("--x", help="design matrix CSV")
    common.add_argument("--y", help="observation vector CSV")
    common.add_argument("--partition", help="JSON file or inline array of blocks")
    common.add_argument("--design", choices=("identity", "file"), default="file")
    common.add_argument("--lambda", dest="lam", type=float)
    common.add_argument("--lambda-grid", type=parse_grid)
    common.add_argument("--sigma", type=float)
    common.add_argument("--out", help="write the JSON result here")
    common.add_argument("--emit-csv", help="write matrix/curve data as CSV")
    common.add_argument("--tol", type=float, default=DEFAULT_TOL)
    common.add_argument("--max-iter", type=int, default=200_000)

    mc = argparse.ArgumentParser(add_help=False)
    mc.add_argument("--beta0", help="true coefficient vector CSV")
    mc.add_argument("--replicates", type=int, default=1000)
    mc.add_argument("--seed", type=int, default=0)
    mc.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("solve", parents=[common], help="solve one problem")
    p.add_argument("--purify", action="store_true",
                   help="reduce to a solution with independent block images")
    p = sub.add_parser("sensitivity", parents=[common],
                       help="Jacobian, DOF, SURE and reliability terms")
    p.add_argument("--mu0-norm", type=float)
    sub.add_parser("mc-dof", parents=[common, mc],
                   help="Monte Carlo check of the DOF estimate")
    sub.add_parser("sure-path", parents=[common, mc],
                   help="Monte Carlo SURE vs true risk over a lambda grid")
    p = sub.add_parser("fd-check", parents=[common],
                       help="finite-difference divergence vs DOF estimate")
    p.add_argument("--h", type=float)
    sub.add_parser("select-lambda", parents=[common],
                   help="pick lambda minimizing SURE on a grid")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = COMMANDS[args.command](args)
    except NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (DegeneracyError, PurificationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERACY
    except (OSError, InputError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    text = io.write_json(args.out, result)
    if args.out is None:
        print(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
