"""Command-line entry point: ``python -m eggpack {solve,batch,verify,render,regress}``.

Exit codes: 0 success, 1 input or IO error, 2 infeasible or failed
verification.  ``EGGPACK_SEED`` sets the default base seed.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time

from . import experiments
from .formats import FormatError, SolutionFile, read_problem, read_solution, write_solution
from .model import build_model
from .polygon import polygon_area
from .render import render_svg
from .solver import SolverConfig, multistart
from .verification import verify

__all__ = ["main"]

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2

log = logging.getLogger("eggpack")


class InputError(Exception):
    pass


def _default_seed() -> int:
    text = os.environ.get("EGGPACK_SEED", "0")
    try:
        return int(text)
    except ValueError:
        raise InputError(f"EGGPACK_SEED must be an integer, got {text!r}") from None


def int_set(text: str) -> list[int]:
    """Parse ``"3,4,5"``, ``"4-10"`` or a mix such as ``"1,3-5"``."""
    out = set()
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        try:
            out.update(range(int(lo), int(hi) + 1) if sep else [int(lo)])
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty integer list")
    return sorted(out)


def _config_flags(p):
    p.add_argument("--starts", type=int, help="random starts (default 50)")
    p.add_argument("--seed", type=int, help="base seed (default $EGGPACK_SEED or 0)")
    p.add_argument("--tol", type=float, help="verification tolerance (default 1e-6)")


def _check_writable(path):
    folder = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(folder) or not os.access(folder, os.W_OK):
        raise InputError(f"cannot write to {path}")


def cmd_solve(args) -> int:
    prob = read_problem(args.problem)
    if args.eps is not None:
        prob.epsilon = args.eps
    instance = prob.instance()
    seed = args.seed if args.seed is not None else prob.overrides.get("seed", _default_seed())
    config = prob.config(starts=args.starts, seed=seed, verify_tol=args.tol)
    if args.output not in (None, "-"):
        _check_writable(args.output)
    t0 = time.perf_counter()
    problem = build_model(instance)
    result = multistart(problem, instance, config)
    elapsed = time.perf_counter() - t0
    best = result.best
    if best is None:
        print(f"no certified solution in {config.starts} starts", file=sys.stderr)
        return EXIT_INFEASIBLE
    cert = best.certificate
    sol = SolutionFile(
        d=best.objective,
        poses=problem.layout.poses(best.point),
        objective=best.objective,
        area=polygon_area(instance.m, best.objective),
        fraction=experiments.packing_fraction(instance, best.objective),
        certified=result.certified,
        min_pair_margin=cert.min_pair_margin,
        min_containment_margin=cert.min_containment_margin,
        tol=cert.tol,
        status=best.status,
        seed=config.seed,
        starts=config.starts,
        time_sec=elapsed,
    )
    write_solution(args.output or "-", sol)
    if args.output not in (None, "-"):
        print(f"d = {sol.d:.6f}  fraction = {sol.fraction:.4f}  ({best.status}, {elapsed:.1f} s)", file=sys.stderr)
    return EXIT_OK if result.certified else EXIT_INFEASIBLE


def cmd_batch(args) -> int:
    _check_writable(args.output)
    config = SolverConfig(
        starts=args.starts or SolverConfig.starts,
        seed=args.seed if args.seed is not None else _default_seed(),
        verify_tol=args.tol or SolverConfig.verify_tol,
    )
    records = experiments.run_batch(args.cases, args.ns, args.ms, config, workers=args.workers)
    try:
        experiments.write_csv(records, args.output)
    except OSError as exc:
        raise InputError(f"cannot write {args.output}: {exc}") from None
    bad = [r.problem for r in records if not r.verified]
    if bad:
        print(f"unverified problems: {bad}", file=sys.stderr)
    return EXIT_OK if not bad else EXIT_INFEASIBLE


def _load_pair(args):
    prob = read_problem(args.problem)
    sol = read_solution(args.solution)
    instance = prob.instance()
    if len(sol.poses) != instance.n:
        raise InputError(f"problem has {instance.n} eggs but solution has {len(sol.poses)} poses")
    return instance, sol


def cmd_verify(args) -> int:
    instance, sol = _load_pair(args)
    tol = args.tol if args.tol is not None else sol.tol
    cert = verify(instance, sol.poses, sol.d, tol=tol)
    print(f"min pair margin        {cert.min_pair_margin:.3e}")
    print(f"min containment margin {cert.min_containment_margin:.3e}")
    if cert.passed:
        print(f"PASS at tol {tol:g}")
        return EXIT_OK
    for line in cert.failures():
        print(f"FAIL {line}")
    return EXIT_INFEASIBLE


def cmd_render(args) -> int:
    instance, sol = _load_pair(args)
    svg = render_svg(instance, sol.poses, sol.d, samples=args.samples)
    try:
        with open(args.output, "w") as fh:
            fh.write(svg)
    except OSError as exc:
        raise InputError(f"cannot write {args.output}: {exc}") from None
    return EXIT_OK


def cmd_regress(args) -> int:
    if args.records is None:
        rows = [r.as_record() for r in experiments.load_reference()]
    else:
        rows = experiments.read_csv(args.records)
    if args.cases:
        rows = [r for r in rows if r.case in args.cases]
    rows = [r for r in rows if math.isfinite(r.fraction)]
    fit = experiments.fit_regression(rows)
    print(fit.summary())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eggpack", description="Pack eggs into area-minimal regular polygons.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="multistart solve of a problem file")
    p.add_argument("problem")
    _config_flags(p)
    p.add_argument("--eps", type=float, help="separation margin override")
    p.add_argument("-o", "--output", help="solution file (default stdout)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("batch", help="solve a grid of benchmark instances into a CSV")
    p.add_argument("--cases", type=int_set, required=True)
    p.add_argument("--ns", type=int_set, required=True)
    p.add_argument("--ms", type=int_set, required=True)
    _config_flags(p)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("verify", help="oracle check of a solution file")
    p.add_argument("problem")
    p.add_argument("solution")
    p.add_argument("--tol", type=float)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("render", help="draw a solution as SVG")
    p.add_argument("problem")
    p.add_argument("solution")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--samples", type=int, default=512, help="boundary samples per egg (min 256)")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("regress", help="fraction regression on a batch CSV")
    p.add_argument("records", nargs="?", help="batch CSV (default: shipped published results)")
    p.add_argument("--cases", type=int_set, help="restrict to these test cases")
    p.set_defaults(func=cmd_regress)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)], format="%(message)s")
    try:
        return args.func(args)
    except (InputError, FormatError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
