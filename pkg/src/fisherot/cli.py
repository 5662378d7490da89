"""Command-line interface.

Exit codes: 0 success, 2 bad input, 3 solver did not converge, 4 internal
error (including failed verification checks).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments, io, oracle
from .energy import ProblemSpec, TimeGrid
from .lattice import GridSpec, build_lattice
from .newton import CONVERGED, SolverConfig, SolverError, newton_solve

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_INTERNAL = 0, 2, 3, 4

log = logging.getLogger("fisherot")


class InputError(Exception):
    pass


def _domain(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}") from None
    if hi <= lo:
        raise argparse.ArgumentTypeError("domain upper bound must exceed lower bound")
    return lo, hi


def _add_inputs(sp):
    sp.add_argument("--input0", required=True, type=Path, help="initial histogram")
    sp.add_argument("--input1", required=True, type=Path, help="final histogram")
    sp.add_argument("--format", choices=("csv", "pgm"), default=None, help="default: by extension")
    sp.add_argument("--floor", type=float, default=0.01, help="relative positivity floor (default 0.01)")
    sp.add_argument("--domain", type=_domain, default=(0.0, 1.0), help="axis extent LO,HI (default 0,1)")


def _add_solver(sp):
    _add_inputs(sp)
    sp.add_argument("--time-steps", type=int, default=30, help="interior time levels L (default 30)")
    sp.add_argument("--beta2", type=float, default=1e-6)
    sp.add_argument("--alpha", type=float, default=0.3)
    sp.add_argument("--tol", type=float, default=1e-5)
    sp.add_argument("--max-iter", type=int, default=500)
    sp.add_argument(
        "--kinetic-weight",
        type=float,
        default=1.0,
        help="weight of the left density level when pricing flux (default 1)",
    )


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fisherot", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="solve and write frames, trace and report")
    _add_solver(sp)
    sp.add_argument("--out-dir", type=Path, default=None, help="directory for frames and trace.csv")
    sp.add_argument("--report", type=Path, default=None, help="JSON report path")
    sp.add_argument("--seed", type=int, default=0, help="recorded in the report")

    sp = sub.add_parser("distance", help="print the squared distance estimate")
    _add_solver(sp)

    sp = sub.add_parser("oracle-1d", help="exact squared W2 between two 1D histograms")
    _add_inputs(sp)

    sp = sub.add_parser("verify", help="run derivative and convexity checks")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--trials", type=int, default=10)
    sp.add_argument("--beta2", type=float, default=1e-6)

    sp = sub.add_parser("example", help="write example inputs as CSV (1, 2: Gaussians; 3: square split)")
    sp.add_argument("which", choices=("1", "2", "3"))
    sp.add_argument("--out-dir", type=Path, required=True)
    return ap


def load_histograms(args):
    try:
        h0 = io.read_histogram(args.input0, args.format)
        h1 = io.read_histogram(args.input1, args.format)
        if h0.values.shape != h1.values.shape:
            raise InputError(f"histogram shapes differ: {h0.values.shape} vs {h1.values.shape}")
        shape = h0.values.shape
        if len(shape) == 2 and shape[0] != shape[1]:
            raise InputError(f"2D inputs must be square, got {shape}")
        spec = GridSpec(n_pts=shape[0], domain=(args.domain,) * len(shape))
        p0 = io.normalize_with_floor(h0, args.floor)
        p1 = io.normalize_with_floor(h1, args.floor)
    except (OSError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    return spec, p0, p1


def make_problem(args) -> ProblemSpec:
    spec, p0, p1 = load_histograms(args)
    try:
        return ProblemSpec(
            lattice=build_lattice(spec),
            time=TimeGrid(args.time_steps),
            p0=p0,
            p1=p1,
            beta2=args.beta2,
            kinetic_weight=args.kinetic_weight,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _config(args) -> SolverConfig:
    try:
        return SolverConfig(beta2=args.beta2, alpha=args.alpha, tol=args.tol, max_iter=args.max_iter)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def cmd_solve(args) -> int:
    prob = make_problem(args)
    result = newton_solve(prob, _config(args))
    extra = {
        "inputs": [str(args.input0), str(args.input1)],
        "floor": args.floor,
        "seed": args.seed,
    }
    if args.out_dir is not None:
        io.write_frames(result, args.out_dir)
    if args.report is not None:
        io.write_report(result, args.report, extra)
    print(
        f"{result.reason} after {result.iterations} iterations: "
        f"objective {result.objective:.10g}, distance^2 estimate {result.distance_estimate:.10g}"
    )
    return EXIT_OK if result.reason == CONVERGED else EXIT_NOT_CONVERGED


def cmd_distance(args) -> int:
    prob = make_problem(args)
    result = newton_solve(prob, _config(args))
    print(repr(result.distance_estimate))
    return EXIT_OK if result.reason == CONVERGED else EXIT_NOT_CONVERGED


def cmd_oracle(args) -> int:
    spec, p0, p1 = load_histograms(args)
    if spec.dimension != 1:
        raise InputError("oracle-1d needs one-dimensional histograms")
    x = spec.coordinates()[:, 0]
    print(repr(oracle.w2_squared_1d(x, p0, x, p1)))
    return EXIT_OK


def cmd_verify(args) -> int:
    ok = True
    for name, passed, detail in oracle.run_checks(seed=args.seed, trials=args.trials, beta2=args.beta2):
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
        ok &= passed
    return EXIT_OK if ok else EXIT_INTERNAL


def _example_inputs(which: str):
    if which == "3":
        spec, one, two = experiments.square_images()
        return spec, (one, two)
    if which == "1":
        spec, centers = GridSpec.box(40, 1, 0.0, 2.0), ((0.4,), (1.6,))
    else:
        spec, centers = GridSpec.box(20, 2, 0.0, 2.0), ((0.2, 0.5), (1.5, 1.5))
    x = spec.coordinates()
    return spec, tuple(experiments.gaussian_bump(x, c) for c in centers)


def cmd_example(args) -> int:
    spec, raws = _example_inputs(args.which)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for k, raw in enumerate(raws):
        raw = raw.reshape(spec.shape)
        path = args.out_dir / f"example{args.which}_p{k}.csv"
        np.savetxt(path, raw if raw.ndim == 2 else raw[:, None], delimiter=",", fmt="%.17g")
        print(path)
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "distance": cmd_distance,
    "oracle-1d": cmd_oracle,
    "verify": cmd_verify,
    "example": cmd_example,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
