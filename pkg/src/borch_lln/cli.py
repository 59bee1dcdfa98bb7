"""Command line front end: ``borch-lln allocate|sweep|verify``.

Exit codes: 0 success, 1 verification failure, 2 input error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from contextlib import contextmanager

import numpy as np

from . import csvio
from .errors import InputError, PoolError, SolverError
from .exchange import allocate_optimal, participation_residuals
from .limits import DEFAULT_N_GRID, estimate_rate, sweep
from .market import Agent, Pool
from .riskdist import DiscreteDistribution
from .verify import all_passed, format_table, run_checks

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger("borch_lln")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _n_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty n list")
    return values


def _add_pool_flags(p, with_n=True):
    g = p.add_argument_group("homogeneous pool (ignored with --pool)")
    g.add_argument("--a0", type=float, default=1.0, help="originator risk aversion (default: %(default)s)")
    g.add_argument("--w0", type=float, default=0.0, help="originator wealth (default: %(default)s)")
    if with_n:
        g.add_argument("--n", type=int, default=1, help="number of reinsurers (default: %(default)s)")
    g.add_argument("--a1", type=float, default=1.0, help="reinsurer risk aversion (default: %(default)s)")
    g.add_argument("--w1", type=float, default=0.0, help="reinsurer wealth (default: %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="borch-lln", description="Optimal risk sharing with exponential reinsurers.",
                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true", default=False, help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("allocate", help="closed-form optimal allocation as CSV",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--dist", required=True, help="distribution file, one 'value,probability' per line")
    p.add_argument("--pool", default=None, help="pool config file (heterogeneous panels)")
    p.add_argument("--out", default="-", help="output CSV path, '-' for standard output")
    _add_pool_flags(p)

    p = sub.add_parser("sweep", help="convergence of the optimum as the panel grows",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--dist", required=True, help="distribution file")
    p.add_argument("--n-list", type=_n_list, default=list(DEFAULT_N_GRID),
                   help="comma-separated, strictly increasing panel sizes")
    p.add_argument("--out", default="-", help="output CSV path, '-' for standard output")
    _add_pool_flags(p, with_n=False)

    p = sub.add_parser("verify", help="check the closed form against independent solvers",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--dist", required=True, help="distribution file")
    p.add_argument("--pool", default=None, help="pool config file (heterogeneous panels)")
    p.add_argument("--trials", type=int, default=1000, help="random feasible allocations for the dominance test")
    p.add_argument("--seed", type=int, default=42, help="seed for the dominance test")
    p.add_argument("--check-alloc", default=None, help="allocation CSV to verify instead of the computed optimum")
    _add_pool_flags(p)
    return parser


def _pool_from_args(args, n=None) -> Pool:
    if getattr(args, "pool", None):
        return Pool.read(args.pool)
    n = args.n if n is None else n
    if n < 0:
        raise InputError(f"--n must be >= 0, got {n}")
    try:
        return Pool.homogeneous(Agent.exponential(args.a0, args.w0), Agent.exponential(args.a1, args.w1), n)
    except InputError as exc:
        raise InputError(f"pool flags: {exc}") from None


@contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        try:
            fh = open(path, "w", newline="")
        except OSError as exc:
            raise InputError(f"cannot write {path}: {exc.strerror}") from exc
        with fh:
            yield fh


def cmd_allocate(args) -> int:
    d = DiscreteDistribution.read(args.dist)
    pool = _pool_from_args(args)
    alloc, report = allocate_optimal(pool, d)
    comments = []
    if len(pool.reinsurers) == 1:
        comments.append(f"lambda1={csvio.fmt(report.lambdas[0])} log_lambda1={csvio.fmt(report.log_lambdas[0])}")
    elif pool.reinsurers:
        comments.append("log_lambdas=" + " ".join(csvio.fmt(v) for v in report.log_lambdas))
    comments += [
        f"kappa={csvio.fmt(report.log_mgf_at_a)}",
        f"a={csvio.fmt(report.aggregate_a)}",
        f"max_residual={csvio.fmt(report.max_abs_residual)}",
        f"originator_gain={csvio.fmt(report.originator_gain)}",
    ]
    with _output(args.out) as out:
        csvio.write_allocation(out, alloc, comments)
    return EXIT_OK


def cmd_sweep(args) -> int:
    d = DiscreteDistribution.read(args.dist)
    # validates the flags even though pools are rebuilt per n
    _pool_from_args(args, n=0)
    originator = Agent.exponential(args.a0, args.w0)
    template = Agent.exponential(args.a1, args.w1)
    if len(args.n_list) < 3:
        raise InputError(f"--n-list needs at least 3 values for the rate fit, got {len(args.n_list)}")
    points = sweep(originator, template, d, args.n_list)
    comments = []
    if all(pt.sup_err_originator == 0.0 for pt in points):
        comments.append("slope=nan intercept=nan")
        comments.append("note: all errors are zero (degenerate loss); no rate to fit")
    else:
        try:
            slope, intercept = estimate_rate(points)
            comments.append(f"slope={csvio.fmt(slope)} intercept={csvio.fmt(intercept)}")
        except InputError as exc:
            comments.append("slope=nan intercept=nan")
            comments.append(f"note: {exc}")
    with _output(args.out) as out:
        csvio.write_sweep(out, points, comments)
    return EXIT_OK


def cmd_verify(args) -> int:
    d = DiscreteDistribution.read(args.dist)
    pool = _pool_from_args(args)
    if not pool.all_exponential:
        raise PoolError("verify needs exponential agents")
    alloc = None
    if args.check_alloc:
        alloc = csvio.read_allocation(args.check_alloc)
        if alloc.rows != len(pool.agents) and alloc.rows == pool.n + 1:
            pool = pool.expanded()
        if alloc.rows != len(pool.agents):
            raise InputError(f"{args.check_alloc}: allocation has {alloc.rows} rows, pool needs {len(pool.agents)}")
        if alloc.support.shape != d.values.shape or np.any(np.abs(alloc.support - d.values) > 1e-12):
            raise InputError(f"{args.check_alloc}: states do not match the distribution")
        participation_residuals(pool, alloc, d)
    if args.trials < 0:
        raise InputError("--trials must be >= 0")
    checks = run_checks(pool, d, alloc=alloc, trials=args.trials, seed=args.seed)
    print(format_table(checks))
    ok = all_passed(checks)
    print("RESULT: " + ("PASS" if ok else "FAIL"))
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {"allocate": cmd_allocate, "sweep": cmd_sweep, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with np.errstate(over="ignore"):
            return COMMANDS[args.command](args)
    except (InputError, PoolError) as exc:
        print(f"borch-lln {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverError as exc:
        print(f"borch-lln {args.command}: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
