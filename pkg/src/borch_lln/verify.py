"""Check table behind ``borch-lln verify``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .borch_numeric import solve_binding
from .errors import SolverError
from .exchange import Allocation, allocate_optimal, borch_spread, participation_residuals
from .market import Pool
from .oracle import dominance_test, maximize_state_weighted
from .riskdist import DiscreteDistribution

CLEARING_TOL = 1e-12
RESIDUAL_TOL = 1e-10
BORCH_TOL = 1e-9
NUMERIC_TOL = 1e-8
ORACLE_TOL = 1e-6

PASS, FAIL, SKIPPED = "PASS", "FAIL", "SKIPPED"


@dataclass(frozen=True)
class Check:
    name: str
    status: str
    value: float
    tolerance: float
    detail: str = ""


def _check(name, value, tol, detail=""):
    return Check(name, PASS if value <= tol else FAIL, float(value), tol, detail)


def run_checks(pool: Pool, d: DiscreteDistribution, alloc: Allocation | None = None,
               trials: int = 1000, seed: int = 42, oracle_grid: int = 1001) -> list[Check]:
    """Verify ``alloc`` (default: the closed-form optimum) for ``pool`` and ``d``."""
    closed, report = allocate_optimal(pool, d)
    target = closed if alloc is None else alloc
    checks = [
        _check("clearing", float(np.max(target.clearing_error())), CLEARING_TOL, "max |sum X_i - X|"),
        _check("participation", float(np.max(np.abs(participation_residuals(pool, target, d)), initial=0.0)),
               RESIDUAL_TOL, "max |E u_i(w_i - X_i) - u_i(w_i)|"),
        _check("borch_ratios", float(np.max(borch_spread(pool, target, report.log_lambdas))),
               BORCH_TOL, "max relative spread of lambda_i u_i'"),
    ]

    try:
        numeric, _ = solve_binding(pool, d)
        gap = float(np.max(np.abs(numeric.shares - target.shares)))
        checks.append(_check("numeric_solver", gap, NUMERIC_TOL, "sup |closed form - numeric|"))
    except SolverError as exc:
        checks.append(Check("numeric_solver", FAIL, float("nan"), NUMERIC_TOL, str(exc)))

    if pool.n + 1 <= 3:
        small = pool.expanded()
        target_full = target.expanded()
        worst = 0.0
        for k, x in enumerate(d.values):
            found = maximize_state_weighted(small.agents, np.exp(_expand_log_lambdas(pool, report.log_lambdas)),
                                            float(x), grid=oracle_grid)
            worst = max(worst, float(np.max(np.abs(found - target_full.shares[:, k]))))
        checks.append(_check("grid_oracle", worst, ORACLE_TOL, "max |grid optimum - allocation| per state"))
    else:
        checks.append(Check("grid_oracle", SKIPPED, float("nan"), ORACLE_TOL, "more than 3 agents"))

    if trials > 0:
        dom = dominance_test(pool, d, trials=trials, seed=seed)
        status = PASS if dom.passed else FAIL
        detail = f"{dom.accepted} accepted, {dom.skipped} skipped, {dom.violations} violations"
        checks.append(Check("dominance", status, dom.max_gap, 1e-12, detail))
    else:
        checks.append(Check("dominance", SKIPPED, float("nan"), 1e-12, "trials = 0"))
    return checks


def _expand_log_lambdas(pool: Pool, log_lambdas):
    return np.repeat(np.asarray(log_lambdas, dtype=float), pool.counts)


def all_passed(checks) -> bool:
    return all(c.status != FAIL for c in checks)


def format_table(checks) -> str:
    lines = [f"{'check':<16}{'status':<9}{'value':>14}  {'tol':>8}  detail"]
    for c in checks:
        lines.append(f"{c.name:<16}{c.status:<9}{c.value:>14.3e}  {c.tolerance:>8.0e}  {c.detail}")
    return "\n".join(lines)
