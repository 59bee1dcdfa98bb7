"""Numerical Borch solver for general concave utilities.

For fixed weights each state is solved on its own: the common shadow value
``L`` of the weighted marginals ``lambda_i u_i'(w_i - x_i)`` is found by
bisection on ``log L``, since the implied total share
``sum_i (w_i - (u_i')^{-1}(L / lambda_i))`` is strictly increasing in ``L``.
The weights are then moved until every participation constraint binds.

Nothing here uses the exponential closed forms, so the module doubles as an
independent check of :mod:`borch_lln.exchange`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import ConvergenceError, InfeasibleStateError
from .exchange import Allocation, SolveReport, expected_utility, participation_residuals
from .market import Agent, Pool, aggregate_tolerance
from .riskdist import DiscreteDistribution, cgf

log = logging.getLogger(__name__)

STATE_TOL = 1e-12
RESIDUAL_TOL = 1e-10
STEP_TOL = 1e-10
MAX_EXPANSIONS = 200
MAX_BISECTIONS = 400
MAX_ITER = 500


@dataclass(frozen=True)
class StateSolution:
    state_value: float
    log_shadow_value: float
    shares: np.ndarray

    @property
    def shadow_value(self) -> float:
        return math.exp(self.log_shadow_value)


def _shares_at(agents, log_lambdas, log_shadow):
    """Shares ``(entries, states)`` for shadow values ``exp(log_shadow)``."""
    with np.errstate(over="ignore", invalid="ignore"):
        return np.vstack([
            ag.wealth - ag.utility.inverse_log_marginal(log_shadow - ell)
            for ag, ell in zip(agents, log_lambdas)
        ])


def _clearing(agents, log_lambdas, mult, log_shadow):
    return mult @ _shares_at(agents, log_lambdas, log_shadow)


def _initial_bracket(agents, log_lambdas, mult, x):
    """Bracket from weighted marginals at the equal split of each state."""
    per_head = x / mult.sum()
    logs = []
    for ag, ell in zip(agents, log_lambdas):
        wealth = ag.wealth - per_head
        ok = ag.utility.in_domain(wealth)
        v = np.full(x.shape, np.nan)
        if np.any(ok):
            v[ok] = ell + ag.utility.log_marginal(wealth[ok])
        logs.append(v)
    logs = np.vstack(logs)
    with np.errstate(all="ignore"):
        lo = np.nanmin(np.where(np.isnan(logs), np.inf, logs), axis=0)
        hi = np.nanmax(np.where(np.isnan(logs), -np.inf, logs), axis=0)
    missing = ~np.isfinite(lo) | ~np.isfinite(hi)
    lo[missing], hi[missing] = -1.0, 1.0
    return lo, hi


def solve_states(agents: Sequence[Agent], log_lambdas, x, multiplicity=None):
    """Solve the Borch condition in every state of ``x`` at once.

    ``log_lambdas`` includes the originator's 0. Returns ``(log_shadow,
    shares)`` with shares shaped ``(entries, states)``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    ell = np.asarray(log_lambdas, dtype=float)
    mult = np.ones(len(agents)) if multiplicity is None else np.asarray(multiplicity, dtype=float)
    lo, hi = _initial_bracket(agents, ell, mult, x)

    step = math.log(2.0)
    for _ in range(MAX_EXPANSIONS):
        f_lo = _clearing(agents, ell, mult, lo)
        f_hi = _clearing(agents, ell, mult, hi)
        low_bad = ~(f_lo <= x)
        high_bad = ~(f_hi >= x)
        if not (np.any(low_bad) or np.any(high_bad)):
            break
        lo = np.where(low_bad, lo - step, lo)
        hi = np.where(high_bad, hi + step, hi)
    else:
        bad = ~(f_lo <= x) | ~(f_hi >= x)
        raise InfeasibleStateError(float(x[np.argmax(bad)]))

    tol = STATE_TOL * (1.0 + np.abs(x))
    best = 0.5 * (lo + hi)
    best_gap = np.full(x.shape, np.inf)
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        gap = _clearing(agents, ell, mult, mid) - x
        improved = np.abs(gap) < best_gap
        best = np.where(improved, mid, best)
        best_gap = np.where(improved, np.abs(gap), best_gap)
        # stop per state on tolerance or when the bracket can no longer split
        done = (best_gap <= tol) | (mid <= lo) | (mid >= hi)
        if np.all(done):
            break
        lo = np.where(gap < 0.0, mid, lo)
        hi = np.where(gap > 0.0, mid, hi)
    return best, _shares_at(agents, ell, best)


def solve_state(agents: Sequence[Agent], lambdas: Sequence[float], x: float) -> StateSolution:
    """Borch split of a single loss value ``x`` for weights ``lambdas`` (``lambda_0 = 1``)."""
    lam = np.asarray(lambdas, dtype=float).reshape(-1)
    if lam.size != len(agents) - 1:
        raise ValueError(f"expected {len(agents) - 1} weights, got {lam.size}")
    if np.any(~(lam > 0.0)):
        raise ValueError("weights must be positive")
    ell = np.concatenate(([0.0], np.log(lam)))
    log_shadow, shares = solve_states(agents, ell, [x])
    return StateSolution(float(x), float(log_shadow[0]), shares[:, 0])


def allocate_numeric(p: Pool, log_lambdas, d: DiscreteDistribution) -> tuple[np.ndarray, Allocation]:
    ell = np.concatenate(([0.0], np.asarray(log_lambdas, dtype=float)))
    log_shadow, shares = solve_states(p.agents, ell, d.values, p.multiplicity)
    return log_shadow, Allocation(d.values, d.probabilities, shares, p.multiplicity)


def _jacobian(p: Pool, alloc: Allocation, d: DiscreteDistribution) -> np.ndarray:
    """d residual_i / d log lambda_j over reinsurer entries.

    Along the Borch curve ``dx_i = t_i (dlog L - dlog lambda_i)`` with
    ``t_i`` the local risk tolerance, and clearing fixes
    ``dlog L = sum_j c_j t_j dlog lambda_j / sum_m c_m t_m``.
    """
    agents = p.agents
    mult = p.multiplicity
    wealth_after = [ag.wealth - alloc.shares[i] for i, ag in enumerate(agents)]
    tau = np.vstack([ag.utility.risk_tolerance(wa) for ag, wa in zip(agents, wealth_after)])
    total = mult @ tau
    dlogshadow = (mult[1:, None] * tau[1:]) / total  # (entries-1, states)
    k = len(agents) - 1
    jac = np.empty((k, k))
    for i in range(k):
        ag = agents[i + 1]
        weight = d.probabilities * ag.utility.marginal(wealth_after[i + 1]) * tau[i + 1]
        dx = dlogshadow.copy()
        dx[i] -= 1.0
        jac[i] = -(dx @ weight)
    return jac


def solve_binding(p: Pool, d: DiscreteDistribution, log_lambdas0=None,
                  max_iter: int = MAX_ITER) -> tuple[Allocation, SolveReport]:
    """Find weights under which every participation constraint binds.

    Damped Newton iteration in ``log lambda`` starting from all-ones weights:
    the full step is tried first and halved while the residual norm grows.
    Converged when ``max |residual| <= 1e-10`` and the last step is below
    ``1e-10``.
    """
    k = len(p.reinsurers)
    ell = np.zeros(k) if log_lambdas0 is None else np.array(log_lambdas0, dtype=float)
    _, alloc = allocate_numeric(p, ell, d)
    res = participation_residuals(p, alloc, d)
    history = [float(np.max(np.abs(res), initial=0.0))]
    it = 0
    step_norm = np.inf
    while it < max_iter:
        if k == 0 or (history[-1] <= RESIDUAL_TOL and step_norm <= STEP_TOL):
            break
        it += 1
        jac = _jacobian(p, alloc, d)
        try:
            delta = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            # singular Jacobian: fall back to a scaled residual step
            delta = np.array([ag.a if ag.utility.is_exponential else 1.0 for ag in p.reinsurers]) * -res
        eta = 1.0
        norm = np.linalg.norm(res)
        while True:
            cand = ell + eta * delta
            _, cand_alloc = allocate_numeric(p, cand, d)
            cand_res = participation_residuals(p, cand_alloc, d)
            if np.linalg.norm(cand_res) <= norm or eta < 1e-12:
                break
            eta *= 0.5
        step_norm = float(np.max(np.abs(eta * delta)))
        ell, alloc, res = cand, cand_alloc, cand_res
        history.append(float(np.max(np.abs(res))))
        log.debug("iter %d: eta=%g max|r|=%.3e step=%.3e", it, eta, history[-1], step_norm)
    if k and (history[-1] > RESIDUAL_TOL or step_norm > STEP_TOL):
        raise ConvergenceError(
            f"participation residuals did not converge after {it} iterations (max |r| = {history[-1]:.3e})",
            residuals=res, iterations=it)

    orig = p.originator
    report = SolveReport(
        log_lambdas=ell,
        log_mgf_at_a=float("nan"),
        aggregate_a=float("nan"),
        total_wealth=p.total_wealth,
        participation_residuals=res,
        originator_utility=expected_utility(orig, alloc.originator, d.probabilities),
        originator_utility_unshared=expected_utility(orig, d.values, d.probabilities),
        method="numeric",
        iterations=it,
        history=history,
    )
    if p.all_exponential:
        a = aggregate_tolerance(p)
        report = replace(report, aggregate_a=a, log_mgf_at_a=cgf(d, a))
    return alloc, report
