"""Brute-force checks of optimality that share no code path with the solvers.

``maximize_state_weighted`` searches a grid for the split of one loss value
maximising ``sum_i lambda_i u_i(w_i - x_i)``; since the weighted objective
is separable across states this is the whole weighted problem, one state at a
time. ``dominance_test`` samples feasible allocations around the optimum and
checks that none of them beats it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .exchange import Allocation, allocate_optimal, participation_residuals
from .market import Agent, Exponential, Pool, Power, Quadratic
from .riskdist import DiscreteDistribution, log_mean_exp

DOMINANCE_TOL = 1e-12
FEASIBILITY_TOL = 1e-12
PERTURBATION_SCALES = (0.01, 0.1, 1.0)


def _weighted_objective(agents, weights, shares):
    """``sum_i weights_i u_i(w_i - shares_i)``; ``-inf`` outside any domain.

    ``shares`` has the agent axis first and any trailing shape.
    """
    total = np.zeros(shares.shape[1:])
    with np.errstate(all="ignore"):
        for ag, wt, s in zip(agents, weights, shares):
            wealth = ag.wealth - s
            ok = ag.utility.in_domain(wealth)
            val = np.full(wealth.shape, -np.inf)
            if np.any(ok):
                val[ok] = ag.utility.value(wealth[ok])
            total = total + wt * val
    return total


def _scalar_utility(u):
    """Plain-float evaluator of ``u`` returning ``-inf`` off its domain."""
    if isinstance(u, Exponential):
        a = u.a
        return lambda w: -math.expm1(-a * w) / a
    if isinstance(u, Power):
        g = u.gamma
        return lambda w: w ** (1.0 - g) / (1.0 - g) if w > 0.0 else -math.inf
    if isinstance(u, Quadratic):
        b = u.b
        return lambda w: w - w * w / (2.0 * b) if w < b else -math.inf
    return lambda w: float(u.value(w)) if u.in_domain(w) else -math.inf


def maximize_state_weighted(agents: Sequence[Agent], lambdas: Sequence[float], x: float,
                            grid: int = 1001, sweeps: int = 500) -> np.ndarray:
    """Grid search plus line-search refinement for a 2 or 3 agent split of ``x``.

    Reinsurer shares range over ``[-R, x + R]`` with
    ``R = 10 (1 + |x| + sum |w_i|)`` on ``grid`` points per axis, the
    originator taking the remainder. The best grid point is refined by bounded
    Brent searches along each pairwise transfer direction (one agent's share
    against another's) until a full sweep stops improving the objective.
    """
    agents = list(agents)
    if len(agents) not in (2, 3):
        raise ValueError("the grid oracle handles 2 or 3 agents")
    if grid < 1000:
        raise ValueError("grid must have at least 1000 points per axis")
    weights = np.concatenate(([1.0], np.asarray(lambdas, dtype=float)))
    if weights.size != len(agents):
        raise ValueError(f"expected {len(agents) - 1} weights")
    reach = 10.0 * (1.0 + abs(x) + sum(abs(ag.wealth) for ag in agents))
    axis = np.linspace(-reach, x + reach, grid)
    h = float(axis[1] - axis[0])

    # separable objective: on an equispaced grid the originator's share only
    # depends on i + j, so each utility is evaluated on O(grid) points
    per_axis = [_weighted_objective([ag], [wt], axis[None, :]) for ag, wt in zip(agents[1:], weights[1:])]
    if len(agents) == 2:
        orig_share = x - axis
        vals = _weighted_objective(agents[:1], weights[:1], orig_share[None, :]) + per_axis[0]
        k = int(np.argmax(vals))
        best = [float(orig_share[k]), float(axis[k])]
    else:
        sums = 2.0 * axis[0] + h * np.arange(2 * grid - 1)
        f0 = _weighted_objective(agents[:1], weights[:1], (x - sums)[None, :])
        idx = np.add.outer(np.arange(grid), np.arange(grid))
        vals = f0[idx] + per_axis[0][:, None] + per_axis[1][None, :]
        i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
        best = [float(x - axis[i] - axis[j]), float(axis[i]), float(axis[j])]

    utils = [_scalar_utility(ag.utility) for ag in agents]
    wealth = [ag.wealth for ag in agents]
    wts = [float(w) for w in weights]

    def neg_objective(t, i, j, point):
        # move t from agent j to agent i
        total = 0.0
        for k, (u, wk, lam) in enumerate(zip(utils, wealth, wts)):
            share = point[k] + (t if k == i else -t if k == j else 0.0)
            val = u(wk - share)
            if val == -math.inf:
                return math.inf
            total += lam * val
        return -total

    pairs = [(i, j) for i in range(len(agents)) for j in range(i + 1, len(agents))]
    for _ in range(sweeps):
        start = neg_objective(0.0, 0, 1, best)
        for i, j in pairs:
            res = minimize_scalar(neg_objective, bounds=(-2 * h, 2 * h), args=(i, j, best),
                                  method="bounded", options={"xatol": 1e-13, "maxiter": 500})
            if res.fun < neg_objective(0.0, i, j, best):
                best[i] += res.x
                best[j] -= res.x
        # a sweep that gains only rounding noise means the point is stationary
        if start - neg_objective(0.0, 0, 1, best) <= 8 * np.finfo(float).eps * abs(start):
            break
    out = np.array(best)
    out[0] = x - out[1:].sum()
    return out


@dataclass
class DominanceReport:
    trials: int
    accepted: int = 0
    skipped: int = 0
    violations: int = 0
    weighted_violations: int = 0
    max_gap: float = float("-inf")
    max_weighted_gap: float = float("-inf")

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.weighted_violations == 0


def _exp_utilities(agent, shares, probs):
    """Expected utility for a batch of share vectors ``(..., states)``."""
    wealth = agent.wealth - shares
    return agent.utility.value(wealth) @ probs


def dominance_test(p: Pool, d: DiscreteDistribution, trials: int = 1000, seed: int = 42,
                   candidates: Sequence[Allocation] = (), max_attempts: int = 20,
                   repair: bool = True) -> DominanceReport:
    """Compare the optimum with random feasible allocations.

    Each reinsurer's optimal shares are perturbed by ``delta * Z``, ``Z``
    standard normal per state and centred under ``d``, ``delta`` cycling
    through 0.01, 0.1, 1; the originator share clears the market. A draw that
    violates its participation constraint by more than 1e-12 is redrawn up to
    ``max_attempts`` times. With ``repair`` a still-infeasible draw is then
    charged the premium ``(1/a_i) log E[exp(a_i X_i)]``, which puts it on the
    participation boundary; without it the trial is skipped.
    Explicit ``candidates`` are scored as given.
    """
    report = DominanceReport(trials=trials)
    if trials <= 0 and not candidates:
        return report
    p_full = p.expanded()
    opt, rep = allocate_optimal(p_full, d)
    probs = d.probabilities
    weights = np.concatenate(([1.0], rep.lambdas))
    agents = p_full.agents
    best_u0 = float(_exp_utilities(agents[0], opt.originator, probs))
    reservation = np.array([ag.reservation_utility() for ag in agents[1:]])

    def weighted(shares):  # shares (batch, agents, states)
        # lambda_i * (E u_i - u_i(w_i)); the constant shift cancels in comparisons
        out = np.zeros(shares.shape[0])
        for i, ag in enumerate(agents):
            eu = _exp_utilities(ag, shares[:, i], probs)
            if i:
                eu = eu - reservation[i - 1]
            out += weights[i] * eu
        return out

    best_weighted = float(weighted(opt.shares[None])[0])

    def record(batch):
        u0 = _exp_utilities(agents[0], batch[:, 0], probs)
        gaps = u0 - best_u0
        wgaps = weighted(batch) - best_weighted
        report.accepted += batch.shape[0]
        report.violations += int(np.sum(gaps > DOMINANCE_TOL))
        report.weighted_violations += int(np.sum(wgaps > DOMINANCE_TOL))
        report.max_gap = max(report.max_gap, float(np.max(gaps)))
        report.max_weighted_gap = max(report.max_weighted_gap, float(np.max(wgaps)))

    for cand in candidates:
        if cand.rows != opt.rows:
            cand = cand.expanded()
        record(np.asarray(cand.shares)[None])

    if trials <= 0:
        return report
    rng = np.random.default_rng(seed)
    n_rows, n_states = opt.shares.shape
    deltas = np.resize(np.asarray(PERTURBATION_SCALES), trials)[:, None]
    batch = np.empty((trials, n_rows, n_states))
    usable = np.ones(trials, dtype=bool)
    for i, ag in enumerate(agents[1:], start=1):
        shares = np.repeat(opt.shares[i][None, :], trials, axis=0)
        pending = np.arange(trials)
        for _ in range(max_attempts):
            z = rng.standard_normal((pending.size, n_states))
            z -= (z @ probs)[:, None]
            draw = opt.shares[i][None, :] + deltas[pending] * z
            ok = _exp_utilities(ag, draw, probs) - reservation[i - 1] >= -FEASIBILITY_TOL
            shares[pending[ok]] = draw[ok]
            pending = pending[~ok]
            if pending.size == 0:
                break
        if pending.size:
            if repair:
                draw = draw[~ok]
                a = ag.utility.a
                premium = np.array([log_mean_exp(a * row, probs) for row in draw]) / a
                shares[pending] = draw - premium[:, None]
            else:
                usable[pending] = False
        batch[:, i] = shares
    batch[:, 0] = d.values[None, :] - batch[:, 1:].sum(axis=1)
    # repaired draws sit on the boundary up to rounding; keep the stated feasibility test
    for i, ag in enumerate(agents[1:], start=1):
        usable &= _exp_utilities(ag, batch[:, i], probs) - reservation[i - 1] >= -FEASIBILITY_TOL
    report.skipped = int(np.sum(~usable))
    if np.any(usable):
        record(batch[usable])
    return report


def is_feasible(p: Pool, alloc: Allocation, d: DiscreteDistribution, tol: float = FEASIBILITY_TOL) -> bool:
    if np.any(alloc.clearing_error() > 1e-12 * (1.0 + np.abs(alloc.support))):
        return False
    return bool(np.all(participation_residuals(p, alloc, d) >= -tol))
