"""Closed-form Pareto-optimal risk exchange for exponential pools.

With CARA utilities every optimal share is affine in the loss ``X``:

* originator  ``X0 = (a/a0) X + (1/a - 1/a0) k``
* reinsurer i ``Xi = (a X - k) / ai``

where ``1/a = sum 1/ai`` and ``k = log E[exp(a X)]``. The Lagrangian weights
``lambda_i`` (``lambda_0 = 1``) are kept in log form: for large panels they
overflow a double long before anything else does.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import PoolError, SolverError
from .market import Pool, aggregate_tolerance, reinsurer_tolerance
from .riskdist import DiscreteDistribution, cgf, expectation, log_mean_exp

CLEARING_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Allocation:
    """Per-agent, per-state shares of the loss.

    Row 0 is the originator; row ``i >= 1`` is a reinsurer entry standing for
    ``multiplicity[i]`` identical reinsurers.
    """

    support: np.ndarray
    probabilities: np.ndarray
    shares: np.ndarray
    multiplicity: np.ndarray

    def __post_init__(self):
        shares = np.atleast_2d(np.asarray(self.shares, dtype=float))
        mult = np.asarray(self.multiplicity, dtype=float)
        support = np.asarray(self.support, dtype=float)
        if shares.shape != (mult.size, support.size):
            raise ValueError(f"shares shape {shares.shape} does not match {mult.size} rows x {support.size} states")
        if not np.all(np.isfinite(shares)):
            raise SolverError("allocation has non-finite shares")
        for name, arr in (("support", support), ("probabilities", np.asarray(self.probabilities, dtype=float)),
                          ("shares", shares), ("multiplicity", mult)):
            arr = np.array(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def originator(self) -> np.ndarray:
        return self.shares[0]

    @property
    def rows(self) -> int:
        return self.shares.shape[0]

    def totals(self) -> np.ndarray:
        return self.multiplicity @ self.shares

    def clearing_error(self) -> np.ndarray:
        """Per-state ``|sum_i X_i - X|`` with multiplicity."""
        return np.abs(self.totals() - self.support)

    def expanded(self) -> "Allocation":
        reps = self.multiplicity.astype(int)
        return Allocation(self.support, self.probabilities, np.repeat(self.shares, reps, axis=0),
                          np.ones(int(reps.sum())))

    def with_shares(self, shares) -> "Allocation":
        return Allocation(self.support, self.probabilities, shares, self.multiplicity)


@dataclass(frozen=True, eq=False)
class SolveReport:
    log_lambdas: np.ndarray
    log_mgf_at_a: float
    aggregate_a: float
    total_wealth: float
    participation_residuals: np.ndarray
    originator_utility: float
    originator_utility_unshared: float
    method: str = "closed-form"
    iterations: int = 0
    history: list = field(default_factory=list)

    @property
    def lambdas(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_lambdas)

    @property
    def max_abs_residual(self) -> float:
        r = self.participation_residuals
        return float(np.max(np.abs(r))) if r.size else 0.0

    @property
    def originator_gain(self) -> float:
        return self.originator_utility - self.originator_utility_unshared


def _check_shape(p: Pool, alloc: Allocation, d: DiscreteDistribution):
    if alloc.rows != len(p.agents):
        raise ValueError(f"allocation has {alloc.rows} rows, pool has {len(p.agents)} entries")
    if alloc.support.shape != d.values.shape or not np.allclose(alloc.support, d.values, rtol=0, atol=1e-12):
        raise ValueError("allocation support does not match the distribution")


def _verify_clearing(alloc: Allocation):
    scale = 1.0 + alloc.multiplicity @ np.abs(alloc.shares)
    bad = alloc.clearing_error() > CLEARING_TOL * scale
    if np.any(bad):
        k = int(np.argmax(bad))
        raise SolverError(f"market clearing violated at state {alloc.support[k]!r}")


def solve_log_lambda_homogeneous(p: Pool, d: DiscreteDistribution) -> float:
    """``log lambda_1`` from the binding condition of a homogeneous panel.

    The condition reads ``(1 - n a/a1) log lambda_1 = k - a w + a1 w1`` with
    ``k = log E[exp(+a X)]``. The factor is evaluated as ``a1 / (n a0 + a1)``.
    """
    if p.n == 0:
        raise PoolError("pool has no reinsurers")
    if not p.is_homogeneous:
        raise PoolError("reinsurers must share the same risk aversion and wealth")
    a0 = p.originator.a
    rep = p.reinsurers[0]
    a1, w1, n = rep.a, rep.wealth, p.n
    a = aggregate_tolerance(p)
    kappa = cgf(d, a)
    factor = a1 / (n * a0 + a1)
    return (kappa - a * p.total_wealth + a1 * w1) / factor


def solve_lambda_homogeneous(p: Pool, d: DiscreteDistribution) -> float:
    with np.errstate(over="ignore"):
        return float(np.exp(solve_log_lambda_homogeneous(p, d)))


def allocate_given_log_lambdas(p: Pool, log_lambdas, d: DiscreteDistribution) -> Allocation:
    """Borch allocation for fixed weights, one log-weight per reinsurer entry."""
    ell = np.asarray(log_lambdas, dtype=float).reshape(-1)
    if ell.size != len(p.reinsurers):
        raise ValueError(f"expected {len(p.reinsurers)} weights, got {ell.size}")
    if not np.all(np.isfinite(ell)):
        raise ValueError("weights must be positive and finite")
    ai = p.risk_aversions()
    wi = p.wealths()
    mult = p.multiplicity
    a = aggregate_tolerance(p)
    ell_all = np.concatenate(([0.0], ell))
    weighted = float(np.dot(mult[1:], ell / ai[1:]))
    x = d.values
    shares = ((a * (x[None, :] - p.total_wealth)) / ai[:, None]
              + (wi - ell_all / ai + a * weighted / ai)[:, None])
    alloc = Allocation(x, d.probabilities, shares, mult)
    _verify_clearing(alloc)
    return alloc


def allocate_given_lambdas(p: Pool, lambdas: Sequence[float], d: DiscreteDistribution) -> Allocation:
    """Borch allocation for weights ``lambdas`` (``lambda_0 = 1`` implicit).

    ``lambdas`` has one entry per reinsurer entry of ``p``, or one per
    reinsurer (``p.n``), in which case a compressed pool is expanded.
    """
    lam = np.asarray(lambdas, dtype=float).reshape(-1)
    if np.any(~(lam > 0.0)) or not np.all(np.isfinite(lam)):
        raise ValueError("weights must be positive and finite")
    if lam.size != len(p.reinsurers) and lam.size == p.n:
        p = p.expanded()
    return allocate_given_log_lambdas(p, np.log(lam), d)


def _exp_expected_utility_gap(a, w, shares, probs):
    # E[u(w - X)] - u(w) = -(exp(-a w)/a) * expm1(log E[exp(a X)])
    return -np.exp(-a * w) / a * np.expm1(log_mean_exp(a * shares, probs))


def expected_utility(agent, shares, probs) -> float:
    return float(np.dot(probs, agent.utility.value(agent.wealth - np.asarray(shares))))


def participation_residuals(p: Pool, alloc: Allocation, d: DiscreteDistribution) -> np.ndarray:
    """Per reinsurer entry, ``E[u_i(w_i - X_i)] - u_i(w_i)``."""
    _check_shape(p, alloc, d)
    out = np.empty(len(p.reinsurers))
    for j, agent in enumerate(p.reinsurers):
        shares = alloc.shares[j + 1]
        if agent.utility.is_exponential:
            out[j] = _exp_expected_utility_gap(agent.a, agent.wealth, shares, d.probabilities)
        else:
            out[j] = expected_utility(agent, shares, d.probabilities) - agent.reservation_utility()
    return out


def originator_gain(p: Pool, alloc: Allocation, d: DiscreteDistribution) -> float:
    """``E[u0(w0 - X0)] - E[u0(w0 - X)]``: the originator's gain from sharing."""
    _check_shape(p, alloc, d)
    orig = p.originator
    if orig.utility.is_exponential:
        a, w = orig.a, orig.wealth
        k_shared = log_mean_exp(a * alloc.originator, d.probabilities)
        k_alone = cgf(d, a)
        return float(-np.exp(-a * w + k_alone) / a * np.expm1(k_shared - k_alone))
    return (expected_utility(orig, alloc.originator, d.probabilities)
            - expected_utility(orig, d.values, d.probabilities))


def borch_log_values(p: Pool, alloc: Allocation, log_lambdas) -> np.ndarray:
    """``log(lambda_i u_i'(w_i - X_i))`` per entry and state."""
    ell = np.concatenate(([0.0], np.asarray(log_lambdas, dtype=float)))
    rows = [ell[i] + ag.utility.log_marginal(ag.wealth - alloc.shares[i]) for i, ag in enumerate(p.agents)]
    return np.vstack(rows)


def borch_spread(p: Pool, alloc: Allocation, log_lambdas) -> np.ndarray:
    """Per-state relative spread ``max/min - 1`` of the weighted marginals."""
    logs = borch_log_values(p, alloc, log_lambdas)
    return np.expm1(logs.max(axis=0) - logs.min(axis=0))


def recover_log_lambdas(p: Pool, kappa: float) -> np.ndarray:
    """Weights under which the closed-form allocation is the Borch solution.

    ``log lambda_i = a0 (X0 - w0) - ai (Xi - wi)`` is state-free and equals
    ``(a0/a) k - a0 w0 + ai wi``.
    """
    ai = p.risk_aversions()
    wi = p.wealths()
    a0_over_a = 1.0 + ai[0] * reinsurer_tolerance(p)
    return a0_over_a * kappa - ai[0] * wi[0] + ai[1:] * wi[1:]


def allocate_optimal(p: Pool, d: DiscreteDistribution) -> tuple[Allocation, SolveReport]:
    """Optimal sharing of ``d`` in ``p`` with every participation constraint binding.

    Shares are evaluated as ``X0 = m + (a/a0)(X - m) + (1/a - 1/a0) k_c`` and
    ``Xi = (a (X - m) - k_c) / ai`` with ``m = E[X]`` and
    ``k_c = log E[exp(a (X - m))] = k - a m``.
    """
    ai = p.risk_aversions()
    a = aggregate_tolerance(p)
    kappa = cgf(d, a)
    x = d.values
    # centred form: exact for a point mass and free of the a*E[X] cancellation
    # that dominates the originator's error for large panels
    mean = expectation(d)
    dev = x - mean
    kappa_c = log_mean_exp(a * dev, d.probabilities)
    # a/a0 = 1 / (1 + a0 * sum_{i>=1} 1/ai), kept subtraction-free for large n
    tol_rest = reinsurer_tolerance(p)
    shares = np.empty((ai.size, x.size))
    shares[0] = mean + dev / (1.0 + ai[0] * tol_rest) + tol_rest * kappa_c
    shares[1:] = (a * dev[None, :] - kappa_c) / ai[1:, None]
    alloc = Allocation(x, d.probabilities, shares, p.multiplicity)
    _verify_clearing(alloc)
    orig = p.originator
    u_shared = orig.reservation_utility() + originator_gain(p, alloc, d) + _unshared_gap(p, d)
    report = SolveReport(
        log_lambdas=recover_log_lambdas(p, kappa),
        log_mgf_at_a=kappa,
        aggregate_a=a,
        total_wealth=p.total_wealth,
        participation_residuals=participation_residuals(p, alloc, d),
        originator_utility=u_shared,
        originator_utility_unshared=orig.reservation_utility() + _unshared_gap(p, d),
    )
    return alloc, report


def _unshared_gap(p: Pool, d: DiscreteDistribution) -> float:
    orig = p.originator
    return float(_exp_expected_utility_gap(orig.a, orig.wealth, d.values, d.probabilities))
