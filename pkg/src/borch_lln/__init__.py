"""Pareto-optimal sharing of a single bounded loss among exponential-utility agents."""

from .errors import (ConvergenceError, DomainError, InfeasibleStateError, InputError, PoolError,
                     SolverError)
from .exchange import (Allocation, SolveReport, allocate_given_lambdas, allocate_optimal, borch_spread,
                       originator_gain, participation_residuals, solve_lambda_homogeneous)
from .market import (Agent, Exponential, Pool, Power, Quadratic, aggregate_tolerance, inverse_marginal,
                     marginal, utility_value)
from .riskdist import DiscreteDistribution, cgf, entropic_certainty, expectation, variance

__version__ = "0.1.0"
