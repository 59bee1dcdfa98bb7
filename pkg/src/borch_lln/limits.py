"""Large-panel behaviour of the optimal sharing.

With ``n`` identical reinsurers the originator's optimal retention tends to
``E[X]`` and each reinsurer's share to 0 in every state. ``sweep`` measures the
sup-norm distance to those limits over a grid of ``n``; ``estimate_rate``
fits the power law of the originator's error.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError
from .exchange import allocate_optimal
from .market import Agent, Pool, aggregate_tolerance
from .riskdist import DiscreteDistribution, expectation

log = logging.getLogger(__name__)

DEFAULT_N_GRID = (1, 2, 5, 10, 10**2, 10**3, 10**4, 10**5, 10**6)
MIN_FIT_N = 10
THREADS_ENV = "BORCH_LLN_THREADS"


@dataclass(frozen=True)
class SweepPoint:
    n: int
    sup_err_originator: float
    sup_reinsurer: float
    aggregate_a: float


def max_workers() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise InputError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise InputError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return value


def sweep_point(originator: Agent, template: Agent, d: DiscreteDistribution, n: int) -> SweepPoint:
    pool = Pool.homogeneous(originator, template, n)
    alloc, _ = allocate_optimal(pool, d)
    mean = expectation(d)
    return SweepPoint(
        n=n,
        sup_err_originator=float(np.max(np.abs(alloc.originator - mean))),
        sup_reinsurer=float(np.max(np.abs(alloc.shares[1]))),
        aggregate_a=aggregate_tolerance(pool),
    )


def sweep(originator: Agent, reinsurer_template: Agent, d: DiscreteDistribution,
          n_list: Sequence[int] = DEFAULT_N_GRID, workers: int | None = None) -> list[SweepPoint]:
    """Distance of the optimal shares from their large-panel limits for each ``n``."""
    ns = [int(n) for n in n_list]
    if not ns:
        raise InputError("n_list must not be empty")
    if any(n < 1 for n in ns):
        raise InputError("every n must be a positive integer")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise InputError("n_list must be strictly increasing")
    workers = max_workers() if workers is None else workers
    if workers > 1 and len(ns) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            points = list(ex.map(lambda n: sweep_point(originator, reinsurer_template, d, n), ns))
    else:
        points = [sweep_point(originator, reinsurer_template, d, n) for n in ns]
    return sorted(points, key=lambda pt: pt.n)


def estimate_rate(points: Sequence[SweepPoint], min_n: int = MIN_FIT_N) -> tuple[float, float]:
    """OLS fit ``log err = intercept + slope * log n`` over points with ``n >= min_n``.

    Points with zero error are dropped. Raises :class:`InputError` when fewer
    than three points remain.
    """
    usable = [pt for pt in points if pt.n >= min_n]
    zero = [pt.n for pt in usable if not pt.sup_err_originator > 0.0]
    if zero:
        log.info("rate fit: dropping zero-error points at n=%s", zero)
    usable = [pt for pt in usable if pt.sup_err_originator > 0.0]
    if len(usable) < 3:
        raise InputError(f"rate fit needs at least 3 points with n >= {min_n} and positive error, got {len(usable)}")
    logn = np.log([pt.n for pt in usable])
    loge = np.log([pt.sup_err_originator for pt in usable])
    slope, intercept = np.polyfit(logn, loge, 1)
    return float(slope), float(intercept)
