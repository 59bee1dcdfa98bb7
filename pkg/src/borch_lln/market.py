"""Utility families, agents and reinsurance pools.

Agent 0 of a :class:`Pool` is the originator, agents ``1..n`` are reinsurers.
A pool stores its reinsurers as entries with a multiplicity, so a homogeneous
panel of a million reinsurers is one entry with count ``10**6``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, InputError, PoolError


class Utility:
    """Strictly increasing, strictly concave utility of terminal wealth."""

    def value(self, x):
        raise NotImplementedError

    def marginal(self, x):
        raise NotImplementedError

    def log_marginal(self, x):
        return np.log(self.marginal(x))

    def inverse_marginal(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(~(y > 0.0)) or np.any(~np.isfinite(y)):
            raise DomainError(f"marginal utility level must be positive and finite, got {y}")
        return self.inverse_log_marginal(np.log(y))

    def inverse_log_marginal(self, log_y):
        """Wealth ``x`` with ``log u'(x) = log_y``; used by the state solver."""
        raise NotImplementedError

    def risk_tolerance(self, x):
        """``-u'(x) / u''(x)``."""
        raise NotImplementedError

    def in_domain(self, x):
        return np.isfinite(x)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if not np.all(self.in_domain(x)):
            raise DomainError(f"{self!r} is undefined at {x}")
        return x

    @property
    def is_exponential(self) -> bool:
        return False


@dataclass(frozen=True)
class Exponential(Utility):
    """CARA utility ``(1 - exp(-a x)) / a``."""

    a: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and self.a > 0.0):
            raise InputError(f"risk aversion must be positive, got {self.a!r}")

    def value(self, x):
        x = self._check(x)
        return -np.expm1(-self.a * x) / self.a

    def marginal(self, x):
        x = self._check(x)
        return np.exp(-self.a * x)

    def log_marginal(self, x):
        return -self.a * self._check(x)

    def inverse_log_marginal(self, log_y):
        return -np.asarray(log_y, dtype=float) / self.a

    def risk_tolerance(self, x):
        return np.full_like(np.asarray(x, dtype=float), 1.0 / self.a)

    @property
    def is_exponential(self) -> bool:
        return True


@dataclass(frozen=True)
class Power(Utility):
    """CRRA utility ``x**(1-gamma) / (1-gamma)`` on ``x > 0``."""

    gamma: float

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma > 0.0) or self.gamma == 1.0:
            raise InputError(f"gamma must be positive and != 1, got {self.gamma!r}")

    def in_domain(self, x):
        return np.isfinite(x) & (x > 0.0)

    def value(self, x):
        x = self._check(x)
        return x ** (1.0 - self.gamma) / (1.0 - self.gamma)

    def marginal(self, x):
        return self._check(x) ** -self.gamma

    def log_marginal(self, x):
        return -self.gamma * np.log(self._check(x))

    def inverse_log_marginal(self, log_y):
        return np.exp(-np.asarray(log_y, dtype=float) / self.gamma)

    def risk_tolerance(self, x):
        return np.asarray(x, dtype=float) / self.gamma


@dataclass(frozen=True)
class Quadratic(Utility):
    """Quadratic utility ``x - x**2 / (2b)`` on ``x < b``."""

    b: float

    def __post_init__(self):
        if not (np.isfinite(self.b) and self.b > 0.0):
            raise InputError(f"satiation level must be positive, got {self.b!r}")

    def in_domain(self, x):
        return np.isfinite(x) & (x < self.b)

    def value(self, x):
        x = self._check(x)
        return x - x * x / (2.0 * self.b)

    def marginal(self, x):
        return 1.0 - self._check(x) / self.b

    def log_marginal(self, x):
        return np.log1p(-self._check(x) / self.b)

    def inverse_log_marginal(self, log_y):
        return -self.b * np.expm1(np.asarray(log_y, dtype=float))

    def risk_tolerance(self, x):
        return self.b - np.asarray(x, dtype=float)


def utility_value(u: Utility, x):
    return u.value(x)


def marginal(u: Utility, x):
    return u.marginal(x)


def inverse_marginal(u: Utility, y):
    return u.inverse_marginal(y)


@dataclass(frozen=True)
class Agent:
    utility: Utility
    wealth: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.wealth):
            raise InputError(f"wealth must be finite, got {self.wealth!r}")
        if not self.utility.in_domain(np.float64(self.wealth)):
            raise InputError(f"wealth {self.wealth!r} outside the domain of {self.utility!r}")

    @classmethod
    def exponential(cls, a: float, wealth: float = 0.0) -> "Agent":
        return cls(Exponential(float(a)), float(wealth))

    @property
    def a(self) -> float:
        if not self.utility.is_exponential:
            raise PoolError(f"{self.utility!r} has no exponential risk aversion")
        return self.utility.a

    def reservation_utility(self) -> float:
        return float(self.utility.value(self.wealth))


@dataclass(frozen=True)
class Pool:
    """Originator plus reinsurer entries, each entry standing for ``count`` agents."""

    originator: Agent
    reinsurers: tuple[Agent, ...] = ()
    counts: tuple[int, ...] = field(default=None)

    def __post_init__(self):
        reinsurers = tuple(self.reinsurers)
        counts = (1,) * len(reinsurers) if self.counts is None else tuple(int(c) for c in self.counts)
        if len(counts) != len(reinsurers):
            raise PoolError("one count per reinsurer entry required")
        if any(c < 1 for c in counts):
            raise PoolError("reinsurer counts must be >= 1")
        object.__setattr__(self, "reinsurers", reinsurers)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def homogeneous(cls, originator: Agent, template: Agent, n: int) -> "Pool":
        if n < 0:
            raise PoolError(f"n must be >= 0, got {n}")
        if n == 0:
            return cls(originator)
        return cls(originator, (template,), (n,))

    @classmethod
    def read(cls, path) -> "Pool":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise InputError(f"cannot read pool file: {exc.strerror}", source=path) from exc
        return parse_pool(text, source=path)

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def agents(self) -> tuple[Agent, ...]:
        """Originator followed by one representative per reinsurer entry."""
        return (self.originator,) + self.reinsurers

    @property
    def multiplicity(self) -> np.ndarray:
        return np.array((1,) + self.counts, dtype=float)

    @property
    def total_wealth(self) -> float:
        return self.originator.wealth + sum(c * r.wealth for c, r in zip(self.counts, self.reinsurers))

    @property
    def all_exponential(self) -> bool:
        return all(ag.utility.is_exponential for ag in self.agents)

    @property
    def is_homogeneous(self) -> bool:
        """At least one reinsurer and all reinsurers identical exponential agents."""
        if not self.reinsurers or not self.all_exponential:
            return False
        first = self.reinsurers[0]
        return all(r.a == first.a and r.wealth == first.wealth for r in self.reinsurers)

    def expanded(self) -> "Pool":
        reins = tuple(r for r, c in zip(self.reinsurers, self.counts) for _ in range(c))
        return Pool(self.originator, reins)

    def compressed(self) -> "Pool":
        """Merge a homogeneous panel into a single entry."""
        if not self.is_homogeneous or len(self.reinsurers) == 1:
            return self
        return Pool.homogeneous(self.originator, self.reinsurers[0], self.n)

    def risk_aversions(self) -> np.ndarray:
        """Per-entry exponential coefficients, originator first."""
        self._require_exponential()
        return np.array([ag.a for ag in self.agents])

    def wealths(self) -> np.ndarray:
        return np.array([ag.wealth for ag in self.agents])

    def _require_exponential(self):
        for i, ag in enumerate(self.agents):
            if not ag.utility.is_exponential:
                raise PoolError(f"agent entry {i} is not exponential: {ag.utility!r}")


def aggregate_tolerance(p: Pool) -> float:
    """Aggregate coefficient ``a`` with ``1/a = sum_i 1/a_i`` over all agents."""
    a = p.risk_aversions()
    return float(1.0 / np.dot(p.multiplicity, 1.0 / a))


def reinsurer_tolerance(p: Pool) -> float:
    """``sum_{i>=1} 1/a_i``, i.e. ``1/a - 1/a_0`` without the subtraction."""
    a = p.risk_aversions()
    return float(np.dot(p.multiplicity[1:], 1.0 / a[1:]))


_KV = re.compile(r"^\s*([A-Za-z_]\w*)\s*=\s*(\S+)\s*$")


def _parse_fields(body, lineno, source):
    out = {}
    for chunk in body.split(","):
        if not chunk.strip():
            continue
        m = _KV.match(chunk)
        if not m:
            raise InputError(f"expected key=value, got {chunk.strip()!r}", line=lineno, source=source)
        out[m.group(1)] = m.group(2)
    return out


def _take(fields, key, conv, lineno, source):
    if key not in fields:
        raise InputError(f"missing '{key}='", line=lineno, source=source)
    try:
        return conv(fields.pop(key))
    except ValueError:
        raise InputError(f"bad value for '{key}'", line=lineno, source=source) from None


def parse_pool(text: str, source=None) -> Pool:
    """Parse the pool config format.

    ::

        originator: a=1, w=0
        reinsurers: n=10, a=1, w=0      # homogeneous panel, or
        reinsurer: a=2, w=0.5           # repeated, one per reinsurer
    """
    originator = None
    reins: list[Agent] = []
    counts: list[int] = []
    seen_block = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise InputError(f"expected '<kind>: key=value, ...', got {raw.strip()!r}", line=lineno, source=source)
        kind, body = (s.strip() for s in line.split(":", 1))
        fields = _parse_fields(body, lineno, source)
        if kind == "reinsurers":
            n = _take(fields, "n", int, lineno, source)
            if n < 0:
                raise InputError("n must be >= 0", line=lineno, source=source)
        a = _take(fields, "a", float, lineno, source)
        w = _take(fields, "w", float, lineno, source)
        if fields:
            raise InputError(f"unknown keys {sorted(fields)}", line=lineno, source=source)
        try:
            agent = Agent.exponential(a, w)
        except InputError as exc:
            raise InputError(str(exc), line=lineno, source=source) from None
        if kind == "originator":
            if originator is not None:
                raise InputError("duplicate originator line", line=lineno, source=source)
            originator = agent
        elif kind == "reinsurers":
            if seen_block or reins:
                raise InputError("'reinsurers:' cannot be combined with other reinsurer lines", line=lineno, source=source)
            seen_block = True
            if n > 0:
                reins.append(agent)
                counts.append(n)
        elif kind == "reinsurer":
            if seen_block:
                raise InputError("'reinsurer:' cannot follow 'reinsurers:'", line=lineno, source=source)
            reins.append(agent)
            counts.append(1)
        else:
            raise InputError(f"unknown line kind {kind!r}", line=lineno, source=source)
    if originator is None:
        raise InputError("missing 'originator:' line", source=source)
    return Pool(originator, tuple(reins), tuple(counts))
