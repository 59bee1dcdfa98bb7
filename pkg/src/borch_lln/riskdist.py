"""Finite-support loss distributions and their moment / cumulant machinery.

A bounded loss is represented by finitely many atoms ``(value, probability)``.
All expectations are therefore exact finite sums, which is what lets the
solvers be checked against each other to near machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError

PROBABILITY_TOL = 1e-12
MERGE_TOL = 1e-12
# Below this value of |s|*(max - min) the certainty equivalent uses its
# cumulant series instead of cgf(s)/s.
SERIES_THRESHOLD = 1e-4


def log_mean_exp(exponents, probabilities) -> float:
    """Return ``log(sum(p * exp(e)))`` without overflow.

    The exponent is shifted by its maximum and the remainder is accumulated as
    ``log1p(sum(p * expm1(e - max)))``. That keeps full relative accuracy when
    the result is close to the shift, e.g. for tiny ``s`` in the cgf.
    """
    e = np.asarray(exponents, dtype=float)
    p = np.asarray(probabilities, dtype=float)
    shift = float(np.max(e))
    tail = float(np.dot(p, np.expm1(e - shift)))
    return shift + float(np.log1p(tail))


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Finite-support probability law, atoms sorted by value.

    Construction validates: finite distinct values, strictly positive
    probabilities, and total mass 1 within ``PROBABILITY_TOL``.
    """

    values: np.ndarray
    probabilities: np.ndarray

    def __init__(self, values: Sequence[float], probabilities: Sequence[float]):
        v = np.array(values, dtype=float).reshape(-1)
        p = np.array(probabilities, dtype=float).reshape(-1)
        if v.size == 0:
            raise InputError("distribution needs at least one atom")
        if v.shape != p.shape:
            raise InputError(f"{v.size} values but {p.size} probabilities")
        if not np.all(np.isfinite(v)):
            raise InputError("atom values must be finite")
        if not np.all(np.isfinite(p)) or np.any(p <= 0.0):
            raise InputError("atom probabilities must be finite and strictly positive")
        if np.any(p > 1.0):
            raise InputError("atom probability exceeds 1")
        total = float(np.sum(p))
        if abs(total - 1.0) > PROBABILITY_TOL:
            raise InputError(f"probabilities sum to {total!r}, not 1")
        order = np.argsort(v, kind="stable")
        v, p = v[order], p[order]
        if np.any(np.diff(v) == 0.0):
            raise InputError("atom values must be pairwise distinct")
        v.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probabilities", p)

    @classmethod
    def from_atoms(cls, atoms: Iterable[tuple[float, float]]) -> "DiscreteDistribution":
        pairs = list(atoms)
        if not pairs:
            raise InputError("distribution needs at least one atom")
        values, probs = zip(*pairs)
        return cls(values, probs)

    @classmethod
    def point_mass(cls, value: float) -> "DiscreteDistribution":
        return cls([value], [1.0])

    @classmethod
    def from_samples(cls, samples: Sequence[float]) -> "DiscreteDistribution":
        """Empirical law of ``samples``: equal weights, near-duplicates merged."""
        x = np.sort(np.asarray(samples, dtype=float).reshape(-1))
        if x.size == 0:
            raise InputError("no samples given")
        if not np.all(np.isfinite(x)):
            raise InputError("samples must be finite")
        values: list[float] = []
        counts: list[int] = []
        for xi in x:
            if values and xi - values[-1] <= MERGE_TOL:
                counts[-1] += 1
            else:
                values.append(float(xi))
                counts.append(1)
        return cls(values, np.asarray(counts, dtype=float) / x.size)

    @classmethod
    def read(cls, path) -> "DiscreteDistribution":
        """Parse a ``value,probability`` text file (``#`` comments allowed)."""
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise InputError(f"cannot read distribution file: {exc.strerror}", source=path) from exc
        atoms = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [s.strip() for s in line.split(",")]
            if len(parts) != 2:
                raise InputError(f"expected 'value,probability', got {raw!r}", line=lineno, source=path)
            try:
                atoms.append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise InputError(f"non-numeric field in {raw!r}", line=lineno, source=path) from None
        if not atoms:
            raise InputError("no atoms found", source=path)
        try:
            return cls.from_atoms(atoms)
        except InputError as exc:
            raise InputError(str(exc), source=path) from None

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def span(self) -> float:
        return float(self.values[-1] - self.values[0])

    @property
    def is_degenerate(self) -> bool:
        return self.size == 1

    def shifted(self, c: float) -> "DiscreteDistribution":
        return DiscreteDistribution(self.values + c, self.probabilities)

    def expect(self, f) -> float:
        """E[f(X)] for a vectorised ``f``."""
        return float(np.dot(self.probabilities, f(self.values)))

    def __repr__(self) -> str:
        atoms = ", ".join(f"{v:g}: {p:g}" for v, p in zip(self.values, self.probabilities))
        return f"DiscreteDistribution({{{atoms}}})"


def expectation(d: DiscreteDistribution) -> float:
    return float(np.dot(d.values, d.probabilities))


def variance(d: DiscreteDistribution) -> float:
    centered = d.values - expectation(d)
    return float(np.dot(d.probabilities, centered * centered))


def central_moment(d: DiscreteDistribution, k: int) -> float:
    centered = d.values - expectation(d)
    return float(np.dot(d.probabilities, centered**k))


def cgf(d: DiscreteDistribution, s: float) -> float:
    """Cumulant generating function ``log E[exp(s X)]``.

    Exactly 0 at ``s = 0`` and exactly ``s * c`` for a point mass at ``c``.
    """
    if s == 0.0:
        return 0.0
    return log_mean_exp(s * d.values, d.probabilities)


def entropic_certainty(d: DiscreteDistribution, s: float) -> float:
    """Entropic certainty equivalent ``cgf(d, s) / s`` for ``s >= 0``.

    For ``s * span < SERIES_THRESHOLD`` the cumulant series
    ``k1 + s k2/2 + s^2 k3/6 + s^3 k4/24`` is used; truncating after the
    variance term alone leaves a gap of order ``s^2 * span^3`` at the switch,
    which is above 1e-10 for spans of a few units.
    """
    if s < 0.0:
        raise ValueError(f"s must be >= 0, got {s!r}")
    mean = expectation(d)
    if s == 0.0 or d.is_degenerate:
        return mean
    if s * d.span < SERIES_THRESHOLD:
        return _certainty_series(d, s)
    return cgf(d, s) / s


def _certainty_series(d: DiscreteDistribution, s: float) -> float:
    mean = expectation(d)
    m2 = central_moment(d, 2)
    m3 = central_moment(d, 3)
    k4 = central_moment(d, 4) - 3.0 * m2 * m2
    return mean + s * (m2 / 2.0 + s * (m3 / 6.0 + s * k4 / 24.0))
