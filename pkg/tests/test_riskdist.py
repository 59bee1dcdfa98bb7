import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from borch_lln.errors import InputError
from borch_lln.riskdist import (SERIES_THRESHOLD, DiscreteDistribution, _certainty_series, cgf,
                                entropic_certainty, expectation, variance)

POINT = DiscreteDistribution.point_mass(3.0)
BERN = DiscreteDistribution([0.0, 1.0], [0.5, 0.5])
THREE = DiscreteDistribution([0.0, 2.0, 10.0], [0.25, 0.25, 0.5])


def exact_moments(values, probs):
    """Mean and variance in rational arithmetic."""
    vs = [Fraction(v) for v in values]
    ps = [Fraction(p) for p in probs]
    mean = sum(v * p for v, p in zip(vs, ps))
    return mean, sum(p * (v - mean) ** 2 for v, p in zip(vs, ps))


def mp_cgf(d, s):
    mpmath.mp.dps = 50
    total = mpmath.fsum(mpmath.mpf(float(p)) * mpmath.exp(mpmath.mpf(s) * mpmath.mpf(float(v)))
                        for v, p in zip(d.values, d.probabilities))
    return float(mpmath.log(total))


@st.composite
def distributions(draw, max_atoms=8, span=20.0):
    cents = draw(st.lists(st.integers(int(-100 * span), int(100 * span)), min_size=1, max_size=max_atoms,
                          unique=True))
    values = [c / 100.0 for c in cents]
    weights = draw(st.lists(st.floats(0.05, 1.0), min_size=len(values), max_size=len(values)))
    w = np.asarray(weights)
    return DiscreteDistribution(values, w / w.sum())


class TestConstruction:
    def test_sorted_and_frozen(self):
        d = DiscreteDistribution([3.0, 1.0, 2.0], [0.2, 0.3, 0.5])
        assert list(d.values) == [1.0, 2.0, 3.0]
        assert list(d.probabilities) == [0.3, 0.5, 0.2]
        with pytest.raises(ValueError):
            d.values[0] = 5.0

    @pytest.mark.parametrize("values, probs", [
        ([0.0, 1.0], [0.5, 0.4]),
        ([0.0, 1.0], [1.0, 0.0]),
        ([0.0, 1.0], [1.5, -0.5]),
        ([0.0, 0.0], [0.5, 0.5]),
        ([0.0, math.inf], [0.5, 0.5]),
        ([], []),
        ([0.0], [0.5, 0.5]),
    ])
    def test_rejects_invalid(self, values, probs):
        with pytest.raises(InputError):
            DiscreteDistribution(values, probs)

    def test_normalisation_tolerance(self):
        DiscreteDistribution([0.0, 1.0], [0.5, 0.5 + 5e-13])
        with pytest.raises(InputError):
            DiscreteDistribution([0.0, 1.0], [0.5, 0.5 + 5e-12])

    def test_from_samples_merges_duplicates(self):
        d = DiscreteDistribution.from_samples([1.0, 2.0, 1.0, 1.0 + 1e-13, 3.0])
        assert d.size == 3
        np.testing.assert_allclose(d.probabilities, [0.6, 0.2, 0.2])

    def test_read_file(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("# loss\n\n0, 0.25\n2,0.25\n10,0.5\n")
        d = DiscreteDistribution.read(f)
        assert list(d.values) == [0.0, 2.0, 10.0]

    @pytest.mark.parametrize("text, line", [
        ("0,0.5\n1;0.5\n", 2),
        ("0,0.5\nx,0.5\n", 2),
        ("# c\n0,0.5,1\n", 2),
    ])
    def test_read_reports_line(self, tmp_path, text, line):
        f = tmp_path / "bad.csv"
        f.write_text(text)
        with pytest.raises(InputError) as exc:
            DiscreteDistribution.read(f)
        assert exc.value.line == line
        assert f":{line}" in str(exc.value)


class TestMoments:
    def test_expectation_examples(self):
        assert expectation(POINT) == 3.0
        assert expectation(BERN) == 0.5
        mean, _ = exact_moments([0, 2, 10], [0.25, 0.25, 0.5])
        assert expectation(THREE) == pytest.approx(float(mean), abs=1e-15)
        assert float(mean) == 5.5

    def test_variance_examples(self):
        assert variance(POINT) == 0.0
        assert variance(BERN) == 0.25
        _, var = exact_moments([0, 2, 10], [0.25, 0.25, 0.5])
        assert var == Fraction(83, 4)
        assert variance(THREE) == pytest.approx(float(var), abs=1e-13)

    @given(distributions())
    def test_variance_nonnegative(self, d):
        assert variance(d) >= 0.0


class TestCgf:
    def test_zero_and_point_mass(self):
        assert cgf(THREE, 0.0) == 0.0
        for s in (-3.0, 0.1, 7.0):
            assert cgf(POINT, s) == s * 3.0

    def test_bernoulli(self):
        expected = math.log((1.0 + math.e) / 2.0)
        assert cgf(BERN, 1.0) == pytest.approx(expected, rel=1e-15)
        assert expected == pytest.approx(0.620115, abs=1e-6)

    @given(distributions(), st.floats(-3.0, 3.0))
    @settings(max_examples=50, deadline=None)
    def test_matches_high_precision(self, d, s):
        ref = mp_cgf(d, s)
        assert cgf(d, s) == pytest.approx(ref, rel=1e-13, abs=1e-14)

    @given(distributions(), st.floats(-2.0, 2.0), st.floats(0.01, 2.0), st.floats(0.01, 2.0))
    def test_convexity(self, d, s1, g1, g2):
        s2, s3 = s1 + g1, s1 + g1 + g2
        interp = cgf(d, s1) + (cgf(d, s3) - cgf(d, s1)) * (s2 - s1) / (s3 - s1)
        assert cgf(d, s2) <= interp + 1e-12 * (1.0 + abs(interp))

    @given(distributions(span=10.0), st.floats(-2.0, 2.0), st.floats(-10.0, 10.0))
    def test_translation(self, d, s, c):
        shifted = DiscreteDistribution(d.values + c, d.probabilities)
        assert cgf(shifted, s) == pytest.approx(cgf(d, s) + s * c, abs=1e-12 * (1.0 + abs(s * c)))

    def test_no_overflow(self):
        d = DiscreteDistribution([0.0, 500.0, 1000.0], [0.2, 0.3, 0.5])
        assert math.isfinite(cgf(d, 10.0))
        assert cgf(d, 10.0) == pytest.approx(10_000.0 + math.log(0.5 + 0.3 * math.exp(-5000.0)), rel=1e-15)


class TestEntropicCertainty:
    def test_examples(self):
        assert entropic_certainty(THREE, 0.0) == 5.5
        for s in (0.0, 1e-8, 1.0, 20.0):
            assert entropic_certainty(POINT, s) == 3.0
        assert entropic_certainty(BERN, 1.0) == pytest.approx(math.log((1 + math.e) / 2), rel=1e-15)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            entropic_certainty(BERN, -0.1)

    @given(distributions(), st.floats(0.0, 5.0))
    def test_bounded_by_support(self, d, s):
        ce = entropic_certainty(d, s)
        assert d.values[0] - 1e-12 <= ce <= d.values[-1] + 1e-12

    @given(distributions())
    @settings(deadline=None)
    def test_nondecreasing(self, d):
        grid = np.concatenate(([0.0], np.geomspace(1e-9, 5.0, 80)))
        if d.span > 0:
            thr = SERIES_THRESHOLD / d.span
            grid = np.sort(np.concatenate((grid, [thr * (1 - 1e-9), thr, thr * (1 + 1e-9)])))
        ce = [entropic_certainty(d, s) for s in grid]
        assert all(b >= a - 1e-12 for a, b in zip(ce, ce[1:]))

    @given(distributions())
    def test_continuity_at_crossover(self, d):
        if d.span == 0:
            return
        s = SERIES_THRESHOLD / d.span
        assert abs(cgf(d, s) / s - _certainty_series(d, s)) <= 1e-10

    @pytest.mark.parametrize("s", [1e-9, 1e-6, 1e-5])
    def test_series_matches_high_precision(self, s):
        ref = mp_cgf(THREE, s) / s
        assert entropic_certainty(THREE, s) == pytest.approx(ref, abs=1e-12)
