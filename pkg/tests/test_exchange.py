import io
import math

import numpy as np
import pytest

from borch_lln import csvio
from borch_lln.errors import PoolError
from borch_lln.exchange import (Allocation, allocate_given_lambdas, allocate_given_log_lambdas, allocate_optimal,
                                borch_spread, originator_gain, participation_residuals, solve_lambda_homogeneous,
                                solve_log_lambda_homogeneous)
from borch_lln.market import Agent, Pool
from borch_lln.riskdist import DiscreteDistribution
from suite import DISTRIBUTIONS, POOLS, cases

BERN = DISTRIBUTIONS["bernoulli"]
# log((1 + e^{1/2}) / 2), evaluated independently of the package
KAPPA_BERN = math.log1p(math.expm1(0.5) / 2.0)


def unit_pool(n=1, w0=0.0, w1=0.0, a0=1.0, a1=1.0):
    return Pool.homogeneous(Agent.exponential(a0, w0), Agent.exponential(a1, w1), n)


class TestHomogeneousLambda:
    def test_point_mass_at_zero(self):
        assert solve_lambda_homogeneous(unit_pool(3), DiscreteDistribution.point_mass(0.0)) == 1.0

    def test_bernoulli(self):
        assert KAPPA_BERN == pytest.approx(0.2809298, abs=1e-7)
        assert solve_log_lambda_homogeneous(unit_pool(), BERN) == pytest.approx(2 * KAPPA_BERN, rel=1e-14)
        assert solve_lambda_homogeneous(unit_pool(), BERN) == pytest.approx(1.7539, abs=1e-4)

    def test_bernoulli_wealthy_reinsurer(self):
        got = solve_log_lambda_homogeneous(unit_pool(w1=1.0), BERN)
        assert got == pytest.approx((KAPPA_BERN - 0.5 + 1.0) / 0.5, rel=1e-14)

    def test_errors(self):
        with pytest.raises(PoolError):
            solve_lambda_homogeneous(unit_pool(0), BERN)
        het = Pool(Agent.exponential(1.0), (Agent.exponential(1.0), Agent.exponential(2.0)))
        with pytest.raises(PoolError):
            solve_lambda_homogeneous(het, BERN)

    def test_large_panel_stays_in_log_space(self):
        # log lambda_1 = (a0/a) k - a0 w0, beyond exp's range
        n = 10**6
        a = 1.0 / (n + 1)
        ell = solve_log_lambda_homogeneous(unit_pool(n, w0=-1000.0), BERN)
        assert ell == pytest.approx((n + 1) * math.log1p(math.expm1(a) / 2.0) + 1000.0, rel=1e-12)


class TestGivenLambdas:
    def test_symmetric_split(self):
        alloc = allocate_given_lambdas(unit_pool(), [1.0], BERN)
        np.testing.assert_allclose(alloc.shares, [[0.0, 0.5], [0.0, 0.5]], atol=1e-15)

    def test_shares_proportional_to_tolerance(self):
        p = Pool(Agent.exponential(1.0), (Agent.exponential(2.0), Agent.exponential(2.0)))
        x = BERN.values
        alloc = allocate_given_lambdas(p, [1.0, 1.0], BERN)
        np.testing.assert_allclose(alloc.shares, [x / 2, x / 4, x / 4], atol=1e-15)

    def test_compressed_pool_accepts_per_reinsurer_weights(self):
        alloc = allocate_given_lambdas(unit_pool(3), [1.0, 2.0, 3.0], BERN)
        assert alloc.rows == 4
        assert np.max(alloc.clearing_error()) <= 1e-12

    @pytest.mark.parametrize("lam", [[], [1.0, 1.0], [0.0], [-1.0], [math.inf]])
    def test_bad_weights(self, lam):
        with pytest.raises(ValueError):
            allocate_given_lambdas(unit_pool(), lam, BERN)

    @pytest.mark.parametrize("pool_name", [k for k in POOLS if k.startswith("hom")])
    def test_homogeneous_consistency(self, pool_name):
        p = POOLS[pool_name]
        for d in DISTRIBUTIONS.values():
            ell = solve_log_lambda_homogeneous(p, d)
            via_lambda = allocate_given_log_lambdas(p, [ell], d)
            closed, _ = allocate_optimal(p, d)
            np.testing.assert_allclose(via_lambda.shares, closed.shares, rtol=0, atol=1e-10)
            res = participation_residuals(p, via_lambda, d)
            assert np.max(np.abs(res)) < 1e-10


class TestOptimal:
    def test_no_reinsurers(self):
        alloc, rep = allocate_optimal(unit_pool(0), BERN)
        np.testing.assert_array_equal(alloc.originator, BERN.values)
        assert rep.participation_residuals.size == 0
        assert originator_gain(unit_pool(0), alloc, BERN) == 0.0

    @pytest.mark.parametrize("pool_name", list(POOLS))
    def test_point_mass(self, pool_name):
        p = POOLS[pool_name]
        d = DiscreteDistribution.point_mass(2.0)
        alloc, rep = allocate_optimal(p, d)
        assert alloc.originator[0] == 2.0
        assert np.all(alloc.shares[1:] == 0.0)
        assert rep.originator_gain == 0.0

    def test_bernoulli_example(self):
        alloc, rep = allocate_optimal(unit_pool(), BERN)
        np.testing.assert_allclose(alloc.shares[1], [-KAPPA_BERN, 0.5 - KAPPA_BERN], rtol=0, atol=1e-15)
        np.testing.assert_allclose(alloc.originator, [KAPPA_BERN, 0.5 + KAPPA_BERN], rtol=0, atol=1e-15)
        # reinsurer is indifferent: E[exp(X1)] = 1 by direct summation
        assert 0.5 * (math.exp(alloc.shares[1, 0]) + math.exp(alloc.shares[1, 1])) == pytest.approx(1.0, abs=1e-12)
        assert rep.log_mgf_at_a == pytest.approx(KAPPA_BERN, rel=1e-15)
        assert rep.aggregate_a == 0.5

    def test_bernoulli_gain_positive(self):
        p = unit_pool()
        alloc, _ = allocate_optimal(p, BERN)
        direct = (0.5 * sum(-math.expm1(x0) for x0 in alloc.originator)
                  - 0.5 * sum(-math.expm1(x) for x in BERN.values))
        g = originator_gain(p, alloc, BERN)
        assert g > 0.0
        assert g == pytest.approx(direct, rel=1e-12)

    @pytest.mark.parametrize("pool_name, dist_name", cases())
    def test_invariants(self, pool_name, dist_name):
        p, d = POOLS[pool_name], DISTRIBUTIONS[dist_name]
        alloc, rep = allocate_optimal(p, d)
        assert np.max(alloc.clearing_error()) <= 1e-12
        assert rep.max_abs_residual <= 1e-10
        assert np.max(borch_spread(p, alloc, rep.log_lambdas)) <= 1e-9
        assert rep.originator_gain >= -1e-15
        if d.size > 1:
            assert np.all(alloc.shares[1:].min(axis=1) < 0.0)

    @pytest.mark.parametrize("pool_name", list(POOLS))
    def test_wealth_independence(self, pool_name):
        p = POOLS[pool_name]
        rng = np.random.default_rng(7)
        moved = Pool(Agent.exponential(p.originator.a, p.originator.wealth + 3.0),
                     tuple(Agent.exponential(r.a, r.wealth + rng.uniform(-5, 5)) for r in p.reinsurers),
                     p.counts)
        for d in DISTRIBUTIONS.values():
            a, _ = allocate_optimal(p, d)
            b, _ = allocate_optimal(moved, d)
            np.testing.assert_allclose(a.originator, b.originator, rtol=0, atol=1e-12)

    def test_heterogeneous_shares_follow_tolerance(self):
        p = POOLS["het-n3"]
        d = DISTRIBUTIONS["skewed3"]
        alloc, rep = allocate_optimal(p, d)
        a = rep.aggregate_a
        for i, r in enumerate(p.reinsurers, start=1):
            want = (a * d.values - rep.log_mgf_at_a) / r.a
            np.testing.assert_allclose(alloc.shares[i], want, rtol=0, atol=1e-12)


class TestResiduals:
    def test_zero_shares(self):
        p = unit_pool(2, w1=0.3)
        alloc = Allocation(BERN.values, BERN.probabilities, [BERN.values, [0.0, 0.0]], [1, 2])
        np.testing.assert_array_equal(participation_residuals(p, alloc, BERN), [0.0])

    def test_bearing_everything_hurts(self):
        p = unit_pool()
        alloc = Allocation(BERN.values, BERN.probabilities, [[0.0, 0.0], BERN.values], [1, 1])
        assert participation_residuals(p, alloc, BERN)[0] < 0.0

    def test_dimension_mismatch(self):
        alloc, _ = allocate_optimal(unit_pool(), BERN)
        with pytest.raises(ValueError):
            participation_residuals(POOLS["het-n3"], alloc, BERN)
        with pytest.raises(ValueError):
            participation_residuals(unit_pool(), alloc, DISTRIBUTIONS["skewed3"])

    def test_non_finite_shares_rejected(self):
        with pytest.raises(Exception):
            Allocation([0.0], [1.0], [[math.nan]], [1])

    def test_allocation_is_read_only(self):
        alloc, _ = allocate_optimal(unit_pool(), BERN)
        with pytest.raises(ValueError):
            alloc.shares[0, 0] = 1.0


class TestCsv:
    @pytest.mark.parametrize("pool_name", ["hom-n10-a01.0", "het-n3"])
    def test_round_trip(self, pool_name, tmp_path):
        p = POOLS[pool_name]
        d = DISTRIBUTIONS["bimodal50"]
        alloc, _ = allocate_optimal(p, d)
        buf = io.StringIO()
        csvio.write_allocation(buf, alloc, ["kappa=1"])
        text = buf.getvalue()
        assert text.splitlines()[-1] == "# kappa=1"
        if p.is_homogeneous:
            assert text.startswith("state_value,probability,x0,x_reinsurer,multiplicity\n")
        else:
            assert text.startswith("state_value,probability,x0,x_reinsurer_1,x_reinsurer_2,x_reinsurer_3\n")
        path = tmp_path / "a.csv"
        path.write_text(text)
        back = csvio.read_allocation(path)
        np.testing.assert_array_equal(back.shares, alloc.shares)
        np.testing.assert_array_equal(back.support, alloc.support)
