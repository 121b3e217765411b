import itertools

import numpy as np
import pytest

from allwas.errors import AllwasError, ConfigError, ShapeError
from allwas.transport import (
    DiscreteMeasure,
    barycenter_support_size,
    default_epsilon,
    exact_distance_oracle,
    ground_cost,
    sinkhorn_distance,
    sinkhorn_plans_batched,
    wasserstein_barycenter,
    wasserstein_barycenter_batch,
)
from conftest import random_measure


class TestGroundCost:
    def test_single_pair_euclidean(self):
        a = DiscreteMeasure.dirac([0.0])
        b = DiscreteMeasure.dirac([3.0])
        cost = ground_cost(a, b, p=2)
        assert cost.entries.shape == (1, 1)
        assert cost.entries[0, 0] == pytest.approx(9.0, abs=1e-12)

    def test_identity_zero_diagonal(self, rng):
        a = random_measure(rng, 5, 3)
        cost = ground_cost(a, a, p=2)
        assert np.all(np.abs(np.diag(cost.entries)) < 1e-12)

    def test_matches_double_loop(self, rng):
        a = random_measure(rng, 3, 2)
        b = random_measure(rng, 3, 2)
        for p in (1.0, 2.0, 3.0):
            cost = ground_cost(a, b, p=p).entries
            expected = np.empty((3, 3))
            for j in range(3):
                for k in range(3):
                    expected[j, k] = np.linalg.norm(a.support[j] - b.support[k]) ** p
            np.testing.assert_allclose(cost, expected, rtol=1e-10, atol=1e-12)

    def test_dimension_mismatch_names_both(self, rng):
        a = random_measure(rng, 3, 2)
        b = random_measure(rng, 3, 4)
        with pytest.raises(ShapeError, match=r"2.*4"):
            ground_cost(a, b)

    def test_p_below_one_rejected(self, rng):
        a = random_measure(rng, 2, 2)
        with pytest.raises(ConfigError):
            ground_cost(a, a, p=0.5)


class TestMeasureValidation:
    def test_weights_must_normalize(self):
        with pytest.raises(AllwasError):
            DiscreteMeasure(np.zeros((2, 1)), np.array([0.6, 0.6]))

    def test_nonfinite_support_rejected(self):
        with pytest.raises(AllwasError):
            DiscreteMeasure(np.array([[np.inf]]), np.array([1.0]))

    def test_1d_input_promoted(self):
        m = DiscreteMeasure.uniform(np.array([0.0, 1.0]))
        assert m.support.shape == (2, 1)


class TestSinkhorn:
    def test_identical_measures_zero_cost(self, rng):
        a = random_measure(rng, 6, 3)
        plan = sinkhorn_distance(a, a)
        assert plan.cost == pytest.approx(0.0, abs=1e-8)
        assert plan.converged
        assert plan.marginal_violation(a, a) < 1e-9

    def test_eps_nonpositive_rejected(self, rng):
        a = random_measure(rng, 3, 2)
        b = random_measure(rng, 3, 2)
        with pytest.raises(ConfigError):
            sinkhorn_distance(a, b, eps=0.0)

    def test_1d_uniform_matches_quantile_oracle(self, rng):
        for _ in range(10):
            n = int(rng.integers(3, 12))
            a = DiscreteMeasure.uniform(np.sort(rng.standard_normal(n)))
            b = DiscreteMeasure.uniform(np.sort(rng.standard_normal(n)))
            exact = exact_distance_oracle(a, b, p=2)
            cost = ground_cost(a, b, p=2).entries
            eps = 0.01 * np.median(cost)
            plan = sinkhorn_distance(a, b, p=2, eps=max(eps, 1e-9),
                                     max_iter=20000, tol=1e-7)
            assert plan.converged
            assert plan.cost == pytest.approx(exact, rel=0.02, abs=1e-9)

    def test_uniform_pair_bounded_below_by_assignment(self, rng):
        a = random_measure(rng, 4, 2, uniform=True)
        b = random_measure(rng, 4, 2, uniform=True)
        exact = exact_distance_oracle(a, b, p=2)
        base_eps = default_epsilon(ground_cost(a, b).entries)
        gaps = []
        for eps in (base_eps, base_eps / 10, base_eps / 100):
            plan = sinkhorn_distance(a, b, eps=eps, max_iter=50000, tol=1e-9)
            assert plan.cost >= exact - 1e-9
            gaps.append(plan.cost - exact)
        assert gaps[-1] <= gaps[0] + 1e-12
        assert gaps[-1] <= 0.02 * exact + 1e-9

    def test_symmetry_and_nonnegativity(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 6))
            m = int(rng.integers(2, 6))
            a = random_measure(rng, n, 2)
            b = random_measure(rng, m, 2)
            ab = sinkhorn_distance(a, b, max_iter=20000, tol=1e-10)
            ba = sinkhorn_distance(b, a, max_iter=20000, tol=1e-10)
            assert ab.cost >= 0.0
            assert abs(ab.cost - ba.cost) < 1e-6

    def test_marginal_feasibility(self, rng):
        for _ in range(20):
            a = random_measure(rng, 5, 3)
            b = random_measure(rng, 7, 3)
            plan = sinkhorn_distance(a, b, max_iter=5000, tol=1e-7)
            assert plan.converged
            assert plan.marginal_violation(a, b) < 1e-6

    def test_cost_monotone_in_eps(self, rng):
        a = random_measure(rng, 6, 2)
        b = random_measure(rng, 6, 2)
        base = default_epsilon(ground_cost(a, b).entries)
        costs = [
            sinkhorn_distance(a, b, eps=base / 4**i, max_iter=100000, tol=1e-10).cost
            for i in range(3)
        ]
        assert costs[1] <= costs[0] + 1e-8
        assert costs[2] <= costs[1] + 1e-8

    def test_single_atom_closed_form(self):
        a = DiscreteMeasure.dirac([0.0, 0.0])
        b = DiscreteMeasure.uniform(np.array([[1.0, 0.0], [3.0, 0.0]]))
        plan = sinkhorn_distance(a, b, p=2)
        assert plan.iterations == 0
        assert plan.cost == pytest.approx((1.0 + 9.0) / 2)

    def test_batched_padding_matches_single(self, rng):
        # Two problems of different sizes solved in one padded batch.
        a1 = random_measure(rng, 3, 2)
        b1 = random_measure(rng, 4, 2)
        a2 = random_measure(rng, 2, 2)
        b2 = random_measure(rng, 2, 2)
        eps = 0.1
        singles = [
            sinkhorn_distance(a1, b1, eps=eps, max_iter=5000, tol=1e-8),
            sinkhorn_distance(a2, b2, eps=eps, max_iter=5000, tol=1e-8),
        ]
        log_a = np.full((2, 3), -np.inf)
        log_b = np.full((2, 4), -np.inf)
        cost = np.zeros((2, 3, 4))
        log_a[0] = np.log(a1.weights)
        log_b[0] = np.log(b1.weights)
        cost[0] = ground_cost(a1, b1).entries
        log_a[1, :2] = np.log(a2.weights)
        log_b[1, :2] = np.log(b2.weights)
        cost[1, :2, :2] = ground_cost(a2, b2).entries
        plans, err, _, _, _ = sinkhorn_plans_batched(log_a, log_b, cost, eps,
                                               max_iter=5000, tol=1e-8)
        assert err.max() < 1e-8
        np.testing.assert_allclose(plans[0], singles[0].coupling, atol=1e-7)
        np.testing.assert_allclose(plans[1, :2, :2], singles[1].coupling, atol=1e-7)
        assert np.all(plans[1, 2:, :] == 0) and np.all(plans[1, :, 2:] == 0)


class TestExactOracle:
    def test_dirac_pair(self):
        a = DiscreteMeasure.dirac([0.0])
        b = DiscreteMeasure.dirac([3.0])
        assert exact_distance_oracle(a, b, p=2) == pytest.approx(9.0)

    def test_two_point_enumeration(self):
        a = DiscreteMeasure.uniform(np.array([0.0, 1.0]))
        b = DiscreteMeasure.uniform(np.array([1.0, 2.0]))
        # Enumerating both bijections: {0->1, 1->2} costs (1+1)/2 = 1,
        # {0->2, 1->1} costs (4+0)/2 = 2.
        assert exact_distance_oracle(a, b, p=2) == pytest.approx(1.0)

    def test_matches_full_enumeration(self, rng):
        for _ in range(10):
            n = int(rng.integers(2, 6))
            a = random_measure(rng, n, 2, uniform=True)
            b = random_measure(rng, n, 2, uniform=True)
            cost = ground_cost(a, b, p=2).entries
            best = min(
                sum(cost[i, perm[i]] for i in range(n)) / n
                for perm in itertools.permutations(range(n))
            )
            assert exact_distance_oracle(a, b, p=2) == pytest.approx(best, rel=1e-12)

    def test_symmetric(self, rng):
        a = DiscreteMeasure.uniform(rng.standard_normal(5))
        b = DiscreteMeasure.uniform(rng.standard_normal(7))
        assert exact_distance_oracle(a, b) == pytest.approx(exact_distance_oracle(b, a))

    def test_unsupported_shape_mentions_sinkhorn(self, rng):
        a = random_measure(rng, 3, 2)
        b = random_measure(rng, 4, 2)
        with pytest.raises(AllwasError, match="sinkhorn_distance"):
            exact_distance_oracle(a, b)

    def test_1d_weighted(self, rng):
        # Weighted 1D measures against a dense-grid approximation of the
        # quantile coupling.
        a = DiscreteMeasure(np.array([0.0, 2.0]), np.array([0.25, 0.75]))
        b = DiscreteMeasure(np.array([1.0, 3.0]), np.array([0.5, 0.5]))
        # Quantile coupling by hand: 0.25 of mass 0->1, 0.25 of 2->1, 0.5 of 2->3.
        expected = 0.25 * 1 + 0.25 * 1 + 0.5 * 1
        assert exact_distance_oracle(a, b, p=2) == pytest.approx(expected)


class TestBarycenter:
    def test_two_dirac_midpoint(self):
        a = DiscreteMeasure.dirac([0.0, 0.0])
        b = DiscreteMeasure.dirac([2.0, 0.0])
        bary = wasserstein_barycenter([a, b], [0.5, 0.5], support_size=1)
        np.testing.assert_allclose(bary.support, [[1.0, 0.0]], atol=1e-6)

    def test_degenerate_lambda_recovers_input(self, rng):
        a = random_measure(rng, 4, 2, uniform=True)
        b = random_measure(rng, 3, 2, uniform=True)
        trace = []
        bary = wasserstein_barycenter([a, b], [1.0, 0.0], trace=trace)
        assert bary.n == 4
        np.testing.assert_allclose(bary.support, a.support, atol=1e-9)
        assert trace[-1] < 1e-6

    def test_separated_1d_diracs_land_between(self):
        # Two well-separated 1D points: the transport barycenter sits between
        # them, where an L2 density mode would sit on one of the two.
        good = DiscreteMeasure.dirac([-3.0])
        bad = DiscreteMeasure.dirac([3.0])
        bary = wasserstein_barycenter([good, bad], [0.5, 0.5], support_size=1)
        x = bary.support[0, 0]
        assert -3.0 < x < 3.0
        assert x == pytest.approx(0.0, abs=1e-6)

    def test_objective_descent_batch(self, rng):
        # Support scale 0.1 keeps solver noise well inside the absolute
        # slack; the descent property itself is scale-free.
        groups, lambdas, sizes = [], [], []
        for _ in range(6):
            g = [0.1 * rng.standard_normal((int(rng.integers(2, 6)), 2))
                 for _ in range(3)]
            lam = rng.random(3) + 0.1
            lam /= lam.sum()
            groups.append(g)
            lambdas.append(lam)
            sizes.append(barycenter_support_size([x.shape[0] for x in g], lam))
        trace = []
        wasserstein_barycenter_batch(groups, np.array(lambdas), sizes, outer_iter=6,
                                     sinkhorn_max_iter=20000, sinkhorn_tol=1e-10,
                                     trace=trace)
        for before, after in zip(trace, trace[1:]):
            assert np.all(after <= before + 1e-6)

    def test_objective_descent_single(self, rng):
        for _ in range(1):
            measures = [
                DiscreteMeasure.uniform(0.1 * rng.standard_normal((int(rng.integers(2, 6)), 2)))
                for _ in range(3)
            ]
            lam = rng.random(3) + 0.1
            lam /= lam.sum()
            trace = []
            wasserstein_barycenter(measures, lam, outer_iter=6,
                                   sinkhorn_max_iter=20000, sinkhorn_tol=1e-10,
                                   trace=trace)
            for before, after in zip(trace, trace[1:]):
                assert after <= before + 1e-6

    def test_support_size_rule(self):
        assert barycenter_support_size([1, 2], [0.5, 0.5]) == 2
        assert barycenter_support_size([4, 4], [0.5, 0.5]) == 4
        assert barycenter_support_size([1, 1], [0.5, 0.5]) == 1
        assert barycenter_support_size([10, 2], [1.0, 0.0]) == 10

    def test_requires_two_measures(self, rng):
        with pytest.raises(ConfigError):
            wasserstein_barycenter([random_measure(rng, 3, 2)], [1.0])

    def test_lambda_off_simplex_rejected(self, rng):
        a = random_measure(rng, 3, 2)
        b = random_measure(rng, 3, 2)
        with pytest.raises(ConfigError):
            wasserstein_barycenter([a, b], [0.7, 0.7])

    def test_batch_matches_single(self, rng):
        groups = []
        lambdas = []
        sizes = []
        for _ in range(5):
            g = [rng.standard_normal((int(rng.integers(2, 7)), 3)) for _ in range(2)]
            lam = rng.random(2) + 0.1
            lam /= lam.sum()
            groups.append(g)
            lambdas.append(lam)
            sizes.append(barycenter_support_size([x.shape[0] for x in g], lam))
        batch = wasserstein_barycenter_batch(groups, np.array(lambdas), sizes,
                                             outer_iter=5)
        for g, lam, size, got in zip(groups, lambdas, sizes, batch):
            single = wasserstein_barycenter(
                [DiscreteMeasure.uniform(x) for x in g], lam,
                support_size=size, outer_iter=5)
            np.testing.assert_allclose(got, single.support, atol=1e-6)

    def test_batch_identical_members_exact(self, rng):
        tokens = rng.standard_normal((4, 3))
        groups = [[tokens.copy(), tokens.copy()]]
        out = wasserstein_barycenter_batch(groups, np.array([[0.3, 0.7]]), [4])
        np.testing.assert_allclose(out[0], tokens, atol=1e-6)
