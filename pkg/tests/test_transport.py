import numpy as np
import pytest

from mixot import (
    DiagGaussian,
    GaussianMixture,
    TransportPlan,
    UnlabeledMixtureError,
    gauss_w2_sq,
    gmmot,
    mixture_cost,
    mw2_sq,
    smw2_sq,
    solve_transport,
    transport_params,
)
from oracles import central_difference, gauss_w2_sq_scalar, random_mixture, transport_bruteforce


class TestGaussW2:
    def test_mean_shift_only(self):
        a = DiagGaussian([0.0], [1.0])
        b = DiagGaussian([3.0], [1.0])
        assert gauss_w2_sq(a, b) == 9.0

    def test_mean_and_std_shift(self):
        a = DiagGaussian([0.0, 0.0], [1.0, 1.0])
        b = DiagGaussian([1.0, 1.0], [2.0, 2.0])
        assert gauss_w2_sq(a, b) == 4.0

    def test_identity_is_exactly_zero(self):
        a = DiagGaussian([1.2, -0.7], [0.4, 2.0])
        assert gauss_w2_sq(a, a) == 0.0

    def test_symmetry_and_scalar_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            d = int(rng.integers(1, 6))
            a = DiagGaussian(3 * rng.standard_normal(d), 0.2 + rng.random(d))
            b = DiagGaussian(3 * rng.standard_normal(d), 0.2 + rng.random(d))
            expected = gauss_w2_sq_scalar(a.mean, a.std, b.mean, b.std)
            assert gauss_w2_sq(a, b) == pytest.approx(expected, abs=1e-12)
            assert gauss_w2_sq(a, b) == pytest.approx(gauss_w2_sq(b, a), abs=0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            gauss_w2_sq(DiagGaussian([0.0], [1.0]), DiagGaussian([0.0, 0.0], [1.0, 1.0]))


class TestMixtureCost:
    def test_beta_zero_is_pairwise_w2(self):
        rng = np.random.default_rng(1)
        p = random_mixture(rng, 3, 2)
        q = random_mixture(rng, 4, 2)
        cost = mixture_cost(p, q, beta=0.0)
        for i in range(3):
            for j in range(4):
                expected = gauss_w2_sq(p.components[i], q.components[j])
                assert cost[i, j] == pytest.approx(expected, abs=1e-12)

    def test_identical_components_one_hot_labels(self):
        means = [[0.0], [0.0]]
        stds = [[1.0], [1.0]]
        p = GaussianMixture([0.5, 0.5], means, stds, [[1.0, 0.0], [1.0, 0.0]])
        q = GaussianMixture([0.5, 0.5], means, stds, [[0.0, 1.0], [0.0, 1.0]])
        cost = mixture_cost(p, q, beta=2.0)
        np.testing.assert_allclose(cost, 4.0, atol=1e-15)

    def test_labeled_case_against_double_loop(self):
        rng = np.random.default_rng(2)
        p = random_mixture(rng, 2, 3, n_classes=3)
        q = random_mixture(rng, 2, 3, n_classes=3)
        beta = 1.7
        cost = mixture_cost(p, q, beta=beta)
        for i in range(2):
            for j in range(2):
                expected = gauss_w2_sq_scalar(p.means[i], p.stds[i], q.means[j], q.stds[j])
                expected += beta * sum(
                    (float(a) - float(b)) ** 2 for a, b in zip(p.labels[i], q.labels[j])
                )
                assert cost[i, j] == pytest.approx(expected, abs=1e-12)

    def test_beta_positive_requires_labels(self):
        rng = np.random.default_rng(3)
        p = random_mixture(rng, 2, 2, n_classes=2)
        q = random_mixture(rng, 2, 2)
        with pytest.raises(UnlabeledMixtureError):
            mixture_cost(p, q, beta=1.0)


class TestSolveTransport:
    def test_one_by_one(self):
        plan, obj = solve_transport([1.0], [1.0], np.array([[2.5]]))
        np.testing.assert_array_equal(plan.omega, [[1.0]])
        assert obj == 2.5

    def test_zero_cost_matching(self):
        plan, obj = solve_transport(
            [0.5, 0.5], [0.5, 0.5], np.array([[0.0, 1.0], [1.0, 0.0]])
        )
        assert obj == pytest.approx(0.0, abs=1e-15)
        np.testing.assert_allclose(plan.omega, [[0.5, 0.0], [0.0, 0.5]], atol=1e-15)

    def test_two_by_three_against_enumeration(self):
        p = np.array([0.5, 0.5])
        q = np.array([1.0, 1.0, 1.0]) / 3.0
        cost = np.array([[1.0, 2.0, 3.0], [3.0, 2.0, 1.0]])
        _, obj = solve_transport(p, q, cost)
        assert obj == pytest.approx(transport_bruteforce(p, q, cost), abs=1e-12)

    def test_rejects_bad_marginal_sums(self):
        with pytest.raises(ValueError):
            solve_transport([0.6, 0.6], [0.5, 0.5], np.zeros((2, 2)))

    def test_rejects_non_finite_cost(self):
        with pytest.raises(ValueError):
            solve_transport([0.5, 0.5], [0.5, 0.5], np.array([[0.0, np.inf], [1.0, 0.0]]))

    @pytest.mark.parametrize("seed", range(30))
    def test_random_instances_match_bruteforce(self, seed):
        rng = np.random.default_rng(seed)
        m, n = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        p = rng.random(m) + 0.05
        p /= p.sum()
        q = rng.random(n) + 0.05
        q /= q.sum()
        cost = rng.random((m, n)) * 10
        plan, obj = solve_transport(p, q, cost)
        assert obj == pytest.approx(transport_bruteforce(p, q, cost), abs=1e-9)
        assert np.max(np.abs(plan.omega.sum(axis=1) - p)) <= 1e-9
        assert np.max(np.abs(plan.omega.sum(axis=0) - q)) <= 1e-9
        assert np.count_nonzero(plan.omega > 0) <= m + n - 1

    def test_beats_independent_coupling(self):
        rng = np.random.default_rng(77)
        for _ in range(20):
            m, n = int(rng.integers(2, 6)), int(rng.integers(2, 6))
            p = rng.random(m) + 0.05
            p /= p.sum()
            q = rng.random(n) + 0.05
            q /= q.sum()
            cost = rng.random((m, n)) * 5
            _, obj = solve_transport(p, q, cost)
            independent = float((np.outer(p, q) * cost).sum())
            assert obj <= independent + 1e-12

    def test_larger_instance_stays_feasible_and_basic(self):
        rng = np.random.default_rng(5)
        m = n = 80
        p = rng.random(m) + 0.01
        p /= p.sum()
        q = rng.random(n) + 0.01
        q /= q.sum()
        cost = rng.random((m, n))
        plan, obj = solve_transport(p, q, cost)
        assert np.max(np.abs(plan.omega.sum(axis=1) - p)) <= 1e-7
        assert np.max(np.abs(plan.omega.sum(axis=0) - q)) <= 1e-7
        assert np.count_nonzero(plan.omega > 0) <= m + n - 1
        # optimality sanity: objective no worse than the independent coupling
        assert obj <= float((np.outer(p, q) * cost).sum())


class TestGmmotAndDistances:
    def test_self_transport_has_zero_objective(self):
        rng = np.random.default_rng(6)
        p = random_mixture(rng, 4, 3)
        assert mw2_sq(p, p) == pytest.approx(0.0, abs=1e-9)

    def test_single_component_mixtures(self):
        p = GaussianMixture([1.0], [[0.0]], [[1.0]])
        q = GaussianMixture([1.0], [[4.0]], [[3.0]])
        plan = gmmot(p, q)
        np.testing.assert_array_equal(plan.omega, [[1.0]])
        assert mw2_sq(p, q) == pytest.approx(20.0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_objective_matches_bruteforce(self, seed):
        rng = np.random.default_rng(100 + seed)
        p = random_mixture(rng, 3, 2)
        q = random_mixture(rng, 2, 2)
        cost = mixture_cost(p, q, beta=0.0)
        assert mw2_sq(p, q) == pytest.approx(
            transport_bruteforce(p.weights, q.weights, cost), abs=1e-9
        )

    def test_smw2_at_beta_zero_equals_mw2(self):
        rng = np.random.default_rng(8)
        p = random_mixture(rng, 3, 2, n_classes=2)
        q = random_mixture(rng, 4, 2, n_classes=2)
        assert smw2_sq(p, q, 0.0) == pytest.approx(mw2_sq(p, q), abs=1e-12)

    def test_labeled_distance_matches_bruteforce(self):
        rng = np.random.default_rng(9)
        p = random_mixture(rng, 2, 2, n_classes=2)
        q = random_mixture(rng, 2, 2, n_classes=2)
        cost = mixture_cost(p, q, beta=1.5)
        assert smw2_sq(p, q, 1.5) == pytest.approx(
            transport_bruteforce(p.weights, q.weights, cost), abs=1e-9
        )

    @pytest.mark.parametrize("seed", range(20))
    def test_metric_axioms(self, seed):
        rng = np.random.default_rng(200 + seed)
        d = int(rng.integers(1, 4))
        p = random_mixture(rng, int(rng.integers(1, 5)), d)
        q = random_mixture(rng, int(rng.integers(1, 5)), d)
        r = random_mixture(rng, int(rng.integers(1, 5)), d)
        dpq = np.sqrt(mw2_sq(p, q))
        dqp = np.sqrt(mw2_sq(q, p))
        dpr = np.sqrt(mw2_sq(p, r))
        dqr = np.sqrt(mw2_sq(q, r))
        assert dpq >= 0
        assert abs(dpq - dqp) <= 1e-9
        assert dpr <= dpq + dqr + 1e-7


class TestTransportParams:
    def test_single_target_component(self):
        rng = np.random.default_rng(10)
        p = random_mixture(rng, 3, 2)
        q = random_mixture(rng, 1, 2)
        plan = gmmot(p, q)
        means, stds, labels = transport_params(plan, p.weights, q)
        assert labels is None
        for i in range(3):
            np.testing.assert_allclose(means[i], q.means[0], atol=1e-12)
            np.testing.assert_allclose(stds[i], q.stds[0], atol=1e-12)

    def test_identity_coupling_recovers_target_rows(self):
        rng = np.random.default_rng(11)
        q = random_mixture(rng, 3, 2, n_classes=2)
        plan = TransportPlan(np.diag(q.weights), q.weights, q.weights)
        means, stds, labels = transport_params(plan, q.weights, q)
        np.testing.assert_allclose(means, q.means, atol=1e-12)
        np.testing.assert_allclose(stds, q.stds, atol=1e-12)
        np.testing.assert_allclose(labels, q.labels, atol=1e-12)

    def test_uniform_averaging(self):
        q = GaussianMixture([0.5, 0.5], [[0.0], [2.0]], [[1.0], [1.0]])
        omega = np.full((2, 2), 0.25)
        plan = TransportPlan(omega, np.array([0.5, 0.5]), np.array([0.5, 0.5]))
        means, _, _ = transport_params(plan, np.array([0.5, 0.5]), q)
        np.testing.assert_allclose(means, 1.0, atol=1e-15)

    def test_mass_conservation(self):
        rng = np.random.default_rng(12)
        p = random_mixture(rng, 4, 3, n_classes=2)
        q = random_mixture(rng, 3, 3, n_classes=2)
        plan = gmmot(p, q)
        means, stds, labels = transport_params(plan, p.weights, q)
        np.testing.assert_allclose(
            p.weights @ means, q.weights @ q.means, atol=1e-9
        )
        np.testing.assert_allclose(p.weights @ stds, q.weights @ q.stds, atol=1e-9)
        np.testing.assert_allclose(p.weights @ labels, q.weights @ q.labels, atol=1e-9)

    def test_zero_row_weight_rejected(self):
        q = GaussianMixture([1.0], [[0.0]], [[1.0]])
        plan = TransportPlan(np.array([[0.0], [1.0]]), np.array([0.0, 1.0]), np.array([1.0]))
        with pytest.raises(ValueError):
            transport_params(plan, np.array([0.0, 1.0]), q)

    def test_fixed_plan_objective_is_stationary_at_mapped_means(self):
        rng = np.random.default_rng(13)
        p = random_mixture(rng, 3, 2)
        q = random_mixture(rng, 4, 2)
        plan = gmmot(p, q)
        means, _, _ = transport_params(plan, p.weights, q)
        for i in range(3):

            def objective(m_i):
                return float(
                    sum(
                        plan.omega[i, j] * np.sum((m_i - q.means[j]) ** 2)
                        for j in range(4)
                    )
                )

            grad = central_difference(objective, means[i], h=1e-6)
            assert np.max(np.abs(grad)) <= 1e-8


class TestPlanType:
    def test_rejects_negative_entries(self):
        with pytest.raises(ValueError):
            TransportPlan(np.array([[-0.1, 0.6], [0.5, 0.0]]), np.array([0.5, 0.5]), np.array([0.4, 0.6]))

    def test_rejects_marginal_mismatch(self):
        with pytest.raises(ValueError):
            TransportPlan(np.full((2, 2), 0.25), np.array([0.6, 0.4]), np.array([0.5, 0.5]))

    def test_independent_coupling_is_a_valid_plan(self):
        p = np.array([0.3, 0.7])
        q = np.array([0.2, 0.5, 0.3])
        plan = TransportPlan(np.outer(p, q), p, q)
        assert plan.shape == (2, 3)
