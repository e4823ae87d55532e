import math

import numpy as np
import pytest

from drfree import (
    Branch,
    DiscreteDensity,
    GaussianDensity,
    InnerProblem,
    Rng,
    compute_m,
    cost_of_ambiguity,
    dual_diagnostics,
    eval_v_alpha,
    kl_discrete,
    oracle_inner_max,
    oracle_inner_max_with_error,
    worst_case_ratio,
    zero_radius_limit,
)
from drfree.ambiguity import AmbiguitySpec
from drfree.errors import DegenerateRadius, NonFiniteRatio, SupportTooLarge, ZeroBranch


def const_cost(value):
    return lambda pts: np.full(len(pts), float(value))


def indexed_cost(values):
    values = np.asarray(values, dtype=float)
    return lambda pts: values[pts[:, 0].astype(int)]


def uniform(n):
    return DiscreteDensity(np.arange(float(n)).reshape(-1, 1), np.full(n, 1.0 / n))


def random_instance(gen, n=None, eta=None, cost_hi=3.0):
    n = n or int(gen.integers(2, 5))
    sup = np.arange(float(n)).reshape(-1, 1)
    hat = DiscreteDensity(sup, gen.dirichlet(np.ones(n)))
    q = DiscreteDensity(sup, gen.dirichlet(np.ones(n)))
    cost = gen.uniform(0.0, cost_hi, n)
    eta = float(gen.uniform(0.01, 1.0)) if eta is None else eta
    prob = InnerProblem(hat, q, indexed_cost(cost), eta=eta)
    return prob, hat, q, cost, eta


def interior_instance(gen, **kw):
    """Instance whose KL ball stays inside the simplex (active constraint)."""
    while True:
        prob, hat, q, cost, eta = random_instance(gen, **kw)
        ac = cost_of_ambiguity(prob)
        if ac.branch is Branch.INTERIOR:
            return prob, hat, q, cost, eta, ac


class TestEvalVAlpha:
    def test_constant_ratio_linear_branch(self):
        # hat_p = q_x and cost 1 make hat_p e^c / q_x constant at e, so
        # V(alpha) = 1 + eta * alpha exactly
        prob = InnerProblem(uniform(3), uniform(3), const_cost(1.0), eta=0.5)
        assert eval_v_alpha(prob, 2.0) == pytest.approx(2.0, abs=1e-9)

    def test_zero_cost_is_eta_alpha(self):
        prob = InnerProblem(uniform(4), uniform(4), const_cost(0.0), eta=0.3)
        for alpha in (0.1, 1.0, 7.5):
            assert eval_v_alpha(prob, alpha) == pytest.approx(0.3 * alpha, abs=1e-9)

    def test_blow_up_at_large_alpha(self):
        gen = np.random.default_rng(0)
        prob, *_ = random_instance(gen, n=3, eta=0.5)
        assert eval_v_alpha(prob, 1e6) > 1e5

    def test_alpha_must_be_positive(self):
        prob = InnerProblem(uniform(2), uniform(2), const_cost(0.0), eta=0.1)
        with pytest.raises(ValueError):
            eval_v_alpha(prob, 0.0)


class TestComputeM:
    def test_identity_zero(self):
        prob = InnerProblem(uniform(3), uniform(3), const_cost(0.0), eta=0.1)
        assert compute_m(prob) == pytest.approx(0.0, abs=1e-12)

    def test_unit_cost(self):
        prob = InnerProblem(uniform(3), uniform(3), const_cost(1.0), eta=0.1)
        assert compute_m(prob) == pytest.approx(1.0, abs=1e-12)

    def test_exact_max_over_support(self):
        sup = np.array([[0.0], [1.0]])
        hat = DiscreteDensity(sup, np.array([0.8, 0.2]))
        q = DiscreteDensity(sup, np.array([0.5, 0.5]))
        prob = InnerProblem(hat, q, const_cost(0.0), eta=0.1)
        assert compute_m(prob) == pytest.approx(math.log(0.8 / 0.5), abs=1e-12)

    def test_nonnegative_on_exact_instances(self):
        gen = np.random.default_rng(11)
        for _ in range(100):
            prob, *_ = random_instance(gen)
            assert compute_m(prob) >= -1e-12

    def test_support_violation_raises(self):
        sup = np.array([[0.0], [1.0]])
        hat = DiscreteDensity(sup, np.array([0.5, 0.5]))
        q = DiscreteDensity(sup, np.array([1.0, 0.0]))
        prob = InnerProblem(hat, q, const_cost(0.0), eta=0.1)
        with pytest.raises(NonFiniteRatio):
            compute_m(prob)


class TestCostOfAmbiguity:
    def test_no_complexity_no_cost(self):
        prob = InnerProblem(uniform(3), uniform(3), const_cost(0.0), eta=0.3)
        ac = cost_of_ambiguity(prob)
        assert ac.v == pytest.approx(0.0, abs=1e-9)
        assert ac.branch is Branch.AT_ZERO
        assert ac.m_value == pytest.approx(0.0, abs=1e-12)

    def test_constant_ratio_linear_branch_at_zero(self):
        prob = InnerProblem(uniform(3), uniform(3), const_cost(1.0), eta=0.5)
        ac = cost_of_ambiguity(prob)
        assert ac.v == pytest.approx(1.0, abs=1e-9)
        assert ac.alpha_star == 0.0
        assert ac.branch is Branch.AT_ZERO

    def test_v_at_most_m(self):
        gen = np.random.default_rng(3)
        for _ in range(100):
            prob, *_ = random_instance(gen)
            ac = cost_of_ambiguity(prob)
            assert ac.v <= ac.m_value + 1e-12
            assert ac.v >= -1e-9
            assert np.isfinite(ac.v)

    def test_matches_oracle_small_radius(self):
        gen = np.random.default_rng(21)
        for _ in range(10):
            prob, hat, q, cost, eta, ac = interior_instance(gen, n=3, eta=0.1)
            oracle, err = oracle_inner_max_with_error(hat, q, cost, eta, 200, refine=3)
            assert oracle - eta == pytest.approx(ac.v, abs=2e-3 + err)


class TestWorstCaseRatio:
    def test_constant_ratio_gives_unit_weights(self):
        prob = InnerProblem(uniform(3), uniform(3), const_cost(2.0), eta=0.4)
        lr = worst_case_ratio(prob, alpha=1.5)
        np.testing.assert_allclose(lr.weights, 1.0, atol=1e-12)

    def test_mean_weight_is_one(self):
        gen = np.random.default_rng(17)
        for _ in range(50):
            prob, hat, *_ = random_instance(gen)
            lr = worst_case_ratio(prob, alpha=float(gen.uniform(0.05, 5.0)))
            mean = float(np.sum(hat.probs[hat.probs > 0] * lr.weights))
            assert mean == pytest.approx(1.0, abs=1e-6)

    def test_constraint_active_at_alpha_star(self):
        # at the interior optimum the worst case sits on the ball frontier
        gen = np.random.default_rng(29)
        for _ in range(20):
            prob, hat, q, cost, eta, ac = interior_instance(gen, n=3)
            lr = worst_case_ratio(prob, ac.alpha_star)
            assert lr.worst_case is not None
            assert kl_discrete(lr.worst_case, hat) == pytest.approx(eta, abs=3e-2)

    def test_zero_branch_rejected(self):
        prob = InnerProblem(uniform(2), uniform(2), const_cost(0.0), eta=0.1)
        with pytest.raises(ZeroBranch):
            worst_case_ratio(prob, 0.0)


class TestZeroRadiusLimit:
    def test_both_terms_vanish(self):
        prob = InnerProblem(uniform(3), uniform(3), const_cost(0.0), eta=0.1)
        assert zero_radius_limit(prob) == pytest.approx(0.0, abs=1e-12)

    def test_expectation_of_constant(self):
        prob = InnerProblem(uniform(3), uniform(3), const_cost(1.0), eta=0.1)
        assert zero_radius_limit(prob) == pytest.approx(1.0, abs=1e-12)

    def test_radius_sweep_converges_monotonically(self):
        gen = np.random.default_rng(41)
        for _ in range(10):
            _, hat, q, cost, _, _ = interior_instance(gen, n=3, eta=0.1)
            gaps = []
            for eta in (1e-1, 1e-2, 1e-3, 1e-4):
                prob = InnerProblem(hat, q, indexed_cost(cost), eta=eta)
                gaps.append(abs(cost_of_ambiguity(prob).v - zero_radius_limit(prob)))
            assert all(g0 > g1 for g0, g1 in zip(gaps, gaps[1:]))
            assert gaps[-1] < 0.05

    def test_sqrt_eta_envelope(self):
        # the correction to the zero-radius value decays like sqrt(eta)
        gen = np.random.default_rng(43)
        for _ in range(10):
            _, hat, q, cost, _, _ = interior_instance(gen, n=3, eta=0.1)
            zrl = zero_radius_limit(InnerProblem(hat, q, indexed_cost(cost), eta=1.0))
            fit_eta = 1e-1
            c_fit = abs(
                cost_of_ambiguity(InnerProblem(hat, q, indexed_cost(cost), eta=fit_eta)).v - zrl
            ) / math.sqrt(fit_eta)
            for eta in (1e-2, 1e-3, 1e-4):
                gap = abs(cost_of_ambiguity(InnerProblem(hat, q, indexed_cost(cost), eta=eta)).v - zrl)
                assert gap <= 3.0 * c_fit * math.sqrt(eta) + 1e-9


class TestOracle:
    def test_frontier_value_is_eta(self):
        # hat_p = q_x uniform, zero cost: the maximum of KL(p||q) inside the
        # ball KL(p||hat_p) <= eta is eta itself while the ball fits
        u = uniform(2)
        val, err = oracle_inner_max_with_error(u, u, [0.0, 0.0], 0.2, 200, refine=3)
        assert val == pytest.approx(0.2, abs=2e-3 + err)

    def test_tiny_radius_collapses_to_hat_p(self):
        gen = np.random.default_rng(31)
        sup = np.arange(3.0).reshape(-1, 1)
        hat = DiscreteDensity(sup, gen.dirichlet(np.ones(3)))
        q = DiscreteDensity(sup, gen.dirichlet(np.ones(3)))
        cost = gen.uniform(0.0, 2.0, 3)
        val, err = oracle_inner_max_with_error(hat, q, cost, 1e-9, 200, refine=2)
        expected = kl_discrete(hat, q) + float(hat.probs @ cost)
        assert val == pytest.approx(expected, abs=1e-3 + err)

    def test_duality_on_random_instance(self):
        gen = np.random.default_rng(37)
        prob, hat, q, cost, eta, ac = interior_instance(gen, n=3)
        val, err = oracle_inner_max_with_error(hat, q, cost, eta, 200, refine=3)
        assert val == pytest.approx(eta + ac.v, abs=2e-3 + err)

    def test_support_too_large(self):
        with pytest.raises(SupportTooLarge):
            oracle_inner_max(uniform(5), uniform(5), np.zeros(5), 0.1, 200)

    def test_resolution_floor(self):
        with pytest.raises(ValueError):
            oracle_inner_max(uniform(2), uniform(2), np.zeros(2), 0.1, 50)


class TestDualProperties:
    def test_midpoint_convexity(self):
        # V((a1+a2)/2) <= (V(a1)+V(a2))/2 on exact discrete instances
        gen = np.random.default_rng(53)
        checked = 0
        while checked < 1000:
            prob, *_ = random_instance(gen)
            a1, a2 = np.exp(gen.uniform(np.log(1e-3), np.log(1e3), size=2))
            mid = eval_v_alpha(prob, 0.5 * (a1 + a2))
            assert mid <= 0.5 * (eval_v_alpha(prob, a1) + eval_v_alpha(prob, a2)) + 1e-9
            checked += 1

    def test_alpha_to_zero_limit_is_m(self):
        gen = np.random.default_rng(59)
        for _ in range(50):
            prob, *_ = random_instance(gen)
            assert abs(eval_v_alpha(prob, 1e-3) - compute_m(prob)) <= 5e-2

    def test_divergence_at_large_alpha(self):
        gen = np.random.default_rng(61)
        for _ in range(50):
            prob, hat, q, cost, eta = random_instance(gen)
            if eta < 1e-2:
                continue
            ac = cost_of_ambiguity(prob)
            alpha_ref = ac.alpha_star if ac.branch is Branch.INTERIOR else 1e-3
            assert eval_v_alpha(prob, 1e6) > eval_v_alpha(prob, max(alpha_ref, 1e-6)) + 1e3 * eta


class TestAmbiguitySpec:
    def test_clipping(self):
        spec = AmbiguitySpec(radius_fn=lambda x, u: 250.0, eta_max=100.0)
        assert spec.value(np.zeros(2), np.zeros(2)) == 100.0

    def test_scale_applies_after_clip(self):
        spec = AmbiguitySpec(radius_fn=lambda x, u: 250.0, eta_max=100.0, scale=0.5)
        assert spec.value(np.zeros(2), np.zeros(2)) == 50.0

    def test_zero_radius_degenerate(self):
        spec = AmbiguitySpec(radius_fn=lambda x, u: 0.0)
        with pytest.raises(DegenerateRadius):
            spec.value(np.zeros(2), np.zeros(2))


class TestDiagnostics:
    def test_dump_fields(self):
        gen = np.random.default_rng(67)
        prob, *_ = random_instance(gen, n=3)
        doc = dual_diagnostics(prob)
        assert set(doc) == {"eta", "m", "alpha_star", "v", "branch", "alpha_trace"}
        assert doc["branch"] in ("AtZero", "Interior")
        trace = np.array(doc["alpha_trace"])
        assert trace.shape[1] == 2
        assert np.all(np.isfinite(trace))


class TestGaussianMonteCarlo:
    def test_same_rng_same_value(self):
        hat = GaussianDensity([0.1, 0.0], 0.02 * np.eye(2))
        q = GaussianDensity([0.0, 0.0], 0.05 * np.eye(2))
        prob = InnerProblem(hat, q, lambda pts: np.sum(pts**2, axis=1), eta=0.5)
        v1 = cost_of_ambiguity(prob, Rng(5)).v
        v2 = cost_of_ambiguity(prob, Rng(5)).v
        assert v1 == v2

    def test_zero_radius_limit_tracks_closed_form_kl(self):
        hat = GaussianDensity([0.1, 0.0], 0.02 * np.eye(2))
        q = GaussianDensity([0.0, 0.0], 0.05 * np.eye(2))
        prob = InnerProblem(hat, q, lambda pts: np.zeros(len(pts)), eta=1e-4, n_samples=4000)
        from drfree import kl_gaussian

        assert zero_radius_limit(prob, Rng(3)) == pytest.approx(kl_gaussian(hat, q), abs=1e-12)
        assert cost_of_ambiguity(prob, Rng(3)).v == pytest.approx(kl_gaussian(hat, q), abs=5e-2)
