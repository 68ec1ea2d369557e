"""Crossing finder, regime classification, brackets, and optimality checks."""

import numpy as np
import pytest

from zneboundary.boundary import (
    STATUS_CROSSED,
    STATUS_NO_CROSSING,
    STATUS_NO_NEGATIVE,
    auto_window,
    budget_bracket,
    classify_regime,
    find_crossing,
    find_crossing_arrays,
    geometric_grid,
    local_optimality_check,
    theoretical_boundary,
)
from zneboundary.errors import RegimeError
from zneboundary.models import (
    DeterministicLimitBinary,
    LinearBiasBinary,
    MonomialBalanceModel,
    PowerLeakageBinary,
    ProductContractionString,
)
from zneboundary.mse import DeltaPoint, exact_delta, exact_delta_curve
from zneboundary.rules import build_rule

RULE13 = build_rule([1, 3])
DLB = DeterministicLimitBinary(kappa=1.0)
LBB = LinearBiasBinary(mu0=0.5, alpha=1.0)


class TestFindCrossing:
    def test_linear_interpolation_midpoint(self):
        est = find_crossing_arrays(
            np.array([0.01, 0.02, 0.03]), np.array([-1.0, -0.5, 0.5]), budget=10.0
        )
        assert est.status == STATUS_CROSSED
        assert est.eps_star == pytest.approx(0.025)
        assert (est.bracket_lo, est.bracket_hi) == (0.02, 0.03)

    def test_all_positive_censors(self):
        est = find_crossing_arrays(
            np.array([0.01, 0.02, 0.03]), np.array([0.1, 0.2, 0.3]), budget=1.0
        )
        assert est.status == STATUS_NO_NEGATIVE
        assert est.eps_star is None

    def test_all_negative_censors(self):
        est = find_crossing_arrays(
            np.array([0.01, 0.02, 0.03]), np.array([-0.1, -0.2, -0.3]), budget=1.0
        )
        assert est.status == STATUS_NO_CROSSING

    def test_leading_zero_is_not_a_crossing(self):
        # a zero at the origin of a zero-variance model is trivial; a strictly
        # negative point must come first
        est = find_crossing_arrays(
            np.array([0.01, 0.02, 0.03]), np.array([0.0, 0.1, 0.2]), budget=1.0
        )
        assert est.status == STATUS_NO_NEGATIVE

    def test_zero_on_grid_is_the_crossing(self):
        est = find_crossing_arrays(
            np.array([1.0, 2.0, 3.0, 4.0]), np.array([-1.0, 0.0, 1.0, 2.0]), budget=1.0
        )
        assert est.status == STATUS_CROSSED
        assert est.eps_star == 2.0

    def test_first_sign_change_wins(self):
        est = find_crossing_arrays(
            np.array([1.0, 2.0, 3.0, 4.0, 5.0]),
            np.array([-1.0, 1.0, -1.0, 1.0, 1.0]),
            budget=1.0,
        )
        assert est.eps_star == pytest.approx(1.5)

    def test_monomial_root_on_dense_grid(self):
        model = MonomialBalanceModel(p=1, q=0, d_p=1.0, k_q=1.0)
        grid = geometric_grid(1e-3, 1e-1, 400)
        curve = exact_delta_curve(model, None, grid, 10**4)
        est = find_crossing(curve)
        spacing = grid[1] / grid[0] - 1.0
        assert est.eps_star == pytest.approx(0.01, rel=spacing)

    def test_requires_sorted_grid_and_three_points(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            find_crossing_arrays(np.array([1.0, 1.0, 2.0]), np.zeros(3), budget=1.0)
        with pytest.raises(ValueError, match="at least 3"):
            find_crossing_arrays(np.array([1.0, 2.0]), np.zeros(2), budget=1.0)

    def test_wrapper_rejects_mixed_budgets(self):
        points = [
            DeltaPoint(eps=0.01, budget=1.0, delta=-1.0, source="exact"),
            DeltaPoint(eps=0.02, budget=2.0, delta=1.0, source="exact"),
            DeltaPoint(eps=0.03, budget=2.0, delta=1.0, source="exact"),
        ]
        with pytest.raises(ValueError, match="mixes budgets"):
            find_crossing(points)

    def test_invariant_bracket_contains_root(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            grid = np.sort(rng.uniform(0.01, 1.0, size=12))
            grid = np.unique(grid)
            if grid.size < 3:
                continue
            delta = rng.normal(size=grid.size)
            est = find_crossing_arrays(grid, delta, budget=1.0)
            if est.status == STATUS_CROSSED:
                assert est.bracket_lo < est.eps_star <= est.bracket_hi
                i = list(grid).index(est.bracket_lo)
                assert delta[i] < 0 <= delta[i + 1]


class TestClassifyRegime:
    def test_subcritical_example(self):
        rep = classify_regime(p=1, q=0, d_p=1.0, k_q=4.0)
        assert rep.regime == "subcritical"
        assert rep.c_pq == pytest.approx(2.0)
        assert rep.exponent == pytest.approx(-0.5)
        assert rep.b_star is None

    def test_critical_threshold(self):
        rep = classify_regime(p=1, q=2, d_p=1.0, k_q=20000.0)
        assert rep.regime == "critical"
        assert rep.b_star == pytest.approx(20000.0)
        assert rep.c_pq is None and rep.exponent is None

    def test_supercritical(self):
        rep = classify_regime(p=1, q=3, d_p=1.0, k_q=1.0)
        assert rep.regime == "supercritical"
        assert rep.c_pq is None and rep.b_star is None and rep.eta is None

    def test_rate_exponent(self):
        rep = classify_regime(p=1, q=0, d_p=1.0, k_q=1.0, delta_b=1.0, delta_v=2.0)
        assert rep.eta == pytest.approx(0.5)

    def test_no_bias_improvement_rejected(self):
        with pytest.raises(RegimeError, match="no leading bias improvement"):
            classify_regime(p=1, q=0, d_p=0.0, k_q=1.0)
        with pytest.raises(RegimeError, match="no leading bias improvement"):
            classify_regime(p=1, q=0, d_p=-0.5, k_q=1.0)


class TestTheoreticalBoundary:
    def test_contraction_string_constant(self):
        # kappa = 0.5: C = (2/kappa) [sum c^2 lam / pi - 1] = 4 * 5 = 20
        model = ProductContractionString(gamma=0.1, ell=5)
        rep = theoretical_boundary(model, RULE13)
        assert rep.regime == "subcritical"
        assert rep.c_pq == pytest.approx(20.0, rel=1e-12)
        assert rep.exponent == pytest.approx(-1.0)

    def test_deterministic_limit_matches_exact_crossings(self):
        rep = theoretical_boundary(DLB, RULE13)
        assert rep.c_pq == pytest.approx(10.0, rel=1e-12)
        # the exact finite-budget crossing 10/(B+8) approaches C * B^-1
        for budget in (10**5, 10**6, 10**7):
            grid = auto_window(DLB, RULE13, budget)
            est = find_crossing(exact_delta_curve(DLB, RULE13, grid, budget))
            exact_root = 10.0 / (budget + 8.0)
            assert est.eps_star == pytest.approx(exact_root, rel=2e-3)
            assert est.eps_star / rep.predicted_eps_star(budget) == pytest.approx(
                1.0, rel=1e-2
            )

    def test_linear_bias_constant(self):
        rep = theoretical_boundary(LBB, RULE13)
        assert rep.c_pq == pytest.approx(np.sqrt(3.0), rel=1e-12)
        assert rep.exponent == pytest.approx(-0.5)

    def test_higher_order_bias_uncancelled_rejected(self):
        # quadratic leakage under a first-order rule: rho_2 = -3, no boundary
        model = PowerLeakageBinary(sigma=1, kappa=1.0, r=2.0)
        with pytest.raises(RegimeError, match="no shrinking lower boundary"):
            theoretical_boundary(model, RULE13)

    def test_higher_order_bias_cancelled_by_higher_rule(self):
        model = PowerLeakageBinary(sigma=1, kappa=1.0, r=2.0)
        rule = build_rule([1, 3, 5])
        rep = theoretical_boundary(model, rule)
        assert rep.regime == "subcritical"  # p = 2, q = 2 < 2p
        assert rep.exponent == pytest.approx(-0.5)
        assert rep.d_p == pytest.approx(1.0, rel=1e-12)

    def test_higher_order_bias_partially_cancelled(self):
        # rho in (0, 1): boundary exists with reduced bias improvement
        model = PowerLeakageBinary(sigma=1, kappa=1.0, r=1.5)
        rule = build_rule([1, 2])
        rho = 2.0 - 2.0**1.5
        rep = theoretical_boundary(model, rule)
        assert rep.d_p == pytest.approx(1.0 - rho**2, rel=1e-12)

    def test_optimal_allocation_lowers_constant(self):
        fixed = theoretical_boundary(DLB, RULE13, allocation="fixed")
        optimal = theoretical_boundary(DLB, RULE13, allocation="optimal")
        assert optimal.k_q < fixed.k_q
        assert optimal.c_pq < fixed.c_pq
        assert optimal.exponent == fixed.exponent

    def test_monomial_passthrough(self):
        m = MonomialBalanceModel(p=2, q=1, d_p=4.0, k_q=8.0)
        rep = theoretical_boundary(m, None)
        assert rep.regime == "subcritical"
        assert rep.c_pq == pytest.approx(2.0 ** (1 / 3))
        assert rep.exponent == pytest.approx(-1.0 / 3.0)


class TestSignStructure:
    def test_harm_below_help_above(self):
        # exact delta at x * B^r is negative for x = 0.5 C, positive at 2 C
        cases = [
            (MonomialBalanceModel(p=1, q=0, d_p=1.0, k_q=1.0), None),
            (MonomialBalanceModel(p=2, q=1, d_p=1.0, k_q=2.0), None),
            (DLB, RULE13),
            (LBB, RULE13),
        ]
        for model, rule in cases:
            rep = theoretical_boundary(model, rule)
            for budget in (10**5, 10**7):
                lo = 0.5 * rep.predicted_eps_star(budget)
                hi = 2.0 * rep.predicted_eps_star(budget)
                assert exact_delta(model, rule, lo, budget).delta < 0
                assert exact_delta(model, rule, hi, budget).delta > 0

    def test_critical_statuses_split_at_threshold(self):
        m = MonomialBalanceModel(p=1, q=2, d_p=1.0, k_q=20000.0)
        grid = geometric_grid(1e-6, 1e-3, 50)
        above = find_crossing(exact_delta_curve(m, None, grid, 30000.0))
        below = find_crossing(exact_delta_curve(m, None, grid, 10000.0))
        assert above.status == STATUS_NO_NEGATIVE
        assert below.status == STATUS_NO_CROSSING

    def test_supercritical_censors(self):
        m = MonomialBalanceModel(p=1, q=3, d_p=1.0, k_q=1.0)
        grid = geometric_grid(1e-6, 1e-2, 50)
        for budget in (10**3, 10**6, 10**9):
            est = find_crossing(exact_delta_curve(m, None, grid, budget))
            assert est.status == STATUS_NO_NEGATIVE


class TestBudgetBracket:
    def regime(self, **kw):
        m = MonomialBalanceModel(p=1, q=0, d_p=1.0, k_q=1.0, **kw)
        return m, theoretical_boundary(m, None)

    def test_monomial_bracket_certified(self):
        m, rep = self.regime(l_b=1.0, l_v=1.0, delta_b=1.0, delta_v=1.0)
        bracket = budget_bracket(rep, rho=0.5, l_b=1.0, l_v=1.0, delta_b=1.0,
                                 delta_v=1.0, eps0=1.0)
        assert bracket.m_rho == pytest.approx(0.75)
        assert bracket.b0 == pytest.approx(324.0)
        for budget in np.geomspace(bracket.b0, 1e9, 12):
            lo = exact_delta(m, None, bracket.eps_lo(budget), budget).delta
            hi = exact_delta(m, None, bracket.eps_hi(budget), budget).delta
            assert lo < 0 < hi

    def test_zero_remainders_leave_domain_constraint(self):
        _, rep = self.regime()
        bracket = budget_bracket(rep, rho=0.5, l_b=0.0, l_v=0.0, delta_b=1.0,
                                 delta_v=1.0, eps0=0.25)
        assert bracket.b0 == pytest.approx((bracket.x_plus / 0.25) ** 2)

    def test_widening_rho_grows_bracket_and_relaxes_b0(self):
        # the bracket widens monotonically with rho; the admissible-budget
        # threshold b0 falls while the sign margin dominates (small rho) but
        # rises again as rho -> 1 through the x_plus powers, so monotone
        # decrease only holds on the remainder-dominated branch
        m, rep = self.regime(l_b=1.0, l_v=1.0)
        b0s, widths = [], []
        for rho in [0.1, 0.2, 0.3, 0.4]:
            br = budget_bracket(rep, rho=rho, l_b=1.0, l_v=1.0, delta_b=1.0,
                                delta_v=1.0, eps0=1.0)
            b0s.append(br.b0)
            widths.append(br.x_plus - br.x_minus)
        assert all(b > a for a, b in zip(widths, widths[1:]))
        assert all(a > b for a, b in zip(b0s, b0s[1:]))
        # every rho still certifies its own bracket
        for rho in [0.1, 0.5, 0.8]:
            br = budget_bracket(rep, rho=rho, l_b=1.0, l_v=1.0, delta_b=1.0,
                                delta_v=1.0, eps0=1.0)
            for budget in np.geomspace(br.b0, 1e8, 6):
                assert exact_delta(m, None, br.eps_lo(budget), budget).delta < 0
                assert exact_delta(m, None, br.eps_hi(budget), budget).delta > 0

    def test_degenerate_margin_rejected(self):
        _, rep = self.regime()
        with pytest.raises(RegimeError, match="margin"):
            budget_bracket(rep, rho=1e-18, l_b=0.0, l_v=0.0, delta_b=1.0,
                           delta_v=1.0, eps0=1.0)

    def test_requires_subcritical(self):
        rep = classify_regime(p=1, q=2, d_p=1.0, k_q=1.0)
        with pytest.raises(RegimeError, match="subcritical"):
            budget_bracket(rep, rho=0.5, l_b=0.0, l_v=0.0, delta_b=1.0,
                           delta_v=1.0, eps0=1.0)


class TestLocalOptimality:
    def test_monomial_schedule_always_harms(self):
        m = MonomialBalanceModel(p=1, q=0, d_p=1.0, k_q=1.0)
        rep = theoretical_boundary(m, None)
        res = local_optimality_check(m, None, rep, s_prime=0.6,
                                     budgets=np.geomspace(10, 1e9, 9))
        assert res.passed
        assert res.onset_budget == res.budgets[0]
        assert all(d < 0 for d in res.deltas)

    def test_deterministic_limit_schedule(self):
        rep = theoretical_boundary(DLB, RULE13)
        res = local_optimality_check(DLB, RULE13, rep, s_prime=1.1,
                                     budgets=np.geomspace(1e3, 1e7, 9))
        assert res.passed
        assert all(d < 0 for d in res.deltas)

    def test_schedule_at_boundary_rate_rejected(self):
        rep = theoretical_boundary(DLB, RULE13)
        with pytest.raises(RegimeError, match="must exceed"):
            local_optimality_check(DLB, RULE13, rep, s_prime=1.0, budgets=[1e3])


class TestAutoWindow:
    def test_contains_true_crossing(self):
        for budget in (1e3, 1e5, 1e7):
            grid = auto_window(DLB, RULE13, budget)
            root = 10.0 / (budget + 8.0)
            assert grid[0] < root < grid[-1]

    def test_respects_model_domain(self):
        grid = auto_window(DLB, RULE13, 10.0)  # guess 10/10 = 1, above domain/3
        assert grid[-1] * 3.0 <= DLB.eps_max

    def test_equal_relative_resolution(self):
        g1 = auto_window(DLB, RULE13, 1e4)
        g2 = auto_window(DLB, RULE13, 1e6)
        assert g1.size == g2.size
        assert g1[1] / g1[0] == pytest.approx(g2[1] / g2[0], rel=1e-9)
