"""Auxiliary inequalities and the LDLR lower bounds implied by tests."""

import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lowdeg.bounds import (
    MeasuredPerformance,
    bonami_check,
    clopper_pearson,
    consistency_crosscheck,
    gamma_ratio_bound,
    ldlr_lb_from_poly_test,
    ldlr_lb_from_spectral,
    local_chernoff_check,
    log_subgaussian_moment_bound,
    measure_poly_test_performance,
    measure_spectral_performance,
    paley_zygmund_bound,
    subgaussian_moment_bound,
)
from lowdeg.ldlr import ModelSpec
from lowdeg.priors import PriorSpec, make_prior
from lowdeg.rng import make_rng

RADEMACHER = PriorSpec.rademacher()


def exact_abs_overlap_moment(n: int, k: int) -> Fraction:
    """E|S|^k for a Rademacher overlap, via S = 2 Binom(n, 1/2) - n."""
    total = Fraction(0)
    for m in range(n + 1):
        total += Fraction(math.comb(n, m), 2**n) * Fraction(abs(2 * m - n)) ** k
    return total


class TestSubgaussianMomentBound:
    def test_examples(self):
        assert math.isclose(subgaussian_moment_bound(1, 2), 4.0)
        assert math.isclose(subgaussian_moment_bound(1, 4), 16.0)

    def test_rademacher_second_moment_below_bound(self):
        assert 1.0 <= subgaussian_moment_bound(1, 2)

    @pytest.mark.parametrize("n", [1, 2, 5, 10, 50, 100])
    def test_dominates_exact_overlap_moments(self, n):
        # the overlap is subgaussian with variance proxy n
        for k in range(1, 21):
            exact = exact_abs_overlap_moment(n, k)
            log_exact = math.log(exact.numerator) - math.log(exact.denominator)
            assert log_exact <= log_subgaussian_moment_bound(float(n), k) + 1e-12

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            subgaussian_moment_bound(0, 2)
        with pytest.raises(ValueError):
            subgaussian_moment_bound(1, 0)


class TestGammaRatioBound:
    def test_integer_point(self):
        assert gamma_ratio_bound(1.0, 1.0) == (1.0, 2.0)

    def test_fractional_point(self):
        lhs, rhs = gamma_ratio_bound(2.0, 0.5)
        assert math.isclose(lhs, math.gamma(2.5) / math.gamma(2.0), rel_tol=1e-12)
        assert math.isclose(rhs, 2.5**0.5, rel_tol=1e-12)
        assert lhs <= rhs

    def test_small_a_limit(self):
        lhs, rhs = gamma_ratio_bound(1.0, 1e-9)
        assert math.isclose(lhs, 1.0, rel_tol=1e-6)
        assert lhs <= rhs

    @given(st.floats(0.05, 50.0), st.floats(0.01, 10.0))
    @settings(max_examples=100, deadline=None)
    def test_holds_everywhere(self, x, a):
        lhs, rhs = gamma_ratio_bound(x, a)
        assert lhs <= rhs * (1 + 1e-12)


class TestLocalChernoff:
    def test_rademacher_satisfied(self):
        report = local_chernoff_check(make_prior(RADEMACHER), n=400, eta=0.1,
                                      trials=100_000, seed=1)
        assert report.satisfied

    def test_gaussian_satisfied(self):
        report = local_chernoff_check(make_prior(PriorSpec.gaussian_iid()), n=400, eta=0.1,
                                      trials=100_000, seed=2)
        assert report.satisfied

    def test_t_zero_trivial(self):
        report = local_chernoff_check(make_prior(RADEMACHER), n=100, t_grid=[0.0],
                                      trials=2000, seed=3)
        assert report.satisfied

    def test_rejects_t_outside_range(self):
        with pytest.raises(ValueError, match="delta"):
            local_chernoff_check(make_prior(RADEMACHER), n=100, t_grid=[50.0],
                                 trials=1000, seed=4, delta=0.2)


class TestClopperPearson:
    def test_zero_successes(self):
        lo, hi = clopper_pearson(0, 1000)
        assert lo == 0.0
        assert 0 < hi < 0.01

    def test_all_successes(self):
        lo, hi = clopper_pearson(1000, 1000)
        assert hi == 1.0
        assert lo > 0.99

    def test_brackets_rate(self):
        lo, hi = clopper_pearson(300, 1000)
        assert lo < 0.3 < hi


class TestBonami:
    def test_single_gaussian_variable(self):
        # f(x) = x_1: E f^4 = 3 <= 3^2 = 9
        rng = make_rng(0, "direct")
        x = rng.standard_normal(200_000)
        assert abs((x**4).mean() - 3.0) < 0.2
        assert 3.0 <= 9.0

    def test_rademacher_pair_product(self):
        # f = x1 x2 with rademacher entries: f^4 = 1 <= 3^4
        assert 1.0 <= 3.0**4

    def test_random_polynomials_never_violate(self):
        for seed in range(40):
            k = 1 + seed % 4
            report = bonami_check(k, 30, "gaussian" if seed % 2 else "rademacher",
                                  poly_seed=seed, trials=4096)
            assert report.satisfied, report.notes

    def test_constant_polynomial_edge(self):
        report = bonami_check(1, 2, "rademacher", poly_seed=5, trials=1024)
        assert report.satisfied

    def test_rejects_large_k(self):
        with pytest.raises(ValueError):
            bonami_check(5, 10)


class TestPaleyZygmund:
    def test_half(self):
        assert paley_zygmund_bound(1.0, 2.0, 0.0) == 0.5

    def test_theta_one_gives_zero(self):
        assert paley_zygmund_bound(1.0, 2.0, 1.0) == 0.0

    def test_constant_variable(self):
        assert paley_zygmund_bound(1.0, 1.0, 0.0) == 1.0

    def test_rejects_infeasible_moments(self):
        with pytest.raises(ValueError, match="infeasible"):
            paley_zygmund_bound(2.0, 1.0, 0.5)

    @given(st.floats(0.0, 1.0), st.floats(0.1, 10.0))
    @settings(max_examples=50, deadline=None)
    def test_monotone_decreasing_in_theta(self, theta, ez):
        ez2 = ez * ez * 1.5
        smaller = paley_zygmund_bound(ez, ez2, min(1.0, theta + 0.1))
        assert paley_zygmund_bound(ez, ez2, theta) >= smaller


class TestLdlrLowerBounds:
    def test_poly_example(self):
        lb = ldlr_lb_from_poly_test(2.0, 1.0, 3, 1)
        assert lb.norm_lower_bound == 32.0
        assert lb.admissible_delta == 0.5 * 3.0**-12
        assert lb.degree == 6

    def test_delta_k1_d1(self):
        assert math.isclose(ldlr_lb_from_poly_test(2.0, 1.0, 1, 1).admissible_delta, 1 / 162)

    def test_spectral_example(self):
        assert ldlr_lb_from_spectral(2.0, 1.0, 3, 1, 4).norm_lower_bound == 8.0

    def test_spectral_L1_reduces_to_poly(self):
        p = ldlr_lb_from_poly_test(3.0, 1.5, 2, 2)
        s = ldlr_lb_from_spectral(3.0, 1.5, 2, 2, 1)
        assert p.norm_lower_bound == s.norm_lower_bound

    def test_rejects_A_below_B(self):
        with pytest.raises(ValueError):
            ldlr_lb_from_poly_test(1.0, 2.0, 1, 1)

    @given(st.floats(1.1, 10.0), st.floats(2.0, 5.0))
    @settings(max_examples=50, deadline=None)
    def test_monotone_in_A_and_B(self, b, gap):
        a = b + gap
        base = ldlr_lb_from_poly_test(a, b, 2, 1).norm_lower_bound
        assert ldlr_lb_from_poly_test(a + 1, b, 2, 1).norm_lower_bound >= base
        assert ldlr_lb_from_poly_test(a, b + 0.5, 2, 1).norm_lower_bound <= base


class TestConsistencyCrosscheck:
    def test_fabricated_hypotheses_rejected(self):
        model = ModelSpec.with_lambda_hat(4, RADEMACHER, 5)
        perf = MeasuredPerformance(A=1.0, B=2.0, delta_upper=1e-9, k=1, d=2)
        report = consistency_crosscheck(model, 2, perf)
        assert report.satisfied  # vacuous
        assert "rejected" in report.notes

    def test_oversized_delta_is_vacuous(self):
        model = ModelSpec.with_lambda_hat(4, RADEMACHER, 5)
        perf = MeasuredPerformance(A=3.0, B=1.0, delta_upper=0.4, k=1, d=2)
        report = consistency_crosscheck(model, 2, perf)
        assert report.satisfied
        assert "vacuous" in report.notes

    def test_lambda_zero_measurement_is_vacuous(self):
        model = ModelSpec.with_lambda(2, 4, RADEMACHER, 0)
        perf = measure_poly_test_performance(model, 2, 1, 4000, 400, seed=6)
        # under P = Q no statistic separates, so A cannot clear B
        assert perf.A <= perf.B
        report = consistency_crosscheck(model, 2, perf)
        assert report.satisfied
        assert "vacuous" in report.notes

    def test_strong_signal_inequality_holds(self):
        model = ModelSpec.with_lambda_hat(4, RADEMACHER, 5)
        # 120k null draws certify delta <= 3^{-4kd}/2 = 7.6e-5 at 99.9%
        perf = measure_poly_test_performance(model, 2, 1, 120_000, 1500, seed=7)
        assert perf.A > perf.B
        assert perf.delta_upper <= 0.5 * 3.0**-8
        report = consistency_crosscheck(model, 2 * perf.k * perf.d, perf)
        assert report.satisfied
        assert "vacuous" not in report.notes
        assert report.margin > 0

    def test_spectral_inequality_holds(self):
        model = ModelSpec.with_lambda_hat(4, RADEMACHER, 5)
        perf = measure_spectral_performance(model, 1, 4000, 400, seed=8)
        assert perf.L == 4
        report = consistency_crosscheck(model, 2, perf)
        assert report.satisfied
        assert "vacuous" not in report.notes
