"""Hermite algebra, identity checks, and the multivariate LDLR expansion."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lowdeg.hermite import (
    check_generating_function,
    check_ibp_identity,
    check_translation_identity,
    enumerate_multi_indices,
    gauss_hermite_rule,
    hermite_coeffs,
    hermite_eval,
    hermite_values,
    ldlr_coefficient,
    ldlr_evaluate,
    ldlr_evaluate_batch,
    multi_index_count,
)
from lowdeg.ldlr import ModelSpec
from lowdeg.oracles import ldlr_evaluate_n1_symbolic
from lowdeg.priors import PriorSpec
from lowdeg.rng import make_rng

RADEMACHER = PriorSpec.rademacher()


class TestHermiteCoeffs:
    def test_base_cases(self):
        assert hermite_coeffs(0).coeffs == (1,)
        assert hermite_coeffs(1).coeffs == (0, 1)

    def test_degree_two(self):
        assert hermite_coeffs(2).coeffs == (-1, 0, 1)

    def test_degree_four(self):
        # x^4 - 6x^2 + 3, matching probabilists' Hermite tables
        assert hermite_coeffs(4).coeffs == (3, 0, -6, 0, 1)

    @pytest.mark.parametrize("k", range(51))
    def test_structure_up_to_50(self, k):
        h = hermite_coeffs(k)
        assert h.coeffs[-1] == 1  # monic
        assert all(c == 0 for i, c in enumerate(h.coeffs) if (i - k) % 2)  # parity
        assert h.factorial == math.factorial(k)

    @pytest.mark.parametrize("k", range(50))
    def test_recursion_coefficientwise(self, k):
        h, hn = hermite_coeffs(k), hermite_coeffs(k + 1)
        c = h.coeffs
        shifted = (0,) + c
        deriv = tuple(i * c[i] for i in range(1, len(c))) + (0, 0)
        assert hn.coeffs == tuple(s - d for s, d in zip(shifted, deriv))


class TestHermiteEval:
    def test_h2_at_zero(self):
        assert hermite_eval(2, 0.0) == -1.0

    def test_normalized_h2_at_zero(self):
        assert math.isclose(hermite_eval(2, 0.0, normalized=True), -1 / math.sqrt(2))

    @pytest.mark.parametrize("k", [1, 3, 5, 17, 33])
    def test_odd_degree_vanishes_at_zero(self, k):
        assert hermite_eval(k, 0.0) == 0.0

    def test_value_recurrence_matches_coefficients(self):
        # crosses the k = 30 switch point
        for k in (29, 30, 31, 35):
            for y in (-1.7, 0.3, 2.2):
                direct = hermite_coeffs(k)(y)
                assert math.isclose(hermite_eval(k, y), direct, rel_tol=1e-9)

    def test_normalized_matches_unnormalized(self):
        for k in (4, 12, 25):
            y = 1.3
            assert math.isclose(
                hermite_eval(k, y, normalized=True),
                hermite_eval(k, y) / math.sqrt(math.factorial(k)),
                rel_tol=1e-10,
            )

    def test_batch_values(self):
        y = np.array([-0.5, 0.0, 1.5])
        hv = hermite_values(4, y)
        assert hv.shape == (5, 3)
        np.testing.assert_allclose(hv[2], y**2 - 1, atol=1e-14)
        np.testing.assert_allclose(hv[4], y**4 - 6 * y**2 + 3, atol=1e-12)


class TestOrthonormality:
    def test_quadrature_orthonormality_to_12(self):
        x, w = gauss_hermite_rule()
        hv = hermite_values(12, x)
        worst = 0.0
        for j in range(13):
            for k in range(13):
                norm = math.sqrt(math.factorial(j) * math.factorial(k))
                val = float(w @ (hv[j] * hv[k])) / norm
                worst = max(worst, abs(val - (1.0 if j == k else 0.0)))
        assert worst < 1e-10


class TestTranslationIdentity:
    def test_k2_mu0(self):
        assert check_translation_identity(2, 0.0) < 1e-12

    def test_k3_mu2(self):
        # E h_3(y) under N(2,1) is 2^3 = 8
        assert check_translation_identity(3, 2.0) < 1e-8

    def test_k5_mu_half(self):
        # mu^k = 0.5^5 = 0.03125
        assert check_translation_identity(5, 0.5) < 1e-8

    def test_direct_value(self):
        x, w = gauss_hermite_rule()
        est = float(w @ hermite_values(3, x + 2.0)[3])
        assert math.isclose(est, 8.0, abs_tol=1e-10)


class TestIntegrationByParts:
    def test_k1_quadratic(self):
        # E[y * y^2] = 0 = E[2y]
        assert check_ibp_identity(1, "poly:2") < 1e-12

    def test_k2_quadratic(self):
        # E[(y^2-1) y^2] = 3 - 1 = 2 = E[f'']
        assert check_ibp_identity(2, "poly:2") < 1e-12
        x, w = gauss_hermite_rule()
        lhs = float(w @ ((x**2 - 1) * x**2))
        assert math.isclose(lhs, 2.0, abs_tol=1e-12)

    def test_k1_exponential(self):
        # both sides e^{1/2}
        assert check_ibp_identity(1, "exp:1") < 1e-8
        x, w = gauss_hermite_rule()
        assert math.isclose(float(w @ (x * np.exp(x))), math.exp(0.5), rel_tol=1e-10)

    def test_cos_family(self):
        assert check_ibp_identity(2, "cos") < 1e-8
        assert check_ibp_identity(4, "cos") < 1e-8

    def test_unknown_tag(self):
        with pytest.raises(ValueError, match="poly:m"):
            check_ibp_identity(1, "sinh")


class TestGeneratingFunction:
    def test_x_zero_exact(self):
        assert check_generating_function(0.0, 1.3, 0) == 0.0

    def test_unit_point(self):
        assert check_generating_function(1.0, 1.0, 30) < 1e-12

    def test_edge_of_range(self):
        assert check_generating_function(2.0, -1.0, 60) < 1e-9

    def test_decays_in_K(self):
        resids = [check_generating_function(1.5, 0.7, K) for K in (5, 15, 30)]
        assert resids[0] > resids[1] > resids[2]


class TestMultiIndices:
    def test_small_counts(self):
        assert len(list(enumerate_multi_indices(2, 1))) == 3
        assert len(list(enumerate_multi_indices(2, 2))) == 6
        assert len(list(enumerate_multi_indices(3, 2))) == 10

    @given(st.integers(1, 5), st.integers(0, 4))
    @settings(max_examples=30, deadline=None)
    def test_count_uniqueness_and_grading(self, N, D):
        seen = list(enumerate_multi_indices(N, D))
        assert len(seen) == multi_index_count(N, D) == math.comb(N + D, D)
        assert len(set(seen)) == len(seen)
        degrees = [sum(e for _, e in a) for a in seen]
        assert degrees == sorted(degrees)  # graded order
        assert all(0 < e and 0 <= c < N for a in seen for c, e in a)

    def test_cap_error_names_count(self):
        with pytest.raises(ValueError, match="3003"):
            list(enumerate_multi_indices(10, 5, cap=100))


class TestLdlrCoefficient:
    def test_off_diagonal_vanishes(self):
        # one off-diagonal matrix entry to the first power: lambda E[x_i x_j] = 0
        model = ModelSpec.with_lambda(2, 3, RADEMACHER, Fraction(1, 2))
        alpha = ((1, 1),)  # coordinate (0, 1)
        assert ldlr_coefficient(model, alpha) == 0

    def test_diagonal_entry_gives_lambda(self):
        model = ModelSpec.with_lambda(2, 3, RADEMACHER, Fraction(1, 2))
        alpha = ((0, 1),)  # coordinate (0, 0): lambda E[x_0^2]
        assert ldlr_coefficient(model, alpha) == Fraction(1, 2)

    def test_empty_index_gives_one(self):
        model = ModelSpec.with_lambda(3, 2, RADEMACHER, Fraction(2, 3))
        assert ldlr_coefficient(model, ()) == 1

    def test_float_lambda_gives_float(self):
        model = ModelSpec.with_lambda(2, 2, RADEMACHER, 0.3)
        val = ldlr_coefficient(model, ((0, 2),))
        assert isinstance(val, float)
        assert math.isclose(val, 0.09)

    def test_monte_carlo_component_means(self):
        """E_P[Hhat_alpha(Y)] = <L, H_alpha> / sqrt(prod alpha_c!) within 4 sigma."""
        n, trials = 3, 20000
        model = ModelSpec.with_lambda_hat(n, RADEMACHER, Fraction(3, 2))
        rng = make_rng(11, "prop-components")
        spikes = 2.0 * rng.integers(0, 2, size=(trials, n)) - 1.0
        noise = rng.standard_normal((trials, n * n))
        ys = model.lam * np.einsum("ti,tj->tij", spikes, spikes).reshape(trials, -1) + noise
        for alpha in [((0, 1),), ((0, 2),), ((1, 1), (3, 1)), ((4, 2),)]:
            norm = math.sqrt(math.prod(math.factorial(a) for _, a in alpha))
            expected = float(ldlr_coefficient(model, alpha)) / norm
            vals = np.ones(trials)
            for c, a in alpha:
                vals = vals * hermite_values(a, ys[:, c])[a]
            vals /= norm
            se = vals.std(ddof=1) / math.sqrt(trials)
            assert abs(vals.mean() - expected) < 4 * se + 1e-12


class TestLdlrEvaluate:
    def test_degree_zero_is_one(self):
        model = ModelSpec.with_lambda(2, 2, RADEMACHER, Fraction(1, 2))
        y = make_rng(0, "y").standard_normal(4)
        assert ldlr_evaluate(model, 0, y) == 1.0

    def test_lambda_zero_is_one(self):
        model = ModelSpec.with_lambda(2, 2, RADEMACHER, 0)
        y = make_rng(1, "y").standard_normal(4)
        assert math.isclose(ldlr_evaluate(model, 3, y), 1.0, abs_tol=1e-12)

    def test_n1_odd_tensor_matches_truncated_cosh_expansion(self):
        # p = 3, n = 1, rademacher: X = +-lambda, so L(y) = e^{-l^2/2} cosh(l y);
        # the degree-2 truncation at y = 0 is 1 + l^2 h_2(0)/2 = 1 - l^2/2
        lam = Fraction(3, 5)
        model = ModelSpec.with_lambda(3, 1, RADEMACHER, lam)
        got = ldlr_evaluate(model, 2, np.zeros(1))
        assert math.isclose(got, 1 - float(lam) ** 2 / 2, rel_tol=1e-12)

    @pytest.mark.parametrize("p,D", [(2, 4), (3, 5), (4, 6)])
    def test_n1_symbolic_oracle(self, p, D):
        model = ModelSpec.with_lambda(p, 1, RADEMACHER, Fraction(4, 5))
        for y in (-1.2, 0.0, 0.8, 2.1):
            assert math.isclose(
                ldlr_evaluate(model, D, np.array([y])),
                ldlr_evaluate_n1_symbolic(model, D, y),
                rel_tol=1e-10,
                abs_tol=1e-12,
            )

    def test_batch_matches_scalar(self):
        model = ModelSpec.with_lambda_hat(3, RADEMACHER, 2)
        ys = make_rng(5, "batch").standard_normal((4, 9))
        batch = ldlr_evaluate_batch(model, 3, ys)
        for i in range(4):
            assert math.isclose(batch[i], ldlr_evaluate(model, 3, ys[i]), rel_tol=1e-12)

    def test_cap_enforced(self):
        model = ModelSpec.with_lambda_hat(6, RADEMACHER, 1)
        with pytest.raises(ValueError, match="cap"):
            ldlr_evaluate(model, 4, np.zeros(36), cap=100)
