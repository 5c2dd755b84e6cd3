import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate

from dpdncv import (
    ActiveSet,
    Dataset,
    DpdConfig,
    ModelParams,
    NormalErrorModel,
    j_terms,
    model_moments,
    psi1,
    psi2,
    residuals,
)
from dpdncv.errors import ErrorModel

MODEL = NormalErrorModel()


class QuadratureNormal(ErrorModel):
    """Normal density without closed-form moments: exercises the generic
    quadrature path as an independent oracle."""

    def pdf(self, s):
        return np.exp(-0.5 * np.asarray(s) ** 2) / np.sqrt(2 * np.pi)

    def log_pdf(self, s):
        return -0.5 * np.asarray(s) ** 2 - 0.5 * np.log(2 * np.pi)

    def u(self, s):
        return -np.asarray(s, dtype=float)

    def u_prime(self, s):
        return np.full_like(np.asarray(s, dtype=float), -1.0)


class TestDataset:
    def test_basic_shape(self):
        d = Dataset(np.zeros(3), np.ones((3, 2)))
        assert d.n == 3 and d.p == 2

    def test_row_mismatch_rejected(self):
        with pytest.raises(Exception):
            Dataset(np.zeros(3), np.ones((4, 2)))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            Dataset(np.array([1.0, np.nan]), np.ones((2, 1)))
        with pytest.raises(ValueError):
            Dataset(np.zeros(2), np.array([[1.0], [np.inf]]))

    def test_column_names_length(self):
        with pytest.raises(Exception):
            Dataset(np.zeros(2), np.ones((2, 2)), column_names=("a",))


class TestModelParams:
    def test_sigma_positive(self):
        with pytest.raises(ValueError):
            ModelParams(np.zeros(2), 0.0)
        with pytest.raises(ValueError):
            ModelParams(np.zeros(2), -1.0)

    def test_beta_finite(self):
        with pytest.raises(ValueError):
            ModelParams(np.array([np.nan]), 1.0)


class TestDpdConfig:
    def test_alpha_nonnegative(self):
        with pytest.raises(ValueError):
            DpdConfig(-0.1)
        assert DpdConfig(0.0).likelihood_limit
        assert not DpdConfig(0.5).likelihood_limit


class TestActiveSet:
    def test_partition(self):
        s = ActiveSet.from_beta(np.array([0.0, 1.0, 0.0, -2.0]))
        assert s.indices == (1, 3)
        assert s.complement == (0, 2)
        assert set(s.indices) | set(s.complement) == set(range(4))
        assert not set(s.indices) & set(s.complement)


class TestResiduals:
    def test_exact_fit(self):
        d = Dataset(np.array([1.0]), np.array([[1.0, 0.0]]))
        r = residuals(d, ModelParams(np.array([1.0, 0.0]), 1.0))
        assert_allclose(r, [0.0])

    def test_scalar_case(self):
        d = Dataset(np.array([3.0]), np.array([[1.0, 1.0]]))
        r = residuals(d, ModelParams(np.array([1.0, 1.0]), 2.0))
        assert_allclose(r, [0.5])

    def test_matches_elementwise_loop(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((5, 3))
        y = rng.standard_normal(5)
        beta = rng.standard_normal(3)
        sigma = 0.7
        expected = np.array(
            [(y[i] - sum(X[i, j] * beta[j] for j in range(3))) / sigma for i in range(5)]
        )
        got = residuals(Dataset(y, X), ModelParams(beta, sigma))
        assert_allclose(got, expected, rtol=1e-12)


class TestPsiFunctions:
    def test_psi1_zero_at_origin(self):
        for alpha in (0.0, 0.25, 0.5, 1.0):
            assert psi1(MODEL, alpha, 0.0) == 0.0

    def test_psi2_likelihood_limit_at_origin(self):
        assert_allclose(psi2(MODEL, 0.0, 0.0), 1.0, rtol=1e-14)

    def test_psi2_alpha1_origin_quadrature_oracle(self):
        # psi2(0) = f(0)^alpha - (alpha/(alpha+1)) * integral f^(1+alpha)
        alpha = 1.0
        mf, _ = integrate.quad(lambda s: np.exp(-s * s) / (2 * np.pi), -np.inf, np.inf)
        expected = (2 * np.pi) ** (-0.5) - 0.5 * mf
        assert_allclose(psi2(MODEL, alpha, 0.0), expected, rtol=1e-10)
        assert_allclose(expected, 0.2578948845, rtol=1e-8)

    @pytest.mark.parametrize("alpha", [0.0, 0.25, 0.5, 1.0])
    def test_odd_even_symmetry(self, alpha):
        grid = np.linspace(-6.0, 6.0, 41)
        assert_allclose(psi1(MODEL, alpha, -grid), -psi1(MODEL, alpha, grid), atol=1e-12)
        assert_allclose(psi2(MODEL, alpha, -grid), psi2(MODEL, alpha, grid), atol=1e-12)

    @pytest.mark.parametrize("alpha", [0.25, 0.5, 1.0])
    def test_bounded_for_positive_alpha(self, alpha):
        grid = np.linspace(-60.0, 60.0, 4001)
        vals = np.abs(psi1(MODEL, alpha, grid))
        assert np.all(np.isfinite(vals))
        # the score redescends: far tails carry no influence
        assert abs(psi1(MODEL, alpha, 50.0)) < 1e-30
        assert abs(psi1(MODEL, alpha, -50.0)) < 1e-30
        assert np.max(vals) < np.inf

    def test_unbounded_at_alpha_zero(self):
        for t in (10.0, 100.0, 1000.0):
            assert_allclose(abs(psi1(MODEL, 0.0, t)), t, rtol=1e-14)


class TestJTerms:
    def test_likelihood_limit_at_origin(self):
        j11, j12, j22 = j_terms(MODEL, 0.0, 0.0)
        assert_allclose([j11, j12, j22], [-1.0, 0.0, 1.0], atol=1e-14)

    @pytest.mark.parametrize("alpha", [0.0, 0.3, 1.0])
    def test_j12_odd(self, alpha):
        grid = np.linspace(-4, 4, 17)
        _, j12_plus, _ = j_terms(MODEL, alpha, grid)
        _, j12_minus, _ = j_terms(MODEL, alpha, -grid)
        assert_allclose(j12_minus, -j12_plus, atol=1e-13)

    @pytest.mark.parametrize("alpha", [0.0, 0.25, 0.5, 1.0])
    def test_derivative_identities(self, alpha):
        # J11 = psi1', J12 = (1+a) psi1 + s psi1', J22 = (1+a) psi2 + s psi2'
        s = np.linspace(-5.0, 5.0, 81)
        h = 1e-6
        d_psi1 = (psi1(MODEL, alpha, s + h) - psi1(MODEL, alpha, s - h)) / (2 * h)
        d_psi2 = (psi2(MODEL, alpha, s + h) - psi2(MODEL, alpha, s - h)) / (2 * h)
        j11, j12, j22 = j_terms(MODEL, alpha, s)
        scale = np.maximum(1.0, np.abs(j11))
        assert np.max(np.abs(j11 - d_psi1) / scale) < 1e-6
        expected_j12 = (1 + alpha) * psi1(MODEL, alpha, s) + s * d_psi1
        scale = np.maximum(1.0, np.abs(j12))
        assert np.max(np.abs(j12 - expected_j12) / scale) < 1e-6
        expected_j22 = (1 + alpha) * psi2(MODEL, alpha, s) + s * d_psi2
        scale = np.maximum(1.0, np.abs(j22))
        assert np.max(np.abs(j22 - expected_j22) / scale) < 1e-6


class TestMoments:
    def test_density_normalization(self):
        assert_allclose(model_moments(MODEL, 0.0).mf, 1.0, rtol=1e-14)

    def test_mf_alpha1_quadrature_oracle(self):
        val, _ = integrate.quad(
            lambda s: (np.exp(-0.5 * s * s) / np.sqrt(2 * np.pi)) ** 2, -np.inf, np.inf
        )
        assert_allclose(model_moments(MODEL, 1.0).mf, val, rtol=1e-12)
        assert_allclose(val, 0.2820947918, rtol=1e-9)

    def test_gaussian_second_moment_identity(self):
        # integral s^2 u(s)^2 f^(1+a) = M_f / (1+a) for the normal family
        m = model_moments(MODEL, 0.5)
        assert_allclose(m.m[0, 2], m.mf / 1.5, rtol=1e-12)

    @pytest.mark.parametrize("alpha", [0.0, 0.25, 0.5, 1.0])
    def test_closed_forms_match_quadrature(self, alpha):
        closed = model_moments(MODEL, alpha)
        quad = QuadratureNormal().moments(alpha)
        assert_allclose(closed.mf, quad.mf, rtol=1e-10)
        assert_allclose(closed.m, quad.m, rtol=1e-10, atol=1e-12)
        assert_allclose(closed.m_star, quad.m_star, rtol=1e-10, atol=1e-12)

    def test_negative_alpha_rejected(self):
        with pytest.raises(ValueError):
            model_moments(MODEL, -0.2)
