import math

import numpy as np
import pytest
import scipy.stats as ss
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy import integrate

from evalsim.core import RandomSource
from evalsim.errors import DomainError, ModelError
from evalsim.univariate import (Beta, BetaBinomial, Binomial, DiscreteUniform, Empirical,
                                TruncNormal, Uniform01, cumulative, density, draw,
                                empirical_marginal, marginal_from_json, moments, quantile,
                                standard_gamma)

pos = st.floats(0.2, 20)


def scipy_truncnorm(mu, sigma):
    return ss.truncnorm((0 - mu) / sigma, (1 - mu) / sigma, loc=mu, scale=sigma)


class TestExamples:
    def test_uniform_density(self):
        assert density(Uniform01(), 0.37) == 1.0

    def test_beta_density(self):
        assert density(Beta(5, 2), 0.5) == pytest.approx(0.9375, abs=1e-12)

    def test_binomial_mass(self):
        assert density(Binomial(6, 0.5), 3) == pytest.approx(0.3125, abs=1e-15)

    def test_cumulative(self):
        assert cumulative(Uniform01(), 0.3) == pytest.approx(0.3)
        assert cumulative(Beta(1, 1), 0.42) == pytest.approx(0.42, abs=1e-14)
        assert cumulative(Binomial(6, 0.5), 2) == pytest.approx(22 / 64, abs=1e-15)

    def test_quantile(self):
        assert quantile(Uniform01(), 0.25) == 0.25
        assert quantile(Beta(2, 2), 0.5) == pytest.approx(0.5, abs=1e-12)
        assert quantile(BetaBinomial(6, 1, 1), 0.5) == 3

    def test_moments(self):
        assert moments(Binomial(6, 0.5)) == pytest.approx((3, 1.5))
        assert moments(Beta(5, 2)) == pytest.approx((5 / 7, 10 / (49 * 8)))
        assert moments(BetaBinomial(6, 1, 1)) == pytest.approx((3, 4))

    def test_beta_draws(self):
        x = draw(Beta(5, 2), RandomSource(11), 100_000)
        assert np.all((x > 0) & (x < 1))
        assert abs(x.mean() - 5 / 7) < 0.01

    def test_binomial_draws(self):
        x = draw(Binomial(6, 0.5), RandomSource(12), 100_000)
        assert set(np.unique(x)) <= set(range(7))
        assert abs(x.mean() - 3) < 0.05

    def test_clamped_cdf(self):
        assert cumulative(Beta(2, 3), -1.0) == 0.0
        assert cumulative(Beta(2, 3), 2.0) == 1.0
        assert cumulative(Binomial(6, 0.3), -1) == 0.0
        assert cumulative(Binomial(6, 0.3), 9) == 1.0

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            density(Beta(2, 2), 1.5)
        with pytest.raises(DomainError):
            density(Binomial(6, 0.5), 2.5)
        with pytest.raises(DomainError):
            quantile(Uniform01(), -0.1)

    def test_invalid_parameters(self):
        for bad in (lambda: Beta(0, 1), lambda: TruncNormal(0.5, 0), lambda: Binomial(6, 1.2),
                    lambda: DiscreteUniform(0)):
            with pytest.raises(DomainError):
                bad()


class TestAgainstScipy:
    # scipy overflows internally for x within a few ulps of the smallest normal double.
    @given(pos, pos, st.one_of(st.just(0.0), st.floats(1e-300, 1)))
    def test_beta(self, a, b, x):
        m = Beta(a, b)
        assert m.cdf(x) == pytest.approx(ss.beta(a, b).cdf(x), abs=1e-10)
        if 0 < x < 1:
            assert m.pdf(x) == pytest.approx(ss.beta(a, b).pdf(x), rel=1e-8, abs=1e-10)

    @given(st.floats(-1, 2), st.floats(0.05, 2), st.floats(0, 1))
    def test_truncnormal(self, mu, sigma, x):
        m, ref = TruncNormal(mu, sigma), scipy_truncnorm(mu, sigma)
        assert m.cdf(x) == pytest.approx(ref.cdf(x), abs=1e-9)
        assert m.pdf(x) == pytest.approx(ref.pdf(x), rel=1e-7, abs=1e-9)

    @given(st.floats(-1, 2), st.floats(0.05, 2))
    def test_truncnormal_moments(self, mu, sigma):
        mean, var = TruncNormal(mu, sigma).moments()
        ref = scipy_truncnorm(mu, sigma)
        assert mean == pytest.approx(ref.mean(), abs=1e-8)
        assert var == pytest.approx(ref.var(), rel=1e-6, abs=1e-10)

    # scipy's binom overflows internally for p within a few ulps of the smallest normal double.
    @given(st.integers(1, 30), st.one_of(st.just(0.0), st.floats(1e-300, 1)))
    def test_binomial(self, K, p):
        k = np.arange(K + 1)
        np.testing.assert_allclose(Binomial(K, p).pmf_table(), ss.binom(K, p).pmf(k), atol=1e-12)

    @given(st.integers(1, 30), pos, pos)
    def test_betabinomial(self, K, a, b):
        k = np.arange(K + 1)
        np.testing.assert_allclose(BetaBinomial(K, a, b).pmf_table(),
                                   ss.betabinom(K, a, b).pmf(k), atol=1e-12)


class TestProperties:
    @given(pos, pos, st.floats(0.001, 0.999))
    def test_beta_quantile_inverts_cdf(self, a, b, u):
        m = Beta(a, b)
        assert abs(m.cdf(m.ppf(u)) - u) <= 1e-10

    @given(st.floats(-1, 2), st.floats(0.05, 2), st.floats(0.001, 0.999))
    def test_truncnormal_quantile_inverts_cdf(self, mu, sigma, u):
        m = TruncNormal(mu, sigma)
        assert abs(m.cdf(m.ppf(u)) - u) <= 1e-10

    @given(pos, pos, st.floats(0.01, 0.99))
    def test_quantile_of_cdf_is_identity(self, a, b, x):
        m = Beta(a, b)
        # Within 1e-6 of 1 the stored CDF has lost the digits that fix x.
        assume(1 - m.cdf(x) > 1e-6)
        assert m.ppf(m.cdf(x)) == pytest.approx(x, abs=1e-8)

    @given(st.integers(1, 20), pos, pos, st.floats(0, 1))
    def test_discrete_quantile_is_smallest(self, K, a, b, u):
        m = BetaBinomial(K, a, b)
        k = m.ppf(u)
        assert m.cdf(k) >= u - 1e-15
        if k > 0:
            assert m.cdf(k - 1) < u

    @given(st.integers(1, 20), st.floats(0, 1))
    def test_pmf_sums_to_one(self, K, p):
        for m in (Binomial(K, p), DiscreteUniform(K), BetaBinomial(K, 1 + p, 2 - p)):
            assert abs(m.pmf_table().sum() - 1) <= 1e-12
            assert np.all(m.pmf_table() >= 0)

    @given(st.floats(0.1, 10), st.floats(0.1, 10))
    def test_cdf_monotone(self, a, b):
        x = np.linspace(0, 1, 201)
        assert np.all(np.diff(Beta(a, b).cdf(x)) >= 0)

    @pytest.mark.parametrize("mu,sigma", [(0.5, 0.35), (0.2, 0.05), (-0.5, 0.3), (1.5, 0.2)])
    def test_truncnormal_integrates_to_one(self, mu, sigma):
        x = np.linspace(0, 1, 10_000)
        assert abs(np.trapezoid(TruncNormal(mu, sigma).pdf(x), x) - 1) < 1e-6

    @pytest.mark.parametrize("K,a,b", [(6, 5, 2), (4, 0.7, 0.5), (10, 2, 2)])
    def test_betabinomial_is_binomial_mixture(self, K, a, b):
        pmf = BetaBinomial(K, a, b).pmf_table()
        for k in range(K + 1):
            f = lambda q: ss.binom.pmf(k, K, q) * ss.beta.pdf(q, a, b)
            ref, _ = integrate.quad(f, 0, 1, limit=200, epsabs=1e-12)
            assert abs(pmf[k] - ref) < 1e-8

    @pytest.mark.parametrize("m", [
        Uniform01(), TruncNormal(0.5, 0.35), TruncNormal(0.9, 0.1), Beta(5, 2), Beta(0.7, 0.5),
        DiscreteUniform(6), Binomial(6, 0.3), BetaBinomial(6, 5, 2),
    ], ids=lambda m: m.family)
    def test_monte_carlo_mean(self, m):
        n = 100_000
        x = draw(m, RandomSource(99), n)
        mean, var = moments(m)
        assert abs(x.mean() - mean) < 4 * math.sqrt(var / n)

    def test_draws_deterministic(self):
        a = draw(Beta(0.7, 0.5), RandomSource(5), 1000)
        b = draw(Beta(0.7, 0.5), RandomSource(5), 1000)
        np.testing.assert_array_equal(a, b)


class TestGamma:
    @pytest.mark.parametrize("shape", [0.3, 1.0, 2.5, 10.0])
    def test_distribution(self, shape):
        x = standard_gamma(shape, RandomSource(7), 50_000)
        assert ss.kstest(x, ss.gamma(shape).cdf).pvalue > 1e-3


class TestEmpirical:
    def test_histogram_marginal(self):
        m = empirical_marginal([0.05, 0.15, 0.15, 0.95], 10)
        assert isinstance(m, Empirical)
        assert m.cdf(0.1) == pytest.approx(0.25)
        assert m.cdf(0.2) == pytest.approx(0.75)
        assert m.ppf(0.5) == pytest.approx(0.15)


class TestJson:
    @pytest.mark.parametrize("obj", [
        {"family": "beta", "alpha": 5, "beta": 2},
        {"family": "trunc_normal", "mu": 0.5, "sigma": 0.35},
        {"family": "uniform"},
        {"family": "binomial", "K": 6, "p": 0.5},
        {"family": "beta_binomial", "K": 6, "alpha": 5, "beta": 2},
        {"family": "discrete_uniform", "K": 6},
    ])
    def test_round_trip(self, obj):
        assert marginal_from_json(obj).to_json() == obj

    def test_errors_name_path(self):
        with pytest.raises(ModelError) as exc:
            marginal_from_json({"family": "beta", "alpha": 5}, "$.marginal")
        assert exc.value.path == "$.marginal.beta"
        with pytest.raises(ModelError) as exc:
            marginal_from_json({"family": "gumbel"})
        assert exc.value.path == "$.family"
