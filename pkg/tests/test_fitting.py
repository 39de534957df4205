import json
import math

import numpy as np
import pytest
import scipy.stats as ss
from hypothesis import given
from hypothesis import strategies as st

from evalsim.core import RandomSource, Scale, validate_profile
from evalsim.errors import AllValuesEqual, DegenerateSample, DomainError, SingularMatrix, ZeroExpected
from evalsim.fitting import (ConstantColumnWarning, bartlett_sphericity, beta_from_moments,
                             betabinomial_from_moments, chi2_statistic, correlation_matrix,
                             fit_beta_moments, fit_betabinomial_moments, fit_binomial, fit_family,
                             fit_pipeline, fit_truncnormal_mle, histogram_table, jitter_scores,
                             kruskal_wallis, ks_statistic)
from evalsim.generators import CopulaModel, IDDModel, IIDModel, generate
from evalsim.univariate import (Beta, BetaBinomial, Binomial, DiscreteUniform, TruncNormal,
                                Uniform01, empirical_marginal)


class TestBetaMoments:
    def test_symmetric(self):
        assert beta_from_moments(0.5, 0.05) == pytest.approx((2, 2), abs=1e-12)

    def test_forward_check(self):
        a, b = beta_from_moments(0.75, 0.0375)
        assert (a, b) == pytest.approx((3, 1), abs=1e-12)
        mean, var = Beta(a, b).moments()
        assert mean == pytest.approx(0.75) and var == pytest.approx(0.0375)

    def test_bernoulli_bound(self):
        with pytest.raises(DegenerateSample):
            beta_from_moments(0.5, 0.25)

    def test_sample_uses_unbiased_variance(self):
        x = np.array([0.2, 0.4, 0.6])
        mean, var = x.mean(), x.var(ddof=1)
        assert fit_beta_moments(x) == pytest.approx(beta_from_moments(mean, var))

    @given(st.floats(0.3, 20), st.floats(0.3, 20))
    def test_inverts_forward_moments(self, a, b):
        mean, var = Beta(a, b).moments()
        assert beta_from_moments(mean, var) == pytest.approx((a, b), rel=1e-9)


class TestTruncNormal:
    def test_recovery(self):
        x = TruncNormal(0.5, 0.35).draw(RandomSource(21), 100_000)
        mu, sigma = fit_truncnormal_mle(x)
        assert abs(mu - 0.5) < 0.02 and abs(sigma - 0.35) < 0.02

    def test_symmetric_sample(self):
        half = Beta(2, 3).draw(RandomSource(22), 500)
        x = np.concatenate([half, 1 - half])
        mu, _ = fit_truncnormal_mle(x)
        assert abs(mu - 0.5) < 1e-6

    def test_constant(self):
        with pytest.raises(DegenerateSample):
            fit_truncnormal_mle([0.3, 0.3, 0.3])

    def test_beats_moment_start(self):
        x = Beta(0.7, 0.5).draw(RandomSource(23), 2000)
        mu, sigma = fit_truncnormal_mle(x)
        ll = np.sum(np.log(TruncNormal(mu, sigma).pdf(x)))
        ll0 = np.sum(np.log(TruncNormal(x.mean(), x.std(ddof=1)).pdf(x)))
        assert ll >= ll0

    def test_matches_scipy_optimum(self):
        x = TruncNormal(0.3, 0.2).draw(RandomSource(24), 3000)
        mu, sigma = fit_truncnormal_mle(x)

        def nll(t):
            m, s = t
            return -np.sum(ss.truncnorm.logpdf(x, -m / s, (1 - m) / s, loc=m, scale=s))

        assert nll((mu, sigma)) <= nll((mu + 1e-3, sigma)) + 1e-9
        assert nll((mu, sigma)) <= nll((mu, sigma * 1.001)) + 1e-9
        assert nll((mu, sigma)) <= nll((mu, sigma / 1.001)) + 1e-9


class TestBinomial:
    def test_default(self):
        assert fit_binomial([3, 3, 3], 6) == 0.5

    def test_paper_estimator(self):
        assert fit_binomial([3, 3, 3], 6, paper_estimator=True) == pytest.approx(3 / 7)

    def test_zero(self):
        assert fit_binomial([0, 0], 6) == 0.0


class TestBetaBinomial:
    def test_forward_check(self):
        a, b = betabinomial_from_moments(6, 3, 4)
        assert (a, b) == pytest.approx((1, 1), abs=1e-12)
        assert BetaBinomial(6, a, b).moments() == pytest.approx((3, 4))

    def test_zero_mean(self):
        with pytest.raises(DegenerateSample):
            fit_betabinomial_moments([0, 0, 0], 6)

    def test_recovery(self):
        x = BetaBinomial(6, 5, 2).draw(RandomSource(25), 100_000)
        a, b = fit_betabinomial_moments(x, 6)
        assert abs(a - 5) < 0.4 and abs(b - 2) < 0.2

    @given(st.integers(2, 20), st.floats(0.3, 20), st.floats(0.3, 20))
    def test_inverts_forward_moments(self, K, a, b):
        mean, var = BetaBinomial(K, a, b).moments()
        assert betabinomial_from_moments(K, mean, var) == pytest.approx((a, b), rel=1e-6)


class TestKs:
    def test_hand_value(self):
        assert ks_statistic([0.1, 0.5, 0.9], Uniform01().cdf) == pytest.approx(7 / 30, abs=1e-12)

    @given(st.integers(1, 200))
    def test_exact_quantiles(self, n):
        x = (np.arange(1, n + 1) - 0.5) / n
        assert ks_statistic(x, Uniform01().cdf) == pytest.approx(0.5 / n, abs=1e-12)

    def test_atom(self):
        assert ks_statistic([0.0], Uniform01().cdf) == 1.0

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=50))
    def test_matches_scipy(self, xs):
        ref = ss.kstest(xs, "uniform").statistic
        assert ks_statistic(xs, Uniform01().cdf) == pytest.approx(ref, abs=1e-12)

    def test_scaling_with_n(self):
        src = RandomSource(26)
        d1000 = [ks_statistic(src.child(i).random(1000), Uniform01().cdf) for i in range(100)]
        assert 0.02 <= np.median(d1000) <= 0.04
        shrink = sum(
            ks_statistic(src.child(1000 + i).random(10_000), Uniform01().cdf)
            < ks_statistic(src.child(2000 + i).random(100), Uniform01().cdf)
            for i in range(100))
        assert shrink >= 95


class TestChi2:
    def test_hand_values(self):
        assert chi2_statistic([10, 20, 30], DiscreteUniform(2)) == pytest.approx(10, abs=1e-12)
        assert chi2_statistic([60, 0, 0], [1 / 3] * 3) == pytest.approx(120, abs=1e-9)

    def test_perfect_fit(self):
        p = Binomial(4, 0.5).pmf_table()
        assert chi2_statistic(p * 160, p) == pytest.approx(0, abs=1e-12)

    def test_zero_expected(self):
        with pytest.raises(ZeroExpected):
            chi2_statistic([1, 2, 3], [0.5, 0.5, 0.0])

    @given(st.lists(st.integers(0, 50), min_size=2, max_size=8), st.randoms())
    def test_permutation_invariant(self, counts, rnd):
        if sum(counts) == 0:
            return
        k = len(counts)
        p = np.arange(1, k + 1, dtype=float)
        p /= p.sum()
        perm = list(range(k))
        rnd.shuffle(perm)
        a = chi2_statistic(counts, p)
        b = chi2_statistic(np.array(counts)[perm], p[perm])
        assert a == pytest.approx(b, rel=1e-12)
        assert a == pytest.approx(ss.chisquare(counts, np.array(p) * sum(counts)).statistic, rel=1e-9)


class TestCorrelation:
    def test_self(self):
        x = RandomSource(27).random(50)
        R = correlation_matrix(np.column_stack([x, x]))
        assert R[0, 1] == pytest.approx(1.0)

    def test_antitone(self):
        x = RandomSource(28).random(50)
        for method in ("pearson", "spearman"):
            assert correlation_matrix(np.column_stack([x, -x]), method)[0, 1] == pytest.approx(-1.0)

    def test_monotone_nonlinear(self):
        x = RandomSource(29).normal(200)
        X = np.column_stack([x, x**3])
        assert correlation_matrix(X, "spearman")[0, 1] == pytest.approx(1.0)
        assert correlation_matrix(X, "pearson")[0, 1] < 1

    def test_constant_flagged(self):
        X = np.column_stack([np.arange(5.0), np.ones(5)])
        with pytest.warns(ConstantColumnWarning):
            R = correlation_matrix(X)
        assert math.isnan(R[0, 1]) and R[1, 1] == 1.0

    @given(st.integers(0, 2**32 - 1))
    def test_matches_scipy(self, seed):
        X = RandomSource(seed).integers(0, 5, (30, 3)).astype(float)
        if np.any(X.std(axis=0) == 0):
            return
        np.testing.assert_allclose(correlation_matrix(X, "spearman"), ss.spearmanr(X).statistic, atol=1e-12)
        np.testing.assert_allclose(correlation_matrix(X), np.corrcoef(X.T), atol=1e-12)


class TestKruskalWallis:
    def test_hand_value(self):
        H, _ = kruskal_wallis([[1, 2], [3, 4]])
        assert H == pytest.approx(2.4, abs=1e-12)

    def test_relabeling(self):
        a, b = RandomSource(30).random(20), RandomSource(31).random(25)
        assert kruskal_wallis([a, b])[0] == pytest.approx(kruskal_wallis([b, a])[0], rel=1e-12)

    @given(st.lists(st.lists(st.integers(0, 4), min_size=1, max_size=15), min_size=2, max_size=4))
    def test_matches_scipy(self, groups):
        flat = [v for g in groups for v in g]
        if len(set(flat)) == 1:
            with pytest.raises(AllValuesEqual):
                kruskal_wallis(groups)
            return
        H, p = kruskal_wallis(groups)
        ref = ss.kruskal(*groups)
        assert H == pytest.approx(ref.statistic, rel=1e-9, abs=1e-12)
        assert p == pytest.approx(ref.pvalue, abs=1e-9)

    def test_level(self):
        src = RandomSource(32)
        ok = sum(kruskal_wallis([src.child(3 * i + j).random(200) for j in range(3)])[1] > 0.01
                 for i in range(100))
        assert ok >= 98


class TestBartlett:
    def test_identity(self):
        stat, p = bartlett_sphericity(np.eye(3), 50)
        assert stat == 0 and p == 1

    def test_hand_value(self):
        stat, _ = bartlett_sphericity([[1, 0.5], [0.5, 1]], 100)
        assert stat == pytest.approx(-97.5 * math.log(0.75), abs=1e-9)

    def test_increasing_in_r(self):
        stats = [bartlett_sphericity([[1, r], [r, 1]], 40)[0] for r in np.linspace(0, 0.95, 20)]
        assert np.all(np.diff(stats) > 0)

    def test_singular(self):
        with pytest.raises(SingularMatrix):
            bartlett_sphericity([[1, 1], [1, 1]], 10)

    def test_small_n(self):
        with pytest.raises(DomainError):
            bartlett_sphericity(np.eye(3), 3)


class TestEmpirical:
    def test_one_bin_is_uniform(self):
        m = empirical_marginal([0.1, 0.9, 0.3], 1)
        x = np.linspace(0, 1, 11)
        np.testing.assert_allclose(m.cdf(x), x)

    def test_masses(self):
        m = empirical_marginal([0.25, 0.25, 0.25, 0.75], 2)
        np.testing.assert_allclose(m.masses, [0.75, 0.25])

    @given(st.integers(1, 50), st.integers(5, 300), st.integers(0, 2**32 - 1))
    def test_ks_bounded_by_largest_bin(self, G, n, seed):
        # Both CDFs agree at bin edges, so they differ by at most one bin's mass.
        x = Beta(2, 5).draw(RandomSource(seed), n)
        m = empirical_marginal(x, G)
        assert ks_statistic(x, m.cdf) <= max(m.masses) + 1e-12

    @pytest.mark.parametrize("seed", range(20))
    def test_ks_binning_bound_spread_sample(self, seed):
        x = RandomSource(seed).random(1000)
        m = empirical_marginal(x, 40)
        assert ks_statistic(x, m.cdf) <= 1 / 40 + 1 / 1000


class TestHelpers:
    def test_histogram(self):
        rows = histogram_table([0.1, 0.1, 0.6], 2)
        assert rows == [(0.0, 0.5, 2, pytest.approx(4 / 3)), (0.5, 1.0, 1, pytest.approx(2 / 3))]
        rows = histogram_table([0, 2, 2], 2, discrete_K=2)
        assert [r[2] for r in rows] == [1, 0, 2]

    def test_jitter(self):
        x = jitter_scores(np.array([0, 50, 100]), RandomSource(0))
        assert np.all((x >= np.array([0, 50, 100]) / 101) & (x < np.array([1, 51, 101]) / 101))

    def test_fit_family_failure_recorded(self):
        f = fit_family("beta", [0.0, 1.0, 0.0, 1.0])
        assert f.marginal is None and math.isinf(f.gof) and f.error


def _profile(model, n, seed):
    return generate(model, n, RandomSource(seed))


class TestPipeline:
    def test_iid_beta(self):
        rep = fit_pipeline(_profile(IIDModel(Beta(5, 2), 3), 5000, 40))
        assert rep.selected_class == "IID"
        for fits in rep.fits:
            gof = {f.family: f.gof for f in fits}
            assert gof["beta"] < gof["uniform"]

    def test_ddd(self):
        model = CopulaModel([[1, 0.8], [0.8, 1]], [Beta(0.7, 0.5), Beta(0.5, 0.7)])
        rep = fit_pipeline(_profile(model, 5000, 41))
        assert rep.selected_class == "DDD"
        assert abs(rep.dependence.values[0, 1] - 0.8) < 0.05
        assert isinstance(rep.model, CopulaModel)

    def test_did_checkerboard(self):
        model = CopulaModel([[1, 0.6], [0.6, 1]], [Beta(2, 2), Beta(2, 2)])
        rep = fit_pipeline(_profile(model, 3000, 42), dependence="checkerboard", B=10)
        assert rep.selected_class == "DID"
        assert rep.model.dependence.B == 10

    def test_single_candidate(self):
        rep = fit_pipeline(_profile(IIDModel(Beta(2, 2), 1), 100, 43))
        assert rep.selected_class == "IID" and rep.kruskal_wallis is None
        assert any("single candidate" in w for w in rep.warnings)

    def test_discrete(self):
        model = IDDModel([BetaBinomial(6, 5, 2), BetaBinomial(6, 2, 5)])
        rep = fit_pipeline(_profile(model, 4000, 44))
        assert rep.selected_class == "IDD"
        assert rep.best == ["beta_binomial", "beta_binomial"]

    def test_paper_estimator_switch(self):
        p = _profile(IIDModel(Binomial(6, 0.5), 2), 2000, 45)
        get = lambda rep: [f for f in rep.fits[0] if f.family == "binomial"][0].params["p"]
        mean = p.values[:, 0].mean()
        assert get(fit_pipeline(p)) == pytest.approx(mean / 6)
        assert get(fit_pipeline(p, paper_estimator=True)) == pytest.approx(mean / 7)

    def test_large_n_caveat(self):
        rep = fit_pipeline(_profile(IIDModel(Uniform01(), 2), 10_001, 46), families=["uniform"])
        assert any("n=10001" in w for w in rep.warnings)

    def test_report_json(self):
        model = CopulaModel([[1, 0.5], [0.5, 1]], [Beta(2, 5), Beta(5, 2)])
        rep = fit_pipeline(_profile(model, 500, 47))
        obj = json.loads(json.dumps(rep.to_json(), allow_nan=False))
        for key in ("candidates", "kruskal_wallis", "pearson", "spearman", "bartlett",
                    "selected_class", "model"):
            assert key in obj
        assert obj["candidates"][0]["fits"][0].keys() >= {"family", "params", "gof"}
        R = np.array(obj["pearson"])
        np.testing.assert_allclose(R, R.T)
        np.testing.assert_array_equal(np.diag(R), 1.0)

    def test_too_few_voters(self):
        with pytest.raises(DomainError):
            fit_pipeline(validate_profile(np.full((5, 2), 0.5), Scale.continuous()))

    def test_wrong_family_for_scale(self):
        p = _profile(IIDModel(Uniform01(), 2), 50, 48)
        with pytest.raises(DomainError):
            fit_pipeline(p, families=["binomial"])
