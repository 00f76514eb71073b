import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize

from condspec.errors import DomainError, NotPositiveSemiDefinite, SingularMatrix
from condspec.gaussian_core import (SeededStream, chi2_cdf, chi2_isf, chi2_pdf, chi2_quantile, chi2_sf,
                                    cholesky, psd_factor, sample_mvn, solve_psd)


def quad_chi2_cdf(x, k):
    """CDF by adaptive quadrature of the density written out from scratch."""
    def pdf(t):
        return math.exp((k / 2 - 1) * math.log(t) - t / 2 - (k / 2) * math.log(2) - math.lgamma(k / 2))
    # split at 1 to isolate the integrable singularity for k = 1
    left = integrate.quad(pdf, 0.0, min(x, 1.0), epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    right = integrate.quad(pdf, 1.0, x, epsabs=1e-14, epsrel=1e-13, limit=200)[0] if x > 1 else 0.0
    return left + right


def quad_chi2_quantile(p, k):
    return optimize.brentq(lambda x: quad_chi2_cdf(x, k) - p, 1e-12, 200.0, xtol=1e-13, rtol=1e-14)


class TestCholesky:
    def test_identity(self):
        np.testing.assert_array_equal(cholesky(np.eye(3)), np.eye(3))

    def test_two_by_two(self):
        L = cholesky([[4.0, 2.0], [2.0, 3.0]])
        np.testing.assert_allclose(L, [[2.0, 0.0], [1.0, math.sqrt(2.0)]], atol=1e-15)
        np.testing.assert_allclose(L @ L.T, [[4.0, 2.0], [2.0, 3.0]], rtol=0, atol=1e-12)

    def test_indefinite(self):
        with pytest.raises(NotPositiveSemiDefinite):
            cholesky([[1.0, 2.0], [2.0, 1.0]])

    def test_not_symmetric(self):
        with pytest.raises(DomainError):
            cholesky([[1.0, 0.5], [0.0, 1.0]])

    def test_not_square(self):
        with pytest.raises(DomainError):
            cholesky(np.ones((2, 3)))

    def test_singular_psd_accepted(self):
        v = np.array([[1.0], [2.0], [-1.0]])
        a = v @ v.T
        L = cholesky(a)
        np.testing.assert_allclose(L @ L.T, a, atol=1e-14)
        assert np.all(np.triu(L, 1) == 0.0)

    def test_singular_rejected_when_nonsingular_required(self):
        with pytest.raises(SingularMatrix):
            cholesky(np.ones((2, 2)), nonsingular=True)

    def test_empty(self):
        assert cholesky(np.zeros((0, 0))).shape == (0, 0)

    @settings(max_examples=200, deadline=None)
    @given(dim=st.integers(1, 12), rank=st.integers(1, 12), seed=st.integers(0, 2**32 - 1),
           scale=st.floats(1e-3, 1e3))
    def test_reconstruction(self, dim, rank, seed, scale):
        rng = np.random.default_rng(seed)
        b = rng.standard_normal((dim, min(rank, dim))) * scale
        a = b @ b.T
        L = cholesky(a)
        assert np.max(np.abs(L @ L.T - a)) <= 1e-10 * np.max(np.abs(a))

    def test_solve(self):
        rng = np.random.default_rng(3)
        b = rng.standard_normal((5, 5))
        a = b @ b.T + np.eye(5)
        rhs = rng.standard_normal((5, 2))
        np.testing.assert_allclose(a @ solve_psd(a, rhs), rhs, atol=1e-12)


class TestPsdFactor:
    def test_full_rank(self):
        a = np.array([[4.0, 2.0, 0.4], [2.0, 3.0, -0.5], [0.4, -0.5, 1.0]])
        F = psd_factor(a)
        np.testing.assert_allclose(F @ F.T, a, atol=1e-14)

    def test_small_leading_pivot(self):
        # rank two with a tiny leading diagonal: the ordering that makes an
        # unpivoted factorization amplify rounding
        b = np.array([[0.03, 0.01], [1.0, 0.2], [0.5, -1.3], [2.0, 0.7]])
        a = b @ b.T
        F = psd_factor(a)
        assert np.max(np.abs(F @ F.T - a)) <= 1e-12 * np.max(np.abs(a))

    @settings(max_examples=200, deadline=None)
    @given(dim=st.integers(1, 12), rank=st.integers(1, 12), seed=st.integers(0, 2**32 - 1))
    def test_reconstruction(self, dim, rank, seed):
        rng = np.random.default_rng(seed)
        b = rng.standard_normal((dim, min(rank, dim))) * rng.uniform(1e-3, 1e3, (dim, 1))
        a = b @ b.T
        F = psd_factor(a)
        assert np.max(np.abs(F @ F.T - a)) <= 1e-10 * np.max(np.abs(a))

    def test_indefinite(self):
        with pytest.raises(NotPositiveSemiDefinite):
            psd_factor([[1.0, 2.0], [2.0, 1.0]])

    def test_empty(self):
        assert psd_factor(np.zeros((0, 0))).shape == (0, 0)


class TestChiSquared:
    def test_median_two_dof(self):
        assert chi2_quantile(0.5, 2) == pytest.approx(2 * math.log(2), abs=1e-12)

    @pytest.mark.parametrize("prob,dof,frozen", [(0.95, 1, 3.841459), (0.95, 2, 5.991465)])
    def test_against_quadrature_oracle(self, prob, dof, frozen):
        oracle = quad_chi2_quantile(prob, dof)
        assert oracle == pytest.approx(frozen, abs=5e-7)
        assert chi2_quantile(prob, dof) == pytest.approx(oracle, abs=1e-9)

    @pytest.mark.parametrize("dof", [1, 2, 3, 5, 10, 20])
    @pytest.mark.parametrize("x", [0.01, 0.3, 1.0, 4.0, 12.0, 30.0])
    def test_cdf_against_quadrature(self, x, dof):
        assert chi2_cdf(x, dof) == pytest.approx(quad_chi2_cdf(x, dof), abs=1e-12)
        assert chi2_sf(x, dof) == pytest.approx(1.0 - quad_chi2_cdf(x, dof), abs=1e-12)

    @pytest.mark.parametrize("dof", [1, 2, 4, 7, 13, 20])
    @pytest.mark.parametrize("prob", [1e-8, 0.001, 0.05, 0.3, 0.5, 0.77, 0.95, 0.999, 1 - 1e-9])
    def test_quantile_inverts_cdf(self, prob, dof):
        x = chi2_quantile(prob, dof)
        assert chi2_cdf(x, dof) == pytest.approx(prob, abs=1e-9)

    def test_monotone(self):
        probs = np.linspace(0.01, 0.99, 50)
        for dof in range(1, 21):
            qs = [chi2_quantile(p, dof) for p in probs]
            assert np.all(np.diff(qs) > 0)
        for p in (0.05, 0.5, 0.95):
            qs = [chi2_quantile(p, k) for k in range(1, 21)]
            assert np.all(np.diff(qs) > 0)

    @pytest.mark.parametrize("dof", range(1, 21))
    def test_roundtrip(self, dof):
        # quantile(cdf(x)) = x to 1e-7, except where p = cdf(x) itself cannot
        # carry that much information: the rounding of p alone moves x by up
        # to ulp(p) / pdf(x)
        for x in np.linspace(0.01, 50.0, 300):
            p = chi2_cdf(x, dof)
            if p >= 1.0:
                continue
            err = abs(chi2_quantile(p, dof) - x)
            conditioning = np.spacing(p) / chi2_pdf(x, dof)
            assert err <= 1e-7 + 2.0 * conditioning, (x, dof, err, conditioning)
            if conditioning < 1e-8:
                assert err <= 1e-7

    @pytest.mark.parametrize("dof", range(1, 21))
    def test_roundtrip_smaller_tail(self, dof):
        # inverting whichever tail probability is below 1/2 always recovers x
        for x in np.linspace(0.01, 50.0, 300):
            p = chi2_cdf(x, dof)
            back = chi2_quantile(p, dof) if p <= 0.5 else chi2_isf(chi2_sf(x, dof), dof)
            assert back == pytest.approx(x, abs=1e-7)

    @pytest.mark.parametrize("prob", [0.0, 1.0, -0.1, 1.5])
    def test_domain(self, prob):
        with pytest.raises(DomainError):
            chi2_quantile(prob, 2)

    def test_zero_dof(self):
        with pytest.raises(DomainError):
            chi2_quantile(0.5, 0)


class TestSeededStream:
    def test_reproducible(self):
        np.testing.assert_array_equal(SeededStream(3, 4).normals(100), SeededStream(3, 4).normals(100))

    def test_distinct_keys_differ(self):
        draws = [SeededStream(s, i).raw(8) for s, i in [(0, 0), (0, 1), (1, 0), (1, 1)]]
        for a in range(4):
            for b in range(a + 1, 4):
                assert not np.any(draws[a] == draws[b])

    def test_children(self):
        s = SeededStream(1, 2)
        assert s.child(0) == s.child(0)
        assert len({s.child(i).stream_index for i in range(1000)}) == 1000
        x, y = s.child(0).normals(200_000), s.child(1).normals(200_000)
        assert abs(np.corrcoef(x, y)[0, 1]) < 4 / math.sqrt(200_000)

    def test_seed_reduced_mod_2_64(self):
        assert SeededStream(2**64 + 5, 1) == SeededStream(5, 1)

    def test_negative_index(self):
        with pytest.raises(DomainError):
            SeededStream(1, -1)


class TestSampleMvn:
    def test_empty(self):
        assert sample_mvn(np.eye(3), 0, SeededStream(0)).shape == (0, 3)

    def test_identity_covariance(self):
        z = sample_mvn(np.eye(2), 1_000_000, SeededStream(2024))
        assert np.max(np.abs(np.cov(z.T) - np.eye(2))) < 0.01
        assert np.all(np.abs(z.mean(axis=0)) < 4 / math.sqrt(z.shape[0]))

    def test_correlated(self):
        sigma = np.array([[2.0, 0.6, 0.0], [0.6, 1.0, -0.3], [0.0, -0.3, 0.5]])
        z = sample_mvn(cholesky(sigma), 400_000, SeededStream(9))
        n = z.shape[0]
        assert np.all(np.abs(z.mean(axis=0)) < 4 * np.sqrt(np.diag(sigma) / n))
        assert np.max(np.abs(np.cov(z.T) - sigma)) < 0.02

    def test_deterministic(self):
        L = cholesky([[1.0, 0.5], [0.5, 1.0]])
        np.testing.assert_array_equal(sample_mvn(L, 100, SeededStream(5, 1)), sample_mvn(L, 100, SeededStream(5, 1)))

    def test_row_ranges_independent_of_batching(self):
        L = cholesky([[1.0, 0.5], [0.5, 1.0]])
        s = SeededStream(5, 1)
        full = sample_mvn(L, 50, s)
        parts = np.vstack([sample_mvn(L, 20, s, start=0), sample_mvn(L, 30, s, start=20)])
        np.testing.assert_array_equal(full, parts)
