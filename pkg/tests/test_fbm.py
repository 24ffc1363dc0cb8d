"""Fractional Brownian motion synthesis and the filter-variance constants.

Reference values marked "frozen oracle" were computed independently with
high-precision quadrature/series evaluation and are pinned here as literals.
"""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import sfbm
from sfbm.fbm import (
    CirculantEmbeddingError,
    _fgn_cholesky,
    _fgn_circulant,
    _unit_fgn_autocovariance,
    autocovariance_table,
)

# frozen oracles (40-digit arithmetic, rounded to float64)
COV_ORACLE_075 = 3.512289773726411  # R_{0.75}(2, 3)
RHO1_085 = -0.3175603103362514  # rho(1; 0.85)
SIGMA1_SQ_085 = 2.452327750894236
SIGMA2_SQ_085 = 0.8292223377134783
SIGMA_SS_085 = 2.020046950914397
SD_H1_1E6_085 = 5.667510346048846e-05
SD_H2_1E4_085 = 0.014499074218395844


class TestCovariance:
    def test_value_oracle(self):
        assert sfbm.fbm_covariance(2.0, 3.0, 0.75) == pytest.approx(COV_ORACLE_075, rel=1e-14)

    def test_brownian_special_case(self):
        s, t = 0.3, 1.7
        assert sfbm.fbm_covariance(s, t, 0.5) == pytest.approx(min(s, t), rel=1e-14)

    def test_symmetry_and_variance(self):
        h = 0.73
        assert sfbm.fbm_covariance(1.2, 0.4, h) == sfbm.fbm_covariance(0.4, 1.2, h)
        assert sfbm.fbm_covariance(1.5, 1.5, h) == pytest.approx(1.5 ** (2 * h), rel=1e-14)

    def test_vectorized(self):
        s = np.array([0.1, 0.5, 1.0])
        out = sfbm.fbm_covariance(s, 1.0, 0.8)
        assert out.shape == (3,)
        assert out[2] == pytest.approx(1.0)

    def test_positive_semidefinite_gram(self):
        t = np.linspace(0.1, 2.0, 12)
        gram = sfbm.fbm_covariance(t[:, None], t[None, :], 0.9)
        assert np.linalg.eigvalsh(gram)[0] > -1e-12


class TestSampling:
    def test_shapes_and_start(self, rng):
        path = sfbm.sample_fbm(128, T=2.0, hurst=0.7, components=3, rng=rng)
        assert path.values.shape == (129, 3)
        assert np.all(path.values[0] == 0.0)
        assert path.increments.shape == (128, 3)
        assert path.times[0] == 0.0 and path.times[-1] == 2.0

    def test_deterministic_given_seed(self):
        a = sfbm.sample_fbm(64, 1.0, 0.85, rng=123)
        b = sfbm.sample_fbm(64, 1.0, 0.85, rng=123)
        np.testing.assert_array_equal(a.values, b.values)

    def test_components_are_distinct_streams(self):
        path = sfbm.sample_fbm(64, 1.0, 0.85, components=2, rng=5)
        assert not np.allclose(path.values[:, 0], path.values[:, 1])

    def test_hurst_out_of_range(self):
        with pytest.raises(ValueError):
            sfbm.sample_fbm(16, 1.0, 1.0)
        with pytest.raises(ValueError):
            sfbm.sample_fbm(16, 1.0, 0.0)

    def test_self_similar_scaling(self):
        # T only rescales amplitude: values(T) = T^H * values(1) for the
        # same draw
        h = 0.65
        a = sfbm.sample_fbm(32, 1.0, h, rng=42)
        b = sfbm.sample_fbm(32, 4.0, h, rng=42)
        np.testing.assert_allclose(b.values, 4.0**h * a.values, rtol=1e-12)

    @pytest.mark.parametrize("hurst", [0.6, 0.85])
    def test_empirical_covariance(self, hurst):
        # distributional correctness of the circulant synthesis
        n, reps = 64, 4000
        path = sfbm.sample_fbm(n, 1.0, hurst, components=reps, rng=2024)
        t = path.times
        pairs = [(16, 16), (32, 48), (16, 64), (64, 64)]
        for i, j in pairs:
            emp = float(np.mean(path.values[i] * path.values[j]))
            target = sfbm.fbm_covariance(t[i], t[j], hurst)
            # Var(W_s W_t) = R(s,t)^2 + R(s,s) R(t,t) for joint Gaussians
            se = math.sqrt(
                (target**2 + sfbm.fbm_covariance(t[i], t[i], hurst) * sfbm.fbm_covariance(t[j], t[j], hurst))
                / reps
            )
            assert abs(emp - target) < 5 * se, (i, j, emp, target, se)

    def test_cholesky_matches_covariance_exactly(self, rng):
        # the dense fallback is exact by construction; verify the factor
        n, h = 32, 0.8
        gamma = _unit_fgn_autocovariance(n, h)
        target = np.array([[gamma[abs(i - j)] for j in range(n)] for i in range(n)])
        fac = np.linalg.cholesky(target)
        np.testing.assert_allclose(fac @ fac.T, target, atol=1e-12)
        inc = _fgn_cholesky(n, h, np.random.default_rng(1))
        assert inc.shape == (n,)

    def test_circulant_and_cholesky_same_marginal_scale(self):
        # both routes target unit-spacing fGn; compare sample variances
        reps = 3000
        var_c = np.var([_fgn_circulant(16, 0.75, np.random.default_rng(s)) for s in range(reps)])
        var_d = np.var([_fgn_cholesky(16, 0.75, np.random.default_rng(s + reps)) for s in range(reps)])
        assert var_c == pytest.approx(1.0, abs=0.05)
        assert var_d == pytest.approx(1.0, abs=0.05)


class TestFilterConstants:
    def test_rho_zero_is_one(self):
        for h in np.linspace(0.505, 0.995, 99):
            assert sfbm.rho(0, h) == pytest.approx(1.0, abs=1e-12)

    def test_rho_brownian_vanishes_beyond_support(self):
        assert abs(sfbm.rho(2, 0.5)) < 1e-14
        assert abs(sfbm.rho(-2, 0.5)) < 1e-14
        assert sfbm.rho(1, 0.5) == pytest.approx(-0.5, rel=1e-14)

    def test_rho_symmetry(self):
        j = np.arange(1, 101)
        np.testing.assert_allclose(sfbm.rho(j, 0.85), sfbm.rho(-j, 0.85), rtol=1e-13)

    def test_rho_oracle(self):
        assert sfbm.rho(1, 0.85) == pytest.approx(RHO1_085, rel=1e-12)

    def test_rho_tilde_oracle(self):
        # cross-correlation of the half-rate filter at lag 0, H = 1/2
        assert sfbm.rho_tilde(0, 0.5) == pytest.approx(1.0 / math.sqrt(2.0), rel=1e-12)

    def test_rho_decay(self):
        # |rho(j)| ~ j^{2H-4}: far lags are tiny
        assert abs(sfbm.rho(500, 0.85)) < 1e-5

    def test_autocovariance_table(self):
        table = autocovariance_table(0.8, max_lag=16)
        np.testing.assert_allclose(table.rho, sfbm.rho(np.arange(17), 0.8), rtol=1e-13)

    def test_sigma1_sq_brownian_closed_form(self):
        # 2 * (1 + 2 * (1/2)^2) = 3 exactly at H = 1/2
        assert sfbm.sigma1_sq(0.5) == pytest.approx(3.0, abs=1e-10)

    def test_sigma_constants_oracles(self):
        assert sfbm.sigma1_sq(0.85) == pytest.approx(SIGMA1_SQ_085, rel=1e-9)
        assert sfbm.sigma2_sq(0.85) == pytest.approx(SIGMA2_SQ_085, rel=1e-9)
        assert sfbm.sigma_star_star_sq(0.85) == pytest.approx(SIGMA_SS_085, rel=1e-9)

    def test_sigma_star_scales_with_amplitude_factor(self):
        # scalar amplitude: factor 1, so starred constant equals sigma1_sq
        assert sfbm.sigma_star_sq(0.85) == pytest.approx(sfbm.sigma1_sq(0.85), rel=1e-12)

    def test_sigma_factor_identity(self):
        assert sfbm.sigma_factor(1.0) == pytest.approx(1.0)
        assert sfbm.sigma_factor(np.eye(3)) == pytest.approx(1.0 / 3.0)

    @given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 10**6))
    def test_sigma_factor_range_and_scale_invariance(self, m, k, seed):
        mat = np.random.default_rng(seed).normal(size=(m, k))
        if np.allclose(mat, 0):
            return
        f = sfbm.sigma_factor(mat)
        assert 0.0 < f <= 1.0 + 1e-12
        assert sfbm.sigma_factor(2.5 * mat) == pytest.approx(f, rel=1e-10)


class TestTheoreticalSd:
    def test_h1_pin(self):
        assert sfbm.theoretical_sd_h1(10**6, 1.0, 0.85) == pytest.approx(SD_H1_1E6_085, rel=1e-12)

    def test_h2_pin(self):
        assert sfbm.theoretical_sd_h2(10**4, 0.85) == pytest.approx(SD_H2_1E4_085, rel=1e-12)

    def test_h1_needs_log_margin(self):
        with pytest.raises(ValueError):
            sfbm.theoretical_sd_h1(10, 10.0, 0.85)

    def test_h2_needs_even_n(self):
        with pytest.raises(ValueError):
            sfbm.theoretical_sd_h2(101, 0.85)
        with pytest.raises(ValueError):
            sfbm.theoretical_sd_h2(2, 0.85)

    def test_h1_amplitude_dependence(self):
        # the rate constant scales with the amplitude factor through
        # sigma_star_sq; scalar amplitudes leave it unchanged
        base = sfbm.theoretical_sd_h1(10**4, 1.0, 0.85, 1.0)
        assert sfbm.theoretical_sd_h1(10**4, 1.0, 0.85, 3.0) == pytest.approx(base, rel=1e-12)

    def test_monotone_in_n(self):
        sds = [sfbm.theoretical_sd_h1(n, 1.0, 0.85) for n in (10**2, 10**3, 10**4)]
        assert sds[0] > sds[1] > sds[2]


class TestEmbeddingInternals:
    def test_circulant_rejects_nothing_in_range(self):
        # the canonical embedding is provably nonnegative for H in (0, 1);
        # spot-check eigenvalues directly
        for h in (0.55, 0.85, 0.95):
            gamma = _unit_fgn_autocovariance(64, h)
            ring = np.concatenate([gamma, gamma[-2:0:-1]])
            lam = np.fft.rfft(ring).real
            assert lam.min() > -1e-10 * lam.max()

    def test_error_type_exists(self):
        assert issubclass(CirculantEmbeddingError, RuntimeError)
