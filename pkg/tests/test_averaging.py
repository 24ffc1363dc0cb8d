"""Averaged dynamics: invariant averages, the limit ODE, the linearized
transition matrices, parameter sensitivities, and the fluctuation covariance.

The logistic system used below has closed forms: for dx/dt = theta x (1 - x),
x(t) = x0 e^{theta t} / (1 + x0 (e^{theta t} - 1)) and the parameter
sensitivity is t x (1 - x).
"""

import math

import numpy as np
import pytest
from scipy import integrate

import sfbm
from sfbm.averaging import (
    AveragedSystem,
    _kernel_cell_weights,
    _solve_with_sensitivity,
    fluctuation_covariance,
    fundamental_matrix,
    invariant_average,
    solve_averaged_ode,
    theta_sensitivity,
)

# frozen oracle (40-digit double quadrature): fluctuation variance of the
# constant-amplitude model at t = 1, theta = 1, H = 0.85, no Brownian part
K11_ORACLE = 1.6903674582029007

CONST = sfbm.get_averaged("constant_sigma")


def logistic_system() -> AveragedSystem:
    return AveragedSystem(
        dim=1,
        n_params=1,
        x0=np.array([0.2]),
        c_bar=lambda theta, x: theta[0] * x * (1.0 - x),
        dx_c_bar=lambda theta, x: (theta[0] * (1.0 - 2.0 * x))[..., None],
        dtheta_c_bar=lambda theta, x: (x * (1.0 - x))[..., None],
        sigma_bar=np.array([[1.0]]),
    )


def logistic_exact(t, theta=1.0, x0=0.2):
    e = np.exp(theta * t)
    return x0 * e / (1.0 + x0 * (e - 1.0))


class TestInvariantAverage:
    def test_ou_moments(self):
        # OU dY = -y dt + tau dB has stationary variance tau^2 / 2
        for tau in (1.0, 0.7):
            val = invariant_average(lambda y: -y, tau, lambda y: y**2, domain="real_line")
            assert val == pytest.approx(tau**2 / 2, rel=1e-9)
        odd = invariant_average(lambda y: -y, 1.0, lambda y: y**3, domain="real_line")
        assert abs(odd) < 1e-10

    def test_quartic_well(self):
        # density ~ exp(-y^4 / 2): moments via direct quadrature
        def g(y):
            return y**2

        val = invariant_average(lambda y: -2.0 * y**3, 1.0, g, domain="real_line")
        ys = np.linspace(-8, 8, 200001)
        w = np.exp(-ys**4 / 2)
        ref = np.trapezoid(g(ys) * w, ys) / np.trapezoid(w, ys)
        assert val == pytest.approx(ref, rel=1e-7)

    def test_circle_uniform(self):
        # zero drift on the circle: uniform law
        val = invariant_average(lambda y: np.zeros_like(y), 1.0, np.cos, domain="circle")
        assert abs(val) < 1e-12
        val = invariant_average(lambda y: np.zeros_like(y), 1.0, lambda y: np.cos(y) ** 2, domain="circle")
        assert val == pytest.approx(0.5, abs=1e-12)

    def test_circle_needs_zero_mean_drift(self):
        with pytest.raises(ValueError):
            invariant_average(lambda y: 1.0 + np.sin(y), 1.0, np.sin, domain="circle")

    def test_density_override(self):
        dens = lambda y: np.exp(-((y - 1.0) ** 2) / 2.0)
        val = invariant_average(None, 1.0, lambda y: y, domain="real_line", density=dens)
        assert val == pytest.approx(1.0, abs=1e-9)

    def test_unknown_domain(self):
        with pytest.raises(ValueError):
            invariant_average(lambda y: -y, 1.0, lambda y: y, domain="torus")


class TestAveragedOde:
    def test_exponential_flow(self):
        ode = solve_averaged_ode(CONST, [1.0], 1.0, 256)
        np.testing.assert_allclose(ode.states[:, 0], np.exp(0.5 * ode.times), rtol=1e-12)

    def test_rk4_convergence_order(self):
        sys = logistic_system()
        errs = []
        for steps in (32, 64):
            ode = solve_averaged_ode(sys, [1.0], 1.0, steps)
            errs.append(abs(ode.states[-1, 0] - logistic_exact(1.0)))
        ratio = errs[0] / errs[1]
        assert 12.0 < ratio < 20.0  # fourth order halving

    def test_interpolation_accuracy(self):
        sys = logistic_system()
        ode = solve_averaged_ode(sys, [1.0], 1.0, 512)
        s = np.array([0.123456, 0.5, 0.987])
        vals = ode.at(s)
        np.testing.assert_allclose(vals[:, 0], logistic_exact(s), atol=1e-10)

    def test_at_endpoints_exact_nodes(self):
        ode = solve_averaged_ode(CONST, [1.0], 1.0, 64)
        np.testing.assert_array_equal(ode.at(ode.times[7]), ode.states[7])

    def test_input_validation(self):
        with pytest.raises(ValueError):
            solve_averaged_ode(CONST, [1.0, 2.0], 1.0, 16)
        with pytest.raises(ValueError):
            solve_averaged_ode(CONST, [1.0], -1.0, 16)


class TestFundamentalMatrix:
    def test_exponential_case(self):
        ode = solve_averaged_ode(CONST, [1.0], 1.0, 256)
        cache = fundamental_matrix(CONST, ode)
        z10 = cache.value(256, 0)[0, 0]
        assert z10 == pytest.approx(math.exp(0.5), rel=1e-10)

    def test_identity_on_diagonal(self):
        ode = solve_averaged_ode(logistic_system(), [1.0], 1.0, 64)
        cache = fundamental_matrix(logistic_system(), ode)
        np.testing.assert_allclose(cache.value(17, 17), np.eye(1), atol=1e-14)

    def test_semigroup(self):
        sys = logistic_system()
        ode = solve_averaged_ode(sys, [1.0], 1.0, 128)
        cache = fundamental_matrix(sys, ode)
        direct = cache.value(100, 20)
        composed = cache.value(100, 60) @ cache.value(60, 20)
        np.testing.assert_allclose(direct, composed, rtol=1e-9)

    def test_against_exact_logistic_linearization(self):
        # Z(t, 0) = dx(t)/dx0, computable by differentiating the closed form
        sys = logistic_system()
        ode = solve_averaged_ode(sys, [1.0], 1.0, 256)
        cache = fundamental_matrix(sys, ode)
        h = 1e-7
        fd = (logistic_exact(1.0, x0=0.2 + h) - logistic_exact(1.0, x0=0.2 - h)) / (2 * h)
        assert cache.value(256, 0)[0, 0] == pytest.approx(fd, rel=1e-7)


class TestSensitivity:
    def test_constant_model_closed_form(self):
        ode = solve_averaged_ode(CONST, [1.0], 1.0, 256)
        sens = theta_sensitivity(CONST, ode)
        t = ode.times
        np.testing.assert_allclose(
            sens[:, 0, 0], 0.5 * t * np.exp(0.5 * t), atol=1e-10
        )

    def test_logistic_closed_form_both_routes(self):
        sys = logistic_system()
        steps = 1024
        ode = solve_averaged_ode(sys, [1.0], 1.0, steps)
        sens_quad = theta_sensitivity(sys, ode)
        ode2, sens_var = _solve_with_sensitivity(sys, [1.0], 1.0, steps)

        t = ode.times
        exact = t * logistic_exact(t) * (1.0 - logistic_exact(t))
        np.testing.assert_allclose(sens_var[:, 0, 0], exact, atol=1e-10)
        np.testing.assert_allclose(sens_quad[:, 0, 0], exact, atol=5e-6)
        # the two routes agree to the trapezoid quadrature error
        np.testing.assert_allclose(sens_quad[:, 0, 0], sens_var[:, 0, 0], atol=5e-6)
        np.testing.assert_allclose(ode2.states, ode.states, atol=1e-14)

    def test_matches_finite_differences(self):
        sys = logistic_system()
        h = 1e-6
        hi = solve_averaged_ode(sys, [1.0 + h], 1.0, 128).states[-1, 0]
        lo = solve_averaged_ode(sys, [1.0 - h], 1.0, 128).states[-1, 0]
        _, sens = _solve_with_sensitivity(sys, [1.0], 1.0, 128)
        assert sens[-1, 0, 0] == pytest.approx((hi - lo) / (2 * h), rel=1e-7)


class TestKernelWeights:
    def test_additivity(self):
        h = 0.8
        a = _kernel_cell_weights(np.array([0.0, 0.5, 1.0]), np.array([2.0, 3.0]), h)
        b = _kernel_cell_weights(np.array([0.0, 1.0]), np.array([2.0, 3.0]), h)
        assert a.sum() == pytest.approx(b.sum(), rel=1e-12)

    def test_against_quadrature_off_diagonal(self):
        h = 0.85
        val = _kernel_cell_weights(np.array([0.1, 0.2]), np.array([0.4, 0.6]), h)[0, 0]
        ref, _ = integrate.dblquad(
            lambda r, s: h * (2 * h - 1) * abs(s - r) ** (2 * h - 2), 0.1, 0.2, 0.4, 0.6
        )
        assert val == pytest.approx(ref, rel=1e-9)

    def test_against_quadrature_straddling_diagonal(self):
        h = 0.85
        val = _kernel_cell_weights(np.array([0.1, 0.3]), np.array([0.15, 0.25]), h)[0, 0]
        ref, _ = integrate.dblquad(
            lambda r, s: h * (2 * h - 1) * abs(s - r) ** (2 * h - 2),
            0.1,
            0.3,
            0.15,
            0.25,
        )
        assert val == pytest.approx(ref, rel=1e-6)

    def test_full_square_reproduces_fbm_variance(self):
        # integral over [0,t]^2 of the kernel equals t^{2H}
        h, t = 0.7, 1.3
        edges = np.linspace(0.0, t, 65)
        total = _kernel_cell_weights(edges, edges, h).sum()
        assert total == pytest.approx(t ** (2 * h), rel=1e-12)


class TestFluctuationCovariance:
    def _cache(self, theta=1.0, steps=512):
        ode = solve_averaged_ode(CONST, [theta], 1.0, steps)
        return fundamental_matrix(CONST, ode)

    def test_oracle_value(self):
        cache = self._cache()
        k11 = fluctuation_covariance(CONST, 0.85, cache, 1.0, 1.0, cells=512)[0, 0]
        assert k11 == pytest.approx(K11_ORACLE, rel=1e-6)

    def test_brownian_part_closed_form(self):
        # for the constant model the Brownian correction at t = 1 is
        # lam^2 int_0^1 e^{1-s} e^{s} / 2 ds = lam^2 e / 2
        lam = 0.5
        avg = sfbm.get_averaged("constant_sigma", lam=lam)
        ode = solve_averaged_ode(avg, [1.0], 1.0, 512)
        cache = fundamental_matrix(avg, ode)
        k11 = fluctuation_covariance(avg, 0.85, cache, 1.0, 1.0, cells=512)[0, 0]
        assert k11 == pytest.approx(K11_ORACLE + lam**2 * math.e / 2.0, rel=1e-6)

    def test_symmetry_in_time_arguments(self):
        cache = self._cache()
        a = fluctuation_covariance(CONST, 0.85, cache, 0.5, 1.0, cells=256)
        b = fluctuation_covariance(CONST, 0.85, cache, 1.0, 0.5, cells=256)
        np.testing.assert_allclose(a, b.T, rtol=1e-12)

    def test_zero_time_edge(self):
        cache = self._cache()
        np.testing.assert_array_equal(
            fluctuation_covariance(CONST, 0.85, cache, 0.0, 1.0), np.zeros((1, 1))
        )

    def test_growth_in_time(self):
        cache = self._cache()
        k_half = fluctuation_covariance(CONST, 0.85, cache, 0.5, 0.5, cells=256)[0, 0]
        k_one = fluctuation_covariance(CONST, 0.85, cache, 1.0, 1.0, cells=256)[0, 0]
        assert 0.0 < k_half < k_one

    def test_hurst_range_enforced(self):
        cache = self._cache()
        with pytest.raises(ValueError):
            fluctuation_covariance(CONST, 0.5, cache, 1.0, 1.0)
        with pytest.raises(ValueError):
            fluctuation_covariance(CONST, 1.0, cache, 1.0, 1.0)
