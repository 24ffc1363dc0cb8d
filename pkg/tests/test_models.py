"""Built-in reference models and their averaged limits.

The variable-amplitude model's normalizing constant has an independent
closed form through the modified Bessel function: integrating
exp(-(sin y + cos y)) = exp(-sqrt(2) sin(y + pi/4)) over one period gives
2 pi I_0(sqrt(2)).
"""

import math

import numpy as np
import pytest
from scipy.special import i0

import sfbm
from sfbm.averaging import invariant_average
from sfbm.models import _exp_trig_normalizer

BESSEL_L = 2.0 * math.pi * i0(math.sqrt(2.0))  # = 9.839989254069862


class TestNormalizer:
    def test_against_bessel_identity(self):
        assert _exp_trig_normalizer() == pytest.approx(BESSEL_L, rel=1e-12)

    def test_frozen_value(self):
        assert _exp_trig_normalizer() == pytest.approx(9.839989254069862, rel=1e-12)


class TestVariableSigmaModel:
    def test_amplitude_at_zero(self):
        model = sfbm.get_model("variable_sigma")
        sigma0 = model.diffusion(np.zeros((1, 1)))[0, 0, 0].item()
        assert sigma0 == pytest.approx(float(i0(math.sqrt(2.0)) * math.e), rel=1e-12)
        assert sigma0 == pytest.approx(4.257054769816591, rel=1e-12)

    def test_average_amplitude_is_one(self):
        # the invariant density of the fast motion cancels the amplitude's
        # exponential exactly, so the averaged amplitude is 1
        model = sfbm.get_model("variable_sigma")
        avg_sigma = invariant_average(
            lambda y: 0.5 * (np.sin(y) - np.cos(y)),
            1.0,
            lambda y: np.squeeze(model.diffusion(y[..., None]), axis=(-1, -2)),
            domain="circle",
        )
        assert avg_sigma == pytest.approx(1.0, abs=1e-10)

    def test_lives_on_circle(self):
        assert sfbm.get_model("variable_sigma").fast_on_circle


class TestConstantSigmaModel:
    def test_ou_square_average_is_half(self):
        # OU with unit diffusion: stationary variance 1/2, hence the averaged
        # drift theta x E[y^2] = theta x / 2
        val = invariant_average(lambda y: -y, 1.0, lambda y: y**2, domain="real_line")
        assert val == pytest.approx(0.5, rel=1e-9)

    def test_averaged_drift_consistency(self):
        model = sfbm.get_model("constant_sigma")
        avg = sfbm.get_averaged("constant_sigma")
        theta = np.array([1.3])
        x = np.array([[0.7]])
        e_y2 = invariant_average(lambda y: -y, 1.0, lambda y: y**2, domain="real_line")
        direct = model.drift(theta, x, np.array([[1.0]])).item() * e_y2  # drift is theta x y^2
        assert avg.c_bar(theta, x).item() == pytest.approx(direct, rel=1e-9)

    def test_not_on_circle(self):
        assert not sfbm.get_model("constant_sigma").fast_on_circle


class TestAveragedSystems:
    @pytest.mark.parametrize("name", ["constant_sigma", "variable_sigma"])
    def test_common_limit_ode(self, name):
        # both models average to c_bar = theta x / 2 with unit amplitude
        avg = sfbm.get_averaged(name)
        theta, x = np.array([0.9]), np.array([[1.4]])
        assert np.asarray(avg.c_bar(theta, x)).item() == pytest.approx(0.5 * 0.9 * 1.4, rel=1e-14)
        np.testing.assert_allclose(avg.sigma_bar, [[1.0]])

    def test_jacobians_match_finite_differences(self):
        avg = sfbm.get_averaged("constant_sigma")
        theta, x = np.array([1.2]), np.array([[0.8]])
        h = 1e-6
        fd_x = ((avg.c_bar(theta, x + h) - avg.c_bar(theta, x - h)) / (2 * h)).item()
        assert avg.dx_c_bar(theta, x)[0, 0, 0] == pytest.approx(fd_x, rel=1e-8)
        fd_t = ((avg.c_bar(theta + h, x) - avg.c_bar(theta - h, x)) / (2 * h)).item()
        assert avg.dtheta_c_bar(theta, x)[0, 0, 0] == pytest.approx(fd_t, rel=1e-8)

    def test_lambda_wiring(self):
        avg = sfbm.get_averaged("constant_sigma", lam=0.4)
        assert avg.lam == 0.4
        # the fast-fluctuation amplitude for the constant model is
        # theta x / sqrt(2)
        val = avg.sigma_phi(np.array([1.0]), np.array([[2.0]]))[0, 0, 0].item()
        assert val == pytest.approx(2.0 / math.sqrt(2.0), rel=1e-12)

    def test_variable_model_has_no_fast_fluctuation(self):
        avg = sfbm.get_averaged("variable_sigma", lam=0.5)
        val = avg.sigma_phi(np.array([1.0]), np.ones((3, 1)))
        assert np.all(val == 0.0)


class TestRegistry:
    def test_unknown_names(self):
        with pytest.raises(ValueError):
            sfbm.get_model("unknown")
        with pytest.raises(ValueError):
            sfbm.get_averaged("unknown")

    def test_names_tuple(self):
        assert sfbm.models.MODEL_NAMES == ("constant_sigma", "variable_sigma")
