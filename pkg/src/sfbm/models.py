"""Built-in slow-fast models and their closed-form averaged systems.

Two scalar reference models:

* "constant_sigma": dX = theta X Y^2 dt + sqrt(eps) dW^H with an
  Ornstein-Uhlenbeck fast component dY = -(Y/eta) dt + dB/sqrt(eta).
  The OU invariant law is N(0, 1/2), so the averaged drift is theta x / 2
  and the effective noise amplitude is 1.

* "variable_sigma": dX = (theta/2) X dt + sqrt(eps) (L/2pi) e^{sin Y + cos Y} dW^H
  with a fast diffusion on the circle, dY = (sin Y - cos Y)/(2 eta) dt
  + dB/sqrt(eta).  The invariant density is proportional to
  e^{-(sin y + cos y)}, whose normalizer is the same constant
  L = integral_0^{2pi} e^{-(sin y + cos y)} dy, so the averaged amplitude is
  again exactly 1.
"""

from __future__ import annotations

import math

import numpy as np

from .averaging import AveragedSystem
from .simulate import SlowFastModel

__all__ = [
    "constant_sigma_model",
    "variable_sigma_model",
    "constant_sigma_averaged",
    "variable_sigma_averaged",
    "get_model",
    "get_averaged",
    "MODEL_NAMES",
]

MODEL_NAMES = ("constant_sigma", "variable_sigma")

_DEFAULT_THETA_BOX = ((0.1, 3.0),)


def _ones_matrix(y: np.ndarray, rows: int) -> np.ndarray:
    return np.ones(y.shape[:-1] + (rows, rows))


def constant_sigma_model(theta_box=_DEFAULT_THETA_BOX) -> SlowFastModel:
    """Scalar model with constant slow diffusion and an OU fast component."""
    return SlowFastModel(
        name="constant_sigma",
        slow_dim=1,
        fast_dim=1,
        noise_dim=1,
        drift=lambda theta, x, y: theta[0] * x * y**2,
        diffusion=lambda y: _ones_matrix(y, 1),
        fast_drift=lambda y: -y,
        fast_diffusion=lambda y: _ones_matrix(y, 1),
        x0=(1.0,),
        y0=(0.0,),
        theta_box=theta_box,
    )


def _exp_trig_normalizer(tol: float = 1e-12) -> float:
    """L = integral_0^{2pi} e^{-(sin y + cos y)} dy by the periodic trapezoid
    rule with doubling (spectrally accurate for this analytic integrand)."""
    n = 64
    prev = None
    while n <= 2**20:
        y = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
        val = float(np.mean(np.exp(-(np.sin(y) + np.cos(y))))) * 2.0 * math.pi
        if prev is not None and abs(val - prev) < tol:
            return val
        prev = val
        n *= 2
    raise RuntimeError("normalizer quadrature failed to converge")


def variable_sigma_model(theta_box=_DEFAULT_THETA_BOX) -> SlowFastModel:
    """Scalar model with state-dependent slow diffusion; the fast component
    lives on the circle with invariant density e^{-(sin y + cos y)} / L."""
    big_l = _exp_trig_normalizer()
    amp = big_l / (2.0 * math.pi)

    def diffusion(y):
        return (amp * np.exp(np.sin(y) + np.cos(y)))[..., None]

    return SlowFastModel(
        name="variable_sigma",
        slow_dim=1,
        fast_dim=1,
        noise_dim=1,
        drift=lambda theta, x, y: 0.5 * theta[0] * x,
        diffusion=diffusion,
        fast_drift=lambda y: 0.5 * (np.sin(y) - np.cos(y)),
        fast_diffusion=lambda y: _ones_matrix(y, 1),
        x0=(1.0,),
        y0=(0.0,),
        theta_box=theta_box,
        fast_on_circle=True,
    )


def constant_sigma_averaged(lam: float = 0.0) -> AveragedSystem:
    """Averaged system for constant_sigma: c_bar = theta x / 2, sigma_bar = 1.

    The fast-fluctuation amplitude solves the associated Poisson equation in
    closed form; its average is Sigma_Phi(theta, x) = theta x / sqrt(2), which
    only contributes when lam > 0.
    """
    inv_sqrt2 = 1.0 / math.sqrt(2.0)

    return AveragedSystem(
        dim=1,
        n_params=1,
        x0=np.array([1.0]),
        c_bar=lambda theta, x: 0.5 * theta[0] * x,
        dx_c_bar=lambda theta, x: np.full(x.shape[:-1] + (1, 1), 0.5 * theta[0]),
        dtheta_c_bar=lambda theta, x: 0.5 * x[..., None],
        sigma_bar=np.array([[1.0]]),
        sigma_phi=lambda theta, x: (inv_sqrt2 * theta[0] * x)[..., None],
        lam=lam,
    )


def variable_sigma_averaged(lam: float = 0.0) -> AveragedSystem:
    """Averaged system for variable_sigma: identical limit ODE, sigma_bar = 1.

    The slow drift does not depend on the fast state, so the fast-fluctuation
    term vanishes identically (Sigma_Phi = 0 for every lam).
    """
    return AveragedSystem(
        dim=1,
        n_params=1,
        x0=np.array([1.0]),
        c_bar=lambda theta, x: 0.5 * theta[0] * x,
        dx_c_bar=lambda theta, x: np.full(x.shape[:-1] + (1, 1), 0.5 * theta[0]),
        dtheta_c_bar=lambda theta, x: 0.5 * x[..., None],
        sigma_bar=np.array([[1.0]]),
        sigma_phi=lambda theta, x: np.zeros(x.shape[:-1] + (1, 1)),
        lam=lam,
    )


def get_model(name: str) -> SlowFastModel:
    if name == "constant_sigma":
        return constant_sigma_model()
    if name == "variable_sigma":
        return variable_sigma_model()
    raise ValueError(f"unknown model {name!r}; choose from {MODEL_NAMES}")


def get_averaged(name: str, lam: float = 0.0) -> AveragedSystem:
    if name == "constant_sigma":
        return constant_sigma_averaged(lam)
    if name == "variable_sigma":
        return variable_sigma_averaged(lam)
    raise ValueError(f"unknown model {name!r}; choose from {MODEL_NAMES}")
