"""Hurst exponent estimation from second-order filtered observations.

Two estimators share the filtered quadratic variation
Q_n = sum_{k=2}^n |x_{t_k} - 2 x_{t_{k-1}} + x_{t_{k-2}}|^2 of observations on
the uniform grid {kT/n}:

* known-amplitude estimator: inverts x -> (T/n)^{2x} (4 - 2^{2x}) on the
  normalized statistic Q_n / (n epsilon |sigma_bar|_F^2); needs the noise
  scale epsilon and the effective amplitude.
* scale-ratio estimator: compares Q at spacings T/(2n) and T/n on the same
  path and needs neither.

Both come with plug-in theoretical standard deviations from their CLTs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import as_observations
from .fbm import theoretical_sd_h1, theoretical_sd_h2
from .simulate import ObservationSeries

__all__ = [
    "FilteredSeries",
    "HurstEstimate",
    "second_order_filter",
    "phi",
    "phi_inverse",
    "estimate_h1",
    "estimate_h2",
    "subsample_half",
    "normalized_qv",
    "FilteredQVHurst",
    "ScaleRatioHurst",
]


@dataclass(frozen=True)
class FilteredSeries:
    """Second differences of an observation series; values (n - 1, dim)."""

    T: float
    n: int
    values: np.ndarray

    @property
    def sum_sq(self) -> float:
        return float(np.sum(self.values**2))


@dataclass(frozen=True)
class HurstEstimate:
    """Point estimate with its CLT plug-in standard deviation.

    `clamped` marks estimates pinned to an endpoint of [0, 1] because the
    statistic left phi's range; `in_range` marks points inside the open
    interval (1/2, 1) where the underlying theory lives.
    """

    point: float
    theoretical_sd: float
    method: str
    n: int
    statistic: float
    clamped: bool

    @property
    def in_range(self) -> bool:
        return 0.5 < self.point < 1.0


def second_order_filter(obs: ObservationSeries) -> FilteredSeries:
    """x_{t_k} - 2 x_{t_{k-1}} + x_{t_{k-2}} for k = 2..n."""
    if obs.n < 2:
        raise ValueError("need at least 3 observations to filter twice")
    v = obs.values
    return FilteredSeries(T=obs.T, n=obs.n, values=v[2:] - 2.0 * v[1:-1] + v[:-2])


def phi(n: int, T: float, x):
    """phi_{n,T}(x) = (T/n)^{2x} (4 - 2^{2x}) on [0, 1]; strictly decreasing
    from 3 at x = 0 to 0 at x = 1 whenever n > T."""
    n = int(n)
    if n <= 0 or T <= 0 or not n > T:
        raise ValueError("need n > T > 0 for a strictly decreasing phi")
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0) or np.any(x_arr > 1):
        raise ValueError("phi is defined on [0, 1]")
    out = (T / n) ** (2 * x_arr) * (4.0 - 2.0 ** (2 * x_arr))
    return out if out.ndim else float(out)


def phi_inverse(n: int, T: float, value: float) -> tuple[float, bool]:
    """Left inverse of phi on [0, 1]: bisection to 1e-14 absolute accuracy.

    Values at or beyond the range endpoints clamp to 0 (value >= 3) or 1
    (value <= 0); the second return flags that clamping happened.
    """
    value = float(value)
    if value < 0 or not math.isfinite(value):
        raise ValueError("phi_inverse needs a finite nonnegative value")
    if value >= 3.0:
        return 0.0, value > 3.0
    if value <= 0.0:
        return 1.0, value < 0.0
    lo, hi = 0.0, 1.0  # phi(lo) = 3 > value > 0 = phi(hi)
    while hi - lo > 1e-14:
        mid = 0.5 * (lo + hi)
        if phi(n, T, mid) > value:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), False


def _frob_sq(sigma_bar) -> float:
    sb = np.atleast_2d(np.asarray(sigma_bar, dtype=float))
    out = float(np.sum(sb * sb))
    if out == 0.0:
        raise ValueError("sigma_bar must be nonzero")
    return out


def estimate_h1(obs: ObservationSeries, epsilon: float, sigma_bar=1.0) -> HurstEstimate:
    """Known-amplitude estimator: phi_inverse of the normalized filtered
    quadratic variation Q_n / (n epsilon |sigma_bar|_F^2)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    filt = second_order_filter(obs)
    stat = filt.sum_sq / (obs.n * epsilon * _frob_sq(sigma_bar))
    point, clamped = phi_inverse(obs.n, obs.T, stat)
    sd = theoretical_sd_h1(obs.n, obs.T, point, sigma_bar) if 0.0 < point < 1.0 else math.nan
    return HurstEstimate(
        point=point,
        theoretical_sd=sd,
        method="h1",
        n=obs.n,
        statistic=stat,
        clamped=clamped,
    )


def estimate_h2(obs: ObservationSeries) -> HurstEstimate:
    """Scale-ratio estimator from one path at two spacings.

    With 2n := obs.n observations, compares the filtered quadratic variation
    of the full series (spacing T/2n) with that of every second observation
    (spacing T/n):  1/2 - log(Q_fine / Q_coarse) / (2 log 2).  Needs no
    epsilon or sigma_bar.  The reported plug-in standard deviation assumes a
    scalar effective amplitude.
    """
    if obs.n < 4 or obs.n % 2:
        raise ValueError("scale-ratio estimator needs an even number of steps >= 4")
    fine = second_order_filter(obs)
    coarse = second_order_filter(subsample_half(obs))
    q_fine, q_coarse = fine.sum_sq, coarse.sum_sq
    if q_fine <= 0.0 or q_coarse <= 0.0:
        raise ValueError("degenerate path: filtered quadratic variation vanishes")
    ratio = q_fine / q_coarse
    point = 0.5 - math.log(ratio) / (2.0 * math.log(2.0))
    clamped = False
    if point < 0.0:
        point, clamped = 0.0, True
    elif point > 1.0:
        point, clamped = 1.0, True
    sd = theoretical_sd_h2(obs.n, point) if 0.0 < point < 1.0 else math.nan
    return HurstEstimate(
        point=point,
        theoretical_sd=sd,
        method="h2",
        n=obs.n,
        statistic=ratio,
        clamped=clamped,
    )


def subsample_half(obs: ObservationSeries) -> ObservationSeries:
    """Every second observation (spacing doubled)."""
    if obs.n % 2:
        raise ValueError("need an even number of steps")
    return ObservationSeries(T=obs.T, n=obs.n // 2, values=obs.values[::2])


def normalized_qv(obs: ObservationSeries, hurst: float, sigma_bar=1.0) -> float:
    """n^{2H-1} T^{-2H} (4 - 2^{2H})^{-1} |sigma_bar|_F^{-2} Q_n; converges to
    1 for a path with fBm regularity H and amplitude sigma_bar."""
    if not 0.0 < hurst < 1.0:
        raise ValueError("hurst must lie in (0, 1)")
    filt = second_order_filter(obs)
    n, t = obs.n, obs.T
    norm = n ** (2 * hurst - 1) * t ** (-2 * hurst) / (4.0 - 2.0 ** (2 * hurst))
    return norm * filt.sum_sq / _frob_sq(sigma_bar)


# ---------------------------------------------------------------------------
# Estimator-object interface.
# ---------------------------------------------------------------------------


class FilteredQVHurst(BaseEstimator):
    """Known-amplitude Hurst estimator with a fit/attributes interface.

    Parameters mirror estimate_h1: the small-noise scale `epsilon`, the
    effective amplitude `sigma_bar`, and the horizon `T` used when X is a
    bare array rather than an ObservationSeries.
    """

    def __init__(self, epsilon: float = 1.0, sigma_bar=1.0, T: float = 1.0):
        self.epsilon = epsilon
        self.sigma_bar = sigma_bar
        self.T = T

    def fit(self, X, y=None):
        obs = as_observations(X, self.T)
        est = estimate_h1(obs, self.epsilon, self.sigma_bar)
        self.estimate_ = est
        self.point_ = est.point
        self.theoretical_sd_ = est.theoretical_sd
        self.clamped_ = est.clamped
        self.in_range_ = est.in_range
        return self


class ScaleRatioHurst(BaseEstimator):
    """Scale-ratio Hurst estimator with a fit/attributes interface."""

    def __init__(self, T: float = 1.0):
        self.T = T

    def fit(self, X, y=None):
        obs = as_observations(X, self.T)
        est = estimate_h2(obs)
        self.estimate_ = est
        self.point_ = est.point
        self.theoretical_sd_ = est.theoretical_sd
        self.clamped_ = est.clamped
        self.in_range_ = est.in_range
        return self
