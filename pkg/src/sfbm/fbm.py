"""Fractional Brownian motion: exact synthesis and second-order filter constants.

Synthesis uses circulant embedding of the increment covariance (exact in
distribution, O(N log N)); a dense Cholesky factorization is the fallback
when the embedding fails.  The second half of the module collects the
autocovariance sequences of twice-filtered increments and the asymptotic
variance constants built from them, which downstream estimators quote as
theoretical standard deviations.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CirculantEmbeddingError",
    "FbmPath",
    "fbm_covariance",
    "sample_fbm",
    "rho",
    "rho_tilde",
    "AutocovarianceTable",
    "autocovariance_table",
    "sigma1_sq",
    "sigma2_sq",
    "sigma_factor",
    "sigma_star_sq",
    "sigma_star_star_sq",
    "theoretical_sd_h1",
    "theoretical_sd_h2",
]

# Largest size for which the dense Cholesky fallback is attempted. Above this
# the memory/time cost is unreasonable and we fail loudly instead.
_CHOLESKY_FALLBACK_MAX = 2**13

# Negative circulant eigenvalues smaller than this (relative to the largest
# eigenvalue) are treated as roundoff and clamped to zero.
_EIGENVALUE_TOL = 1e-10


class CirculantEmbeddingError(RuntimeError):
    """Raised when the circulant embedding is materially non-PSD and the
    problem is too large for the dense fallback."""


def _check_hurst(hurst: float) -> float:
    hurst = float(hurst)
    if not 0.0 < hurst < 1.0:
        raise ValueError(f"hurst must lie in (0, 1), got {hurst}")
    return hurst


def fbm_covariance(s, t, hurst: float):
    """Covariance E[W^H_s W^H_t] = (s^{2H} + t^{2H} - |t-s|^{2H}) / 2.

    Accepts scalars or arrays (broadcast together); times must be >= 0.
    """
    hurst = _check_hurst(hurst)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise ValueError("times must be nonnegative")
    two_h = 2.0 * hurst
    out = 0.5 * (s**two_h + t**two_h - np.abs(t - s) ** two_h)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class FbmPath:
    """A sampled fBm path on the uniform grid {k*T/n_steps : k=0..n_steps}.

    values has shape (n_steps + 1, components); values[0] is zero.
    """

    T: float
    n_steps: int
    hurst: float
    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] != self.n_steps + 1:
            raise ValueError("values must be 2-D with n_steps + 1 rows")
        if not np.all(self.values[0] == 0.0):
            raise ValueError("fBm paths start at zero")

    @property
    def components(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_steps + 1)

    @property
    def increments(self) -> np.ndarray:
        """Shape (n_steps, components)."""
        return np.diff(self.values, axis=0)


def _unit_fgn_autocovariance(n: int, hurst: float) -> np.ndarray:
    """gamma(k) = Cov of unit-spacing fGn, for k = 0..n."""
    k = np.arange(n + 1, dtype=float)
    two_h = 2.0 * hurst
    return 0.5 * ((k + 1.0) ** two_h - 2.0 * k**two_h + np.abs(k - 1.0) ** two_h)


def _fgn_circulant(n: int, hurst: float, rng: np.random.Generator) -> np.ndarray:
    """Exact unit-spacing fGn of length n via circulant embedding.

    Raises CirculantEmbeddingError if the embedding eigenvalues are negative
    beyond roundoff tolerance.
    """
    gamma = _unit_fgn_autocovariance(n, hurst)
    # Symmetric ring [g0..gn, g_{n-1}..g_1] of length 2n; its DFT is real.
    ring = np.concatenate([gamma, gamma[-2:0:-1]])
    lam = np.fft.rfft(ring).real  # length n + 1 (the full spectrum is symmetric)
    lam_max = lam.max()
    if lam.min() < -_EIGENVALUE_TOL * lam_max:
        raise CirculantEmbeddingError(
            f"circulant embedding not PSD: min eigenvalue {lam.min():.3e} "
            f"(max {lam_max:.3e}) for n={n}, hurst={hurst}"
        )
    lam = np.clip(lam, 0.0, None)

    # One draw of 2n standard normals, in a fixed documented order:
    # z[0] -> frequency 0, z[1:n] -> real parts of 1..n-1, z[n] -> Nyquist,
    # z[n+1:] -> imaginary parts of 1..n-1.
    m = 2 * n
    z = rng.standard_normal(m)
    w = np.empty(n + 1, dtype=complex)
    w[0] = math.sqrt(lam[0] / m) * z[0]
    w[n] = math.sqrt(lam[n] / m) * z[n]
    if n > 1:
        scale = np.sqrt(lam[1:n] / (2.0 * m))
        w[1:n] = scale * (z[1:n] + 1j * z[n + 1 :])
    # irfft reconstructs the Hermitian-symmetric length-2n signal; the result
    # has covariance ring(j - l), so the first n entries are the fGn.
    return m * np.fft.irfft(w, m)[:n]


def _fgn_cholesky(n: int, hurst: float, rng: np.random.Generator) -> np.ndarray:
    if n > _CHOLESKY_FALLBACK_MAX:
        raise CirculantEmbeddingError(
            f"circulant embedding failed and n={n} exceeds the dense "
            f"Cholesky fallback limit {_CHOLESKY_FALLBACK_MAX}"
        )
    gamma = _unit_fgn_autocovariance(n - 1, hurst)
    idx = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])
    cov = gamma[idx]
    chol = np.linalg.cholesky(cov)
    return chol @ rng.standard_normal(n)


def sample_fbm(
    n_steps: int,
    T: float,
    hurst: float,
    components: int = 1,
    rng: np.random.Generator | np.random.SeedSequence | int | None = None,
) -> FbmPath:
    """Sample `components` independent fBm paths on a uniform grid over [0, T].

    Exact in distribution. Each component consumes an independent child
    stream spawned from `rng`, so adding components never perturbs the
    earlier ones.
    """
    hurst = _check_hurst(hurst)
    n_steps = int(n_steps)
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if T <= 0:
        raise ValueError("T must be positive")
    if components < 1:
        raise ValueError("components must be >= 1")
    if isinstance(rng, np.random.SeedSequence):
        # construct children from (entropy, spawn_key) so reusing the same
        # sequence object reproduces the same paths (.spawn mutates state)
        base = tuple(rng.spawn_key)
        streams = [
            np.random.default_rng(
                np.random.SeedSequence(entropy=rng.entropy, spawn_key=base + (c,))
            )
            for c in range(components)
        ]
    else:
        streams = np.random.default_rng(rng).spawn(components)

    scale = (T / n_steps) ** hurst
    values = np.zeros((n_steps + 1, components))
    for c, stream in enumerate(streams):
        try:
            fgn = _fgn_circulant(n_steps, hurst, stream)
        except CirculantEmbeddingError:
            if n_steps > _CHOLESKY_FALLBACK_MAX:
                raise
            warnings.warn(
                "circulant embedding failed; using dense Cholesky fallback",
                RuntimeWarning,
                stacklevel=2,
            )
            fgn = _fgn_cholesky(n_steps, hurst, stream)
        np.cumsum(scale * fgn, out=values[1:, c])
    return FbmPath(T=float(T), n_steps=n_steps, hurst=hurst, values=values)


# ---------------------------------------------------------------------------
# Autocovariances of second-order filtered increments and variance constants.
# ---------------------------------------------------------------------------


def rho(j, hurst: float):
    """Autocorrelation at lag j of second-differenced fGn (lag-0 value is 1).

    rho(j) = [-|j-2|^{2H} + 4|j-1|^{2H} - 6|j|^{2H} + 4|j+1|^{2H} - |j+2|^{2H}]
             / (2 (4 - 2^{2H})).
    """
    hurst = _check_hurst(hurst)
    j = np.abs(np.asarray(j, dtype=float))
    two_h = 2.0 * hurst

    def p(x):
        # |x|^{2H}; numpy gives 0.0**positive = 0.0, the right removable value
        return np.abs(x) ** two_h

    num = -p(j - 2) + 4 * p(j - 1) - 6 * p(j) + 4 * p(j + 1) - p(j + 2)
    out = num / (2.0 * (4.0 - 2.0**two_h))
    return out if out.ndim else float(out)


def rho_tilde(j, hurst: float):
    """Cross-covariance at lag j between second differences at spacing T/n and
    the coarser spacing 2T/n, normalized like rho.

    rho_tilde(j) = [-|j-3|^{2H} + 2|j-2|^{2H} + |j-1|^{2H} - 4|j|^{2H}
                    + |j+1|^{2H} + 2|j+2|^{2H} - |j+3|^{2H}]
                   / (2 (4 - 2^{2H}) 2^H).
    """
    hurst = _check_hurst(hurst)
    j = np.asarray(j, dtype=float)
    two_h = 2.0 * hurst

    def p(x):
        return np.abs(x) ** two_h

    num = (
        -p(j - 3)
        + 2 * p(j - 2)
        + p(j - 1)
        - 4 * p(j)
        + p(j + 1)
        + 2 * p(j + 2)
        - p(j + 3)
    )
    out = num / (2.0 * (4.0 - 2.0**two_h) * 2.0**hurst)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class AutocovarianceTable:
    """Tabulated rho / rho_tilde values for lags 0..max_lag."""

    hurst: float
    max_lag: int
    rho: np.ndarray = field(repr=False)
    rho_tilde: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.rho.shape != (self.max_lag + 1,):
            raise ValueError("rho must have max_lag + 1 entries")
        if self.rho_tilde.shape != (self.max_lag + 1,):
            raise ValueError("rho_tilde must have max_lag + 1 entries")


def autocovariance_table(hurst: float, max_lag: int = 64) -> AutocovarianceTable:
    hurst = _check_hurst(hurst)
    if max_lag < 0:
        raise ValueError("max_lag must be >= 0")
    lags = np.arange(max_lag + 1)
    return AutocovarianceTable(
        hurst=hurst,
        max_lag=max_lag,
        rho=rho(lags, hurst),
        rho_tilde=rho_tilde(lags, hurst),
    )


def _tail_sum_sq(func, hurst: float, tol: float = 1e-12) -> float:
    """sum_{j>=1} func(j, hurst)^2 by doubling blocks.

    Stops when a whole block contributes less than tol. The sequences decay
    like j^{2H-4}, so the first block [1, 1e4] already captures everything at
    double precision; extending the sum far beyond that only accumulates
    floating-point cancellation noise, which is why truncation is adaptive
    rather than "as large as possible".
    """
    total = []
    lo, hi = 1, 10_000
    while True:
        j = np.arange(lo, hi + 1)
        block = float(np.sum(func(j, hurst) ** 2))
        total.append(block)
        if block < tol:
            break
        lo, hi = hi + 1, 2 * hi
        if hi > 10**9:  # unreachable for H in (0,1); guard against hangs
            raise RuntimeError("autocovariance tail sum failed to converge")
    return math.fsum(total)


def sigma1_sq(hurst: float) -> float:
    """Limit variance constant 2 (1 + 2 sum_{j>=1} rho(j)^2)."""
    hurst = _check_hurst(hurst)
    return 2.0 * (1.0 + 2.0 * _tail_sum_sq(rho, hurst))


def sigma2_sq(hurst: float) -> float:
    """Limit covariance constant rho_tilde(0)^2 + 2 sum_{j>=1} rho_tilde(j)^2."""
    hurst = _check_hurst(hurst)
    return float(rho_tilde(0, hurst)) ** 2 + 2.0 * _tail_sum_sq(rho_tilde, hurst)


def sigma_factor(sigma_bar) -> float:
    """Matrix factor sum_{i,j,k,q} s_ij s_iq s_kj s_kq / |s|_F^4, in (0, 1].

    Equals 1 for any nonzero scalar (1x1) matrix.
    """
    sb = np.atleast_2d(np.asarray(sigma_bar, dtype=float))
    if sb.ndim != 2:
        raise ValueError("sigma_bar must be a scalar or 2-D matrix")
    frob_sq = float(np.sum(sb * sb))
    if frob_sq == 0.0:
        raise ValueError("sigma_bar must be nonzero")
    gram = sb @ sb.T
    return float(np.sum(gram * gram)) / frob_sq**2


def sigma_star_sq(hurst: float, sigma_bar=1.0) -> float:
    """Asymptotic variance of the known-amplitude Hurst estimator CLT."""
    return sigma1_sq(hurst) * sigma_factor(sigma_bar)


def sigma_star_star_sq(hurst: float, sigma_bar=1.0) -> float:
    """Asymptotic variance of the scale-ratio Hurst estimator CLT."""
    value = (1.5 * sigma1_sq(hurst) - 2.0 * sigma2_sq(hurst)) * sigma_factor(sigma_bar)
    if value <= 0.0:
        raise RuntimeError(f"nonpositive variance constant {value} at hurst={hurst}")
    return value


def theoretical_sd_h1(n: int, T: float, hurst: float, sigma_bar=1.0) -> float:
    """Standard deviation sqrt(sigma_star_sq) / (2 sqrt(n) ln(n/T)) implied by
    the CLT for the known-amplitude estimator with n filtered observations."""
    n = int(n)
    if n <= 1:
        raise ValueError("n must be > 1")
    if not n > T:
        raise ValueError("need n > T so that ln(n/T) > 0")
    return math.sqrt(sigma_star_sq(hurst, sigma_bar)) / (2.0 * math.sqrt(n) * math.log(n / T))


def theoretical_sd_h2(n: int, hurst: float, sigma_bar=1.0) -> float:
    """Standard deviation sqrt(sigma_star_star_sq) / (2 ln 2 sqrt(n/2)) implied
    by the CLT for the scale-ratio estimator.

    `n` is the total observation count consumed by the estimator; the CLT rate
    is driven by the coarse half-sample, hence n/2 under the square root.
    """
    n = int(n)
    if n < 4 or n % 2:
        raise ValueError("n must be an even integer >= 4")
    return math.sqrt(sigma_star_star_sq(hurst, sigma_bar)) / (
        2.0 * math.log(2.0) * math.sqrt(n / 2.0)
    )
