"""Drift parameter estimation for averaged slow dynamics.

Two contrasts over a parameter box:

* trajectory fit: squared distance between observations and the averaged
  trajectory, U(theta) = sum_k |x_{t_k} - X^theta_{t_k}|^2, with an analytic
  gradient through the parameter sensitivity of the flow.
* minimum contrast: residual quadratic form r^T (Xi^{theta,HH,n})^{-1} r,
  where Xi is the covariance matrix of the limiting Gaussian fluctuations at
  the observation times, built for a postulated Hurst value HH.

Both estimators expose their asymptotic variance matrices: the sandwich
M(theta, H; n) and its n -> infinity limit for the trajectory fit, and the
plug-in sandwich M^HH (which collapses to (G^T Xi^{-1} G)^{-1} when HH equals
the true H) for the minimum contrast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator

from ._optim import MultistartResult, OptimizerConfig, minimize_box
from ._validation import as_observations, check_box
from .averaging import (
    AveragedSystem,
    _kernel_cell_weights,
    _pairwise_z,
    _solve_with_sensitivity,
    _z_rows_backward,
    solve_averaged_ode,
)
from .simulate import ObservationSeries

__all__ = [
    "ContrastEvaluation",
    "DriftEstimate",
    "XiMatrix",
    "tfe_contrast",
    "estimate_tfe",
    "tfe_variance",
    "tfe_variance_limit",
    "build_xi",
    "mce_contrast",
    "estimate_mce",
    "mce_variance",
    "VarianceComparison",
    "variance_comparison",
    "TrajectoryFitDrift",
    "MinimumContrastDrift",
]

# Relative PSD floor: assembled covariance matrices may dip below zero by at
# most this fraction of their mean diagonal before we call it a failure.
_PSD_FLOOR_REL = 1e-10

# One-shot diagonal jitter applied when a Cholesky factorization of Xi fails.
_JITTER_REL = 1e-12


@dataclass(frozen=True)
class ContrastEvaluation:
    value: float
    gradient: np.ndarray | None
    residuals: np.ndarray = field(repr=False)  # (n, m), observation minus flow
    flow: np.ndarray = field(repr=False)  # (n + 1, m), averaged trajectory at obs times


@dataclass(frozen=True)
class DriftEstimate:
    theta: np.ndarray
    contrast: float
    method: str
    n: int
    diagnostics: MultistartResult = field(repr=False)
    m_matrix: np.ndarray | None = None
    covariance: np.ndarray | None = None
    hurst_param: float | None = None

    @property
    def boundary_hit(self) -> bool:
        return self.diagnostics.boundary_hit

    @property
    def multiple_minima(self) -> bool:
        return self.diagnostics.multiple_minima


@dataclass(frozen=True)
class XiMatrix:
    """Fluctuation covariance at observation times, shape (n*m, n*m), ordered
    time-major (block row j holds components of xi_{t_j})."""

    matrix: np.ndarray = field(repr=False)
    theta: np.ndarray
    hurst: float
    n: int
    T: float
    cells: int
    lam: float


def _default_ode_steps(n: int, minimum: int = 256) -> int:
    """Smallest multiple of n that is >= minimum."""
    return n * max(1, math.ceil(minimum / n))


def _resolve_ode_steps(n: int, ode_steps: int | None, minimum: int = 256) -> int:
    if ode_steps is None:
        return _default_ode_steps(n, minimum)
    ode_steps = int(ode_steps)
    if ode_steps < n:
        raise ValueError("ode_steps must be at least the observation count")
    if ode_steps % n:
        ode_steps = n * math.ceil(ode_steps / n)  # align nodes with observations
    return ode_steps


def _flow_at_observations(avg: AveragedSystem, theta, obs_n: int, T: float, ode_steps: int):
    """Averaged flow and its parameter sensitivity at the observation times.

    Returns (ode, flow (n+1, m), sens (n+1, m, p)); the ODE grid is a
    refinement of the observation grid so no interpolation is involved.
    """
    ode, sens = _solve_with_sensitivity(avg, theta, T, ode_steps)
    stride = ode_steps // obs_n
    return ode, ode.states[::stride], sens[::stride]


def _flow_only(avg: AveragedSystem, theta, obs_n: int, T: float, ode_steps: int) -> np.ndarray:
    """Averaged flow at the observation times, without sensitivities.

    Cheaper than _flow_at_observations; used where only residuals are needed.
    """
    ode = solve_averaged_ode(avg, theta, T, ode_steps)
    return ode.states[:: ode_steps // obs_n]


# ---------------------------------------------------------------------------
# Trajectory-fitting estimator.
# ---------------------------------------------------------------------------


def tfe_contrast(
    avg: AveragedSystem, theta, obs: ObservationSeries, ode_steps: int | None = None
) -> ContrastEvaluation:
    """U(theta) = sum_{k=1}^n |x_{t_k} - X^theta_{t_k}|^2 and its gradient
    -2 sum_k S(t_k)^T (x_{t_k} - X^theta_{t_k})."""
    if obs.dim != avg.dim:
        raise ValueError(f"observations have dim {obs.dim}, averaged system {avg.dim}")
    steps = _resolve_ode_steps(obs.n, ode_steps)
    _, flow, sens = _flow_at_observations(avg, theta, obs.n, obs.T, steps)
    resid = obs.values[1:] - flow[1:]
    value = float(np.sum(resid**2))
    grad = -2.0 * np.einsum("jmp,jm->p", sens[1:], resid)
    return ContrastEvaluation(value=value, gradient=grad, residuals=resid, flow=flow)


def estimate_tfe(
    avg: AveragedSystem,
    obs: ObservationSeries | np.ndarray,
    theta_box,
    T: float = 1.0,
    ode_steps: int | None = None,
    optimizer: OptimizerConfig | None = None,
    hurst: float | None = None,
    epsilon: float | None = None,
    cells: int = 512,
) -> DriftEstimate:
    """Minimize the trajectory-fit contrast over the box.

    When `hurst` is given, the asymptotic variance matrix M(theta_hat, H; n)
    is attached; when `epsilon` is also given, covariance = epsilon * M.
    """
    obs = as_observations(obs, T)
    box = check_box(theta_box, avg.n_params)
    steps = _resolve_ode_steps(obs.n, ode_steps)

    memo: dict[bytes, ContrastEvaluation] = {}

    def evaluate(theta: np.ndarray) -> ContrastEvaluation:
        key = np.asarray(theta, dtype=float).tobytes()
        hit = memo.get(key)
        if hit is None:
            hit = tfe_contrast(avg, theta, obs, steps)
            memo.clear()  # only the current iterate is ever revisited
            memo[key] = hit
        return hit

    result = minimize_box(
        lambda th: evaluate(th).value,
        box,
        jac=lambda th: evaluate(th).gradient,
        config=optimizer,
    )

    m_matrix = covariance = None
    if hurst is not None:
        m_matrix = tfe_variance(avg, result.x, hurst, obs.n, obs.T, cells=cells, ode_steps=steps)
        if epsilon is not None:
            covariance = epsilon * m_matrix
    return DriftEstimate(
        theta=result.x,
        contrast=result.fun,
        method="tfe",
        n=obs.n,
        diagnostics=result,
        m_matrix=m_matrix,
        covariance=covariance,
    )


# ---------------------------------------------------------------------------
# Fluctuation covariance matrix at observation times.
# ---------------------------------------------------------------------------


def build_xi(
    avg: AveragedSystem,
    theta,
    hurst: float,
    n: int,
    T: float = 1.0,
    cells: int = 512,
    ode_steps: int | None = None,
) -> XiMatrix:
    """Covariance matrix of the fluctuation process at times {jT/n : j=1..n}.

    All n(n+1)/2 time pairs share one global quadrature grid of
    n * max(1, round(cells/n)) cells, so each transition matrix Z(t_j, s) is
    computed once (per observation row) by backward propagation and reused;
    the singular kernel |s-r|^{2H-2} is integrated in closed form over cell
    pairs.  Cost is O(n^2 q + Q^2) with q cells per observation interval.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    hurst = float(hurst)
    if not 0.5 < hurst < 1.0:
        raise ValueError("hurst must lie in (1/2, 1)")
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    if cells < 1:
        raise ValueError("cells must be >= 1")

    steps = _resolve_ode_steps(n, ode_steps)
    ode = solve_averaged_ode(avg, theta, T, steps)

    m = avg.dim
    k_noise = avg.noise_dim
    q = max(1, round(cells / n))
    q_total = n * q
    edges = np.linspace(0.0, T, q_total + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    obs_times = np.linspace(0.0, T, n + 1)

    # rows[j-1, c] = Z(t_j, mid_c) for c < j*q, else 0; built interval by
    # interval using Z(t_j, s) = Z(t_j, t_{j-1}) Z(t_{j-1}, s).
    rows = np.zeros((n, q_total, m, m))
    prev = None
    for j in range(1, n + 1):
        s_new = np.concatenate([[obs_times[j - 1]], mids[(j - 1) * q : j * q]])
        v = _z_rows_backward(avg, ode, obs_times[j], s_new)
        connector = v[0]
        if prev is not None:
            rows[j - 1, : (j - 1) * q] = connector @ prev[: (j - 1) * q]
        rows[j - 1, (j - 1) * q : j * q] = v[1:]
        prev = rows[j - 1]

    w = _kernel_cell_weights(edges, edges, hurst)
    p_sig = rows @ avg.sigma_bar  # (n, Q, m, k)
    p_flat = p_sig.transpose(0, 2, 1, 3).reshape(n * m, q_total * k_noise)
    w_big = w if k_noise == 1 else np.kron(w, np.eye(k_noise))
    xi = p_flat @ w_big @ p_flat.T

    if avg.lam > 0.0:
        x_mid = ode.at(mids)
        sphi = np.broadcast_to(
            np.asarray(avg.sigma_phi(theta, x_mid), dtype=float), (q_total, m, m)
        )
        c = np.einsum("jqab,qbc->jqac", rows, sphi)
        c_flat = c.transpose(0, 2, 1, 3).reshape(n * m, q_total * m)
        h_cell = T / q_total
        xi = xi + (avg.lam**2 * h_cell) * (c_flat @ c_flat.T)

    xi = 0.5 * (xi + xi.T)
    scale = max(np.trace(xi) / (n * m), np.finfo(float).tiny)
    min_eig = float(np.linalg.eigvalsh(xi)[0])
    if min_eig < -_PSD_FLOOR_REL * scale:
        raise RuntimeError(
            f"assembled fluctuation covariance is not PSD: min eigenvalue "
            f"{min_eig:.3e} vs floor {-_PSD_FLOOR_REL * scale:.3e}"
        )
    return XiMatrix(
        matrix=xi, theta=theta, hurst=hurst, n=n, T=float(T), cells=q_total, lam=avg.lam
    )


def _factor_xi(xi: XiMatrix):
    """Cholesky factor of Xi, with a single jitter retry before failing."""
    mat = xi.matrix
    try:
        return linalg.cho_factor(mat, lower=True)
    except linalg.LinAlgError:
        delta = _JITTER_REL * max(np.trace(mat) / mat.shape[0], np.finfo(float).tiny)
        try:
            return linalg.cho_factor(mat + delta * np.eye(mat.shape[0]), lower=True)
        except linalg.LinAlgError as exc:
            raise RuntimeError(
                f"fluctuation covariance could not be factorized even after "
                f"jitter {delta:.3e}; matrix is numerically singular"
            ) from exc


# ---------------------------------------------------------------------------
# Asymptotic variance matrices.
# ---------------------------------------------------------------------------


def tfe_variance(
    avg: AveragedSystem,
    theta,
    hurst: float,
    n: int,
    T: float = 1.0,
    cells: int = 512,
    ode_steps: int | None = None,
) -> np.ndarray:
    """Sandwich variance of the trajectory-fit estimator at sample size n:
    (sum G^T G)^{-1} (sum sum G^T Xi G) (sum G^T G)^{-1} with G the parameter
    sensitivity of the flow at the observation times."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    steps = _resolve_ode_steps(n, ode_steps)
    _, _, sens = _flow_at_observations(avg, theta, n, T, steps)
    g = sens[1:]  # (n, m, p)
    xi = build_xi(avg, theta, hurst, n, T, cells, ode_steps=steps)
    g_flat = g.reshape(n * avg.dim, avg.n_params)
    j_mat = g_flat.T @ g_flat
    mid = g_flat.T @ xi.matrix @ g_flat
    j_inv = np.linalg.inv(j_mat)
    out = j_inv @ mid @ j_inv
    return 0.5 * (out + out.T)


def tfe_variance_limit(
    avg: AveragedSystem, theta, hurst: float, T: float = 1.0, resolution: int = 512
) -> np.ndarray:
    """Large-n limit of tfe_variance as a double time integral:
    D^{-1} N D^{-1} with D = int_0^T G^T G dt and
    N = H(2H-1) int int Psi(s) |s-r|^{2H-2} Psi(r)^T ds dr
        + lam^2 int (Psi_0 Sigma_Phi)(s) (Psi_0 Sigma_Phi)(s)^T ds,
    where Psi_0(s) = int_s^T G(t)^T Z(t, s) dt and Psi = Psi_0 sigma_bar.

    Discretization is the midpoint rule on `resolution` cells for every time
    axis, with the singular kernel integrated exactly over cell pairs.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    hurst = float(hurst)
    if not 0.5 < hurst < 1.0:
        raise ValueError("hurst must lie in (1/2, 1)")
    q_cells = int(resolution)
    if q_cells < 2:
        raise ValueError("resolution must be >= 2")

    ode = solve_averaged_ode(avg, theta, T, max(q_cells, 256))
    m, p = avg.dim, avg.n_params
    edges = np.linspace(0.0, T, q_cells + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    h = T / q_cells

    z = _pairwise_z(avg, ode, mids)  # (Q, Q, m, m), lower triangle

    b = np.broadcast_to(
        np.asarray(avg.dtheta_c_bar(theta, ode.at(mids)), dtype=float), (q_cells, m, p)
    )
    # sensitivity G(tau_i) = int_0^{tau_i} Z B: full cells below i plus the
    # half cell [edge_i, tau_i] whose integrand is B(tau_i)
    g = np.empty((q_cells, m, p))
    for i in range(q_cells):
        g[i] = 0.5 * h * b[i]
        if i:
            g[i] += h * np.einsum("jab,jbp->ap", z[i, :i], b[:i])

    # Psi_0(s_q) = int_{s_q}^T G^T Z dt: half cell at t = s_q plus cells above
    psi0 = np.empty((q_cells, p, m))
    for q in range(q_cells):
        acc = 0.5 * h * g[q].T
        if q + 1 < q_cells:
            acc = acc + h * np.einsum("iap,iab->pb", g[q + 1 :], z[q + 1 :, q])
        psi0[q] = acc

    w = _kernel_cell_weights(edges, edges, hurst)
    psi = psi0 @ avg.sigma_bar  # (Q, p, k)
    n_mat = np.einsum("qpk,qr,rsk->ps", psi, w, psi)

    if avg.lam > 0.0:
        sphi = np.broadcast_to(
            np.asarray(avg.sigma_phi(theta, ode.at(mids)), dtype=float), (q_cells, m, m)
        )
        c = np.einsum("qpa,qab->qpb", psi0, sphi)
        n_mat = n_mat + avg.lam**2 * h * np.einsum("qpa,qsa->ps", c, c)

    d_mat = h * np.einsum("qap,qas->ps", g, g)
    d_inv = np.linalg.inv(d_mat)
    out = d_inv @ n_mat @ d_inv
    return 0.5 * (out + out.T)


def mce_variance(
    avg: AveragedSystem,
    theta,
    hurst_true: float,
    hurst_param: float,
    n: int,
    T: float = 1.0,
    cells: int = 512,
    ode_steps: int | None = None,
) -> np.ndarray:
    """Asymptotic variance of the minimum-contrast estimator built with the
    postulated Hurst value hurst_param when the data has hurst_true:

        (G^T Xi_p^{-1} G)^{-1} G^T Xi_p^{-1} Xi_true Xi_p^{-1} G (G^T Xi_p^{-1} G)^{-1},

    which collapses to (G^T Xi^{-1} G)^{-1} when the two Hurst values agree.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    steps = _resolve_ode_steps(n, ode_steps)
    _, _, sens = _flow_at_observations(avg, theta, n, T, steps)
    g_flat = sens[1:].reshape(n * avg.dim, avg.n_params)

    xi_p = build_xi(avg, theta, hurst_param, n, T, cells, ode_steps=steps)
    factor = _factor_xi(xi_p)
    a = linalg.cho_solve(factor, g_flat)  # Xi_p^{-1} G
    j_mat = g_flat.T @ a
    j_inv = np.linalg.inv(j_mat)
    if hurst_true == hurst_param:
        out = j_inv
    else:
        xi_t = build_xi(avg, theta, hurst_true, n, T, cells, ode_steps=steps)
        mid = a.T @ xi_t.matrix @ a
        out = j_inv @ mid @ j_inv
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class VarianceComparison:
    m_tfe: np.ndarray
    m_mce: np.ndarray
    difference: np.ndarray
    min_eigenvalue: float

    @property
    def mce_no_worse(self) -> bool:
        """True when M_tfe - M_mce is PSD up to the numerical floor."""
        scale = max(abs(float(np.trace(self.m_tfe))), 1.0)
        return self.min_eigenvalue >= -_PSD_FLOOR_REL * scale


def variance_comparison(
    avg: AveragedSystem,
    theta,
    hurst: float,
    n: int,
    T: float = 1.0,
    hurst_param: float | None = None,
    cells: int = 512,
    ode_steps: int | None = None,
) -> VarianceComparison:
    """Compare the two estimators' variance matrices at the same (theta, H, n).

    hurst_param defaults to the true hurst (the correctly specified case, in
    which the minimum-contrast variance is provably no larger).
    """
    hp = hurst if hurst_param is None else hurst_param
    m_tfe = tfe_variance(avg, theta, hurst, n, T, cells, ode_steps)
    m_mce = mce_variance(avg, theta, hurst, hp, n, T, cells, ode_steps)
    diff = m_tfe - m_mce
    diff = 0.5 * (diff + diff.T)
    min_eig = float(np.linalg.eigvalsh(diff)[0])
    return VarianceComparison(m_tfe=m_tfe, m_mce=m_mce, difference=diff, min_eigenvalue=min_eig)


# ---------------------------------------------------------------------------
# Minimum-contrast estimator.
# ---------------------------------------------------------------------------


def mce_contrast(
    avg: AveragedSystem,
    theta,
    hurst_param: float,
    obs: ObservationSeries,
    xi: XiMatrix | None = None,
    cells: int = 256,
    ode_steps: int | None = None,
) -> ContrastEvaluation:
    """r^T Xi^{-1} r with r the residual against the averaged flow and Xi the
    fluctuation covariance built at (theta, hurst_param, n)."""
    if obs.dim != avg.dim:
        raise ValueError(f"observations have dim {obs.dim}, averaged system {avg.dim}")
    steps = _resolve_ode_steps(obs.n, ode_steps, minimum=_MCE_FLOW_MINIMUM)
    if xi is None:
        xi = build_xi(avg, theta, hurst_param, obs.n, obs.T, cells, ode_steps=steps)
    flow = _flow_only(avg, theta, obs.n, obs.T, steps)
    resid = obs.values[1:] - flow[1:]
    r = resid.reshape(-1)
    value = float(r @ linalg.cho_solve(_factor_xi(xi), r))
    return ContrastEvaluation(value=value, gradient=None, residuals=resid, flow=flow)


# The contrast is evaluated hundreds of times per fit; 64 RK4 sub-steps put
# the flow error around 1e-8, orders below the fluctuation scale, while the
# once-per-fit variance matrices keep the stricter 256-step default.
_MCE_FLOW_MINIMUM = 64


def _xi_cache_key(
    theta: np.ndarray, hurst: float, n: int, T: float, cells: int, lam: float, steps: int
):
    quantized = tuple(int(round(t * 1e6)) for t in theta)
    return (quantized, float(hurst), int(n), float(T), int(cells), float(lam), int(steps))


def estimate_mce(
    avg: AveragedSystem,
    obs: ObservationSeries | np.ndarray,
    hurst_param: float,
    theta_box,
    T: float = 1.0,
    cells: int = 256,
    ode_steps: int | None = None,
    optimizer: OptimizerConfig | None = None,
    epsilon: float | None = None,
    hurst_true: float | None = None,
    xi_cache: dict | None = None,
) -> DriftEstimate:
    """Minimize the quadratic-form contrast over the box.

    Xi and its Cholesky factor are cached per theta quantized at 1e-6 (Xi
    varies slowly in theta, and the induced contrast quantization is far
    below the estimator's statistical error).  Passing a shared dict as
    `xi_cache` reuses factorizations across fits on the same grid, e.g.
    across Monte Carlo replications; entries are pure functions of the key,
    so concurrent fits may share it.

    The attached variance matrix is the plug-in sandwich at theta_hat (using
    hurst_true when given, else the correctly specified form); covariance =
    epsilon * M when epsilon is given.
    """
    obs = as_observations(obs, T)
    box = check_box(theta_box, avg.n_params)
    steps = _resolve_ode_steps(obs.n, ode_steps, minimum=_MCE_FLOW_MINIMUM)
    cache: dict = {} if xi_cache is None else xi_cache

    def xi_for(theta: np.ndarray):
        key = _xi_cache_key(theta, hurst_param, obs.n, obs.T, cells, avg.lam, steps)
        hit = cache.get(key)
        if hit is None:
            theta_q = np.asarray(key[0], dtype=float) * 1e-6
            xi = build_xi(avg, theta_q, hurst_param, obs.n, obs.T, cells, ode_steps=steps)
            hit = (xi, _factor_xi(xi))
            cache[key] = hit
        return hit

    def objective(theta: np.ndarray) -> float:
        _, factor = xi_for(theta)
        flow = _flow_only(avg, theta, obs.n, obs.T, steps)
        r = (obs.values[1:] - flow[1:]).reshape(-1)
        return float(r @ linalg.cho_solve(factor, r))

    if optimizer is None:
        # theta-quantized Xi makes the objective piecewise below ~1e-7
        # relative; looser tolerances stop the line search from chasing the
        # quantization steps (theta precision stays ~1e-5, far below the
        # statistical error).
        optimizer = OptimizerConfig(grad_tol=1e-7, f_tol=1e-10)
    result = minimize_box(objective, box, jac=None, config=optimizer)

    m_matrix = covariance = None
    if epsilon is not None or hurst_true is not None:
        m_matrix = mce_variance(
            avg,
            result.x,
            hurst_true if hurst_true is not None else hurst_param,
            hurst_param,
            obs.n,
            obs.T,
            cells=max(cells, 256),
            ode_steps=None,
        )
        if epsilon is not None:
            covariance = epsilon * m_matrix
    return DriftEstimate(
        theta=result.x,
        contrast=result.fun,
        method="mce",
        n=obs.n,
        diagnostics=result,
        m_matrix=m_matrix,
        covariance=covariance,
        hurst_param=hurst_param,
    )


# ---------------------------------------------------------------------------
# Estimator-object interface.
# ---------------------------------------------------------------------------


class TrajectoryFitDrift(BaseEstimator):
    """Trajectory-fit drift estimator with a fit/attributes interface."""

    def __init__(
        self,
        avg: AveragedSystem | None = None,
        theta_box=None,
        T: float = 1.0,
        ode_steps: int | None = None,
        hurst: float | None = None,
        epsilon: float | None = None,
        cells: int = 512,
        optimizer: OptimizerConfig | None = None,
    ):
        self.avg = avg
        self.theta_box = theta_box
        self.T = T
        self.ode_steps = ode_steps
        self.hurst = hurst
        self.epsilon = epsilon
        self.cells = cells
        self.optimizer = optimizer

    def _require_setup(self):
        if self.avg is None or self.theta_box is None:
            raise ValueError("avg and theta_box must be set before fitting")

    def fit(self, X, y=None):
        self._require_setup()
        est = estimate_tfe(
            self.avg,
            X,
            self.theta_box,
            T=self.T,
            ode_steps=self.ode_steps,
            optimizer=self.optimizer,
            hurst=self.hurst,
            epsilon=self.epsilon,
            cells=self.cells,
        )
        self._store(est)
        return self

    def _store(self, est: DriftEstimate):
        self.estimate_ = est
        self.theta_ = est.theta
        self.contrast_ = est.contrast
        self.m_matrix_ = est.m_matrix
        self.covariance_ = est.covariance
        self.boundary_hit_ = est.boundary_hit
        self.multiple_minima_ = est.multiple_minima
        return self


class MinimumContrastDrift(BaseEstimator):
    """Minimum-contrast drift estimator with a fit/attributes interface."""

    def __init__(
        self,
        avg: AveragedSystem | None = None,
        theta_box=None,
        hurst_param: float = 0.85,
        T: float = 1.0,
        cells: int = 256,
        ode_steps: int | None = None,
        hurst_true: float | None = None,
        epsilon: float | None = None,
        optimizer: OptimizerConfig | None = None,
    ):
        self.avg = avg
        self.theta_box = theta_box
        self.hurst_param = hurst_param
        self.T = T
        self.cells = cells
        self.ode_steps = ode_steps
        self.hurst_true = hurst_true
        self.epsilon = epsilon
        self.optimizer = optimizer

    def fit(self, X, y=None):
        if self.avg is None or self.theta_box is None:
            raise ValueError("avg and theta_box must be set before fitting")
        est = estimate_mce(
            self.avg,
            X,
            self.hurst_param,
            self.theta_box,
            T=self.T,
            cells=self.cells,
            ode_steps=self.ode_steps,
            optimizer=self.optimizer,
            epsilon=self.epsilon,
            hurst_true=self.hurst_true,
        )
        self.estimate_ = est
        self.theta_ = est.theta
        self.contrast_ = est.contrast
        self.m_matrix_ = est.m_matrix
        self.covariance_ = est.covariance
        self.boundary_hit_ = est.boundary_hit
        self.multiple_minima_ = est.multiple_minima
        return self
