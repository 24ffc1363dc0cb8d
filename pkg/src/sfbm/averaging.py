"""Averaged dynamics of slow-fast systems.

Contains the invariant-measure averaging of drift coefficients, the limit
ODE solver, the fundamental (state-transition) matrix of its linearization,
parameter sensitivities of the averaged flow, and the covariance kernel of
the Gaussian fluctuation process around the averaged trajectory.

Conventions: the averaged state has dimension m, the parameter has dimension
p, sigma_bar is the constant effective noise matrix (m x k), and lam >= 0
scales an optional independent Brownian fluctuation term whose amplitude
Sigma_Phi(theta, x) is model-supplied (it solves a Poisson equation that is
not computed here).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

__all__ = [
    "AveragedSystem",
    "OdeSolution",
    "FundamentalMatrixCache",
    "invariant_average",
    "solve_averaged_ode",
    "fundamental_matrix",
    "theta_sensitivity",
    "fluctuation_covariance",
]

TWO_PI = 2.0 * math.pi

# Dense pairwise fundamental-matrix tables are refused beyond this many
# float64 entries (~320 MB); callers should coarsen their grids instead.
_DENSE_Z_MAX_ENTRIES = 4 * 10**7


@dataclass(frozen=True)
class AveragedSystem:
    """Averaged slow dynamics dX/dt = c_bar(theta, X) plus fluctuation data.

    c_bar maps ((p,), (..., m)) -> (..., m); dx_c_bar returns the state
    Jacobian (..., m, m); dtheta_c_bar the parameter Jacobian (..., m, p).
    sigma_phi maps ((p,), (..., m)) -> (..., m, m) and may be None when
    lam == 0.
    """

    dim: int
    n_params: int
    x0: np.ndarray
    c_bar: Callable[..., np.ndarray]
    dx_c_bar: Callable[..., np.ndarray]
    dtheta_c_bar: Callable[..., np.ndarray]
    sigma_bar: np.ndarray
    sigma_phi: Callable[..., np.ndarray] | None = None
    lam: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).reshape(-1))
        object.__setattr__(
            self, "sigma_bar", np.atleast_2d(np.asarray(self.sigma_bar, dtype=float))
        )
        if self.x0.shape != (self.dim,):
            raise ValueError("x0 must have dim entries")
        if self.sigma_bar.shape[0] != self.dim:
            raise ValueError("sigma_bar must have dim rows")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.lam > 0 and self.sigma_phi is None:
            raise ValueError("lam > 0 requires sigma_phi")

    @property
    def noise_dim(self) -> int:
        return self.sigma_bar.shape[1]


# ---------------------------------------------------------------------------
# Invariant measure averages.
# ---------------------------------------------------------------------------


def _constant_scalar_diffusion(fast_diffusion, probe: np.ndarray) -> float:
    """Extract a constant scalar tau from a callable or number; error if the
    diffusion varies over the probe points or is not scalar."""
    if np.isscalar(fast_diffusion) or isinstance(fast_diffusion, (int, float)):
        tau = float(fast_diffusion)
    else:
        vals = np.asarray(fast_diffusion(probe[:, None]), dtype=float).reshape(len(probe), -1)
        if vals.shape[1] != 1:
            raise ValueError("only scalar fast diffusions are supported here")
        tau = float(vals[0, 0])
        if not np.allclose(vals, tau, rtol=0.0, atol=1e-12 * max(1.0, abs(tau))):
            raise ValueError(
                "fast diffusion is state-dependent; pass the invariant density "
                "explicitly via the density argument"
            )
    if tau <= 0:
        raise ValueError("fast diffusion must be positive")
    return tau


def invariant_average(
    fast_drift: Callable[[np.ndarray], np.ndarray],
    fast_diffusion,
    g: Callable[[np.ndarray], np.ndarray],
    domain: str = "real_line",
    density: Callable[[np.ndarray], np.ndarray] | None = None,
    tol: float = 1e-10,
) -> float:
    """Average of g under the invariant law of the scalar fast diffusion
    dY = f(Y) dt + tau dB.

    For constant tau the invariant density is proportional to
    exp(2 Psi(y) / tau^2) with Psi' = f.  domain selects the support:

    * "circle": Y lives on [0, 2pi); f must be 2pi-periodic with zero mean
      (otherwise no gradient-form invariant density exists and a ValueError
      is raised).  The antiderivative is formed spectrally and the average by
      the periodic trapezoid rule with doubling until `tol`.
    * "real_line": Psi is accumulated by the cumulative trapezoid rule on a
      widening symmetric window; the window is accepted once the density has
      decayed to the 1e-16 level at its ends, and grid doubling with
      Richardson extrapolation drives the quadrature error below `tol`.

    A known `density` (not necessarily normalized) bypasses the gradient-form
    construction; fast_drift/fast_diffusion are then ignored.

    Coefficient callables are evaluated on arrays of shape (K, 1) (a batch of
    scalar states), matching the simulator's convention; g is evaluated on a
    1-D array of points.
    """
    if domain not in ("circle", "real_line"):
        raise ValueError("domain must be 'circle' or 'real_line'")

    if density is not None:
        return _average_with_density(g, density, domain, tol)

    probe = np.linspace(0.1, 2.2, 7)
    tau = _constant_scalar_diffusion(fast_diffusion, probe)

    def f(y: np.ndarray) -> np.ndarray:
        return np.asarray(fast_drift(y[:, None]), dtype=float).reshape(y.shape)

    if domain == "circle":
        return _circle_average(f, tau, g, tol)
    return _real_line_average(f, tau, g, tol)


def _average_with_density(g, density, domain, tol) -> float:
    if domain == "circle":
        n, prev = 256, None
        while n <= 2**20:
            y = np.linspace(0.0, TWO_PI, n, endpoint=False)
            dens = np.asarray(density(y), dtype=float)
            if np.any(dens < 0):
                raise ValueError("density must be nonnegative")
            val = float(np.sum(np.asarray(g(y), float) * dens) / np.sum(dens))
            if prev is not None and abs(val - prev) < tol:
                return val
            prev, n = val, 2 * n
        raise RuntimeError("circle average failed to converge")
    # real line: integrate on a widening window until the density tails vanish
    half = 8.0
    while half <= 2**12:
        n, prev = 2**12, None
        y = np.linspace(-half, half, 17)
        dens_probe = np.asarray(density(y), dtype=float)
        if dens_probe[0] > 1e-16 * dens_probe.max() or dens_probe[-1] > 1e-16 * dens_probe.max():
            half *= 2.0
            continue
        while n <= 2**22:
            y = np.linspace(-half, half, n + 1)
            dens = np.asarray(density(y), dtype=float)
            val = float(np.trapezoid(np.asarray(g(y), float) * dens, y) / np.trapezoid(dens, y))
            if prev is not None and abs(val - prev) < tol:
                return val
            prev, n = val, 2 * n
        raise RuntimeError("real-line average failed to converge")
    raise ValueError("density does not decay on the real line")


def _circle_average(f, tau: float, g, tol: float) -> float:
    n, prev = 512, None
    while n <= 2**20:
        y = np.linspace(0.0, TWO_PI, n, endpoint=False)
        fv = f(y)
        mean_f = float(np.mean(fv))
        scale = max(1.0, float(np.max(np.abs(fv))))
        if abs(mean_f) > 1e-8 * scale:
            raise ValueError(
                f"fast drift has nonzero circular mean {mean_f:.3e}; no "
                "gradient-form invariant density on the circle"
            )
        # spectral antiderivative: Psi' = f with Psi(0) = 0
        coeff = np.fft.rfft(fv)
        k = np.arange(len(coeff), dtype=float)  # integer frequencies on [0, 2pi)
        with np.errstate(divide="ignore", invalid="ignore"):
            anti = np.where(k > 0, coeff / (1j * k), 0.0)
        psi = np.fft.irfft(anti, n)
        psi -= psi[0]
        dens = np.exp(2.0 * psi / tau**2)
        val = float(np.sum(np.asarray(g(y), float) * dens) / np.sum(dens))
        if prev is not None and abs(val - prev) < tol:
            return val
        prev, n = val, 2 * n
    raise RuntimeError("circle average failed to converge")


def _real_line_average(f, tau: float, g, tol: float) -> float:
    half = 8.0
    while half <= 2**12:
        n = 2**13
        vals = []
        while n <= 2**22:
            y = np.linspace(-half, half, n + 1)
            psi = integrate.cumulative_trapezoid(f(y), y, initial=0.0)
            psi -= psi.max()  # guard exp overflow; normalization cancels
            dens = np.exp(2.0 * psi / tau**2)
            if dens[0] > 1e-16 or dens[-1] > 1e-16:  # relative to max = 1
                break  # window too narrow; widen
            vals.append(float(np.trapezoid(np.asarray(g(y), float) * dens, y) / np.trapezoid(dens, y)))
            if len(vals) >= 2:
                # cumulative trapezoid is O(h^2); Richardson-extrapolate
                extrap = vals[-1] + (vals[-1] - vals[-2]) / 3.0
                if abs(vals[-1] - vals[-2]) / 3.0 < tol:
                    return extrap
            n *= 2
        else:
            raise RuntimeError("real-line average failed to converge")
        half *= 2.0
    raise ValueError("invariant density does not decay; is the drift confining?")


# ---------------------------------------------------------------------------
# Limit ODE and interpolation.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OdeSolution:
    """RK4 solution of the averaged ODE on a uniform grid, with enough data
    for O(h^4) cubic Hermite interpolation between nodes."""

    theta: np.ndarray
    T: float
    states: np.ndarray  # (M + 1, m)
    derivs: np.ndarray = field(repr=False)  # (M + 1, m), c_bar at the nodes

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def step(self) -> float:
        return self.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_steps + 1)

    def at(self, s) -> np.ndarray:
        """States at times s (scalar or 1-D array), shape (..., m)."""
        s_arr = np.atleast_1d(np.asarray(s, dtype=float))
        if np.any(s_arr < -1e-12) or np.any(s_arr > self.T * (1 + 1e-12)):
            raise ValueError("interpolation times must lie in [0, T]")
        h = self.step
        k = np.clip((s_arr / h).astype(int), 0, self.n_steps - 1)
        u = (s_arr - k * h) / h
        u = np.clip(u, 0.0, 1.0)[:, None]
        x0, x1 = self.states[k], self.states[k + 1]
        f0, f1 = self.derivs[k], self.derivs[k + 1]
        u2, u3 = u * u, u * u * u
        out = (
            (2 * u3 - 3 * u2 + 1) * x0
            + (u3 - 2 * u2 + u) * h * f0
            + (-2 * u3 + 3 * u2) * x1
            + (u3 - u2) * h * f1
        )
        return out if np.ndim(s) else out[0]


def solve_averaged_ode(avg: AveragedSystem, theta, T: float, n_steps: int) -> OdeSolution:
    """Classic RK4 for dX/dt = c_bar(theta, X), X(0) = avg.x0."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape != (avg.n_params,):
        raise ValueError(f"theta must have shape ({avg.n_params},)")
    if T <= 0 or n_steps < 1:
        raise ValueError("T must be positive and n_steps >= 1")

    def rhs(x):
        return np.asarray(avg.c_bar(theta, x), dtype=float).reshape(x.shape)

    h = T / n_steps
    states = np.empty((n_steps + 1, avg.dim))
    derivs = np.empty_like(states)
    x = avg.x0.copy()
    states[0] = x
    for k in range(n_steps):
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * h * k1)
        k3 = rhs(x + 0.5 * h * k2)
        k4 = rhs(x + h * k3)
        derivs[k] = k1
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        states[k + 1] = x
        if not np.all(np.isfinite(x)):
            raise RuntimeError(f"averaged ODE diverged at step {k + 1}")
    derivs[n_steps] = rhs(x)
    return OdeSolution(theta=theta, T=float(T), states=states, derivs=derivs)


def _jacobian_at(avg: AveragedSystem, theta: np.ndarray, x_batch: np.ndarray) -> np.ndarray:
    """dx_c_bar on a batch of states, shape (K, m, m)."""
    out = np.asarray(avg.dx_c_bar(theta, x_batch), dtype=float)
    want = (x_batch.shape[0], avg.dim, avg.dim)
    if out.shape != want:
        out = np.broadcast_to(out, want)
    return out


def _rk4_update_matrices(avg: AveragedSystem, ode: OdeSolution, nodes: np.ndarray) -> np.ndarray:
    """One-step transition matrices U_k with Z(nodes[k+1]) = U_k Z(nodes[k]) for
    the linearization dZ/dt = dx_c_bar(X(t)) Z, by RK4 between consecutive
    nodes (subdividing any gap wider than the ODE step)."""
    theta = ode.theta
    m = avg.dim
    eye = np.eye(m)
    h_ode = ode.step
    updates = np.empty((len(nodes) - 1, m, m))
    for k in range(len(nodes) - 1):
        gap = nodes[k + 1] - nodes[k]
        nsub = max(1, math.ceil(gap / h_ode - 1e-9))
        hsub = gap / nsub
        pts = nodes[k] + hsub * np.arange(nsub)[:, None] + np.array([0.0, 0.5, 1.0]) * hsub
        a_all = _jacobian_at(avg, theta, ode.at(pts.ravel())).reshape(nsub, 3, m, m)
        u = eye
        for i in range(nsub):
            a0, am, a1 = a_all[i]
            k1 = a0
            k2 = am @ (eye + 0.5 * hsub * k1)
            k3 = am @ (eye + 0.5 * hsub * k2)
            k4 = a1 @ (eye + hsub * k3)
            u = (eye + (hsub / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)) @ u
        updates[k] = u
    return updates


def _pairwise_z(avg: AveragedSystem, ode: OdeSolution, nodes: np.ndarray) -> np.ndarray:
    """Z(nodes[i], nodes[j]) for all i >= j as a (K, K, m, m) array (entries
    above the diagonal are zero and must not be read)."""
    k_n = len(nodes)
    m = avg.dim
    if k_n * k_n * m * m > _DENSE_Z_MAX_ENTRIES:
        raise ValueError(
            "pairwise fundamental-matrix table would need "
            f"{k_n * k_n * m * m} entries; use a coarser grid"
        )
    updates = _rk4_update_matrices(avg, ode, nodes)
    z = np.zeros((k_n, k_n, m, m))
    z[0, 0] = np.eye(m)
    for i in range(1, k_n):
        # advance every column j <= i-1 by the same one-step update
        z[i, :i] = updates[i - 1] @ z[i - 1, :i]
        z[i, i] = np.eye(m)
    return z


@dataclass(frozen=True)
class FundamentalMatrixCache:
    """Dense table of Z(t_i, t_j), i >= j, on the ODE node grid."""

    ode: OdeSolution
    z: np.ndarray = field(repr=False)  # (M + 1, M + 1, m, m), lower triangle

    def value(self, i: int, j: int) -> np.ndarray:
        if not 0 <= j <= i <= self.ode.n_steps:
            raise IndexError("need 0 <= j <= i <= n_steps")
        return self.z[i, j]


def fundamental_matrix(avg: AveragedSystem, ode: OdeSolution) -> FundamentalMatrixCache:
    """All transition matrices of the linearized averaged flow on the ODE
    grid, computed by a single vectorized forward propagation."""
    z = _pairwise_z(avg, ode, ode.times)
    return FundamentalMatrixCache(ode=ode, z=z)


def theta_sensitivity(
    avg: AveragedSystem, ode: OdeSolution, cache: FundamentalMatrixCache | None = None
) -> np.ndarray:
    """Sensitivity dX/dtheta of the averaged flow at the ODE nodes,
    S(t) = int_0^t Z(t, s) dtheta_c_bar(theta, X(s)) ds, shape (M+1, m, p).

    Quadrature is the trapezoid rule on the ODE grid using the dense Z table.
    The variational route (_solve_with_sensitivity) integrates the same
    object as an ODE and the two agree to O(h^2) quadrature error; tests pin
    the tolerance.
    """
    if cache is None:
        cache = fundamental_matrix(avg, ode)
    theta = ode.theta
    m_steps = ode.n_steps
    b = np.asarray(avg.dtheta_c_bar(theta, ode.states), dtype=float)
    b = np.broadcast_to(b, (m_steps + 1, avg.dim, avg.n_params))
    h = ode.step
    out = np.zeros((m_steps + 1, avg.dim, avg.n_params))
    for i in range(1, m_steps + 1):
        w = np.ones(i + 1)
        w[0] = w[-1] = 0.5
        out[i] = h * np.einsum("j,jab,jbp->ap", w, cache.z[i, : i + 1], b[: i + 1])
    return out


def _solve_with_sensitivity(avg: AveragedSystem, theta, T: float, n_steps: int):
    """Jointly integrate the averaged ODE and its parameter sensitivity:
    dX/dt = c_bar, dS/dt = dx_c_bar S + dtheta_c_bar, S(0) = 0.

    Returns (OdeSolution, S) with S of shape (M + 1, m, p). This is the fast
    path used inside contrast evaluations.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    m, p = avg.dim, avg.n_params
    h = T / n_steps

    def rhs(x, s):
        f = np.asarray(avg.c_bar(theta, x), dtype=float).reshape(m)
        a = np.asarray(avg.dx_c_bar(theta, x), dtype=float).reshape(m, m)
        bmat = np.asarray(avg.dtheta_c_bar(theta, x), dtype=float).reshape(m, p)
        return f, a @ s + bmat

    states = np.empty((n_steps + 1, m))
    derivs = np.empty_like(states)
    sens = np.empty((n_steps + 1, m, p))
    x = avg.x0.copy()
    s = np.zeros((m, p))
    states[0], sens[0] = x, s
    for k in range(n_steps):
        f1, g1 = rhs(x, s)
        f2, g2 = rhs(x + 0.5 * h * f1, s + 0.5 * h * g1)
        f3, g3 = rhs(x + 0.5 * h * f2, s + 0.5 * h * g2)
        f4, g4 = rhs(x + h * f3, s + h * g3)
        derivs[k] = f1
        x = x + (h / 6.0) * (f1 + 2 * f2 + 2 * f3 + f4)
        s = s + (h / 6.0) * (g1 + 2 * g2 + 2 * g3 + g4)
        states[k + 1], sens[k + 1] = x, s
        if not np.all(np.isfinite(x)):
            raise RuntimeError(f"averaged ODE diverged at step {k + 1}")
    derivs[n_steps] = np.asarray(avg.c_bar(theta, x), dtype=float).reshape(m)
    ode = OdeSolution(theta=theta, T=float(T), states=states, derivs=derivs)
    return ode, sens


# ---------------------------------------------------------------------------
# Fluctuation covariance.
# ---------------------------------------------------------------------------


def _check_hurst_range(hurst: float) -> float:
    hurst = float(hurst)
    if not 0.5 < hurst < 1.0:
        raise ValueError(f"hurst must lie in (1/2, 1) for the fluctuation kernel, got {hurst}")
    return hurst


def _kernel_cell_weights(edges_s: np.ndarray, edges_r: np.ndarray, hurst: float) -> np.ndarray:
    """H(2H-1) * integral over cell pairs of |s - r|^{2H - 2}.

    The double integral over [a,b] x [c,d] has the closed form
    (|b-c|^{2H} - |a-c|^{2H} - |b-d|^{2H} + |a-d|^{2H}) / (2H(2H-1)),
    valid across the diagonal singularity; the H(2H-1) prefactor cancels
    all but a factor 1/2.
    """
    two_h = 2.0 * hurst
    a = edges_s[:-1][:, None]
    b = edges_s[1:][:, None]
    c = edges_r[None, :-1]
    d = edges_r[None, 1:]
    p = lambda x: np.abs(x) ** two_h
    return 0.5 * (p(b - c) - p(a - c) - p(b - d) + p(a - d))


def _z_rows_backward(
    avg: AveragedSystem, ode: OdeSolution, t_target: float, s_values: np.ndarray
) -> np.ndarray:
    """Z(t_target, s) for each s in the ascending array s_values (all <=
    t_target), by backward RK4 on dV/ds = -V A(X(s)) from V(t_target) = I.

    Steps land exactly on the requested s points, subdivided so no RK4 step
    exceeds the ODE resolution.
    """
    m = avg.dim
    theta = ode.theta
    h_ode = ode.step
    eye = np.eye(m)
    out = np.empty((len(s_values), m, m))
    v = eye.copy()
    s_hi = float(t_target)
    for idx in range(len(s_values) - 1, -1, -1):
        s_lo = float(s_values[idx])
        gap = s_hi - s_lo
        if gap > 1e-14 * max(1.0, abs(t_target)):
            nsub = max(1, math.ceil(gap / h_ode - 1e-9))
            hsub = gap / nsub
            pts = s_hi - hsub * np.arange(nsub)[:, None] - np.array([0.0, 0.5, 1.0]) * hsub
            a_all = _jacobian_at(avg, theta, ode.at(np.clip(pts.ravel(), 0.0, ode.T))).reshape(
                nsub, 3, m, m
            )
            for i in range(nsub):
                a0, am, a1 = a_all[i]
                k1 = -v @ a0
                k2 = -(v - 0.5 * hsub * k1) @ am
                k3 = -(v - 0.5 * hsub * k2) @ am
                k4 = -(v - hsub * k3) @ a1
                v = v - (hsub / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[idx] = v
        s_hi = s_lo
    return out


def fluctuation_covariance(
    avg: AveragedSystem,
    hurst: float,
    cache: FundamentalMatrixCache,
    t1: float,
    t2: float,
    cells: int = 512,
) -> np.ndarray:
    """Covariance E[xi_{t1} xi_{t2}^T] of the Gaussian fluctuation process.

    Two contributions: the fractional term
        H(2H-1) int_0^{t1} int_0^{t2} (Z(t1,s) sigma_bar)(Z(t2,r) sigma_bar)^T
                                       |s-r|^{2H-2} dr ds,
    with the singular kernel integrated in closed form over cell pairs and
    Z sigma_bar frozen at cell midpoints, and (when lam > 0) an independent
    Brownian term
        lam^2 int_0^{t1 ^ t2} (Z(t1,s) Sigma_Phi(X_s))(Z(t2,s) Sigma_Phi(X_s))^T ds
    by the midpoint rule.
    """
    hurst = _check_hurst_range(hurst)
    ode = cache.ode
    theta = ode.theta
    for t in (t1, t2):
        if not 0.0 <= t <= ode.T * (1 + 1e-12):
            raise ValueError("t1, t2 must lie in [0, T]")
    if cells < 1:
        raise ValueError("cells must be >= 1")
    m = avg.dim
    if t1 <= 0.0 or t2 <= 0.0:
        return np.zeros((m, m))

    def midpoint_rows(t_target, extra):
        edges = np.linspace(0.0, t_target, cells + 1)
        mids = 0.5 * (edges[:-1] + edges[1:])
        s_all = np.unique(np.concatenate([mids, extra]))
        rows = _z_rows_backward(avg, ode, t_target, s_all)
        pick = np.searchsorted(s_all, mids)
        pick_extra = np.searchsorted(s_all, extra)
        return edges, rows[pick], rows[pick_extra]

    t_min = min(t1, t2)
    if avg.lam > 0.0:
        bm_edges = np.linspace(0.0, t_min, cells + 1)
        bm_mids = 0.5 * (bm_edges[:-1] + bm_edges[1:])
    else:
        bm_mids = np.empty(0)

    edges1, g1, zb1 = midpoint_rows(t1, bm_mids)
    edges2, g2, zb2 = midpoint_rows(t2, bm_mids)

    sb = avg.sigma_bar
    p1 = g1 @ sb  # (cells, m, k)
    p2 = g2 @ sb
    w = _kernel_cell_weights(edges1, edges2, hurst)
    cov = np.einsum("qak,qr,rbk->ab", p1, w, p2)

    if avg.lam > 0.0:
        x_mid = ode.at(bm_mids)
        sphi = np.asarray(avg.sigma_phi(theta, x_mid), dtype=float)
        sphi = np.broadcast_to(sphi, (len(bm_mids), m, m))
        c1 = np.einsum("qab,qbc->qac", zb1, sphi)
        c2 = np.einsum("qab,qbc->qac", zb2, sphi)
        h_bm = t_min / cells
        cov = cov + avg.lam**2 * h_bm * np.einsum("qac,qbc->ab", c1, c2)
    return cov
