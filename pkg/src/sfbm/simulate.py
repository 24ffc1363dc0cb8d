"""Euler-Maruyama simulation of small-noise slow-fast systems.

The slow component is driven by fractional Brownian motion with amplitude
sqrt(epsilon); the fast component is an Ito diffusion at time scale eta.
Integration happens on a fine uniform grid and observations are recorded by
exact subsampling (never interpolation), so the observation count must divide
the fine step count.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .fbm import sample_fbm

__all__ = [
    "SlowFastModel",
    "SimConfig",
    "ObservationSeries",
    "SimulationError",
    "StiffnessWarning",
    "euler_maruyama",
    "subsample",
    "read_observations",
    "write_observations",
]

TWO_PI = 2.0 * math.pi

# Cap on the increment buffers held by one batch chunk (bytes); reps beyond
# this are processed in further chunks with identical per-rep arithmetic.
_CHUNK_BYTES = 2 * 10**8


class SimulationError(RuntimeError):
    """Raised when a trajectory leaves the finite range of float64."""

    def __init__(self, step: int, message: str):
        super().__init__(message)
        self.step = step


class StiffnessWarning(UserWarning):
    """The fast time scale is not well resolved by the fine grid."""


@dataclass(frozen=True)
class SlowFastModel:
    """Coefficient bundle for one slow-fast system.

    Coefficient callables are evaluated on batches: `drift(theta, x, y)` maps
    (p,), (B, m), (B, d) -> (B, m); `fast_drift(y)` maps (B, d) -> (B, d);
    `diffusion(y)` and `fast_diffusion(y)` may return a constant matrix
    ((m, k) resp. (d, d)) or a batch of them ((B, m, k) resp. (B, d, d)).
    """

    name: str
    slow_dim: int
    fast_dim: int
    noise_dim: int
    drift: Callable[..., np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray]
    fast_drift: Callable[[np.ndarray], np.ndarray]
    fast_diffusion: Callable[[np.ndarray], np.ndarray]
    x0: np.ndarray
    y0: np.ndarray
    theta_box: np.ndarray
    fast_on_circle: bool = False

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).reshape(-1))
        object.__setattr__(self, "y0", np.asarray(self.y0, dtype=float).reshape(-1))
        object.__setattr__(
            self, "theta_box", np.asarray(self.theta_box, dtype=float).reshape(-1, 2)
        )
        if self.x0.shape != (self.slow_dim,):
            raise ValueError("x0 must have slow_dim entries")
        if self.y0.shape != (self.fast_dim,):
            raise ValueError("y0 must have fast_dim entries")
        if not np.all(np.isfinite(self.theta_box)):
            raise ValueError("theta_box must be finite")
        if np.any(self.theta_box[:, 0] >= self.theta_box[:, 1]):
            raise ValueError("theta_box rows must satisfy low < high")

    @property
    def n_params(self) -> int:
        return self.theta_box.shape[0]

    def validate(self, theta=None) -> None:
        """Evaluate every coefficient once on a small batch and check shapes."""
        theta = self.theta_box.mean(axis=1) if theta is None else np.asarray(theta, float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"theta must have shape ({self.n_params},)")
        x = np.tile(self.x0, (2, 1))
        y = np.tile(self.y0, (2, 1))
        out = np.asarray(self.drift(theta, x, y), dtype=float)
        if out.shape != (2, self.slow_dim):
            raise ValueError(f"drift returned shape {out.shape}")
        sig = _as_batch_matrix(self.diffusion(y), 2, self.slow_dim, self.noise_dim, "diffusion")
        fd = np.asarray(self.fast_drift(y), dtype=float)
        if fd.shape != (2, self.fast_dim):
            raise ValueError(f"fast_drift returned shape {fd.shape}")
        tau = _as_batch_matrix(
            self.fast_diffusion(y), 2, self.fast_dim, self.fast_dim, "fast_diffusion"
        )
        for name, arr in (("drift", out), ("diffusion", sig), ("fast_drift", fd), ("fast_diffusion", tau)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} is not finite at the initial state")


def _as_batch_matrix(value, batch: int, rows: int, cols: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape == (rows, cols):
        return np.broadcast_to(arr, (batch, rows, cols))
    if arr.shape == (batch, rows, cols):
        return arr
    raise ValueError(
        f"{name} must return shape ({rows}, {cols}) or (batch, {rows}, {cols}); got {arr.shape}"
    )


@dataclass(frozen=True)
class SimConfig:
    """Scales and resolution of one simulation run."""

    epsilon: float
    eta: float
    T: float = 1.0
    fine_steps: int = 100_000
    seed: int | None = None

    def __post_init__(self):
        if self.epsilon <= 0 or self.eta <= 0 or self.T <= 0:
            raise ValueError("epsilon, eta and T must be positive")
        if self.fine_steps < 1:
            raise ValueError("fine_steps must be >= 1")


@dataclass(frozen=True)
class ObservationSeries:
    """Values on the uniform grid {k*T/n : k=0..n}; shape (n + 1, dim)."""

    T: float
    n: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        object.__setattr__(self, "values", values)
        if self.T <= 0:
            raise ValueError("T must be positive")
        if values.shape[0] != self.n + 1:
            raise ValueError(f"expected {self.n + 1} rows, got {values.shape[0]}")

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n + 1)


def subsample(obs: ObservationSeries, n: int) -> ObservationSeries:
    """Keep every (obs.n // n)-th observation; obs.n must be divisible by n."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    if obs.n % n:
        raise ValueError(f"cannot subsample {obs.n} steps to {n}: not a divisor")
    stride = obs.n // n
    return ObservationSeries(T=obs.T, n=n, values=obs.values[::stride])


def _noise_streams(seq):
    """One fBm stream and one Brownian stream for a replication.

    SeedSequence children are constructed from (entropy, spawn_key) directly
    rather than through the stateful .spawn(), so passing the same sequence
    object twice yields the same noise. The keys match what a fresh
    sequence's .spawn(2) would produce. Generators stay stateful.
    """
    if isinstance(seq, np.random.SeedSequence):
        base = tuple(seq.spawn_key)
        children = (
            np.random.SeedSequence(entropy=seq.entropy, spawn_key=base + (0,)),
            np.random.SeedSequence(entropy=seq.entropy, spawn_key=base + (1,)),
        )
        return tuple(np.random.default_rng(c) for c in children)
    return np.random.default_rng(seq).spawn(2)


def _simulate_batch(
    model: SlowFastModel,
    theta: np.ndarray,
    hurst: float,
    cfg: SimConfig,
    seed_seqs: Sequence[np.random.SeedSequence],
    record_every: int = 1,
    record_fast: bool = False,
):
    """Simulate len(seed_seqs) independent trajectories.

    Returns (slow, fast, fail_step): slow has shape (B, K + 1, m) with
    K = fine_steps // record_every; fast is None unless record_fast; fail_step
    is (B,) int, -1 for clean runs and the first non-finite fine step index
    otherwise (that trajectory is frozen from there on and should be treated
    as failed).

    Per-rep randomness comes only from that rep's SeedSequence (spawned into
    one fBm stream and one Brownian stream), and every state update is
    elementwise in the batch, so results are bit-identical however the reps
    are grouped into batches.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    n_fine = cfg.fine_steps
    if n_fine % record_every:
        raise ValueError("record_every must divide fine_steps")
    dt = cfg.T / n_fine
    if cfg.eta < 10.0 * dt:
        warnings.warn(
            f"fast time scale eta={cfg.eta:g} is below 10 fine steps "
            f"(dt={dt:g}); expect discretization bias",
            StiffnessWarning,
            stacklevel=3,
        )

    total = len(seed_seqs)
    m, d, k_noise = model.slow_dim, model.fast_dim, model.noise_dim
    n_rec = n_fine // record_every
    slow = np.empty((total, n_rec + 1, m))
    fast = np.empty((total, n_rec + 1, d)) if record_fast else None
    fail_step = np.full(total, -1, dtype=np.int64)

    bytes_per_rep = 8 * n_fine * (k_noise + d)
    chunk = max(1, int(_CHUNK_BYTES // max(bytes_per_rep, 1)))

    sqrt_eps = math.sqrt(cfg.epsilon)
    inv_eta_dt = dt / cfg.eta
    sqrt_dt_eta = math.sqrt(dt / cfg.eta)

    for lo in range(0, total, chunk):
        hi = min(lo + chunk, total)
        b = hi - lo
        dw = np.empty((b, n_fine, k_noise))
        db = np.empty((b, n_fine, d))
        for i, seq in enumerate(seed_seqs[lo:hi]):
            fbm_rng, bm_rng = _noise_streams(seq)
            dw[i] = sample_fbm(n_fine, cfg.T, hurst, k_noise, fbm_rng).increments
            db[i] = bm_rng.standard_normal((n_fine, d))

        x = np.tile(model.x0, (b, 1))
        y = np.tile(model.y0, (b, 1))
        ok = np.ones(b, dtype=bool)
        fail = np.full(b, -1, dtype=np.int64)
        slow[lo:hi, 0] = x
        if record_fast:
            fast[lo:hi, 0] = y

        # overflow in a diverging trajectory is the detected failure mode,
        # not an anomaly worth a warning
        with np.errstate(over="ignore", invalid="ignore"):
            for step in range(n_fine):
                cx = np.asarray(model.drift(theta, x, y), dtype=float)
                sig = _as_batch_matrix(model.diffusion(y), b, m, k_noise, "diffusion")
                fd = np.asarray(model.fast_drift(y), dtype=float)
                tau = _as_batch_matrix(model.fast_diffusion(y), b, d, d, "fast_diffusion")

                x_new = x + cx * dt + sqrt_eps * np.einsum("bij,bj->bi", sig, dw[:, step])
                y_new = y + fd * inv_eta_dt + sqrt_dt_eta * np.einsum(
                    "bij,bj->bi", tau, db[:, step]
                )
                if model.fast_on_circle:
                    y_new = np.mod(y_new, TWO_PI)

                bad = ~(
                    np.all(np.isfinite(x_new), axis=1) & np.all(np.isfinite(y_new), axis=1)
                )
                newly_bad = bad & ok
                if np.any(newly_bad):
                    fail[newly_bad] = step
                    ok &= ~newly_bad
                # Freeze failed trajectories at their last finite state so
                # they cannot contaminate the recording arrays with inf/nan
                # surprises.
                x = np.where(ok[:, None], x_new, x)
                y = np.where(ok[:, None], y_new, y)

                if (step + 1) % record_every == 0:
                    r = (step + 1) // record_every
                    slow[lo:hi, r] = x
                    if record_fast:
                        fast[lo:hi, r] = y

        fail_step[lo:hi] = fail

    return slow, fast, fail_step


def euler_maruyama(
    model: SlowFastModel,
    theta,
    hurst: float,
    cfg: SimConfig,
    rng: np.random.Generator | np.random.SeedSequence | int | None = None,
    record_every: int = 1,
):
    """Simulate one trajectory; returns (slow, fast) ObservationSeries on the
    recorded grid of cfg.fine_steps // record_every intervals.

    `rng` defaults to a stream derived from cfg.seed. Raises SimulationError
    with the offending fine step index if the state leaves float64 range.
    """
    if rng is None:
        seq = np.random.SeedSequence(cfg.seed)
    elif isinstance(rng, (np.random.Generator, np.random.SeedSequence)):
        seq = rng  # default_rng accepts both downstream
    else:
        seq = np.random.SeedSequence(rng)
    slow, fast, fail = _simulate_batch(
        model, theta, hurst, cfg, [seq], record_every=record_every, record_fast=True
    )
    if fail[0] >= 0:
        raise SimulationError(
            int(fail[0]),
            f"trajectory became non-finite at fine step {int(fail[0])} "
            f"(t={fail[0] * cfg.T / cfg.fine_steps:g}); see model scales",
        )
    n_rec = cfg.fine_steps // record_every
    return (
        ObservationSeries(T=cfg.T, n=n_rec, values=slow[0]),
        ObservationSeries(T=cfg.T, n=n_rec, values=fast[0]),
    )


# ---------------------------------------------------------------------------
# CSV round-trip for observation series.
# ---------------------------------------------------------------------------


def write_observations(path, obs: ObservationSeries, header_prefix: str = "component") -> None:
    """CSV with columns t, <prefix>_1, ..., <prefix>_dim at full precision."""
    times = obs.times
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"{header_prefix}_{i + 1}" for i in range(obs.dim)])
        for k in range(obs.n + 1):
            writer.writerow(
                [f"{times[k]:.17g}"] + [f"{v:.17g}" for v in obs.values[k]]
            )


def read_observations(path) -> ObservationSeries:
    """Inverse of write_observations; checks the time grid is uniform from 0."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "t":
            raise ValueError(f"{path}: first column must be 't'")
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or data.shape[0] < 2 or data.shape[1] < 2:
        raise ValueError(f"{path}: need at least two rows and one component")
    times, values = data[:, 0], data[:, 1:]
    n = len(times) - 1
    T = times[-1]
    if times[0] != 0.0 or T <= 0:
        raise ValueError(f"{path}: time grid must start at 0 and end at T > 0")
    expected = np.linspace(0.0, T, n + 1)
    if not np.allclose(times, expected, rtol=0.0, atol=1e-9 * max(T, 1.0)):
        raise ValueError(f"{path}: time grid is not uniform")
    return ObservationSeries(T=float(T), n=n, values=values)
