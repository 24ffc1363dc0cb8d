"""Multistart box-constrained minimization used by the drift estimators.

Start points come from an unscrambled Halton sequence over the box (good
coverage, fully deterministic); each start runs L-BFGS-B. Diagnostics record
per-start outcomes, boundary contact of the winner, and whether distinct
near-optimal minima were found.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.stats import qmc

__all__ = ["OptimizerConfig", "StartOutcome", "MultistartResult", "OptimizationError", "minimize_box"]


class OptimizationError(RuntimeError):
    """Every start failed to produce a usable minimum."""


@dataclass(frozen=True)
class OptimizerConfig:
    n_starts: int = 8
    grad_tol: float = 1e-9
    f_tol: float = 1e-14
    max_iter: int = 200

    def __post_init__(self):
        if self.n_starts < 1 or self.max_iter < 1 or self.grad_tol <= 0 or self.f_tol <= 0:
            raise ValueError("invalid optimizer configuration")


@dataclass(frozen=True)
class StartOutcome:
    x0: np.ndarray
    x: np.ndarray
    fun: float
    converged: bool
    n_iter: int
    message: str


@dataclass(frozen=True)
class MultistartResult:
    x: np.ndarray
    fun: float
    starts: tuple[StartOutcome, ...] = field(repr=False)
    boundary_hit: bool
    multiple_minima: bool

    @property
    def n_converged(self) -> int:
        return sum(1 for s in self.starts if s.converged)


def minimize_box(objective, box, jac=None, config: OptimizerConfig | None = None) -> MultistartResult:
    """Minimize objective over the box (array (p, 2)) from Halton starts.

    `objective` maps (p,) -> float; `jac` maps (p,) -> (p,) or is None, in
    which case L-BFGS-B uses 3-point finite differences. Raises
    OptimizationError when no start yields a finite minimum.
    """
    config = config or OptimizerConfig()
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    p = box.shape[0]
    lo, hi = box[:, 0], box[:, 1]

    unit = qmc.Halton(d=p, scramble=False).random(config.n_starts)
    # Halton's first point is the origin; nudge all starts off the faces.
    starts = lo + (0.05 + 0.9 * unit) * (hi - lo)

    outcomes = []
    for x0 in starts:
        res = optimize.minimize(
            objective,
            x0,
            method="L-BFGS-B",
            jac=jac if jac is not None else "3-point",
            bounds=list(zip(lo, hi)),
            options={"maxiter": config.max_iter, "gtol": config.grad_tol, "ftol": config.f_tol},
        )
        outcomes.append(
            StartOutcome(
                x0=x0.copy(),
                x=np.asarray(res.x, dtype=float),
                fun=float(res.fun),
                converged=bool(res.success) and np.isfinite(res.fun),
                n_iter=int(res.nit),
                message=str(res.message),
            )
        )

    usable = [o for o in outcomes if np.isfinite(o.fun)]
    if not usable:
        raise OptimizationError(
            "all optimizer starts failed: " + "; ".join(o.message for o in outcomes)
        )
    best = min(usable, key=lambda o: o.fun)

    width = hi - lo
    boundary = bool(np.any((best.x - lo < 1e-9 * width) | (hi - best.x < 1e-9 * width)))

    # near-ties at visibly different parameter values mean multiple minima
    tol_f = max(1e-10, 1e-8 * abs(best.fun))
    near = [o for o in usable if o.fun <= best.fun + tol_f]
    multiple = any(np.any(np.abs(o.x - best.x) > 1e-4 * width) for o in near)

    return MultistartResult(
        x=best.x,
        fun=best.fun,
        starts=tuple(outcomes),
        boundary_hit=boundary,
        multiple_minima=multiple,
    )
