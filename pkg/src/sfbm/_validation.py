"""Input validation helpers shared by the estimator objects."""

from __future__ import annotations

import numpy as np

from .simulate import ObservationSeries

__all__ = ["as_observations", "check_box"]


def as_observations(X, T: float) -> ObservationSeries:
    """Coerce X into an ObservationSeries on a uniform grid over [0, T].

    Accepts an ObservationSeries (T is then ignored), a 1-D array of n + 1
    scalar observations, or a 2-D array of shape (n + 1, dim).
    """
    if isinstance(X, ObservationSeries):
        return X
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise ValueError(
            f"expected a 1-D or 2-D array with at least two rows, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError("observations must be finite")
    return ObservationSeries(T=float(T), n=arr.shape[0] - 1, values=arr)


def check_box(box, n_params: int | None = None) -> np.ndarray:
    """Validate a parameter search box of shape (p, 2) with low < high."""
    arr = np.asarray(box, dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(arr)):
        raise ValueError("parameter box must be finite")
    if np.any(arr[:, 0] >= arr[:, 1]):
        raise ValueError("parameter box rows must satisfy low < high")
    if n_params is not None and arr.shape[0] != n_params:
        raise ValueError(f"parameter box must have {n_params} rows, got {arr.shape[0]}")
    return arr
