"""Small quadrature helpers shared by the fitter, potentials and oracle."""

from __future__ import annotations

import numpy as np


def simpson_weights(n_points: int, h: float) -> np.ndarray:
    """Composite Simpson weights for ``n_points`` (odd) equally spaced nodes."""
    if n_points < 3 or n_points % 2 == 0:
        raise ValueError("Simpson's rule needs an odd number of points >= 3")
    w = np.ones(n_points)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def simpson(y: np.ndarray, x: np.ndarray) -> float:
    """Composite Simpson on an equally spaced grid (odd length)."""
    h = (x[-1] - x[0]) / (len(x) - 1)
    return float(simpson_weights(len(x), h) @ y)


def trapezoid(y: np.ndarray, x: np.ndarray, axis: int = -1):
    return np.trapezoid(y, x=x, axis=axis)


def cumulative_trapezoid(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(np.asarray(y, dtype=float))
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))
    return out
