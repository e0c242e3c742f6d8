"""Log-log least squares used by every scaling check."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SlopeFit", "slope_fit", "trimmed_slope_fit"]


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    max_residual: float
    n_points: int

    def __iter__(self):
        # lets callers unpack (slope, intercept, residual)
        return iter((self.slope, self.intercept, self.max_residual))


def slope_fit(xs, ys) -> SlopeFit:
    """Fit log y = slope * log x + intercept; residual is max |log-residual|."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be one-dimensional and of equal length")
    if len(x) < 3:
        raise ValueError("slope fit needs at least 3 points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs strictly positive xs and ys")
    d = np.diff(x)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("xs must be strictly monotone")
    lx, ly = np.log(x), np.log(y)
    A = np.vstack([lx, np.ones_like(lx)]).T
    (s, c), *_ = np.linalg.lstsq(A, ly, rcond=None)
    res = float(np.max(np.abs(ly - (s * lx + c))))
    return SlopeFit(float(s), float(c), res, len(x))


def trimmed_slope_fit(xs, ys, tol: float = 0.05) -> tuple[SlopeFit, SlopeFit | None]:
    """Raw fit, plus a trimmed fit when the raw residual exceeds ``tol``.

    Trimming drops both end points when at least 5 remain usable, otherwise
    only the first point (callers order data from coarse to fine, so the first
    point is the least asymptotic one).
    """
    raw = slope_fit(xs, ys)
    if raw.max_residual <= tol or len(xs) < 4:
        return raw, None
    x, y = np.asarray(xs), np.asarray(ys)
    if len(x) >= 5:
        return raw, slope_fit(x[1:-1], y[1:-1])
    return raw, slope_fit(x[1:], y[1:])
