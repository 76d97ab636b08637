"""Weighted LOWESS trend lines for the disparity scatter plots.

Local linear regression with a tricube kernel over the ``frac * n`` nearest
neighbours of each evaluation point, followed by ``iters`` bisquare
robustness passes (Cleveland 1979). Observation weights (tract population)
multiply the kernel weights, so scaling all weights by a constant leaves the
curve unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TooFewPoints

DEFAULT_FRAC = 2.0 / 3.0
DEFAULT_ITERS = 3
N_EVAL = 100


@dataclass(frozen=True)
class TrendCurve:
    x: np.ndarray
    y: np.ndarray


def _n_neighbors(frac: float, n: int) -> int:
    return min(n, max(2, int(frac * n + 1e-10)))


def _local_fit(x0: float, x: np.ndarray, y: np.ndarray, w: np.ndarray, k: int) -> float:
    dist = np.abs(x - x0)
    h = np.partition(dist, k - 1)[k - 1]
    if h > 0:
        u = dist / h
        kern = np.where(u < 1.0, (1.0 - u**3) ** 3, 0.0)
    else:
        kern = (dist == 0).astype(float)
    wt = kern * w
    sw = wt.sum()
    if sw <= 0.0:
        # every neighbour was down-weighted to zero by the robustness step
        wt = kern
        sw = wt.sum()
    xm = (wt * x).sum() / sw
    ym = (wt * y).sum() / sw
    dx = x - xm
    sxx = (wt * dx * dx).sum()
    span = x.max() - x.min()
    if sxx <= 1e-12 * sw * max(span, 1e-300) ** 2:
        return float(ym)
    slope = (wt * dx * (y - ym)).sum() / sxx
    return float(ym + slope * (x0 - xm))


def _bisquare_weights(residuals: np.ndarray) -> np.ndarray:
    scale = np.median(np.abs(residuals))
    if scale <= 0.0:
        return (residuals == 0).astype(float)
    u = np.clip(residuals / (6.0 * scale), -1.0, 1.0)
    return (1.0 - u**2) ** 2


def lowess_fit(
    x,
    y,
    weights=None,
    frac: float = DEFAULT_FRAC,
    iters: int = DEFAULT_ITERS,
    eval_x=None,
) -> np.ndarray:
    """Smoothed values at ``eval_x`` (defaults to the data x positions)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if y.size != n:
        raise ValueError("x and y differ in length")
    if n < 3:
        raise TooFewPoints(f"LOWESS needs at least 3 points, got {n}")
    if not (0.0 < frac <= 1.0):
        raise ValueError(f"frac must be in (0, 1], got {frac}")
    if iters < 0:
        raise ValueError("iters must be >= 0")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if w.size != n or (w < 0).any() or not np.isfinite(w).all():
        raise ValueError("weights must be finite, nonnegative and match x")
    if w.sum() <= 0:
        raise ValueError("weights sum to zero")

    k = _n_neighbors(frac, n)
    robust = np.ones(n)
    for _ in range(iters):
        fitted = np.array([_local_fit(xi, x, y, w * robust, k) for xi in x])
        robust = _bisquare_weights(y - fitted)
    targets = x if eval_x is None else np.asarray(eval_x, dtype=float)
    return np.array([_local_fit(x0, x, y, w * robust, k) for x0 in targets])


def lowess_trend(x, y, weights=None, frac: float = DEFAULT_FRAC, iters: int = DEFAULT_ITERS, n_eval: int = N_EVAL) -> TrendCurve:
    """Smooth curve sampled at ``n_eval`` evenly spaced x positions spanning the data."""
    x = np.asarray(x, dtype=float)
    if x.size < 3:
        raise TooFewPoints(f"LOWESS needs at least 3 points, got {x.size}")
    grid = np.linspace(x.min(), x.max(), n_eval)
    return TrendCurve(grid, lowess_fit(x, y, weights, frac, iters, eval_x=grid))
