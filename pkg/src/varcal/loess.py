"""Locally weighted polynomial regression with pointwise standard errors.

Classic LOESS without robustness iterations: at each evaluation point the
``ceil(span * n)`` nearest observations get tricube weights scaled by the
distance of the farthest of them, and a weighted polynomial fit is read off at
the point. Intervals are Gaussian, ``mean +/- 1.96 * stderr``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset

Z95 = 1.96


class DegenerateWindowError(ValueError):
    pass


@dataclass(frozen=True)
class LoessConfig:
    span: float = 0.85
    degree: int = 2
    grid_size: int = 256

    def __post_init__(self):
        if not 0.0 < self.span <= 1.0:
            raise ValueError(f"span must be in (0, 1], got {self.span}")
        if self.degree not in (0, 1, 2, 3):
            raise ValueError(f"degree must be 0..3, got {self.degree}")
        if self.grid_size < 2:
            raise ValueError(f"grid_size must be >= 2, got {self.grid_size}")


@dataclass(frozen=True)
class CurveEstimate:
    grid: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray

    @property
    def ci_low(self) -> np.ndarray:
        return self.mean - Z95 * self.stderr

    @property
    def ci_high(self) -> np.ndarray:
        return self.mean + Z95 * self.stderr


def default_grid(x, size: int) -> np.ndarray:
    """``size`` evenly spaced points between the 1st and 99th percentiles of ``x``."""
    lo, hi = np.percentile(np.asarray(x, dtype=np.float64), [1.0, 99.0])
    return np.linspace(lo, hi, size)


def _local_fit(x, y, g, k, degree):
    d = np.abs(x - g)
    h = np.partition(d, k - 1)[k - 1]
    if h <= 0.0:
        raise DegenerateWindowError(f"all local x values coincide at grid point {g!r}")
    inside = d < h
    t = (x[inside] - g) / h
    yw = y[inside]
    w = (1.0 - np.abs(t) ** 3) ** 3
    p = degree + 1
    if yw.size and np.all(yw == yw[0]):
        return float(yw[0]), 0.0
    X = np.vander(t, p, increasing=True)
    Xw = X * w[:, None]
    A = Xw.T @ X
    eig = np.linalg.eigvalsh(A)
    if eig[0] <= 1e-12 * max(eig[-1], 1e-300):
        raise DegenerateWindowError(f"rank-deficient local design at grid point {g!r}")
    beta = np.linalg.solve(A, Xw.T @ yw)
    resid = yw - X @ beta
    m = yw.size
    sigma2 = float(w @ resid**2) / float(w.sum()) * m / max(m - p, 1)
    # fitted value is e1' A^-1 X'W y; its variance is sigma2 * ||W X A^-1 e1||^2
    a1 = np.linalg.solve(A, np.eye(p)[0])
    lvec = Xw @ a1
    var = sigma2 * float(lvec @ lvec)
    return float(beta[0]), math.sqrt(max(var, 0.0))


def fit_loess(x, y, config: LoessConfig | None = None, grid=None) -> CurveEstimate:
    """Fit a LOESS curve of ``y`` on ``x`` and evaluate it on ``grid``.

    The default grid is ``config.grid_size`` points spanning the 1st to 99th
    percentile of ``x``. Fitted means are not clipped to any range.
    """
    config = config or LoessConfig()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    n = x.size
    if n < config.degree + 2:
        raise ValueError(f"need at least {config.degree + 2} points, got {n}")
    if np.all(x == x[0]):
        raise DegenerateWindowError("x values are all identical")
    k = min(n, max(math.ceil(config.span * n), config.degree + 2))
    grid = default_grid(x, config.grid_size) if grid is None else np.asarray(grid, dtype=np.float64)
    mean = np.empty(grid.size)
    se = np.empty(grid.size)
    for i, g in enumerate(grid):
        mean[i], se[i] = _local_fit(x, y, g, k, config.degree)
    return CurveEstimate(grid=grid, mean=mean, stderr=se)


def calibration_curves(
    dataset: Dataset, variable: str, config: LoessConfig | None = None
) -> tuple[CurveEstimate, CurveEstimate]:
    """Smoothed error rate and smoothed predicted error ``1 - s`` against ``variable``."""
    config = config or LoessConfig()
    v = dataset.variable(variable)
    grid = default_grid(v, config.grid_size)
    error = fit_loess(v, 1.0 - dataset.correct, config, grid)
    predicted = fit_loess(v, 1.0 - dataset.confidence, config, grid)
    return error, predicted


def max_curve_gap(a: CurveEstimate, b: CurveEstimate, tie_tol: float = 1e-12) -> tuple[float, float]:
    """Grid point of the largest ``|a - b|`` and the gap there.

    Gaps within ``tie_tol`` of the maximum count as ties and resolve to the
    smallest grid value.
    """
    if a.grid.shape != b.grid.shape or not np.array_equal(a.grid, b.grid):
        raise ValueError("curves must share the same grid")
    gaps = np.abs(a.mean - b.mean)
    best = float(gaps.max())
    i = int(np.flatnonzero(gaps >= best - tie_tol)[0])
    return float(a.grid[i]), float(gaps[i])


def total_variation(curve: CurveEstimate) -> float:
    return float(np.abs(np.diff(curve.mean)).sum())
