"""Summaries across replicated experiments: log-log rate fits, one-dimensional
Wasserstein-2 barycenters, and the theoretical contraction exponents."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True, eq=False)
class RateFit:
    slope: float
    intercept: float
    stderr_slope: float
    points: np.ndarray  # (k, 2) of (log n, log error)

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "stderr_slope": self.stderr_slope,
                "n_points": int(self.points.shape[0])}


def rate_regression(ns, errors) -> RateFit:
    """Ordinary least squares of ``log(error)`` on ``log(n)``."""
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if ns.shape != errors.shape or ns.ndim != 1:
        raise ValidationError("ns and errors must be 1-d arrays of equal length")
    if ns.size < 3:
        raise ValidationError("rate regression needs at least 3 points")
    if np.any(errors <= 0) or np.any(ns <= 0) or not np.all(np.isfinite(errors)):
        raise ValidationError("sample sizes and errors must be finite and positive")
    x, y = np.log(ns), np.log(errors)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0:
        raise ValidationError("sample sizes must not all be equal")
    slope = float(xc @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - intercept - slope * x
    s2 = float(resid @ resid) / (x.size - 2)
    return RateFit(slope=slope, intercept=intercept, stderr_slope=math.sqrt(s2 / sxx),
                   points=np.column_stack([x, y]))


def quantile_grid(n_quantiles: int = 512) -> np.ndarray:
    return (np.arange(n_quantiles) + 0.5) / n_quantiles


def w2_barycenter(sample_sets, n_quantiles: int = 512) -> np.ndarray:
    """Barycenter of 1-d empirical distributions as averaged quantile functions.

    Each set is mapped to its empirical quantiles on ``(k + 1/2)/Q``; sets of
    equal size ``Q`` are used as sorted samples directly.
    """
    sets = [np.asarray(s, dtype=float).ravel() for s in sample_sets]
    if not sets or any(s.size == 0 for s in sets):
        raise ValidationError("barycenter needs at least one non-empty sample set")
    sizes = {s.size for s in sets}
    if len(sizes) == 1 and sizes.pop() == n_quantiles:
        q = np.stack([np.sort(s) for s in sets])
    else:
        p = quantile_grid(n_quantiles)
        q = np.stack([np.quantile(s, p) for s in sets])
    # averaging offsets from the first set keeps K identical sets exact
    return q[0] + (q - q[0]).mean(axis=0)


def theoretical_rates(nu: float, d: int) -> tuple[float, float]:
    """Exponents ``b1 = 1/(2(4 nu/d + 1))`` and ``b2 = 1/2`` (small slack terms dropped)."""
    if not nu > 0 or d < 1:
        raise ValidationError("need nu > 0 and d >= 1")
    return 1.0 / (2.0 * (4.0 * nu / d + 1.0)), 0.5


def posterior_relative_error(draws, truth: float) -> float:
    """Posterior mean of ``|x / x0 - 1|``."""
    draws = np.asarray(draws, dtype=float)
    return float(np.mean(np.abs(draws / truth - 1.0)))
