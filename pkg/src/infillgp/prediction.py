"""Kriging and Bayesian predictive summaries at new locations, and the
prediction mean squared error relative to the truth.

The predicted quantity is the latent mean ``f(s*)^T beta + X(s*)`` (no nugget).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .covariance import CovarianceModel, LagStructure, cross_covariance, kernel_radial, pairwise_lags
from .errors import ValidationError
from .gp_sim import features_at
from .inference import GaussianFactor, PosteriorChain


@dataclass(frozen=True, eq=False)
class PredictionResult:
    mean: np.ndarray
    variance: np.ndarray
    location: np.ndarray
    n_clamped: int = 0


def _locations(dataset, s_star) -> np.ndarray:
    s = np.asarray(s_star, dtype=float)
    d = dataset.design.d
    s = s.reshape(-1, d) if s.ndim <= 1 else s
    if s.shape[1] != d:
        raise ValidationError(f"locations must have {d} coordinates")
    if np.any(s < 0) or np.any(s > 1):
        raise ValidationError("prediction locations must lie in [0, 1]^d")
    return s


def blup(theta, alpha, tau, beta, dataset, template: CovarianceModel, s_star,
         lags: LagStructure | None = None) -> np.ndarray:
    """``beta^T f(s*) + theta k^T Sigma^-1 (Y - F beta)`` for known ``beta``."""
    s = _locations(dataset, s_star)
    fac = GaussianFactor(template, theta, alpha, tau, dataset, lags)
    Lk = fac.solve_lower(cross_covariance(fac.model, dataset.design.points, s))
    beta = np.asarray(beta, dtype=float)
    return features_at(dataset, s) @ beta + Lk.T @ (fac.y - fac.W @ beta)


def _predict_from_factor(fac: GaussianFactor, dataset, s: np.ndarray, a0: float,
                         f_star: np.ndarray) -> PredictionResult:
    k = cross_covariance(fac.model, dataset.design.points, s)
    Lk = fac.solve_lower(k)
    A = fac.beta_precision(a0)
    cA = sla.cho_factor(A, lower=True, check_finite=False)
    b = f_star.T - fac.W.T @ Lk                      # (p, N)
    Ainv_b = sla.cho_solve(cA, b, check_finite=False)
    Ainv_Wy = sla.cho_solve(cA, fac.W.T @ fac.y, check_finite=False)
    mean = Lk.T @ fac.y + b.T @ Ainv_Wy
    k0 = float(kernel_radial(fac.model, np.zeros(1))[0])
    var = k0 - np.sum(Lk * Lk, axis=0) + np.sum(b * Ainv_b, axis=0)
    neg = var < 0
    n_clamped = int(np.sum(neg))
    if np.any(var < -1e-10 * k0):
        warnings.warn(f"{int(np.sum(var < -1e-10 * k0))} predictive variances below -1e-10 sigma^2 clamped to 0",
                      RuntimeWarning, stacklevel=3)
    var = np.where(neg, 0.0, var)
    return PredictionResult(mean=mean, variance=var, location=s, n_clamped=n_clamped)


def predictive(theta, alpha, tau, dataset, template: CovarianceModel, a0: float, s_star,
               lags: LagStructure | None = None) -> PredictionResult:
    """Posterior predictive mean and variance with ``beta ~ N(0, a0 I)`` integrated out."""
    if not a0 > 0:
        raise ValidationError("a0 must be positive")
    s = _locations(dataset, s_star)
    fac = GaussianFactor(template, theta, alpha, tau, dataset, lags)
    return _predict_from_factor(fac, dataset, s, a0, features_at(dataset, s))


def _require_truth(dataset, x_star):
    if dataset.beta_true is None or x_star is None:
        raise ValidationError("prediction error needs beta_true and the latent value at s*")


def mse_post(theta, alpha, tau, dataset, template: CovarianceModel, a0: float, s_star,
             x_star, lags: LagStructure | None = None) -> np.ndarray:
    """``(Y_dagger - beta0^T f(s*) - X(s*))^2 + v(s*)`` at each location."""
    _require_truth(dataset, x_star)
    s = _locations(dataset, s_star)
    f_star = features_at(dataset, s)
    fac = GaussianFactor(template, theta, alpha, tau, dataset, lags)
    res = _predict_from_factor(fac, dataset, s, a0, f_star)
    truth = f_star @ dataset.beta_true + np.asarray(x_star, dtype=float).reshape(-1)
    return (res.mean - truth) ** 2 + res.variance


def mse_oracle(dataset, a0: float, s_star, x_star, lags: LagStructure | None = None) -> np.ndarray:
    """:func:`mse_post` evaluated at the true covariance parameters."""
    if not dataset.has_truth:
        raise ValidationError("dataset carries no truth")
    m = dataset.model_true
    return mse_post(m.theta, m.alpha, dataset.tau_true, dataset, m, a0, s_star, x_star, lags)


@dataclass(frozen=True, eq=False)
class MseSummary:
    m_post: np.ndarray      # per test point, averaged over draws
    m_oracle: np.ndarray    # per test point
    mean_ratio: float       # mean over test points of m_post / m_oracle
    ratio_of_means: float

    def to_dict(self) -> dict:
        return {"mean_m_post": float(np.mean(self.m_post)), "mean_m_oracle": float(np.mean(self.m_oracle)),
                "mean_ratio": self.mean_ratio, "ratio_of_means": self.ratio_of_means}


def mse_ratio_experiment(dataset, chain: PosteriorChain, template: CovarianceModel, a0: float,
                         test_points=None, x_test=None, max_draws: int | None = None) -> MseSummary:
    """Average ``M_post`` over posterior draws and compare with ``M_0`` at each test point.

    ``max_draws`` evaluates an evenly spaced subset of the chain.
    """
    s = dataset.test_points if test_points is None else test_points
    x = dataset.X_test if x_test is None else x_test
    if s is None or x is None:
        raise ValidationError("test locations and their latent truth are required")
    lags = pairwise_lags(dataset.design.points)
    draws = chain.draws()
    if max_draws is not None and max_draws < len(draws):
        draws = draws[np.linspace(0, len(draws) - 1, max_draws).round().astype(int)]
    acc = np.zeros(np.shape(x)[0])
    for th, al, ta in draws:
        acc += mse_post(th, al, ta, dataset, template, a0, s, x, lags)
    m_post = acc / len(draws)
    m0 = mse_oracle(dataset, a0, s, x, lags)
    return MseSummary(m_post=m_post, m_oracle=m0, mean_ratio=float(np.mean(m_post / m0)),
                      ratio_of_means=float(np.mean(m_post) / np.mean(m0)))


def gls_beta(theta, alpha, tau, dataset, template, lags=None) -> np.ndarray:
    """Generalized least squares coefficients ``(F^T Sigma^-1 F)^-1 F^T Sigma^-1 Y``."""
    fac = GaussianFactor(template, theta, alpha, tau, dataset, lags)
    return np.linalg.lstsq(fac.W, fac.y, rcond=None)[0]


__all__ = ["PredictionResult", "MseSummary", "blup", "predictive", "mse_post", "mse_oracle",
           "mse_ratio_experiment", "gls_beta"]
