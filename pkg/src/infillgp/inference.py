"""Gaussian likelihoods, priors, the conjugate regression step, and random-walk
Metropolis over ``(theta, alpha, tau)`` with the regression coefficients
integrated out.

Log-likelihoods omit the ``-n/2 log(2 pi)`` constant.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .covariance import CovarianceModel, LagStructure, covariance_matrix, pairwise_lags
from .errors import MixingError, NumericalError, ValidationError
from .rng import generator

@dataclass(frozen=True)
class PriorSpec:
    a0: float = 1e6
    a1: float = 0.1
    b1: float = 0.1
    a2: float = 0.1
    b2: float = 0.1
    mu_ig: float = 1.0
    lambda_ig: float = 1.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v > 0):
                raise ValidationError(f"prior hyperparameter {f.name} must be positive")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def log_inverse_gamma(x: float, a: float, b: float) -> float:
    return -(a + 1) * math.log(x) - b / x + a * math.log(b) - math.lgamma(a)


def log_inverse_gaussian(x: float, mu: float, lam: float) -> float:
    # written in logs so that extreme x (proposals far in the tails) stay finite
    return (0.5 * (math.log(lam) - math.log(2 * math.pi) - 3 * math.log(x))
            - lam * (x - mu) * ((x - mu) / x) / (2 * mu * mu))


def log_prior(theta: float, alpha: float, tau: float, priors: PriorSpec) -> float:
    if min(theta, alpha, tau) <= 0:
        raise ValidationError("prior arguments must be positive")
    return (log_inverse_gamma(theta, priors.a1, priors.b1)
            + log_inverse_gamma(tau, priors.a2, priors.b2)
            + log_inverse_gaussian(alpha, priors.mu_ig, priors.lambda_ig))


class GaussianFactor:
    """Cholesky factor of ``Sigma = theta K_alpha(S_n) + tau I`` with whitened data.

    ``y = L^-1 Y`` and ``W = L^-1 F`` are kept so the regression terms reduce to
    small p x p algebra.
    """

    def __init__(self, template: CovarianceModel, theta: float, alpha: float, tau: float,
                 dataset, lags: LagStructure | None = None):
        if not (theta > 0 and alpha > 0 and tau >= 0):
            raise ValidationError("need theta > 0, alpha > 0 and tau >= 0")
        self.model = template.replace(theta=float(theta), alpha=float(alpha))
        self.tau = float(tau)
        self.dataset = dataset
        if lags is None:
            lags = pairwise_lags(dataset.design.points)
        self.lags = lags
        S = covariance_matrix(self.model, dataset.design, tau, lags=lags)
        try:
            self.L = sla.cholesky(S, lower=True, check_finite=False)
        except (sla.LinAlgError, ValueError) as exc:
            raise NumericalError("covariance matrix is not positive definite",
                                 diagnostics=_diagnostics(S)) from exc
        self.logdet = 2.0 * float(np.sum(np.log(np.diag(self.L))))
        self.y = self.solve_lower(dataset.Y)
        self.W = self.solve_lower(dataset.F)

    def solve_lower(self, b):
        return sla.solve_triangular(self.L, b, lower=True, check_finite=False)

    def beta_precision(self, a0: float) -> np.ndarray:
        """``F^T Sigma^-1 F + a0^-1 I``."""
        return self.W.T @ self.W + np.eye(self.W.shape[1]) / a0


def _diagnostics(S: np.ndarray) -> dict:
    out = {"n": S.shape[0], "min_diag": float(np.min(np.diag(S)))}
    try:
        ev = np.linalg.eigvalsh(S)
        out.update(min_eig=float(ev[0]), max_eig=float(ev[-1]))
    except np.linalg.LinAlgError:
        pass
    return out


def log_likelihood(theta: float, alpha: float, tau: float, beta, dataset,
                   template: CovarianceModel, lags: LagStructure | None = None) -> float:
    """``-1/2 (Y - F beta)^T Sigma^-1 (Y - F beta) - 1/2 log det Sigma``."""
    fac = GaussianFactor(template, theta, alpha, tau, dataset, lags)
    r = fac.y - fac.W @ np.asarray(beta, dtype=float)
    return -0.5 * float(r @ r) - 0.5 * fac.logdet


def _marginal_from_factor(fac: GaussianFactor, a0: float) -> float:
    p = fac.W.shape[1]
    B = np.eye(p) + a0 * (fac.W.T @ fac.W)
    cB = sla.cho_factor(B, lower=True, check_finite=False)
    wy = fac.W.T @ fac.y
    quad = float(fac.y @ fac.y) - a0 * float(wy @ sla.cho_solve(cB, wy, check_finite=False))
    logdet = fac.logdet + 2.0 * float(np.sum(np.log(np.diag(cB[0]))))
    return -0.5 * quad - 0.5 * logdet


def marginal_log_likelihood(theta: float, alpha: float, tau: float, dataset,
                            template: CovarianceModel, a0: float,
                            lags: LagStructure | None = None) -> float:
    """Log density of ``Y ~ N(0, Sigma + a0 F F^T)`` via the Woodbury identity."""
    if not a0 > 0:
        raise ValidationError("a0 must be positive")
    return _marginal_from_factor(GaussianFactor(template, theta, alpha, tau, dataset, lags), a0)


def beta_conditional_posterior(theta: float, alpha: float, tau: float, dataset,
                               template: CovarianceModel, a0: float,
                               lags: LagStructure | None = None):
    """Mean and covariance of ``beta | theta, alpha, tau, Y`` under ``beta ~ N(0, a0 I)``."""
    fac = GaussianFactor(template, theta, alpha, tau, dataset, lags)
    A = fac.beta_precision(a0)
    cA = sla.cho_factor(A, lower=True, check_finite=False)
    cov = sla.cho_solve(cA, np.eye(A.shape[0]), check_finite=False)
    mean = sla.cho_solve(cA, fac.W.T @ fac.y, check_finite=False)
    return mean, 0.5 * (cov + cov.T)


def dense_marginal_log_likelihood(theta, alpha, tau, dataset, template, a0) -> float:
    """Direct evaluation with ``slogdet`` and a dense solve (small n only)."""
    model = template.replace(theta=float(theta), alpha=float(alpha))
    S = covariance_matrix(model, dataset.design, tau) + a0 * dataset.F @ dataset.F.T
    sign, logdet = np.linalg.slogdet(S)
    if sign <= 0:
        raise NumericalError("marginal covariance is not positive definite")
    return -0.5 * float(dataset.Y @ np.linalg.solve(S, dataset.Y)) - 0.5 * logdet


def grid_log_posterior(dataset, template: CovarianceModel, priors: PriorSpec, alpha: float,
                       log_theta: np.ndarray, log_tau: np.ndarray) -> np.ndarray:
    """Unnormalized log density of ``(log theta, log tau)`` with ``alpha`` held fixed.

    Brute-force oracle for small n: every grid node is evaluated with
    :func:`dense_marginal_log_likelihood`.
    """
    out = np.empty((len(log_theta), len(log_tau)))
    for i, lt in enumerate(log_theta):
        th = math.exp(lt)
        for j, lu in enumerate(log_tau):
            ta = math.exp(lu)
            out[i, j] = (dense_marginal_log_likelihood(th, alpha, ta, dataset, template, priors.a0)
                         + log_inverse_gamma(th, priors.a1, priors.b1)
                         + log_inverse_gamma(ta, priors.a2, priors.b2) + lt + lu)
    return out


# ---------------------------------------------------------------------------
# Metropolis

@dataclass(frozen=True)
class McmcConfig:
    n_samples: int = 2000
    n_burnin: int = 1000
    step: tuple[float, float, float] = (0.3, 0.3, 0.3)
    adapt: bool = True
    target_accept: float = 0.3
    seed: int = 0
    replicate: int = 0
    fixed_alpha: bool = False
    prior_only: bool = False
    mixing_window: int = 200
    init: tuple[float, float, float] | None = None

    def __post_init__(self):
        if self.n_samples < 1 or self.n_burnin < 0:
            raise ValidationError("need n_samples >= 1 and n_burnin >= 0")
        if len(self.step) != 3 or min(self.step) <= 0:
            raise ValidationError("step sizes must be three positive numbers")
        if not 0 < self.target_accept < 1:
            raise ValidationError("target_accept must lie in (0, 1)")
        if self.init is not None and (len(self.init) != 3 or min(self.init) <= 0):
            raise ValidationError("init must be three positive numbers")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True, eq=False)
class PosteriorChain:
    theta: np.ndarray
    alpha: np.ndarray
    tau: np.ndarray
    log_post: np.ndarray
    accepted: np.ndarray
    config: McmcConfig
    final_step: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not (np.all(self.theta > 0) and np.all(self.alpha > 0) and np.all(self.tau > 0)):
            raise NumericalError("chain contains non-positive draws")

    def __len__(self):
        return self.theta.size

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted))

    def draws(self) -> np.ndarray:
        return np.column_stack([self.theta, self.alpha, self.tau])


def metropolis_step(log_target: Callable, propose: Callable, x, lp: float, rng):
    """One Metropolis move with a symmetric proposal; returns ``(x, lp, accepted, prob)``."""
    y = propose(x, rng)
    lq = log_target(y)
    delta = lq - lp
    prob = 1.0 if delta >= 0 else (math.exp(delta) if math.isfinite(delta) else 0.0)
    if rng.random() < prob:
        return y, lq, True, prob
    return x, lp, False, prob


class PosteriorTarget:
    """Log posterior of ``x = (log theta, log alpha, log tau)`` including the Jacobian."""

    def __init__(self, dataset, template: CovarianceModel, priors: PriorSpec,
                 prior_only: bool = False):
        self.dataset = dataset
        self.template = template
        self.priors = priors
        self.prior_only = prior_only
        self.lags = None if prior_only else pairwise_lags(dataset.design.points)

    def __call__(self, x) -> float:
        if not np.all(np.abs(x) < 700):
            return -math.inf
        th, al, ta = (math.exp(v) for v in x)
        lp = log_prior(th, al, ta, self.priors) + float(np.sum(x))
        if self.prior_only:
            return lp
        try:
            ll = marginal_log_likelihood(th, al, ta, self.dataset, self.template,
                                         self.priors.a0, self.lags)
        except NumericalError:
            return -math.inf
        return ll + lp


def default_initial_point(dataset, template: CovarianceModel, priors: PriorSpec):
    """QV estimates for theta and tau, the prior mean for alpha; falls back to moments."""
    from .quadvar import estimate  # local import keeps module layering one-way
    from .errors import InfillGPError

    alpha = priors.mu_ig
    resid = dataset.Y - dataset.F @ np.linalg.lstsq(dataset.F, dataset.Y, rcond=None)[0]
    var = float(np.var(resid)) or 1.0
    theta, tau = var * alpha ** (2 * template.nu), 0.1 * var
    try:
        est = estimate(dataset, template.nu)
        if est.theta_hat > 0 and math.isfinite(est.theta_hat):
            theta = est.theta_hat
        if est.tau_hat > 0 and math.isfinite(est.tau_hat):
            tau = est.tau_hat
    except InfillGPError:
        pass
    return theta, alpha, tau


def run_mcmc(dataset, template: CovarianceModel, priors: PriorSpec,
             config: McmcConfig) -> PosteriorChain:
    """Random-walk Metropolis in log coordinates with burn-in adaptation.

    During burn-in a global scale follows a Robbins-Monro recursion toward
    ``target_accept`` and, after 100 iterations, each coordinate's step is
    shaped by the running standard deviation of the chain.  Both are frozen
    afterwards.
    """
    target = PosteriorTarget(dataset, template, priors, config.prior_only)
    rng = generator(config.seed, config.replicate, "mcmc")
    init = config.init or default_initial_point(dataset, template, priors)
    x = np.log(np.asarray(init, dtype=float))
    lp = target(x)
    if not math.isfinite(lp):
        raise NumericalError("log posterior is not finite at the initial point",
                             diagnostics={"init": list(map(float, init))})
    active = np.array([True, not config.fixed_alpha, True])
    base = np.asarray(config.step, dtype=float) * active
    shape = base.copy()
    log_scale = 0.0
    # Welford running moments for the shape
    mean = x.copy()
    m2 = np.zeros(3)

    def propose(xc, rng_):
        return xc + math.exp(log_scale) * shape * rng_.standard_normal(3)

    total = config.n_burnin + config.n_samples
    out = np.empty((config.n_samples, 4))
    acc = np.zeros(config.n_samples, dtype=bool)
    window_acc = 0
    for t in range(total):
        x, lp, ok, prob = metropolis_step(target, propose, x, lp, rng)
        if t < config.n_burnin:
            window_acc += ok
            if (t + 1) % config.mixing_window == 0:
                if window_acc == 0:
                    raise MixingError(
                        f"no proposal accepted in burn-in iterations {t + 1 - config.mixing_window}-{t}",
                        diagnostics={"scale": math.exp(log_scale), "step": shape.tolist(),
                                     "state": np.exp(x).tolist(), "log_post": lp})
                window_acc = 0
            if config.adapt:
                log_scale += (prob - config.target_accept) / (t + 1) ** 0.6
                k = t + 2
                dlt = x - mean
                mean += dlt / k
                m2 += dlt * (x - mean)
                if t >= 100:
                    sd = np.sqrt(m2 / (k - 1))
                    shape = np.where(active, np.clip(2.38 / math.sqrt(active.sum()) * sd,
                                                     1e-3 * base.max(), 10 * base.max()), 0.0)
                    if t == 100:
                        log_scale = 0.0
        else:
            i = t - config.n_burnin
            out[i, :3] = np.exp(x)
            out[i, 3] = lp
            acc[i] = ok
    return PosteriorChain(theta=out[:, 0], alpha=out[:, 1], tau=out[:, 2], log_post=out[:, 3],
                          accepted=acc, config=config, final_step=math.exp(log_scale) * shape)

