"""Simulation of ``Y = F beta + X + eps`` on a design, keeping the latent truth."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .covariance import CovarianceModel, covariance_matrix
from .design import Design, FeatureSpec, feature_rows, features
from .errors import NumericalError, ValidationError
from .rng import generator

JITTER_LADDER = (0.0,) + tuple(10.0 ** k for k in range(-12, -5))


@dataclass(frozen=True, eq=False)
class Dataset:
    design: Design
    F: np.ndarray
    Y: np.ndarray
    featurespec: FeatureSpec | None = None
    beta_true: np.ndarray | None = None
    X_true: np.ndarray | None = None
    model_true: CovarianceModel | None = None
    tau_true: float | None = None
    test_points: np.ndarray | None = None
    X_test: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.design.n
        if self.F.ndim != 2 or self.F.shape[0] != n or self.Y.shape != (n,):
            raise ValidationError(f"inconsistent dataset shapes: F {self.F.shape}, Y {self.Y.shape}, n={n}")
        if self.X_true is not None and self.X_true.shape != (n,):
            raise ValidationError("X_true must have one entry per design point")
        if self.beta_true is not None and self.beta_true.shape != (self.F.shape[1],):
            raise ValidationError("beta_true must have one entry per feature")

    @property
    def n(self) -> int:
        return self.design.n

    @property
    def p(self) -> int:
        return self.F.shape[1]

    @property
    def has_truth(self) -> bool:
        return self.beta_true is not None and self.model_true is not None and self.tau_true is not None

    def with_observations(self, Y: np.ndarray) -> "Dataset":
        return Dataset(self.design, self.F, np.asarray(Y, dtype=float), self.featurespec,
                       self.beta_true, self.X_true, self.model_true, self.tau_true,
                       self.test_points, self.X_test, dict(self.meta))


def cholesky_with_jitter(K: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``K + j I`` with the smallest ``j`` on the jitter ladder."""
    n = K.shape[0]
    scale = float(np.trace(K)) / n if n else 1.0
    for rel in JITTER_LADDER:
        j = rel * scale
        try:
            A = K if j == 0 else K + j * np.eye(n)
            return sla.cholesky(A, lower=True, check_finite=False), j
        except sla.LinAlgError:
            continue
    diag = {"n": n, "trace_over_n": scale, "min_diag": float(np.min(np.diag(K))),
            "max_jitter": JITTER_LADDER[-1] * scale}
    try:
        ev = np.linalg.eigvalsh(K)
        diag.update(min_eig=float(ev[0]), max_eig=float(ev[-1]),
                    condition=float(ev[-1] / ev[0]) if ev[0] > 0 else math.inf)
    except np.linalg.LinAlgError:
        pass
    raise NumericalError("Cholesky failed after jitter escalation", diagnostics=diag)


def simulate(model: CovarianceModel | None, tau: float, beta, design: Design,
             featurespec: FeatureSpec, seed: int, replicate: int = 0,
             test_points: np.ndarray | None = None) -> Dataset:
    """Draw one dataset.  ``model=None`` drops the latent process (zero microergodic parameter).

    When ``test_points`` are given, the latent values there are drawn jointly
    with the design values and stored in ``X_test``.
    """
    if tau < 0 or not math.isfinite(tau):
        raise ValidationError("nugget must be finite and >= 0")
    F = features(featurespec, design)
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (F.shape[1],):
        raise ValidationError(f"beta must have length {F.shape[1]}")
    n = design.n
    tp = None if test_points is None else np.atleast_2d(np.asarray(test_points, dtype=float))
    n_test = 0 if tp is None else tp.shape[0]
    jitter = 0.0
    if model is None:
        X_all = np.zeros(n + n_test)
    else:
        model.validate_for_dimension(design.d)
        pts = design.points if tp is None else np.vstack([design.points, tp])
        L, jitter = cholesky_with_jitter(covariance_matrix(model, pts))
        z = generator(seed, replicate, "latent").standard_normal(n + n_test)
        X_all = L @ z
    X = X_all[:n]
    eps = math.sqrt(tau) * generator(seed, replicate, "noise").standard_normal(n)
    Y = F @ beta + X + eps
    return Dataset(design=design, F=F, Y=Y, featurespec=featurespec, beta_true=beta,
                   X_true=X, model_true=model, tau_true=float(tau), test_points=tp,
                   X_test=None if tp is None else X_all[n:],
                   meta={"seed": int(seed), "replicate": int(replicate), "jitter": jitter})


def features_at(dataset: Dataset, points: np.ndarray) -> np.ndarray:
    if dataset.featurespec is None:
        raise ValidationError("dataset does not record its feature set")
    return feature_rows(dataset.featurespec, points)
