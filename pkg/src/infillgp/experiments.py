"""Replicated simulation studies: posterior contraction and prediction efficiency.

Every (m, replicate) task is keyed by its own random streams, so results do
not depend on execution order or on the number of worker processes.
"""
from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import posterior_relative_error, rate_regression, w2_barycenter
from .covariance import CovarianceModel, Family, matern
from .design import FeatureSpec, grid_design, stratified_design
from .errors import InfillGPError, ValidationError
from .gp_sim import simulate
from .inference import McmcConfig, PriorSpec, run_mcmc
from .prediction import mse_ratio_experiment
from .quadvar import QvConfig, estimate
from .rng import generator

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ExperimentConfig:
    model: CovarianceModel = field(default_factory=lambda: matern(5.0, 1.0, 0.5))
    tau: float = 0.5
    beta: tuple[float, ...] = (1.0, 0.66, -1.5, 1.0)
    features: FeatureSpec = field(default_factory=lambda: FeatureSpec("polynomial", 3))
    d: int = 1
    schedule: tuple[int, ...] = (200, 300, 450, 675, 1000)
    replicates: int = 8
    seed: int = 20240601
    design: str = "grid"
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    priors: PriorSpec = field(default_factory=PriorSpec)
    gamma_theta: float | None = None
    gamma_tau: float | None = None
    n_test: int = 200
    max_draws_mse: int | None = None

    def __post_init__(self):
        if not self.schedule:
            raise ValidationError("design schedule must be nonempty")
        if self.replicates < 1:
            raise ValidationError("replicates must be >= 1")
        if self.design not in ("grid", "stratified"):
            raise ValidationError("design must be 'grid' or 'stratified'")
        if len(self.beta) != self.features.p(self.d):
            raise ValidationError(f"beta needs {self.features.p(self.d)} entries for these features")
        if self.tau < 0:
            raise ValidationError("nugget must be >= 0")
        self.model.validate_for_dimension(self.d)

    def qv_config(self) -> QvConfig:
        return QvConfig(nu=self.model.nu, d=self.d, gamma_theta=self.gamma_theta,
                        gamma_tau=self.gamma_tau)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "model": self.model.to_dict(),
            "tau": self.tau,
            "beta": list(self.beta),
            "features": self.features.to_dict(),
            "d": self.d,
            "schedule": list(self.schedule),
            "replicates": self.replicates,
            "seed": self.seed,
            "design": self.design,
            "mcmc": {k: (list(v) if isinstance(v, tuple) else v)
                     for k, v in self.mcmc.to_dict().items()},
            "priors": self.priors.to_dict(),
            "gamma_theta": self.gamma_theta,
            "gamma_tau": self.gamma_tau,
            "n_test": self.n_test,
            "max_draws_mse": self.max_draws_mse,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        obj = dict(obj)
        schema = obj.pop("schema", SCHEMA_VERSION)
        if schema != SCHEMA_VERSION:
            raise ValidationError(f"unsupported config schema {schema!r}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        try:
            if "model" in obj:
                kw["model"] = CovarianceModel.from_dict(obj["model"])
            if "features" in obj:
                kw["features"] = FeatureSpec.from_dict(obj["features"])
            if "mcmc" in obj:
                m = dict(obj["mcmc"])
                for key in ("step", "init"):
                    if m.get(key) is not None:
                        m[key] = tuple(float(v) for v in m[key])
                kw["mcmc"] = McmcConfig(**m)
            if "priors" in obj:
                kw["priors"] = PriorSpec(**obj["priors"])
            for key in ("beta", "schedule"):
                if key in obj:
                    kw[key] = tuple(obj[key])
            for key in ("tau", "d", "replicates", "seed", "design", "gamma_theta", "gamma_tau",
                        "n_test", "max_draws_mse"):
                if key in obj:
                    kw[key] = obj[key]
            return cls(**kw)
        except (TypeError, KeyError, ValueError) as exc:
            if isinstance(exc, InfillGPError):
                raise
            raise ValidationError(f"malformed experiment config: {exc}") from exc


def task_key(m: int, replicate: int) -> int:
    return m * 10_000 + replicate


def make_design(cfg: ExperimentConfig, m: int):
    if cfg.design == "grid":
        return grid_design(m, cfg.d, 0.5)
    return stratified_design(m, cfg.d, cfg.seed + m)


def simulate_task(cfg: ExperimentConfig, m: int, replicate: int, with_test_points: bool = False):
    design = make_design(cfg, m)
    key = task_key(m, replicate)
    tp = None
    if with_test_points:
        tp = generator(cfg.seed, key, "test_points").random((cfg.n_test, cfg.d))
    return simulate(cfg.model, cfg.tau, np.asarray(cfg.beta), design, cfg.features,
                    cfg.seed, key, test_points=tp)


def _mcmc_config(cfg: ExperimentConfig, m: int, replicate: int) -> McmcConfig:
    return dataclasses.replace(cfg.mcmc, seed=cfg.seed, replicate=task_key(m, replicate))


def _contraction_task(args):
    cfg, m, r = args
    ds = simulate_task(cfg, m, r)
    row = {"m": m, "n": ds.n, "replicate": r}
    try:
        qv = estimate(ds, cfg.model.nu, cfg.qv_config())
        row.update(qv_theta=qv.theta_hat, qv_tau=qv.tau_hat)
    except InfillGPError:
        row.update(qv_theta=math.nan, qv_tau=math.nan)
    chain = run_mcmc(ds, cfg.model, cfg.priors, _mcmc_config(cfg, m, r))
    row.update(
        theta_mean=float(np.mean(chain.theta)), tau_mean=float(np.mean(chain.tau)),
        alpha_mean=float(np.mean(chain.alpha)),
        theta_err=posterior_relative_error(chain.theta, cfg.model.theta),
        tau_err=posterior_relative_error(chain.tau, cfg.tau),
        acceptance=chain.acceptance_rate,
    )
    return row, chain


def _prediction_task(args):
    cfg, m, r = args
    ds = simulate_task(cfg, m, r, with_test_points=True)
    chain = run_mcmc(ds, cfg.model, cfg.priors, _mcmc_config(cfg, m, r))
    summ = mse_ratio_experiment(ds, chain, cfg.model, cfg.priors.a0, max_draws=cfg.max_draws_mse)
    row = {"m": m, "n": ds.n, "replicate": r, "acceptance": chain.acceptance_rate}
    row.update(summ.to_dict())
    return row, chain


def _run(task, cfg: ExperimentConfig, threads: int):
    jobs = [(cfg, m, r) for m in cfg.schedule for r in range(cfg.replicates)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(task, jobs))
    return [task(j) for j in jobs]


@dataclass(frozen=True, eq=False)
class ContractionResult:
    rows: list[dict]
    summary: list[dict]
    theta_fit: object
    tau_fit: object
    barycenters: dict  # m -> {"theta": array, "tau": array}


def contraction_study(cfg: ExperimentConfig, threads: int = 1) -> ContractionResult:
    """Posterior relative errors of theta and tau along the design schedule, with log-log fits."""
    out = _run(_contraction_task, cfg, threads)
    rows = [r for r, _ in out]
    chains = {}
    for (row, chain) in out:
        chains.setdefault(row["m"], []).append(chain)
    summary, bary = [], {}
    for m in cfg.schedule:
        sel = [r for r in rows if r["m"] == m]
        summary.append({"m": m, "n": sel[0]["n"],
                        "theta_err": float(np.mean([r["theta_err"] for r in sel])),
                        "tau_err": float(np.mean([r["tau_err"] for r in sel])),
                        "acceptance": float(np.mean([r["acceptance"] for r in sel]))})
        bary[m] = {"theta": w2_barycenter([c.theta for c in chains[m]]),
                   "tau": w2_barycenter([c.tau for c in chains[m]])}
    ns = [s["n"] for s in summary]
    fits = {}
    if len(ns) >= 3:
        fits = {k: rate_regression(ns, [s[f"{k}_err"] for s in summary]) for k in ("theta", "tau")}
    return ContractionResult(rows=rows, summary=summary, theta_fit=fits.get("theta"),
                             tau_fit=fits.get("tau"), barycenters=bary)


def mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
    return float(v.mean()), se


@dataclass(frozen=True, eq=False)
class PredictionStudyResult:
    rows: list[dict]
    summary: list[dict]


def prediction_study(cfg: ExperimentConfig, threads: int = 1) -> PredictionStudyResult:
    """Bayesian versus oracle prediction error at uniform test locations.

    ``ratio`` averages the pointwise ``M_post / M_0`` over test locations and
    then over replicates; ``ratio_se`` is its standard error across replicates.
    """
    out = _run(_prediction_task, cfg, threads)
    rows = [r for r, _ in out]
    summary = []
    for m in cfg.schedule:
        sel = [r for r in rows if r["m"] == m]
        ratio, se = mean_se([r["mean_ratio"] for r in sel])
        rom, rom_se = mean_se([r["ratio_of_means"] for r in sel])
        summary.append({
            "m": m, "n": sel[0]["n"],
            "mean_m_post": float(np.mean([r["mean_m_post"] for r in sel])),
            "mean_m_oracle": float(np.mean([r["mean_m_oracle"] for r in sel])),
            "ratio": ratio, "ratio_se": se, "ratio_of_means": rom, "ratio_of_means_se": rom_se,
        })
    return PredictionStudyResult(rows=rows, summary=summary)


__all__ = ["ExperimentConfig", "ContractionResult", "PredictionStudyResult", "contraction_study",
           "prediction_study", "mean_se", "simulate_task", "make_design", "task_key", "SCHEMA_VERSION", "Family"]
