"""``infillgp`` command line: simulate, estimate, mcmc, predict, rates, ingest.

Outputs are CSV/JSON tables only.  Exit codes: 0 success, 2 bad configuration
or input, 3 infeasible estimator configuration, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .analysis import posterior_relative_error, quantile_grid, rate_regression, theoretical_rates
from .design import Design, FeatureSpec, features
from .errors import (AccuracyError, InfeasibleEstimationError, IngestionError, InfillGPError,
                     MixingError, NumericalError, SingularDesignError, ValidationError)
from .experiments import ExperimentConfig, mean_se, contraction_study, simulate_task
from .gp_sim import Dataset
from .inference import run_mcmc
from .prediction import mse_ratio_experiment
from .quadvar import QvConfig, estimate
from .rng import generator

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 2, 3, 4


def load_config(path: str | None, seed: int | None = None) -> ExperimentConfig:
    if path is None:
        cfg = ExperimentConfig()
    else:
        try:
            obj = io.read_json(path)
        except FileNotFoundError as exc:
            raise ValidationError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise ValidationError("config must be a JSON object")
        cfg = ExperimentConfig.from_dict(obj)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=int(seed))
    return cfg


# ---------------------------------------------------------------------------
# dataset sources: either simulated (m, replicate) tasks or files on disk

def _sources(args, cfg: ExperimentConfig) -> list[tuple]:
    if args.data:
        out = []
        for p in args.data:
            p = Path(p)
            stems = sorted(q.with_suffix("") for q in p.glob("*.json")) if p.is_dir() else [p.with_suffix("")]
            out += [("file", str(s)) for s in stems]
        if not out:
            raise ValidationError("no datasets found under --data")
        return out
    return [("sim", m, r) for m in cfg.schedule for r in range(cfg.replicates)]


def _source_name(src) -> str:
    return Path(src[1]).name if src[0] == "file" else f"m{src[1]}_r{src[2]}"


def _materialize(cfg: ExperimentConfig, src, with_test_points: bool = False) -> Dataset:
    if src[0] == "file":
        p = Path(src[1])
        if not p.with_suffix(".json").exists():
            raise ValidationError(f"dataset not found: {p}")
        return io.load_dataset(p)
    return simulate_task(cfg, src[1], src[2], with_test_points=with_test_points)


def _mcmc_cfg(cfg: ExperimentConfig, ds: Dataset):
    rep = ds.meta.get("replicate", 0) if isinstance(ds.meta, dict) else 0
    return dataclasses.replace(cfg.mcmc, seed=cfg.seed, replicate=int(rep))


def _pool_map(fn, jobs, threads: int):
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def _row_head(name: str, ds: Dataset) -> dict:
    row = {"name": name, "m": ds.design.m, "n": ds.n}
    if isinstance(ds.meta, dict) and "replicate" in ds.meta:
        row["replicate"] = ds.meta["replicate"]
    return row


# ---------------------------------------------------------------------------
# commands

def _simulate_job(job):
    cfg, src, out = job
    ds = _materialize(cfg, src, with_test_points=cfg.n_test > 0)
    io.save_dataset(ds, Path(out) / _source_name(src))
    return _source_name(src)


def cmd_simulate(args, cfg: ExperimentConfig, out: Path) -> int:
    data_dir = out / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, ("sim", m, r), str(data_dir)) for m in cfg.schedule for r in range(cfg.replicates)]
    names = _pool_map(_simulate_job, jobs, args.threads)
    print(f"wrote {len(names)} datasets to {data_dir}")
    return EXIT_OK


def _qv_config(cfg: ExperimentConfig, d: int) -> QvConfig:
    return QvConfig(nu=cfg.model.nu, d=d, gamma_theta=cfg.gamma_theta, gamma_tau=cfg.gamma_tau)


def _estimate_job(job):
    cfg, src = job
    ds = _materialize(cfg, src)
    est = estimate(ds, cfg.model.nu, _qv_config(cfg, ds.design.d))
    return _source_name(src), {**_row_head(_source_name(src), ds), **est.to_dict()}


def cmd_estimate(args, cfg: ExperimentConfig, out: Path) -> int:
    res = _pool_map(_estimate_job, [(cfg, s) for s in _sources(args, cfg)], args.threads)
    io.write_json(out / "qv_estimates.json", {name: row for name, row in res})
    print(f"wrote {len(res)} estimates to {out / 'qv_estimates.json'}")
    return EXIT_OK


def _chain_row(name: str, ds: Dataset, chain) -> dict:
    row = _row_head(name, ds)
    row.update(theta_mean=float(np.mean(chain.theta)), alpha_mean=float(np.mean(chain.alpha)),
               tau_mean=float(np.mean(chain.tau)), acceptance=chain.acceptance_rate)
    if ds.has_truth:
        row.update(theta_err=posterior_relative_error(chain.theta, ds.model_true.theta),
                   tau_err=posterior_relative_error(chain.tau, ds.tau_true))
    return row


def _mcmc_job(job):
    cfg, src, chain_dir = job
    ds = _materialize(cfg, src)
    chain = run_mcmc(ds, cfg.model, cfg.priors, _mcmc_cfg(cfg, ds))
    name = _source_name(src)
    io.save_chain(chain, Path(chain_dir) / f"{name}.csv")
    return _chain_row(name, ds, chain)


def cmd_mcmc(args, cfg: ExperimentConfig, out: Path) -> int:
    chain_dir = out / "chains"
    chain_dir.mkdir(parents=True, exist_ok=True)
    rows = _pool_map(_mcmc_job, [(cfg, s, str(chain_dir)) for s in _sources(args, cfg)], args.threads)
    io.write_dict_rows(out / "mcmc_summary.csv", rows)
    print(f"wrote {len(rows)} chains to {chain_dir}")
    return EXIT_OK


def _find_chain(chain_arg: str | None, name: str) -> Path | None:
    if chain_arg is None:
        return None
    p = Path(chain_arg)
    if p.is_dir():
        q = p / f"{name}.csv"
        return q if q.exists() else None
    return p


def _predict_job(job):
    cfg, src, chain_arg, point_dir = job
    ds = _materialize(cfg, src, with_test_points=True)
    if not ds.has_truth or ds.test_points is None or ds.X_test is None:
        raise ValidationError(f"{_source_name(src)}: prediction error needs the truth and test points")
    name = _source_name(src)
    cpath = _find_chain(chain_arg, name)
    chain = io.load_chain(cpath) if cpath is not None else run_mcmc(ds, cfg.model, cfg.priors,
                                                                      _mcmc_cfg(cfg, ds))
    summ = mse_ratio_experiment(ds, chain, cfg.model, cfg.priors.a0, max_draws=cfg.max_draws_mse)
    d = ds.design.d
    pts = np.column_stack([ds.test_points, summ.m_post, summ.m_oracle, summ.m_post / summ.m_oracle])
    io.write_csv(Path(point_dir) / f"{name}.csv",
                 [f"s{k + 1}" for k in range(d)] + ["m_post", "m_oracle", "ratio"], pts.tolist())
    row = _row_head(name, ds)
    row.update(summ.to_dict())
    return row


def cmd_predict(args, cfg: ExperimentConfig, out: Path) -> int:
    point_dir = out / "prediction_points"
    point_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, s, args.chain, str(point_dir)) for s in _sources(args, cfg)]
    rows = _pool_map(_predict_job, jobs, args.threads)
    io.write_dict_rows(out / "prediction.csv", rows)
    summary = []
    for n in sorted({r["n"] for r in rows}):
        sel = [r for r in rows if r["n"] == n]
        ratio, se = mean_se([r["mean_ratio"] for r in sel])
        rom, rom_se = mean_se([r["ratio_of_means"] for r in sel])
        summary.append({"n": n, "replicates": len(sel), "ratio": ratio, "ratio_se": se,
                        "ratio_of_means": rom, "ratio_of_means_se": rom_se})
    io.write_dict_rows(out / "prediction_summary.csv", summary)
    print(f"wrote prediction tables for {len(rows)} datasets to {out}")
    return EXIT_OK


def _fit_rows(summary: list[dict], keys: list[str], theory: dict) -> list[dict]:
    ns = [s["n"] for s in summary]
    rows = []
    for k in keys:
        fit = rate_regression(ns, [s[k] for s in summary])
        rows.append({"quantity": k, **fit.to_dict(), "theory_slope": theory.get(k, math.nan)})
    return rows


def _rates_from_tables(paths: list[str]) -> tuple[list[dict], list[str]]:
    groups: dict[float, dict[str, list[float]]] = {}
    keys: list[str] = []
    for p in paths:
        header, rows = io.read_csv(p)
        if "n" not in header:
            raise ValidationError(f"{p}: rate table needs an 'n' column")
        errs = [h for h in header if h.endswith("_err") or h == "error"]
        if not errs:
            raise ValidationError(f"{p}: no error columns (named '*_err' or 'error')")
        keys += [k for k in errs if k not in keys]
        for r in rows:
            rec = dict(zip(header, r))
            g = groups.setdefault(float(rec["n"]), {})
            for k in errs:
                g.setdefault(k, []).append(float(rec[k]))
    summary = [{"n": n, **{k: float(np.mean(v)) for k, v in g.items()}} for n, g in sorted(groups.items())]
    return summary, keys


def cmd_rates(args, cfg: ExperimentConfig, out: Path) -> int:
    if args.data:
        summary, keys = _rates_from_tables(args.data)
        io.write_dict_rows(out / "rate_summary.csv", summary)
        io.write_dict_rows(out / "rate_fits.csv", _fit_rows(summary, keys, {}))
        print(f"wrote rate fits for {keys} to {out}")
        return EXIT_OK
    res = contraction_study(cfg, threads=args.threads)
    io.write_dict_rows(out / "contraction_rows.csv", res.rows)
    io.write_dict_rows(out / "rate_summary.csv", res.summary)
    b1, b2 = theoretical_rates(cfg.model.nu, cfg.d)
    io.write_dict_rows(out / "rate_fits.csv",
                       _fit_rows(res.summary, ["theta_err", "tau_err"],
                                 {"theta_err": -b1, "tau_err": -b2}))
    q = quantile_grid()
    rows = []
    for m, b in res.barycenters.items():
        for par in ("theta", "tau"):
            rows += [(m, par, lv, v) for lv, v in zip(q, b[par])]
    io.write_csv(out / "barycenters.csv", ["m", "parameter", "level", "quantile"], rows)
    print(f"wrote contraction tables to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# ingestion of a regular lat/lon grid

def _axis(values: np.ndarray, decimals: int = 9) -> tuple[np.ndarray, np.ndarray]:
    key = np.round(values, decimals)
    levels, inv = np.unique(key, return_inverse=True)
    return levels, inv


def _axis_coords(levels: np.ndarray) -> np.ndarray:
    """Midpoint-grid coordinates ``(j + delta)/m`` from an affine map of the axis onto [0, 1]."""
    m = levels.size
    if m == 1:
        return np.array([0.5])
    x = (levels - levels[0]) / (levels[-1] - levels[0])
    delta = np.clip(x * (m - 1) - np.arange(m) + 0.5, 0.0, np.nextafter(1.0, 0.0))
    return delta


def grid_from_table(lat: np.ndarray, lon: np.ndarray, value: np.ndarray, stride: int = 1,
                    offset: tuple[int, int] = (0, 0)) -> Dataset:
    """Dataset on the sub-grid taking every ``stride``-th latitude and longitude from ``offset``.

    Longitude maps to the first coordinate.  Features are ``(1, s1, s2)``.
    """
    if stride < 1:
        raise ValidationError("stride must be >= 1")
    lat_lv, lat_i = _axis(np.asarray(lat, dtype=float))
    lon_lv, lon_i = _axis(np.asarray(lon, dtype=float))
    table = np.full((lon_lv.size, lat_lv.size), np.nan)
    seen = np.zeros_like(table, dtype=int)
    np.add.at(seen, (lon_i, lat_i), 1)
    if np.any(seen > 1):
        j, i = np.argwhere(seen > 1)[0]
        raise IngestionError(f"duplicate cell at lat={lat_lv[i]}, lon={lon_lv[j]}",
                             missing=[])
    table[lon_i, lat_i] = value
    ox, oy = offset
    keep_lon, keep_lat = np.arange(ox, lon_lv.size, stride), np.arange(oy, lat_lv.size, stride)
    sub = table[np.ix_(keep_lon, keep_lat)]
    miss = np.argwhere(np.isnan(sub))
    if miss.size:
        cells = [(float(lat_lv[keep_lat[b]]), float(lon_lv[keep_lon[a]])) for a, b in miss]
        shown = ", ".join(f"(lat={a:g}, lon={b:g})" for a, b in cells[:20])
        raise IngestionError(f"incomplete grid: {len(cells)} missing cell(s): {shown}", missing=cells)
    if keep_lon.size != keep_lat.size:
        raise IngestionError(f"sub-grid is {keep_lon.size} x {keep_lat.size}; a square grid is required",
                             missing=[])
    m = keep_lon.size
    dx, dy = _axis_coords(lon_lv[keep_lon]), _axis_coords(lat_lv[keep_lat])
    # row-major over (i1, i2) with i1 the longitude index
    delta = np.column_stack([np.repeat(dx, m), np.tile(dy, m)])
    design = Design(d=2, m=m, delta=delta)
    fs = FeatureSpec("polynomial", 1)
    Y = sub.reshape(-1)
    return Dataset(design=design, F=features(fs, design), Y=Y, featurespec=fs,
                   meta={"stride": stride, "offset": [int(ox), int(oy)]})


def cmd_ingest(args, cfg: ExperimentConfig, out: Path) -> int:
    if not args.csv:
        raise ValidationError("ingest needs --csv")
    try:
        header, rows = io.read_csv(args.csv)
    except FileNotFoundError as exc:
        raise ValidationError(f"input not found: {args.csv}") from exc
    cols = {h: i for i, h in enumerate(header)}
    for c in (args.lat_col, args.lon_col, args.value_col):
        if c not in cols:
            raise ValidationError(f"column {c!r} not in {args.csv}")
    try:
        arr = np.array([[float(r[cols[c]]) for c in (args.lat_col, args.lon_col, args.value_col)]
                        for r in rows if r]).reshape(-1, 3)
    except ValueError as exc:
        raise ValidationError(f"non-numeric entry in {args.csv}: {exc}") from exc
    s = args.stride
    if args.subsets:
        offsets = [(a, b) for a in range(s) for b in range(s)]
        rng = generator(cfg.seed, 0, "subgrid")
        pick = rng.choice(len(offsets), size=args.subsets, replace=args.subsets > len(offsets))
        chosen = [offsets[k] for k in pick]
    else:
        chosen = [(0, 0)]
    data_dir = out / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    for k, off in enumerate(chosen):
        ds = grid_from_table(arr[:, 0], arr[:, 1], arr[:, 2], stride=s, offset=off)
        name = f"ingest_s{s}" + (f"_k{k}" if args.subsets else "")
        io.save_dataset(ds, data_dir / name)
        print(f"{name}: n={ds.n} offset={off}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "mcmc": cmd_mcmc,
            "predict": cmd_predict, "rates": cmd_rates, "ingest": cmd_ingest}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="infillgp", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="experiment config JSON (schema 1)")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--threads", type=int, default=1, help="worker processes")
    ap.add_argument("--data", nargs="+", help="dataset stems/directories, or rate tables for 'rates'")
    ap.add_argument("--chain", help="chain CSV or directory of <dataset>.csv chains for 'predict'")
    ap.add_argument("--csv", help="gridded input table for 'ingest'")
    ap.add_argument("--lat-col", default="lat")
    ap.add_argument("--lon-col", default="lon")
    ap.add_argument("--value-col", default="value")
    ap.add_argument("--stride", type=int, default=1)
    ap.add_argument("--subsets", type=int, default=0, help="number of random sub-grids (0: offset 0 only)")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ValidationError("--threads must be >= 1")
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ValidationError("--seed must be an unsigned 64-bit integer")
        cfg = load_config(args.config, args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        io.write_json(out / "config.json", cfg.to_dict())
        return COMMANDS[args.command](args, cfg, out)
    except InfeasibleEstimationError as exc:
        print(f"infeasible estimator configuration: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NumericalError, AccuracyError, MixingError, SingularDesignError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, IngestionError, InfillGPError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
