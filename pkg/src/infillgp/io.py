"""CSV/JSON serialization.  Floats are written with 17 significant digits so
files round-trip exactly and identical inputs give byte-identical outputs."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .covariance import CovarianceModel
from .design import Design, FeatureSpec
from .errors import ValidationError
from .gp_sim import Dataset
from .inference import McmcConfig, PosteriorChain


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return format(v, ".17g")
    return str(v)


def write_csv(path: Path | str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_dict_rows(path: Path | str, rows: list[dict]) -> None:
    if not rows:
        write_csv(path, [], [])
        return
    header = list(rows[0].keys())
    write_csv(path, header, ([r.get(k, "") for k in header] for r in rows))


def read_csv(path: Path | str) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError(f"{path} is empty")
    return rows[0], rows[1:]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "value") and not isinstance(obj, (int, float, str)):
        return obj.value
    return obj


def write_json(path: Path | str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def read_json(path: Path | str):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# datasets

def save_dataset(ds: Dataset, stem: Path | str) -> tuple[Path, Path]:
    """Write ``<stem>.csv`` (coordinates, features, Y, optional X_true) and ``<stem>.json``."""
    stem = Path(stem)
    d, p = ds.design.d, ds.p
    header = ([f"i{k + 1}" for k in range(d)] + [f"s{k + 1}" for k in range(d)]
              + [f"delta{k + 1}" for k in range(d)] + [f"f{k + 1}" for k in range(p)] + ["Y"])
    cols = [ds.design.multi_indices(), ds.design.points, ds.design.delta, ds.F, ds.Y[:, None]]
    if ds.X_true is not None:
        header.append("X_true")
        cols.append(ds.X_true[:, None])
    idx = cols[0]
    num = np.hstack(cols[1:])
    rows = ([*map(int, idx[i]), *num[i]] for i in range(ds.n))
    csv_path = stem.with_suffix(".csv")
    write_csv(csv_path, header, rows)
    side = {
        "d": d, "m": ds.design.m,
        "features": ds.featurespec.to_dict() if ds.featurespec is not None else None,
        "beta_true": ds.beta_true, "tau_true": ds.tau_true,
        "model_true": ds.model_true.to_dict() if ds.model_true is not None else None,
        "meta": ds.meta,
    }
    if ds.test_points is not None:
        tp_path = stem.parent / (stem.name + "_test.csv")
        th = [f"s{k + 1}" for k in range(d)] + (["X_true"] if ds.X_test is not None else [])
        tcols = ds.test_points if ds.X_test is None else np.column_stack([ds.test_points, ds.X_test])
        write_csv(tp_path, th, tcols.tolist())
        side["test_points_file"] = tp_path.name
    json_path = stem.with_suffix(".json")
    write_json(json_path, side)
    return csv_path, json_path


def load_dataset(stem: Path | str) -> Dataset:
    stem = Path(stem)
    if stem.suffix in (".csv", ".json"):
        stem = stem.with_suffix("")
    side = read_json(stem.with_suffix(".json"))
    header, rows = read_csv(stem.with_suffix(".csv"))
    d, m = int(side["d"]), int(side["m"])
    arr = np.array([[float(v) for v in r] for r in rows])
    if arr.shape[0] != m ** d:
        raise ValidationError(f"dataset has {arr.shape[0]} rows, expected m^d = {m ** d}")
    col = {h: i for i, h in enumerate(header)}
    idx = arr[:, [col[f"i{k + 1}"] for k in range(d)]].astype(int)
    delta_cols = [col[f"delta{k + 1}"] for k in range(d)]
    # rows may come in any order; place them by multi-index
    order = np.ravel_multi_index(tuple((idx - 1).T), (m,) * d)
    arr = arr[np.argsort(order)]
    design = Design(d=d, m=m, delta=arr[:, delta_cols])
    fcols = sorted((h for h in header if h.startswith("f") and h[1:].isdigit()), key=lambda h: int(h[1:]))
    F = arr[:, [col[h] for h in fcols]]
    Y = arr[:, col["Y"]]
    X = arr[:, col["X_true"]] if "X_true" in col else None
    fs = FeatureSpec.from_dict(side["features"]) if side.get("features") else None
    model = CovarianceModel.from_dict(side["model_true"]) if side.get("model_true") else None
    beta = np.asarray(side["beta_true"], dtype=float) if side.get("beta_true") is not None else None
    tp = xt = None
    if side.get("test_points_file"):
        th, trows = read_csv(stem.parent / side["test_points_file"])
        tarr = np.array([[float(v) for v in r] for r in trows]).reshape(-1, len(th))
        tp = tarr[:, :d]
        xt = tarr[:, d] if tarr.shape[1] > d else None
    return Dataset(design=design, F=F, Y=Y, featurespec=fs, beta_true=beta, X_true=X,
                   model_true=model, tau_true=side.get("tau_true"), test_points=tp, X_test=xt,
                   meta=side.get("meta") or {})


# ---------------------------------------------------------------------------
# chains

CHAIN_HEADER = ("iteration", "theta", "alpha", "tau", "log_post", "accepted")


def save_chain(chain: PosteriorChain, path: Path | str) -> None:
    rows = ((i, th, al, ta, lp, bool(acc)) for i, (th, al, ta, lp, acc) in
            enumerate(zip(chain.theta, chain.alpha, chain.tau, chain.log_post, chain.accepted)))
    write_csv(path, CHAIN_HEADER, rows)


def load_chain(path: Path | str, config: McmcConfig | None = None) -> PosteriorChain:
    header, rows = read_csv(path)
    if tuple(header) != CHAIN_HEADER:
        raise ValidationError(f"chain file {path} has columns {header}, expected {list(CHAIN_HEADER)}")
    arr = np.array([[float(v) for v in r] for r in rows]).reshape(-1, len(CHAIN_HEADER))
    if arr.shape[0] == 0:
        raise ValidationError(f"chain file {path} has no draws")
    return PosteriorChain(theta=arr[:, 1], alpha=arr[:, 2], tau=arr[:, 3], log_post=arr[:, 4],
                          accepted=arr[:, 5].astype(bool),
                          config=config or McmcConfig(n_samples=arr.shape[0], n_burnin=0))


def save_design(design: Design, path: Path | str) -> None:
    d = design.d
    header = [f"i{k + 1}" for k in range(d)] + [f"s{k + 1}" for k in range(d)]
    idx = design.multi_indices()
    write_csv(path, header, ([*map(int, idx[i]), *design.points[i]] for i in range(design.n)))
