"""Bayesian versus oracle prediction error along a design schedule (d = 1 by default)."""
import argparse
import dataclasses
import time
from pathlib import Path

from infillgp import io
from infillgp.experiments import ExperimentConfig, prediction_study


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--schedule", type=int, nargs="+", default=[100, 200, 400])
    ap.add_argument("--replicates", type=int, default=5)
    ap.add_argument("--n-test", type=int, default=200)
    ap.add_argument("--max-draws", type=int, default=None, help="posterior draws used per replicate")
    ap.add_argument("--seed", type=int, default=20240601)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="results/prediction")
    args = ap.parse_args()

    cfg = dataclasses.replace(ExperimentConfig(), schedule=tuple(args.schedule), replicates=args.replicates,
                              n_test=args.n_test, max_draws_mse=args.max_draws, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    res = prediction_study(cfg, threads=args.threads)
    io.write_json(out / "config.json", cfg.to_dict())
    io.write_dict_rows(out / "rows.csv", res.rows)
    io.write_dict_rows(out / "summary.csv", res.summary)
    for s in res.summary:
        print(f"n={s['n']:5d}  M_post/M_0={s['ratio']:.4f} (se {s['ratio_se']:.4f})  "
              f"ratio of means={s['ratio_of_means']:.4f}")
    print(f"{time.perf_counter() - t0:.0f} s, tables in {out}")


if __name__ == "__main__":
    main()
