"""Exact expectations of the quadratic-variation estimators on a grid, no sampling.

For each m prints E[theta_hat]/theta0 and E[tau_hat]/tau0 with the omegas used,
and for the exponential kernel the closed form of the nugget expectation.
"""
import argparse
import math

from infillgp.design import grid_design
from infillgp.experiments import ExperimentConfig
from infillgp.quadvar import QvConfig, expected_V, normalizers


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--schedule", type=int, nargs="+", default=[200, 400, 800, 1600, 3200])
    ap.add_argument("--gamma-tau", type=float, default=None)
    ap.add_argument("--gamma-theta", type=float, default=None)
    args = ap.parse_args()

    cfg = ExperimentConfig()
    qv = QvConfig(nu=cfg.model.nu, d=cfg.d, gamma_theta=args.gamma_theta, gamma_tau=args.gamma_tau)
    print(f"gamma_theta={qv.gamma_theta:.4f} gamma_tau={qv.gamma_tau:.4f}")
    print("     m  omega_theta  omega_tau  E[theta]/theta0  E[tau]/tau0  closed form")
    for m in args.schedule:
        g = grid_design(m, cfg.d)
        r = qv.resolve(m)
        nz = normalizers(g, qv)
        e_tau = expected_V(cfg.model, cfg.tau, cfg.beta, cfg.features, g, 0, qv) / nz["C_V0"]
        e_theta = expected_V(cfg.model, cfg.tau, cfg.beta, cfg.features, g, 1, qv) / nz["g"]
        closed = math.nan
        if cfg.model.nu == 0.5 and qv.ell == 1:
            # first differences of an exponential kernel, mean ignored
            closed = 1 + cfg.model.sigma2 * (1 - math.exp(-cfg.model.alpha * r.omega_tau / m)) / cfg.tau
        print(f"{m:6d}  {r.omega_theta:11d}  {r.omega_tau:9d}  {e_theta / cfg.model.theta:15.4f}  "
              f"{e_tau / cfg.tau:11.4f}  {closed:11.4f}")


if __name__ == "__main__":
    main()
