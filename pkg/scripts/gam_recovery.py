"""Simulate DEGPD(i) counts with log sigma(x) = 0.2 + sin(2 pi x) and recover the curve.

Writes a CSV with the true and fitted log-scale curves on a grid plus the
smoothing parameter search, suitable for plotting elsewhere.
"""
import argparse

import numpy as np
import pandas as pd

from degpd.distributions import ModelSpec
from degpd.gam import effective_dof, fit_gam, predict_parameters, term_tests


def simulate(n, seed, kappa=2.0, xi=0.2):
    spec = ModelSpec("degpd1")
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=n)
    sigma = np.exp(0.2 + np.sin(2 * np.pi * x))
    theta = dict(kappa=np.full(n, kappa), sigma=sigma, xi=np.full(n, xi))
    # inverse transform against the per-observation CDF
    u = rng.uniform(size=n)
    y = np.zeros(n, dtype=np.int64)
    while True:
        step = spec.cdf(theta, y) < u
        if not step.any():
            return {"x": x, "y": y}
        y[step] += 1


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-n", type=int, default=3000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("-k", type=int, default=10, help="basis dimension")
    ap.add_argument("-o", "--output", default="gam_recovery.csv")
    args = ap.parse_args()

    data = simulate(args.n, args.seed)
    fit = fit_gam([f"sigma ~ s(x, k={args.k})"], ModelSpec("degpd1"), data)
    grid = np.linspace(0, 1, 100)
    theta, _ = predict_parameters(fit, {"x": grid})
    truth = 0.2 + np.sin(2 * np.pi * grid)
    fitted = np.log(theta["sigma"])
    pd.DataFrame({"x": grid, "true_log_sigma": truth, "fitted_log_sigma": fitted}).to_csv(args.output, index=False)

    print(f"converged={fit.converged}  loglik={fit.loglik:.3f}  AIC={fit.aic:.3f}")
    print(f"lambda={fit.lambdas}  edf={effective_dof(fit)}")
    print(f"correlation with truth on grid: {np.corrcoef(fitted, truth)[0, 1]:.4f}")
    for row in term_tests(fit):
        print(row)
    print(f"wrote {args.output}")


if __name__ == "__main__":
    main()
