#!/usr/bin/env python3
"""Generate the synthetic accuracy/fairness tradeoff dataset and its thresholds.

Design (population):
    X ~ N(0, I_5),  Y = X . beta + N(0, sigma_y^2),  Z = X_1 + tau * N(0, 1)
With an affine rule, the level-(1,1) constraint at eps -> 0 forces the X_1
coefficient to 0 (cov(Z, X b) = b_1), so the population OR2 falls from
|beta|^2 / (|beta|^2 + sigma_y^2) to (|beta|^2 - beta_1^2) / (|beta|^2 + sigma_y^2).
For a bivariate normal with correlation r the joint-vs-product KS is attained
at the medians and equals asin(r) / (2 pi).

Run once before building; writes data/synthetic_tradeoff.csv and
data/synthetic_tradeoff.json.
"""
import argparse
import json
import math
import pathlib

import numpy as np

BETA = np.array([1.2, 1.5, 1.5, 1.5, 1.5])
SIGMA_Y = 1.0
TAU = 0.3
N = 2000
SEED = 20240611

# thresholds stated by the acceptance criterion
KS_UNCONSTRAINED_MIN = 0.3
KS_CONSTRAINED_MAX = 0.05
OR2_MAX_RELATIVE_DROP = 0.2
EPSILON = 0.01


def population_values():
    b2 = float(BETA @ BETA)
    or2_unc = b2 / (b2 + SIGMA_Y**2)
    or2_con = (b2 - BETA[0] ** 2) / (b2 + SIGMA_Y**2)
    corr = BETA[0] / (math.sqrt(b2) * math.sqrt(1.0 + TAU**2))
    return {
        "or2_unconstrained": or2_unc,
        "or2_constrained": or2_con,
        "or2_relative_drop": (or2_unc - or2_con) / or2_unc,
        "corr_score_z": corr,
        "ks_joint_product_unconstrained": math.asin(corr) / (2.0 * math.pi),
        "ks_joint_product_constrained": 0.0,
        "ks_joint_product_upper_bound": 0.25,
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data"))
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(SEED)
    x = rng.standard_normal((N, BETA.size))
    y = x @ BETA + SIGMA_Y * rng.standard_normal(N)
    z = x[:, 0] + TAU * rng.standard_normal(N)

    with open(out / "synthetic_tradeoff.csv", "w") as f:
        f.write(",".join([f"x{j + 1}" for j in range(BETA.size)] + ["y", "z"]) + "\n")
        for i in range(N):
            f.write(",".join(repr(float(v)) for v in [*x[i], y[i], z[i]]) + "\n")

    meta = {
        "generator": {"beta": BETA.tolist(), "sigma_y": SIGMA_Y, "tau": TAU, "n": N, "seed": SEED},
        "population": population_values(),
        "thresholds": {
            "ks_unconstrained_min": KS_UNCONSTRAINED_MIN,
            "ks_constrained_max": KS_CONSTRAINED_MAX,
            "or2_max_relative_drop": OR2_MAX_RELATIVE_DROP,
            "epsilon": EPSILON,
            "level": [1, 1],
        },
    }
    with open(out / "synthetic_tradeoff.json", "w") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")
    print(json.dumps(meta["population"], indent=2))


if __name__ == "__main__":
    main()
