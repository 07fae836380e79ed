"""Monte Carlo checks of the average-strength and lognormal-variance formulas.

Prints the closed form, the Monte Carlo estimate and the z-score for a
grid of node heterogeneity and dispersion values.

    python3 scripts/theory_mc.py --reps 100000
"""

import argparse
import math
import sys

import numpy as np

from gpnet.io import format_table
from gpnet.theory import avg_strength_mc, dispersion_index, expected_avg_strength, lognormal_sum_variance

HEADER = ["quantity", "sigma_alpha2", "theta", "closed_form", "monte_carlo", "z"]


def lognormal_mc(n_nodes, sigma2, reps, rng, chunk=100_000):
    sums = []
    for start in range(0, reps, chunk):
        x = np.exp(rng.normal(0.0, math.sqrt(sigma2), (min(chunk, reps - start), n_nodes)))
        sums.append(x.sum(axis=1) ** 2 - (x ** 2).sum(axis=1))
    s = np.concatenate(sums)
    return s.var(ddof=1), ((s - s.mean()) ** 2).std() / math.sqrt(s.size)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--nodes", type=int, default=10)
    p.add_argument("--f", type=float, default=0.5)
    p.add_argument("--reps", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV file for the results")
    args = p.parse_args(argv)

    rows = []
    for k, s2 in enumerate((0.0, 0.05, 0.25)):
        for m, th in enumerate((0.0, 0.4, 0.7)):
            mc = avg_strength_mc(s2, th, args.f, args.nodes, args.reps, seed=args.seed * 100 + 10 * k + m)
            e = expected_avg_strength(s2, th, args.f)
            d = dispersion_index(s2, th, args.f, n_nodes=args.nodes)
            rows.append(["edge_mean", s2, th, e, mc.edge_mean, (mc.edge_mean - e) / mc.edge_mean_se])
            rows.append(["dispersion", s2, th, d, mc.dispersion, (mc.dispersion - d) / mc.dispersion_se])
    rng = np.random.default_rng(args.seed)
    for s2 in (0.1, 0.25, 0.5):
        v, se = lognormal_mc(5, s2, 10 * args.reps, rng)
        exact = lognormal_sum_variance(5, s2)
        rows.append(["lognormal_var", s2, "", exact, v, (v - exact) / se])
    for r in rows:
        print(f"{r[0]:14s} s2={r[1]:<5} theta={r[2]!s:<4} closed {r[3]:12.5f} mc {r[4]:12.5f} z {r[5]:+.2f}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(format_table(HEADER, rows))
    return 0


if __name__ == "__main__":
    sys.exit(main())
