#!/usr/bin/env python3
"""Monte Carlo check of interval coverage against each stream's own limit.

Runs many replications of the streaming fit, forms nominal-level intervals
at a modest n, then continues each stream much further and measures how
often the interval covered the long-run estimate.

    python scripts/interval_coverage.py --reps 200 --n-small 5000 --n-big 500000
"""

import argparse
import math
import sys

import numpy as np

from streameb.engine import LearningRate
from streameb.evaluation import batched_newton_stream
from streameb.inference import asymptotic_variance, clt_scale, normal_quantile, ratio_estimate
from streameb.model import Grid, KernelMatrixCache, MixingWeights


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--atoms", nargs="+", type=float, default=[0.5, 2.0, 4.5, 8.0, 13.0])
    ap.add_argument("--probs", nargs="+", type=float, default=[0.15, 0.25, 0.25, 0.2, 0.15])
    ap.add_argument("--gamma", type=float, default=0.75)
    ap.add_argument("--level", type=float, default=0.9)
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--n-small", type=int, default=5000)
    ap.add_argument("--n-big", type=int, default=500_000)
    ap.add_argument("--y", nargs="+", type=int, default=[0, 1, 2])
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args(argv)

    atoms = np.asarray(args.atoms)
    probs = np.asarray(args.probs)
    grid = Grid(atoms)
    rate = LearningRate(1.0, args.gamma)
    rng = np.random.default_rng(args.seed)
    thetas = rng.choice(atoms, size=(args.reps, args.n_big), p=probs)
    ys = rng.poisson(thetas).astype(np.int64)
    final, snaps = batched_newton_stream(grid, rate, ys, checkpoints=(args.n_small,))
    b_n = clt_scale(rate, args.n_small)
    z = normal_quantile(0.5 * (1 + args.level))
    cache = KernelMatrixCache(grid)
    print("y,coverage")
    for y in args.y:
        hits = 0
        for r in range(args.reps):
            g_small = MixingWeights(grid, snaps[args.n_small][r])
            est = ratio_estimate(g_small, y, cache)
            half = z * math.sqrt(asymptotic_variance(g_small, y, cache=cache) / b_n)
            ref = ratio_estimate(MixingWeights(grid, final[r]), y, cache)
            hits += est - half <= ref <= est + half
        print(f"{y},{hits / args.reps:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
