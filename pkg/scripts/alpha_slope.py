"""Breakpoint totals of PIA for exp:alpha:1 over a range of alpha.

Default instance: 20 customers, 15 sites, competitor mass 1.2, where the
slope of g matters most. ``--generated`` switches to a random-points instance.
"""
import argparse

import numpy as np

from memcp.cli import alpha_rows, write_rows
from memcp.instance import Instance, gen_euclidean


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--alphas", default="1,5,10,20,50,100")
    ap.add_argument("--epsilon", type=float, default=1e-4)
    ap.add_argument("--competitor-mass", type=float, default=1.2)
    ap.add_argument("--generated", action="store_true")
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--out", default="-")
    args = ap.parse_args()

    if args.generated:
        inst = gen_euclidean(30, 25, 5, 5.0, 0.01, args.seed)
        name = f"gen-N30-m25-s{args.seed}"
    else:
        V = np.random.default_rng(args.seed).uniform(0.5, 2.0, (20, 15))
        inst = Instance(V, np.full(20, args.competitor_mass), np.ones(20), np.ones(20), 5)
        name = f"uc{args.competitor_mass:g}-s{args.seed}"
    alphas = [float(a) for a in args.alphas.split(",")]
    write_rows(alpha_rows(inst, name, args.epsilon, alphas, seed=args.seed), args.out)


if __name__ == "__main__":
    main()
