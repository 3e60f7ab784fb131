"""Error % and model size of PIA against epsilon on one generated instance.

    python scripts/eps_sensitivity.py --customers 50 --locations 50 --budget 5 --out eps.csv
"""
import argparse
import csv
import sys
from memcp.expansion import parse_expansion
from memcp.instance import gen_euclidean
from memcp.objective import make_context
from memcp.solvers import solve_pia


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--customers", type=int, default=50)
    ap.add_argument("--locations", type=int, default=50)
    ap.add_argument("--budget", type=int, default=5)
    ap.add_argument("--theta", type=float, default=1.0)
    ap.add_argument("--gamma", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--expansion", default="exp:1:1")
    ap.add_argument("--epsilons", default="1e-5,1e-4,1e-3,1e-2,1e-1,1")
    ap.add_argument("--out", default="-")
    args = ap.parse_args()

    inst = gen_euclidean(args.customers, args.locations, args.budget, args.theta, args.gamma, args.seed)
    ctx = make_context(inst, parse_expansion(args.expansion))
    eps_list = sorted(float(e) for e in args.epsilons.split(","))
    runs = [solve_pia(ctx, eps) for eps in eps_list]
    ref = runs[0].objective_true  # smallest epsilon is the reference
    out = sys.stdout if args.out == "-" else open(args.out, "w", newline="", encoding="utf-8")
    w = csv.writer(out)
    w.writerow(["epsilon", "objective_true", "error_pct", "breakpoints", "constraints", "wall_ms"])
    for eps, res in zip(eps_list, runs):
        w.writerow([eps, format(res.objective_true, ".17g"), 100.0 * (ref - res.objective_true) / abs(ref),
                    res.stats["breakpoints"], res.stats["constraints"], round(1e3 * res.stats["wall_s"], 3)])
    if out is not sys.stdout:
        out.close()


if __name__ == "__main__":
    main()
