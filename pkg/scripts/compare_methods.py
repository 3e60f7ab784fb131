"""Run every method on a small grid of generated instances and print a summary.

Counts, per method, how many runs were solved to optimality and how many hit
the best objective of their configuration, plus mean wall time.
"""
import argparse
import itertools

from memcp.cli import BenchJob, run_job, summarize, write_rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--customers", type=int, default=30)
    ap.add_argument("--locations", type=int, default=12)
    ap.add_argument("--budgets", default="2,3,4")
    ap.add_argument("--thetas", default="1,5")
    ap.add_argument("--gammas", default="0.1,1")
    ap.add_argument("--expansion", default="exp:1:1")
    ap.add_argument("--methods", default="pia,oa,ls,greedy,brute")
    ap.add_argument("--epsilon", type=float, default=0.01)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=None, help="also write all rows to this CSV")
    args = ap.parse_args()

    src = {"generate": {"N": args.customers, "m": args.locations, "seed": args.seed}}
    jobs = [BenchJob(src, int(C), float(th), float(ga), args.expansion, meth, args.epsilon, args.seed)
            for C, th, ga, meth in itertools.product(args.budgets.split(","), args.thetas.split(","),
                                                     args.gammas.split(","), args.methods.split(","))]
    rows = [run_job(j) for j in jobs]
    if args.out:
        write_rows(rows, args.out)
    print(f"{'method':<8} {'runs':>5} {'solved':>7} {'best':>5} {'mean ms':>10}")
    for s in summarize(rows):
        print(f"{s['method']:<8} {s['runs']:>5} {s['solved']:>7} {s['best']:>5} {s['mean_wall_ms']:>10.1f}")


if __name__ == "__main__":
    main()
