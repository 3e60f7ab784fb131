"""Reference MILP backend: ``python -m memcp.lpsolve MODEL.lp SOLUTION [--time-limit S]``.

Reads the LP subset written by :func:`memcp.models.write_lp`, solves it with
scipy's HiGHS and writes ``name value`` lines plus status/objective comments.
"""
from __future__ import annotations

import argparse
import math
import sys

from .models import read_lp, solve_scipy, write_solution


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="memcp.lpsolve", description=__doc__.splitlines()[0])
    ap.add_argument("model")
    ap.add_argument("solution")
    ap.add_argument("--time-limit", type=float, default=math.inf)
    args = ap.parse_args(argv)
    try:
        model = read_lp(args.model)
    except (OSError, ValueError) as exc:
        print(f"lpsolve: {exc}", file=sys.stderr)
        return 2
    limit = None if math.isinf(args.time_limit) else args.time_limit
    sol = solve_scipy(model, limit)
    write_solution(sol, args.solution)
    return 0 if sol.status in ("optimal", "feasible", "timeout", "infeasible") else 1


if __name__ == "__main__":
    sys.exit(main())
