"""``memcp`` command line: solve, gen, breakpoints, bench, alpha-study."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import itertools
import json
import math
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .expansion import exp_concave, g_eval, parse_expansion
from .heuristics import LsConfig, greedy, local_search
from .instance import (InstanceFormatError, build_from_costs, gen_euclidean, load_costs_csv,
                       parse_instance, write_instance)
from .objective import all_rows_concave, make_context
from .pwl import generate_pwl
from .solvers import (BackendError, BackendSpec, brute_force, solve_exact_bb, solve_oa, solve_pia)

METHODS = ("pia", "oa", "ls", "greedy", "exact", "brute")
DEFAULT_EPSILONS = (1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0)
DEFAULT_ALPHAS = (1, 5, 10, 20, 50, 100)
BEST_TOL = 1e-6


class ConfigError(ValueError):
    pass


@dataclass
class BenchRow:
    dataset: str
    N: int
    m: int
    C: int
    theta: float
    gamma: float
    expansion: str
    method: str
    status: str
    objective_true: float
    bound: float
    gap: float
    wall_ms: float
    breakpoints_total: int
    cuts_total: int
    seed: int
    epsilon: float = float("nan")
    error_pct: float = float("nan")

    @classmethod
    def fields(cls):
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_csv_row(cls, row: dict) -> "BenchRow":
        conv = {"int": lambda v: int(float(v)), "float": float, "str": str}
        return cls(**{f.name: conv[f.type](row[f.name]) for f in dataclasses.fields(cls)})


def relative_gap(bound: float, value: float) -> float:
    if not math.isfinite(bound):
        return float("nan")
    return (bound - value) / max(1.0, abs(bound))


def write_rows(rows, path) -> None:
    out = sys.stdout if path in (None, "-") else open(path, "w", newline="", encoding="utf-8")
    try:
        w = csv.writer(out)
        w.writerow(BenchRow.fields())
        for r in rows:
            w.writerow([_cell(getattr(r, f)) for f in BenchRow.fields()])
    finally:
        if out is not sys.stdout:
            out.close()


def read_rows(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return [BenchRow.from_csv_row(r) for r in csv.DictReader(fh)]


def _cell(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return v


# ------------------------------------------------------------------ solving

def run_method(ctx, method: str, eps: float = 0.01, backend="auto", time_limit=None, seed: int = 0):
    if method == "pia":
        return solve_pia(ctx, eps, backend=backend, time_limit=time_limit)
    if method == "oa":
        return solve_oa(ctx, 1e-6, backend=backend, time_limit=time_limit)
    if method == "ls":
        return local_search(ctx, LsConfig(seed=seed))
    if method == "greedy":
        return greedy(ctx)
    if method == "exact":
        return solve_exact_bb(ctx)
    if method == "brute":
        return brute_force(ctx)
    raise ConfigError(f"unknown method {method!r}")


def _backend_from_args(args):
    if getattr(args, "backend_config", None):
        return BackendSpec.from_config(args.backend_config)
    spec = BackendSpec.from_env(args.time_limit)
    if spec is not None and args.backend == "auto":
        return spec
    if args.backend == "reference":
        return BackendSpec.reference(args.time_limit)
    return args.backend


def _warn_negative_expansion(ctx) -> None:
    g_low = g_eval(ctx.g, np.log(np.asarray(ctx.bounds.L, dtype=float)))
    bad = np.flatnonzero(g_low < 0)
    if bad.size:
        print(f"warning: expansion factor negative at z = L_n for {bad.size} customers "
              f"(first n={bad[0]}); objective terms can be negative", file=sys.stderr)


def cmd_solve(args) -> int:
    inst = parse_instance(args.instance)
    if args.budget is not None:
        inst = inst.with_budget(args.budget)
    ctx = make_context(inst, parse_expansion(args.expansion))
    _warn_negative_expansion(ctx)
    res = run_method(ctx, args.method, args.epsilon, _backend_from_args(args), args.time_limit, args.seed)
    chosen = [i + 1 for i in res.chosen]  # report 1-based locations
    lines = [
        f"method      {res.method}",
        f"status      {res.status}",
        f"chosen      {{{', '.join(map(str, chosen))}}}  (1-based)",
        f"objective   {res.objective_true:.12g}",
    ]
    if math.isfinite(res.objective_model):
        lines.append(f"model value {res.objective_model:.12g}")
    if math.isfinite(res.bound):
        lines.append(f"upper bound {res.bound:.12g}")
    for key in ("breakpoints", "constraints", "binaries", "iterations", "cuts", "nodes", "wall_s"):
        if key in res.stats:
            lines.append(f"{key:<11} {res.stats[key]}")
    print("\n".join(lines))
    record = dict(method=res.method, status=res.status, chosen=list(res.chosen),
                  objective_true=res.objective_true, objective_model=res.objective_model,
                  bound=res.bound, stats={k: v for k, v in res.stats.items() if _jsonable(v)})
    line = json.dumps(record, default=float)
    print("RESULT " + line)
    if args.out:
        Path(args.out).write_text(line + "\n", encoding="utf-8")
    return 0 if res.status in ("optimal", "feasible") else 1


def _jsonable(v):
    return isinstance(v, (int, float, str, bool, list)) or v is None


def cmd_gen(args) -> int:
    if args.costs:
        costs = load_costs_csv(args.costs)
        comp = [int(s) for s in args.competitors.split(",")] if args.competitors else []
        inst = build_from_costs(costs, args.theta, args.gamma, comp, args.budget)
    else:
        inst = gen_euclidean(args.customers, args.locations, args.budget, args.theta, args.gamma, args.seed)
    write_instance(inst, args.out)
    print(f"wrote {args.out}: N={inst.n_customers} m={inst.n_locations} C={inst.budget}", file=sys.stderr)
    return 0


def cmd_breakpoints(args) -> int:
    inst = parse_instance(args.instance)
    if args.budget is not None:
        inst = inst.with_budget(args.budget)
    ctx = make_context(inst, parse_expansion(args.expansion))
    concave = ctx.certified and all_rows_concave(ctx)
    approx = generate_pwl(ctx, args.epsilon, concave=concave)
    out = sys.stdout if args.out in (None, "-") else open(args.out, "w", newline="", encoding="utf-8")
    try:
        w = csv.writer(out)
        w.writerow(["n", "k", "c", "psi", "gamma", "curvature"])
        for n, row in enumerate(approx.rows):
            for k in range(len(row.c)):
                last = k == len(row.c) - 1
                w.writerow([n, k, _cell(float(row.c[k])), _cell(float(row.psi[k])),
                            "" if last else _cell(float(row.gamma[k])),
                            "" if last else row.curvature[k]])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


# ------------------------------------------------------------------ bench

@dataclass(frozen=True)
class BenchJob:
    source: dict
    C: int
    theta: float
    gamma: float
    expansion: str
    method: str
    epsilon: float
    seed: int


def _source_name(src: dict) -> str:
    if "path" in src:
        return Path(src["path"]).stem
    if "costs" in src:
        return Path(src["costs"]).stem
    if "generate" in src:
        g = src["generate"]
        return g.get("name", f"gen-N{g.get('N')}-m{g.get('m')}-s{int(g.get('seed', 0))}")
    return str(src)


def _load_source(src: dict, C: int, theta: float, gamma: float, base: Path):
    name = _source_name(src)
    if "path" in src:
        inst = parse_instance(base / src["path"]).with_budget(C)
        return name, inst, int(src.get("seed", 0))
    if "costs" in src:
        costs = load_costs_csv(base / src["costs"])
        inst = build_from_costs(costs, theta, gamma, src["competitors"], C)
        return name, inst, int(src.get("seed", 0))
    if "generate" in src:
        g = src["generate"]
        seed = int(g.get("seed", 0))
        inst = gen_euclidean(int(g["N"]), int(g["m"]), C, theta, gamma, seed)
        return name, inst, seed
    raise ConfigError(f"instance entry needs path, costs or generate: {src}")


def run_job(job: BenchJob, base: str = ".") -> BenchRow:
    name, N, m = _source_name(job.source), 0, 0
    try:
        name, inst, seed = _load_source(job.source, job.C, job.theta, job.gamma, Path(base))
        N, m = inst.n_customers, inst.n_locations
        ctx = make_context(inst, parse_expansion(job.expansion))
        t0 = time.perf_counter()
        res = run_method(ctx, job.method, job.epsilon, seed=job.seed)
        wall = 1e3 * (time.perf_counter() - t0)
        return BenchRow(name, N, m, job.C, job.theta, job.gamma, job.expansion, job.method, res.status,
                        res.objective_true, res.bound, relative_gap(res.bound, res.objective_true), wall,
                        int(res.stats.get("breakpoints", 0)), int(res.stats.get("cuts", 0)), job.seed,
                        job.epsilon if job.method == "pia" else float("nan"))
    except Exception as exc:  # a failed run becomes a row, the sweep goes on
        warnings.warn(f"bench run failed ({name}, {job.method}): {exc}")
        nan = float("nan")
        return BenchRow(name, N, m, job.C, job.theta, job.gamma, job.expansion, job.method, "error",
                        nan, nan, nan, nan, 0, 0, job.seed, job.epsilon)


def expand_manifest(man: dict) -> list:
    """Cartesian product of the manifest grid, in manifest order.

    File-based instances carry their own utilities, so the theta/gamma axes
    collapse to a single (nan, nan) combination for them.
    """
    mode = man.get("mode", "grid")
    budgets = man.get("budgets", [None])
    thetas = man.get("theta", [1.0])
    gammas = man.get("gamma", [0.1])
    exps = man.get("expansions", ["exp:1:1"])
    seed = int(man.get("seed", 0))
    if mode == "grid":
        methods = man.get("methods", ["pia"])
        eps_list = [float(man.get("epsilon", 0.01))]
    elif mode == "epsilon":
        methods = ["pia"]
        eps_list = [float(e) for e in man.get("epsilons", DEFAULT_EPSILONS)]
    else:
        raise ConfigError(f"unknown bench mode {mode!r}")
    for meth in methods:
        if meth not in METHODS:
            raise ConfigError(f"unknown method {meth!r}")
    for e in exps:
        parse_expansion(e)
    jobs = []
    for src in man["instances"]:
        fixed = "path" in src
        tg = [(float("nan"), float("nan"))] if fixed else list(itertools.product(thetas, gammas))
        if fixed and (len(thetas) > 1 or len(gammas) > 1):
            print(f"note: theta/gamma grid skipped for file instance {src['path']}", file=sys.stderr)
        for C, (th, ga), ex, meth, eps in itertools.product(budgets, tg, exps, methods, eps_list):
            if C is None:
                raise ConfigError("manifest needs a budgets list")
            jobs.append(BenchJob(src, int(C), th, ga, ex, meth, eps, seed))
    return jobs


def summarize(rows) -> list:
    """Per (dataset, method): solved count, best-objective count, mean time.

    A run counts as best when it is within 1e-6 relative of the best
    objective any method reached on the same configuration.
    """
    def key(r):
        return (r.dataset, r.C, str(r.theta), str(r.gamma), r.expansion)

    best = {}
    for r in rows:
        if math.isfinite(r.objective_true):
            k = key(r)
            best[k] = max(best.get(k, -math.inf), r.objective_true)
    groups = {}
    for r in rows:
        g = groups.setdefault((r.dataset, r.method), dict(runs=0, solved=0, best=0, wall=[]))
        g["runs"] += 1
        if r.status == "optimal":
            g["solved"] += 1
        b = best.get(key(r))
        if b is not None and math.isfinite(r.objective_true) and r.objective_true >= b - BEST_TOL * max(1.0, abs(b)):
            g["best"] += 1
        if math.isfinite(r.wall_ms):
            g["wall"].append(r.wall_ms)
    return [dict(dataset=d, method=m, runs=g["runs"], solved=g["solved"], best=g["best"],
                 mean_wall_ms=float(np.mean(g["wall"])) if g["wall"] else float("nan"))
            for (d, m), g in groups.items()]


def add_epsilon_errors(rows) -> None:
    """Error % of each PIA run relative to the smallest-epsilon run of its group."""
    groups = {}
    for r in rows:
        groups.setdefault((r.dataset, r.C, str(r.theta), str(r.gamma), r.expansion), []).append(r)
    for grp in groups.values():
        ref = min(grp, key=lambda r: r.epsilon)
        for r in grp:
            if math.isfinite(ref.objective_true) and math.isfinite(r.objective_true):
                r.error_pct = 100.0 * (ref.objective_true - r.objective_true) / max(1e-300, abs(ref.objective_true))


def cmd_bench(args) -> int:
    man_path = Path(args.manifest)
    try:
        man = json.loads(man_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest is not valid JSON: {exc}") from None
    jobs = expand_manifest(man)
    base = str(man_path.parent)
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            rows = list(pool.map(run_job, jobs, itertools.repeat(base)))
    else:
        rows = [run_job(j, base) for j in jobs]
    if man.get("mode") == "epsilon":
        add_epsilon_errors(rows)
    write_rows(rows, args.out)
    summary = summarize(rows)
    sink = sys.stderr if args.out in (None, "-") else sys.stdout
    if args.summary:
        with open(args.summary, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, list(summary[0]))
            w.writeheader()
            w.writerows(summary)
    for s in summary:
        print(f"{s['dataset']:<24} {s['method']:<7} solved {s['solved']}/{s['runs']}  best {s['best']}"
              f"  mean {s['mean_wall_ms']:.1f} ms", file=sink)
    return 0


def alpha_rows(inst, dataset: str, eps: float, alphas=DEFAULT_ALPHAS, methods=("pia",),
               theta=float("nan"), gamma=float("nan"), seed: int = 0) -> list:
    rows = []
    for a in alphas:
        g = exp_concave(float(a), 1.0)
        ctx = make_context(inst, g)
        for meth in methods:
            t0 = time.perf_counter()
            res = run_method(ctx, meth, eps, seed=seed)
            wall = 1e3 * (time.perf_counter() - t0)
            rows.append(BenchRow(dataset, inst.n_customers, inst.n_locations, inst.budget, theta, gamma,
                                 g.spec, meth, res.status, res.objective_true, res.bound,
                                 relative_gap(res.bound, res.objective_true), wall,
                                 int(res.stats.get("breakpoints", 0)), int(res.stats.get("cuts", 0)), seed,
                                 eps if meth == "pia" else float("nan")))
    return rows


def cmd_alpha_study(args) -> int:
    if args.instance:
        inst = parse_instance(args.instance)
        name, th, ga, seed = Path(args.instance).stem, float("nan"), float("nan"), 0
    else:
        inst = gen_euclidean(args.customers, args.locations, args.budget or 5, args.theta, args.gamma, args.seed)
        name, th, ga, seed = f"gen-N{args.customers}-m{args.locations}-s{args.seed}", args.theta, args.gamma, args.seed
    if args.budget is not None:
        inst = inst.with_budget(args.budget)
    alphas = [float(a) for a in args.alphas.split(",")]
    methods = args.methods.split(",")
    for meth in methods:
        if meth not in METHODS:
            raise ConfigError(f"unknown method {meth!r}")
    write_rows(alpha_rows(inst, name, args.epsilon, alphas, methods, th, ga, seed), args.out)
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="memcp", description="Facility location with market expansion.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one instance")
    s.add_argument("--instance", required=True)
    s.add_argument("--method", choices=METHODS, default="pia")
    s.add_argument("--expansion", default="exp:1:1", help="ratio:A | exp:A:B | sigmoid:A:B | one")
    s.add_argument("--epsilon", type=float, default=0.01)
    s.add_argument("--budget", type=int)
    s.add_argument("--time-limit", type=float)
    s.add_argument("--backend", choices=("auto", "internal", "scipy", "reference"), default="auto")
    s.add_argument("--backend-config", help="key=value file with backend.command etc.")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    g = sub.add_parser("gen", help="write a generated instance")
    g.add_argument("--customers", "-N", type=int, default=50)
    g.add_argument("--locations", "-m", type=int, default=50)
    g.add_argument("--budget", "-C", type=int, default=5)
    g.add_argument("--theta", type=float, default=1.0)
    g.add_argument("--gamma", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--costs", help="N x m cost CSV instead of random points")
    g.add_argument("--competitors", help="comma-separated competitor columns (with --costs)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("breakpoints", help="dump breakpoints as CSV")
    b.add_argument("--instance", required=True)
    b.add_argument("--expansion", default="exp:1:1")
    b.add_argument("--epsilon", type=float, default=0.01)
    b.add_argument("--budget", type=int)
    b.add_argument("--out")
    b.set_defaults(func=cmd_breakpoints)

    h = sub.add_parser("bench", help="run a manifest sweep")
    h.add_argument("--manifest", required=True)
    h.add_argument("--out")
    h.add_argument("--summary")
    h.add_argument("--workers", type=int, default=1)
    h.set_defaults(func=cmd_bench)

    a = sub.add_parser("alpha-study", help="breakpoints and runtime against the expansion slope")
    a.add_argument("--instance")
    a.add_argument("--customers", "-N", type=int, default=50)
    a.add_argument("--locations", "-m", type=int, default=25)
    a.add_argument("--budget", "-C", type=int)
    a.add_argument("--theta", type=float, default=1.0)
    a.add_argument("--gamma", type=float, default=0.1)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--alphas", default=",".join(str(x) for x in DEFAULT_ALPHAS))
    a.add_argument("--methods", default="pia")
    a.add_argument("--epsilon", type=float, default=0.01)
    a.add_argument("--out")
    a.set_defaults(func=cmd_alpha_study)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 3
    except (InstanceFormatError, ConfigError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
