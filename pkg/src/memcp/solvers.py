"""Solve strategies: brute force, set-function branch and bound, the
piecewise-linear pipeline, the tangent-cut loop and external MILP backends."""
from __future__ import annotations

import math
import os
import shlex
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Callable, Union

import numpy as np

from . import models as M
from .objective import ObjectiveCtx, all_rows_concave, f_of_subset, z_of_subset
from .pwl import PwlApprox, generate_pwl

MAX_ENUMERATION = 10_000_000
TIE_TOL = 1e-12

# maps a (N, K) block of z columns to K objective values
Evaluator = Callable[[np.ndarray], np.ndarray]


@dataclass
class SolveResult:
    chosen: tuple
    z: np.ndarray
    objective_true: float
    objective_model: float = float("nan")
    bound: float = float("nan")
    status: str = "optimal"
    method: str = ""
    stats: dict = field(default_factory=dict)


def _tol(v: float) -> float:
    return TIE_TOL * max(1.0, abs(v))


def exact_evaluator(ctx: ObjectiveCtx) -> Evaluator:
    return lambda Z: ctx.psi_all(Z).sum(axis=0)


def chord_evaluator(approx: PwlApprox, envelope: bool = False) -> Evaluator:
    """Sum of per-row chord interpolants; ``envelope`` extends concave rows
    beyond [L_n, U_n] as the min over chord lines (concave everywhere)."""
    rows = approx.rows

    def ev(Z):
        Z = np.atleast_2d(Z)
        out = np.zeros(Z.shape[1])
        for n, row in enumerate(rows):
            out += row.envelope(Z[n]) if envelope else row(Z[n])
        return out
    return ev


def _finish(ctx, S, method, status="optimal", objective_model=float("nan"), bound=float("nan"), **stats):
    S = tuple(sorted(int(i) for i in S))
    if len(S) != ctx.inst.budget:
        raise RuntimeError(f"{method} produced {len(S)} locations, budget is {ctx.inst.budget}")
    return SolveResult(S, z_of_subset(ctx.inst, S), f_of_subset(ctx, S), float(objective_model),
                       float(bound), status, method, stats)


# ------------------------------------------------------------------ brute force

def brute_force_set(inst, evaluator: Evaluator, max_subsets: int = MAX_ENUMERATION, chunk: int = 20_000):
    """Best C-subset under ``evaluator``; lexicographically first among ties."""
    m, C = inst.n_locations, inst.budget
    total = math.comb(m, C)
    if total > max_subsets:
        raise ValueError(f"brute force over {total} subsets exceeds guard {max_subsets}")
    best_v, best_S = -math.inf, None
    it = combinations(range(m), C)
    while True:
        block = np.array(list(_take(it, chunk)), dtype=int).reshape(-1, C)
        if block.size == 0:
            break
        Z = inst.Uc[:, None] + inst.V[:, block].sum(axis=2)
        vals = evaluator(Z)
        k = int(np.argmax(vals))
        v = float(vals[k])
        if best_S is None or v > best_v + _tol(best_v):
            cand = np.flatnonzero(vals >= v - _tol(v))
            best_v, best_S = v, tuple(block[cand[0]])
    return best_S, best_v, total


def _take(it, n):
    for _ in range(n):
        try:
            yield next(it)
        except StopIteration:
            return


def brute_force(ctx: ObjectiveCtx, max_subsets: int = MAX_ENUMERATION) -> SolveResult:
    t0 = time.perf_counter()
    S, v, total = brute_force_set(ctx.inst, exact_evaluator(ctx), max_subsets)
    return _finish(ctx, S, "brute", objective_model=v, bound=v, subsets=total,
                   wall_s=time.perf_counter() - t0)


# ------------------------------------------------------------------ greedy core

def greedy_set(inst, evaluator: Evaluator):
    """Best-marginal-gain construction; smallest index wins ties."""
    z = inst.Uc.astype(float).copy()
    S = []
    cur = float(evaluator(z[:, None])[0])
    free = np.ones(inst.n_locations, dtype=bool)
    for _ in range(inst.budget):
        cand = np.flatnonzero(free)
        vals = evaluator(z[:, None] + inst.V[:, cand])
        top = float(vals.max())
        j = int(cand[np.flatnonzero(vals >= top - _tol(top))[0]])
        S.append(j)
        free[j] = False
        z += inst.V[:, j]
        cur = top
    return tuple(sorted(S)), cur


# ---------------------------------------------------------- branch and bound

def _lex_less(a, b) -> bool:
    return tuple(a) < tuple(b)


def bb_set(inst, evaluator: Evaluator, incumbent=None):
    """Depth-first search over the set-enumeration tree.

    The bound at prefix S is f(S) plus the C-|S| largest single-element gains
    among indices after max(S); it dominates every completion whenever the
    evaluator is submodular on the range visited. Returns
    ``(set, value, nodes)``.
    """
    m, C = inst.n_locations, inst.budget
    V, Uc = inst.V, inst.Uc
    if incumbent is None:
        incumbent = greedy_set(inst, evaluator)
    best_S, best_v = incumbent
    nodes = 0
    stack = [((), Uc.astype(float).copy(), float(evaluator(Uc[:, None])[0]))]
    while stack:
        S, z, fS = stack.pop()
        nodes += 1
        need = C - len(S)
        start = S[-1] + 1 if S else 0
        cand = np.arange(start, m - need + 1 if need > 1 else m)
        if cand.size == 0:
            continue
        allc = np.arange(start, m)
        child_vals = evaluator(z[:, None] + V[:, allc])
        if need == 1:
            top = float(child_vals.max())
            j = int(allc[np.flatnonzero(child_vals >= top - _tol(top))[0]])
            T = S + (j,)
            if top > best_v + _tol(best_v) or (top >= best_v - _tol(best_v) and _lex_less(T, best_S)):
                best_S, best_v = T, top
            continue
        gains = np.sort(child_vals - fS)[::-1]
        bound = fS + float(gains[:need].sum())
        if bound < best_v - _tol(best_v):
            continue
        if bound <= best_v + _tol(best_v) and tuple(S) > tuple(best_S[:len(S)]):
            continue  # can at best tie, and every completion is lexicographically larger
        sel = {int(j): k for k, j in enumerate(allc)}
        for j in cand[::-1]:
            stack.append((S + (int(j),), z + V[:, j], float(child_vals[sel[int(j)]])))
    return tuple(best_S), best_v, nodes


def solve_exact_bb(ctx: ObjectiveCtx, check: bool = True) -> SolveResult:
    """Exact optimum by branch and bound; needs a submodular objective.

    The submodularity bound requires every Psi_n concave on [Uc_n, U_n] with
    a certified expansion function; otherwise this refuses (use PIA).
    """
    if check and not (ctx.certified and all_rows_concave(ctx, from_competitor=True)):
        raise ValueError("objective not certified concave on [Uc, U]; use solve_pia instead")
    t0 = time.perf_counter()
    ev = exact_evaluator(ctx)
    S, v, nodes = bb_set(ctx.inst, ev)
    return _finish(ctx, S, "exact", objective_model=v, bound=v, nodes=nodes,
                   wall_s=time.perf_counter() - t0)


# ------------------------------------------------------------------ backends

@dataclass(frozen=True)
class BackendSpec:
    """External MILP solver invocation.

    ``command`` must contain ``{model}`` and ``{solution}``; ``{time_limit}``
    is substituted when present.
    """

    command: str
    time_limit_s: float | None = None
    workdir: str | None = None

    def __post_init__(self):
        if "{model}" not in self.command or "{solution}" not in self.command:
            raise ValueError("backend command needs {model} and {solution} placeholders")

    @classmethod
    def from_config(cls, path) -> "BackendSpec":
        """Read ``backend.command`` / ``backend.time_limit_s`` / ``backend.workdir``
        from a key=value file; ``MEMCP_BACKEND`` overrides the command."""
        conf = {}
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if len(val) >= 2 and val[0] == val[-1] and val[0] in "\"'":
                val = val[1:-1]
            conf[key] = val
        command = os.environ.get("MEMCP_BACKEND") or conf.get("backend.command")
        if not command:
            raise ValueError("no backend.command in config and MEMCP_BACKEND unset")
        limit = conf.get("backend.time_limit_s")
        return cls(command, float(limit) if limit else None, conf.get("backend.workdir") or None)

    @classmethod
    def from_env(cls, time_limit_s=None) -> "BackendSpec | None":
        cmd = os.environ.get("MEMCP_BACKEND")
        return cls(cmd, time_limit_s) if cmd else None

    @classmethod
    def reference(cls, time_limit_s=None) -> "BackendSpec":
        """The bundled scipy-based solver run as a subprocess."""
        exe = shlex.quote(sys.executable)
        return cls(f"{exe} -m memcp.lpsolve {{model}} {{solution}} --time-limit {{time_limit}}", time_limit_s)


def run_backend(spec: BackendSpec, model: M.MilpModel) -> M.Solution:
    with tempfile.TemporaryDirectory(prefix="memcp_") as tmp:
        lp, sol = Path(tmp) / "model.lp", Path(tmp) / "model.sol"
        M.write_lp(model, lp)
        limit = spec.time_limit_s
        cmd = (spec.command.replace("{model}", shlex.quote(str(lp)))
               .replace("{solution}", shlex.quote(str(sol)))
               .replace("{time_limit}", "inf" if limit is None else format(limit, "g")))
        try:
            proc = subprocess.run(shlex.split(cmd), cwd=spec.workdir, capture_output=True, text=True,
                                  timeout=limit)
        except subprocess.TimeoutExpired:
            return M.Solution({}, status="timeout", message=f"killed after {limit}s")
        except OSError as exc:
            return M.Solution({}, status="error", message=f"could not start backend: {exc}")
        if proc.returncode != 0:
            return M.Solution({}, status="error",
                              message=f"exit code {proc.returncode}: {proc.stderr.strip()[-2000:]}")
        if not sol.exists():
            return M.Solution({}, status="error", message="backend wrote no solution file")
        try:
            out = M.read_solution(sol, model)
        except ValueError as exc:
            return M.Solution({}, status="error", message=f"solution parse failure: {exc}")
    viol = out.binary_violation(model)
    if out.status in ("optimal", "feasible") and viol > M.BINARY_TOL:
        return M.Solution(out.values, out.objective, "error",
                          f"binary invariant violated by {viol:.3g}")
    return out


Backend = Union[str, BackendSpec, None]


def _solve_external(model, backend, time_limit):
    if isinstance(backend, BackendSpec):
        return run_backend(backend, model)
    if backend == "scipy":
        return M.solve_scipy(model, time_limit)
    raise ValueError(f"unknown backend {backend!r}")


class BackendError(RuntimeError):
    pass


def _chosen_from(sol: M.Solution, model, inst):
    S = sol.chosen(model)
    return tuple(S) if len(S) == inst.budget else None


# ------------------------------------------------------------------ PIA

def solve_pia(ctx: ObjectiveCtx, eps: float, backend: Backend = "auto", delta: float | None = None,
              time_limit: float | None = None) -> SolveResult:
    """Approximate then solve the linearized model.

    Concave path (certified g and every term concave on [L_n, U_n]): chord
    envelope, IA-MILP. Otherwise inflection-aware breakpoints and MILP-3 with
    binaries kept where a concave run meets a convex one.
    ``backend``: "internal", "scipy", a :class:`BackendSpec`, or "auto"
    (internal when it can handle the instance, scipy otherwise).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    t0 = time.perf_counter()
    inst = ctx.inst
    concave = ctx.certified and all_rows_concave(ctx)
    approx = generate_pwl(ctx, eps, delta, concave=concave)
    t_pwl = time.perf_counter() - t0
    model = M.build_ia_milp(ctx, approx) if concave else M.build_milp3(ctx, approx, keep_run_exits=True)
    stats = dict(breakpoints=approx.total_breakpoints, segments=approx.total_segments,
                 constraints=model.n_constraints, binaries=model.n_binaries, concave_path=concave,
                 pwl_s=t_pwl)
    if backend == "auto":
        internal_ok = concave or math.comb(inst.n_locations, inst.budget) <= MAX_ENUMERATION
        backend = "internal" if internal_ok else "scipy"
    status = "optimal"
    if backend == "internal":
        if concave:
            S, vmod, nodes = bb_set(inst, chord_evaluator(approx, envelope=True))
            stats["nodes"] = nodes
        else:
            S, vmod, _ = brute_force_set(inst, chord_evaluator(approx))
    else:
        sol = _solve_external(model, backend, time_limit)
        stats["backend_message"] = sol.message
        S = _chosen_from(sol, model, inst) if sol.values else None
        status = sol.status
        if status in ("error", "infeasible"):
            raise BackendError(f"backend {status}: {sol.message}")
        if S is None:
            S = greedy_set(inst, exact_evaluator(ctx))[0]
            stats["fallback"] = "greedy"
        vmod = float(chord_evaluator(approx, envelope=concave)(z_of_subset(inst, S)[:, None])[0])
    bound = vmod + inst.n_customers * eps if status == "optimal" else float("nan")
    stats["wall_s"] = time.perf_counter() - t0
    return _finish(ctx, S, "pia", status, vmod, bound, **stats)


# ------------------------------------------------------------------ OA loop

def _tangent_rows(cut_lists, big_m, Z):
    """Per-customer master value min(big_m, tangents) at each column of Z."""
    out = np.empty_like(Z)
    for n, cuts in enumerate(cut_lists):
        val = np.full(Z.shape[1], big_m[n])
        if cuts:
            zb, fv, sl = (np.array(a) for a in zip(*cuts))
            val = np.minimum(val, np.min(fv[:, None] + sl[:, None] * (Z[n][None, :] - zb[:, None]), axis=0))
        out[n] = val
    return out


def _tangent_evaluator(cut_lists, big_m):
    return lambda Z: _tangent_rows(cut_lists, big_m, np.atleast_2d(Z)).sum(axis=0)


def solve_oa(ctx: ObjectiveCtx, eps_oa: float = 1e-6, max_iters: int = 200, backend: Backend = "auto",
             time_limit: float | None = None) -> SolveResult:
    """Tangent-cut loop: solve the master, cut every customer whose value is
    overestimated by more than ``eps_oa``, repeat.

    Exact within N * eps_oa when every term is concave on [L_n, U_n];
    otherwise tangents can cut off good points and the result is flagged
    heuristic.
    """
    if eps_oa <= 0:
        raise ValueError("eps_oa must be positive")
    t0 = time.perf_counter()
    inst = ctx.inst
    N = inst.n_customers
    heuristic = not (ctx.certified and all_rows_concave(ctx))
    big_m = ctx.psi_all(np.asarray(ctx.bounds.U, dtype=float)) + 1.0
    if backend == "auto":
        backend = "internal"
    cut_lists = [[] for _ in range(N)]
    bounds, best_S, best_v = [], None, -math.inf
    nodes, status, converged = 0, "optimal", False
    for it in range(1, max_iters + 1):
        if backend == "internal":
            S, master_v, k = bb_set(inst, _tangent_evaluator(cut_lists, big_m))
            nodes += k
            z = z_of_subset(inst, S)
            theta = _tangent_rows(cut_lists, big_m, z[:, None])[:, 0]
        else:
            cuts = [(n, *c) for n, cl in enumerate(cut_lists) for c in cl]
            model = M.build_oa_master(ctx, cuts, big_m)
            sol = _solve_external(model, backend, time_limit)
            if sol.status in ("error", "infeasible") or not sol.values:
                raise BackendError(f"backend {sol.status}: {sol.message}")
            S = _chosen_from(sol, model, inst)
            if S is None:
                raise BackendError("master solution does not pick C locations")
            master_v = sol.objective
            z = z_of_subset(inst, S)
            theta = np.array([sol.values[f"t{n}"] for n in range(N)])
            if sol.status != "optimal":
                status = sol.status
        bounds.append(float(master_v))
        true = ctx.psi_all(z)
        val = float(true.sum())
        if (best_S is None or val > best_v + _tol(best_v)
                or (val >= best_v - _tol(best_v) and _lex_less(S, best_S))):
            best_S, best_v = S, val
        added = 0
        for n in range(N):
            if theta[n] > true[n] + eps_oa:
                row = ctx.row(n)
                cut_lists[n].append((float(z[n]), float(true[n]), row.d1(float(z[n]))))
                added += 1
        if added == 0:
            converged = True
            break
    if not converged and status == "optimal":
        status = "feasible"
    bound = bounds[-1] if (converged and not heuristic) else float("nan")
    return _finish(ctx, best_S, "oa", status, bounds[-1], bound, iterations=it,
                   cuts=sum(len(c) for c in cut_lists), bound_history=bounds, heuristic=heuristic,
                   nodes=nodes, wall_s=time.perf_counter() - t0)
