"""Greedy construction and swap-based local search."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .objective import ObjectiveCtx, z_of_subset
from .solvers import SolveResult, _finish, _tol, exact_evaluator, greedy_set


@dataclass(frozen=True)
class LsConfig:
    max_exchange_rounds: int = 50
    use_gradient_step: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.max_exchange_rounds < 0:
            raise ValueError("max_exchange_rounds must be >= 0")


def greedy(ctx: ObjectiveCtx) -> SolveResult:
    """Add the location with the largest marginal gain, C times."""
    t0 = time.perf_counter()
    S, v = greedy_set(ctx.inst, exact_evaluator(ctx))
    return _finish(ctx, S, "greedy", "feasible", v, wall_s=time.perf_counter() - t0)


def _swap_values(ctx, z, S, outs, ins):
    """Objective after swapping out[k] for in[k], for every pair k."""
    V = ctx.inst.V
    Z = z[:, None] - V[:, outs] + V[:, ins]
    return ctx.psi_all(Z).sum(axis=0)


def local_search(ctx: ObjectiveCtx, cfg: LsConfig = LsConfig()) -> SolveResult:
    """Greedy start, then gradient-guided swaps, then best-improvement exchange.

    The gradient step ranks each (out, in) swap by the first-order change
    sum_n Psi_n'(z_n) (V_n,in - V_n,out) and accepts the first ranked swap
    that truly improves. The exchange step scans every swap and takes the
    best one. Each step runs at most ``max_exchange_rounds`` rounds; zero
    rounds returns the greedy set unchanged.
    """
    t0 = time.perf_counter()
    inst = ctx.inst
    rng = np.random.default_rng(cfg.seed)
    S, cur = greedy_set(inst, exact_evaluator(ctx))
    S = list(S)
    history = [cur]
    m = inst.n_locations

    def pairs(S):
        inside = np.array(sorted(S), dtype=int)
        outside = np.setdiff1d(np.arange(m), inside)
        outs = np.repeat(inside, outside.size)
        ins = np.tile(outside, inside.size)
        return outs, ins

    grad_moves = 0
    if cfg.use_gradient_step:
        for _ in range(cfg.max_exchange_rounds):
            z = z_of_subset(inst, S)
            outs, ins = pairs(S)
            if outs.size == 0:
                break
            grad = ctx.psi_d1_all(z) @ inst.V
            est = grad[ins] - grad[outs]
            # random tie-break among equal estimates, fixed by the seed
            order = np.lexsort((rng.permutation(est.size), -est))
            order = order[est[order] > 0]
            if order.size == 0:
                break
            vals = _swap_values(ctx, z, S, outs[order], ins[order])
            better = np.flatnonzero(vals > cur + _tol(cur))
            if better.size == 0:
                break
            k = order[better[0]]
            S.remove(int(outs[k]))
            S.append(int(ins[k]))
            cur = float(vals[better[0]])
            history.append(cur)
            grad_moves += 1

    exch_moves = 0
    for _ in range(cfg.max_exchange_rounds):
        z = z_of_subset(inst, S)
        outs, ins = pairs(S)
        if outs.size == 0:
            break
        vals = _swap_values(ctx, z, S, outs, ins)
        top = float(vals.max())
        if top <= cur + _tol(cur):
            break
        k = int(np.flatnonzero(vals >= top - _tol(top))[0])
        S.remove(int(outs[k]))
        S.append(int(ins[k]))
        cur = top
        history.append(cur)
        exch_moves += 1

    return _finish(ctx, S, "ls", "feasible", cur, gradient_moves=grad_moves, exchange_moves=exch_moves,
                   history=history, wall_s=time.perf_counter() - t0)
