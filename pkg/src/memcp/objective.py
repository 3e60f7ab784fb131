"""Per-customer objective terms Psi_n(z), the set function F(S) and curvature maps.

    Psi_n(z) = q_n g(log z) (z - Uc_n) / z + alpha_n log z

with z = Uc_n + sum_{i in S} V_ni the attraction mass seen by zone n.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .expansion import ExpansionFn, check_concavity_conditions, g_d1, g_d2, g_eval, scalar_fns
from .instance import Instance, ZBounds, compute_z_bounds

CONCAVE = "concave"
CONVEX = "convex"


def _log_z(z):
    scalar = isinstance(z, (float, int))
    if scalar:
        if z <= 0:
            raise ValueError("Psi evaluated at non-positive z")
        t = math.log(z)
    else:
        z = np.asarray(z, dtype=float)
        if np.any(z <= 0):
            raise ValueError("Psi evaluated at non-positive z")
        t = np.log(z)
    return z, t


def psi_value(g: ExpansionFn, q, u, a, z):
    z, t = _log_z(z)
    return q * g_eval(g, t) * (1.0 - u / z) + a * t


def psi_deriv1(g: ExpansionFn, q, u, a, z):
    z, t = _log_z(z)
    w = 1.0 - u / z
    return q * (g_d1(g, t) * w / z + g_eval(g, t) * u / (z * z)) + a / z


def psi_deriv2(g: ExpansionFn, q, u, a, z):
    z, t = _log_z(z)
    w = 1.0 - u / z
    z2 = z * z
    gd1 = g_d1(g, t)
    cap = (g_d2(g, t) - gd1) * w / z2 + 2.0 * gd1 * u / (z2 * z) - 2.0 * g_eval(g, t) * u / (z2 * z)
    return q * cap - a / z2


@dataclass(frozen=True)
class PsiRow:
    """Scalar view of one customer's Psi_n, used by the breakpoint engine.

    Same formulas as :func:`psi_value` and friends, with the expansion-kind
    dispatch resolved once so each call is a handful of float operations.
    """

    g: ExpansionFn
    q: float
    u: float
    a: float

    def __post_init__(self):
        object.__setattr__(self, "_gfns", scalar_fns(self.g))

    def f(self, z: float) -> float:
        if z <= 0:
            raise ValueError("Psi evaluated at non-positive z")
        t = math.log(z)
        return self.q * self._gfns[0](t) * (1.0 - self.u / z) + self.a * t

    def d1(self, z: float) -> float:
        if z <= 0:
            raise ValueError("Psi evaluated at non-positive z")
        t = math.log(z)
        g0, g1, _ = self._gfns
        u = self.u
        return self.q * (g1(t) * (1.0 - u / z) / z + g0(t) * u / (z * z)) + self.a / z

    def d2(self, z: float) -> float:
        if z <= 0:
            raise ValueError("Psi evaluated at non-positive z")
        t = math.log(z)
        g0, g1, g2 = self._gfns
        u, z2 = self.u, z * z
        gd1 = g1(t)
        cap = (g2(t) - gd1) * (1.0 - u / z) / z2 + 2.0 * (gd1 - g0(t)) * u / (z2 * z)
        return self.q * cap - self.a / z2


@dataclass(frozen=True, eq=False)
class ObjectiveCtx:
    inst: Instance
    g: ExpansionFn
    bounds: ZBounds = field(default=None)

    def __post_init__(self):
        if self.bounds is None:
            object.__setattr__(self, "bounds", compute_z_bounds(self.inst))

    @property
    def certified(self) -> bool:
        return check_concavity_conditions(self.g)

    def row(self, n: int) -> PsiRow:
        i = self.inst
        return PsiRow(self.g, float(i.q[n]), float(i.Uc[n]), float(i.alpha[n]))

    def psi_all(self, z):
        """Psi_n(z_n) for every n; z has shape (N,) or (N, k)."""
        q, u, a = self._cols(z)
        return psi_value(self.g, q, u, a, z)

    def psi_d1_all(self, z):
        q, u, a = self._cols(z)
        return psi_deriv1(self.g, q, u, a, z)

    def psi_d2_all(self, z):
        q, u, a = self._cols(z)
        return psi_deriv2(self.g, q, u, a, z)

    def _cols(self, z):
        i = self.inst
        if np.ndim(z) == 2:
            return i.q[:, None], i.Uc[:, None], i.alpha[:, None]
        return i.q, i.Uc, i.alpha


def make_context(inst: Instance, g: ExpansionFn) -> ObjectiveCtx:
    return ObjectiveCtx(inst, g)


def psi(ctx: ObjectiveCtx, n: int, z):
    i = ctx.inst
    return psi_value(ctx.g, i.q[n], i.Uc[n], i.alpha[n], z)


def psi_d1(ctx: ObjectiveCtx, n: int, z):
    i = ctx.inst
    return psi_deriv1(ctx.g, i.q[n], i.Uc[n], i.alpha[n], z)


def psi_d2(ctx: ObjectiveCtx, n: int, z):
    i = ctx.inst
    return psi_deriv2(ctx.g, i.q[n], i.Uc[n], i.alpha[n], z)


def z_of_subset(inst: Instance, S) -> np.ndarray:
    idx = np.asarray(sorted(S), dtype=int)
    if idx.size and (idx[0] < 0 or idx[-1] >= inst.n_locations):
        raise IndexError("location index out of range")
    return inst.Uc + inst.V[:, idx].sum(axis=1)


def f_of_subset(ctx: ObjectiveCtx, S) -> float:
    return float(ctx.psi_all(z_of_subset(ctx.inst, S)).sum())


def marginal_gain(ctx: ObjectiveCtx, S, j: int, cached_z: np.ndarray, check: bool = False):
    """Gain F(S + j) - F(S) from cached z; returns ``(gain, updated_z)``."""
    if j in S:
        raise ValueError(f"location {j} already in S")
    if check and not np.allclose(cached_z, z_of_subset(ctx.inst, S), rtol=1e-12, atol=1e-12):
        raise ValueError("cached z inconsistent with S")
    new_z = cached_z + ctx.inst.V[:, j]
    gain = float((ctx.psi_all(new_z) - ctx.psi_all(cached_z)).sum())
    return gain, new_z


@dataclass(frozen=True)
class CurvatureRow:
    intervals: tuple  # ((a, b, label), ...)

    @property
    def labels(self):
        return [lab for _, _, lab in self.intervals]

    def is_concave(self) -> bool:
        return all(lab == CONCAVE for lab in self.labels)


def curvature_map(ctx: ObjectiveCtx, n: int, grid_points: int = 512,
                  lo: float | None = None, hi: float | None = None) -> CurvatureRow:
    """Split [lo, hi] (default [L_n, U_n]) into maximal concave / convex pieces.

    Sign of Psi'' is scanned on a uniform grid; every sign change is refined
    by bisection to 1e-10 of the range. Pieces narrower than 1e-9 of the
    range are absorbed by a neighbour.
    """
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    lo = float(ctx.bounds.L[n] if lo is None else lo)
    hi = float(ctx.bounds.U[n] if hi is None else hi)
    row = ctx.row(n)

    def convex_at(z):
        return row.d2(z) > 0.0

    if hi <= lo:
        return CurvatureRow(((lo, hi, CONVEX if convex_at(lo) else CONCAVE),))
    width = hi - lo
    zs = np.linspace(lo, hi, grid_points)
    signs = np.array([convex_at(float(z)) for z in zs])
    cuts = [lo]
    labels = [bool(signs[0])]
    tol = 1e-10 * width
    for k in range(grid_points - 1):
        if signs[k] == signs[k + 1]:
            continue
        a, b = float(zs[k]), float(zs[k + 1])
        left = bool(signs[k])
        while b - a > tol:
            mid = 0.5 * (a + b)
            if convex_at(mid) == left:
                a = mid
            else:
                b = mid
        cuts.append(0.5 * (a + b))
        labels.append(bool(signs[k + 1]))
    cuts.append(hi)

    pieces = [[cuts[k], cuts[k + 1], labels[k]] for k in range(len(labels))]
    min_w = 1e-9 * width
    merged = []
    for p in pieces:
        if merged and (p[1] - p[0] < min_w or merged[-1][2] == p[2]):
            merged[-1][1] = p[1]
        elif merged and merged[-1][1] - merged[-1][0] < min_w:
            merged[-1] = [merged[-1][0], p[1], p[2]]
        else:
            merged.append(p)
    # absorption above can leave equal neighbours
    out = []
    for p in merged:
        if out and out[-1][2] == p[2]:
            out[-1][1] = p[1]
        else:
            out.append(p)
    return CurvatureRow(tuple((a, b, CONVEX if cv else CONCAVE) for a, b, cv in out))


def psi_concave_on(ctx: ObjectiveCtx, n: int, lo: float, hi: float, grid_points: int = 512) -> bool:
    return curvature_map(ctx, n, grid_points, lo, hi).is_concave()


def all_rows_concave(ctx: ObjectiveCtx, from_competitor: bool = False, grid_points: int = 512) -> bool:
    """Psi_n concave on [L_n, U_n] for all n (or on [Uc_n, U_n] if ``from_competitor``)."""
    lows = ctx.inst.Uc if from_competitor else ctx.bounds.L
    highs = ctx.bounds.U
    zs = np.linspace(lows, highs, grid_points, axis=1)
    return bool(np.all(ctx.psi_d2_all(zs) <= 0.0))
