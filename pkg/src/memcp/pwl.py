"""Piecewise-linear approximation of the univariate customer terms.

Chords (inner approximation) are placed with the fewest breakpoints that keep
the gap to Psi_n within epsilon on every segment; tangent envelopes give the
outer counterpart. Functions here take any object exposing scalar ``f``,
``d1`` and ``d2`` methods (``ObjectiveCtx.row(n)`` or a test function).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .instance import ZBounds
from .objective import CONCAVE, CONVEX, curvature_map

MAX_BREAKPOINTS = 1_000_000


class UnivariateFn(Protocol):
    def f(self, z: float) -> float: ...
    def d1(self, z: float) -> float: ...
    def d2(self, z: float) -> float: ...


@dataclass(frozen=True, eq=False)
class FunctionCtx:
    """Wrap a single univariate function on [lo, hi] so it can stand in for an
    ``ObjectiveCtx`` (every row index maps to the same function)."""

    fn: UnivariateFn
    lo: float
    hi: float

    @property
    def bounds(self) -> ZBounds:
        return ZBounds(np.array([self.lo]), np.array([self.hi]))

    def row(self, n: int) -> UnivariateFn:
        return self.fn


@dataclass(frozen=True)
class Affine:
    """f(z) = a + b z; handy for zero-curvature checks."""

    a: float = 0.0
    b: float = 1.0

    def f(self, z):
        return self.a + self.b * z

    def d1(self, z):
        return self.b

    def d2(self, z):
        return 0.0


def _range(ctx, n):
    return float(ctx.bounds.L[n]), float(ctx.bounds.U[n])


@dataclass(frozen=True, eq=False)
class PwlRow:
    c: np.ndarray
    psi: np.ndarray
    gamma: np.ndarray
    curvature: tuple
    epsilon: float = float("nan")

    @property
    def n_segments(self) -> int:
        return len(self.c) - 1

    def __call__(self, z):
        """Chord interpolant on [c_0, c_last]."""
        return np.interp(z, self.c, self.psi)

    def envelope(self, z):
        """Chord interpolant continued linearly past both ends.

        For a concave row (non-increasing slopes) this is the min over all
        chord lines, hence concave on the whole line.
        """
        z = np.asarray(z, dtype=float)
        if self.n_segments == 0:
            return np.full_like(z, self.psi[0])
        out = np.interp(z, self.c, self.psi)
        lo, hi = z < self.c[0], z > self.c[-1]
        out[lo] = self.psi[0] + self.gamma[0] * (z[lo] - self.c[0])
        out[hi] = self.psi[-1] + self.gamma[-1] * (z[hi] - self.c[-1])
        return out


@dataclass(frozen=True, eq=False)
class PwlApprox:
    rows: tuple
    epsilon: float

    @property
    def total_breakpoints(self) -> int:
        return sum(len(r.c) for r in self.rows)

    @property
    def total_segments(self) -> int:
        return sum(r.n_segments for r in self.rows)

    def all_concave(self) -> bool:
        return all(lab == CONCAVE for r in self.rows for lab in r.curvature)


@dataclass(frozen=True, eq=False)
class TangentPwl:
    t: np.ndarray
    values: np.ndarray
    slopes: np.ndarray

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        b = self.values - self.slopes * self.t
        return np.min(b[:, None] + self.slopes[:, None] * z.reshape(1, -1), axis=0).reshape(z.shape)

    def breakpoints(self, lo: float, hi: float) -> np.ndarray:
        """lo, the kinks of the envelope inside (lo, hi), and hi."""
        order = np.argsort(-self.slopes, kind="stable")
        hull = []  # lines (slope, intercept) of the min-envelope, left to right
        for k in order:
            s, b = self.slopes[k], self.values[k] - self.slopes[k] * self.t[k]
            if hull and hull[-1][0] == s:
                if b >= hull[-1][1]:
                    continue
                hull.pop()
            while len(hull) >= 2:
                (s1, b1), (s2, b2) = hull[-2], hull[-1]
                # line 2 is useless if line 3 undercuts it before it undercuts line 1
                if (b - b1) * (s1 - s2) <= (b2 - b1) * (s1 - s):
                    hull.pop()
                else:
                    break
            hull.append((s, b))
        kinks = [(b2 - b1) / (s1 - s2) for (s1, b1), (s2, b2) in zip(hull, hull[1:])]
        inner = [k for k in kinks if lo < k < hi]
        return np.array([lo, *inner, hi])


def _chord_slope(fn, a, fa, t):
    return (fn.f(t) - fa) / (t - a)


def chord_gap(fn: UnivariateFn, a: float, t: float, convex: bool = False):
    """Largest gap between fn and its chord over [a, t]; returns ``(gap, argmax)``.

    On a concave piece the maximiser solves fn'(z) = chord slope (fn' is
    decreasing there); on a convex piece the chord lies above and the sign
    flips.
    """
    if a > t:
        raise ValueError("chord gap needs a <= t")
    if t == a:
        return 0.0, a
    fa = fn.f(a)
    theta = _chord_slope(fn, a, fa, t)
    sign = -1.0 if convex else 1.0

    def h(z):
        return sign * (fn.d1(z) - theta)

    ha, ht = h(a), h(t)
    if np.isfinite(ha) and np.isfinite(ht):
        if ha <= 0.0:
            zs = a
        elif ht >= 0.0:
            zs = t
        else:
            zs = brentq(h, a, t, xtol=1e-12 * (t - a), rtol=1e-15)
    else:
        res = minimize_scalar(
            lambda z: -sign * (fn.f(z) - fa - theta * (z - a)),
            bounds=(a, t), method="bounded", options={"xatol": 1e-12 * (t - a)},
        )
        zs = float(res.x)
    gap = sign * (fn.f(zs) - fa - theta * (zs - a))
    return max(gap, 0.0), zs


def farthest_breakpoint(fn: UnivariateFn, a: float, upper: float, eps: float, delta: float,
                        convex: bool = False) -> float:
    """Farthest b in (a, upper] whose chord from a stays within eps.

    The gap grows monotonically with b, so b is bracketed by a feasible lower
    end and an infeasible upper end. The bracket is shrunk with Illinois-style
    false position (bisection when that stalls) until it is at most delta
    wide or the gap at the lower end is within 1e-9 * eps of the target; the
    lower, feasible end is returned so the eps guarantee always holds.
    """
    if chord_gap(fn, a, upper, convex)[0] <= eps:
        return upper
    lo, hi = a, upper
    f_lo, f_hi = -eps, chord_gap(fn, a, upper, convex)[0] - eps
    floor = 4.0 * np.spacing(max(abs(a), abs(upper), 1.0))
    side = 0
    for it in range(200):
        width = hi - lo
        if width <= delta and lo > a:
            break
        if width <= floor:
            if lo > a:
                break
            raise RuntimeError("breakpoint search stalled; eps too small for float64")
        if it % 4 == 3:
            x = 0.5 * (lo + hi)
        else:
            x = lo - f_lo * width / (f_hi - f_lo)
            x = min(max(x, lo + 0.01 * width), hi - 0.01 * width)
        fx = chord_gap(fn, a, x, convex)[0] - eps
        if fx <= 0.0:
            lo, f_lo = x, fx
            if -fx <= 1e-9 * eps:
                break
            if side == -1:
                f_hi *= 0.5
            side = -1
        else:
            hi, f_hi = x, fx
            if side == 1:
                f_lo *= 0.5
            side = 1
    return lo


def _generate(fn, a, b, eps, delta, convex):
    if eps <= 0:
        raise ValueError("eps must be positive")
    if b < a:
        raise ValueError("need a <= b")
    if b == a:
        return np.array([a])
    if delta is None:
        delta = 1e-9 * (b - a)
    pts = [a]
    while pts[-1] < b:
        pts.append(farthest_breakpoint(fn, pts[-1], b, eps, delta, convex))
        if len(pts) > MAX_BREAKPOINTS:
            raise RuntimeError("breakpoint generation did not converge (>1e6 breakpoints)")
    return np.array(pts)


def lambda_gap(ctx, n: int, a: float, t: float, convex: bool = False):
    """Max chord gap of customer n's term over [a, t]; ``(gap, argmax_z)``."""
    return chord_gap(ctx.row(n), a, t, convex)


def next_breakpoint(ctx, n: int, a: float, eps: float, delta: float | None = None,
                    upper: float | None = None, convex: bool = False) -> float:
    """Farthest feasible breakpoint after a, capped at ``upper`` (default U_n)."""
    L, U = _range(ctx, n)
    upper = U if upper is None else upper
    if a >= upper:
        raise ValueError("need a < upper")
    if eps <= 0:
        raise ValueError("eps must be positive")
    delta = 1e-9 * (U - L) if delta is None else delta
    if delta <= 0:
        delta = 1e-9 * (upper - a)
    return farthest_breakpoint(ctx.row(n), a, upper, eps, delta, convex)


def generate_breakpoints_concave(ctx, n: int, a: float, b: float, eps: float,
                                 delta: float | None = None) -> np.ndarray:
    return _generate(ctx.row(n), a, b, eps, delta, convex=False)


def generate_breakpoints_convex(ctx, n: int, a: float, b: float, eps: float,
                                delta: float | None = None) -> np.ndarray:
    return _generate(ctx.row(n), a, b, eps, delta, convex=True)


def make_row(fn: UnivariateFn, c, curvature, eps: float = float("nan")) -> PwlRow:
    c = np.asarray(c, dtype=float)
    vals = np.array([fn.f(float(x)) for x in c])
    gamma = np.diff(vals) / np.diff(c)
    return PwlRow(c, vals, gamma, tuple(curvature), eps)


def generate_breakpoints_general(ctx, n: int, eps: float, delta: float | None = None,
                                 grid_points: int = 512) -> PwlRow:
    """Breakpoints over [L_n, U_n], split at the inflection points of the term.

    Inflection points always become breakpoints; each piece uses the concave
    or convex generator according to its curvature label.
    """
    fn = ctx.row(n)
    L, U = _range(ctx, n)
    if U <= L:
        return make_row(fn, [L], [], eps)
    if delta is None:
        delta = 1e-9 * (U - L)
    pts, labels = [L], []
    for a, b, lab in curvature_map(ctx, n, grid_points).intervals:
        seg = _generate(fn, a, b, eps, min(delta, 1e-9 * (b - a)), lab == CONVEX)
        pts.extend(seg[1:])
        labels.extend([lab] * (len(seg) - 1))
    return make_row(fn, pts, labels, eps)


def generate_concave_row(ctx, n: int, eps: float, delta: float | None = None) -> PwlRow:
    """Single concave run over [L_n, U_n]; caller vouches for concavity."""
    fn = ctx.row(n)
    L, U = _range(ctx, n)
    c = _generate(fn, L, U, eps, delta, convex=False)
    return make_row(fn, c, [CONCAVE] * (len(c) - 1), eps)


def generate_pwl(ctx, eps: float, delta: float | None = None, concave: bool = False,
                 grid_points: int = 512) -> PwlApprox:
    """Breakpoints for every customer.

    ``concave=True`` skips the curvature scan and treats each row as one
    concave run (the caller has checked concavity on [L_n, U_n]).
    """
    n_rows = len(ctx.bounds.L)
    if concave:
        rows = [generate_concave_row(ctx, n, eps, delta) for n in range(n_rows)]
    else:
        rows = [generate_breakpoints_general(ctx, n, eps, delta, grid_points) for n in range(n_rows)]
    return PwlApprox(tuple(rows), eps)


def build_outer_pwl(ctx, n: int, tangent_points) -> TangentPwl:
    fn = ctx.row(n)
    t = np.asarray(sorted(float(x) for x in tangent_points))
    if t.size == 0:
        raise ValueError("need at least one tangent point")
    return TangentPwl(t, np.array([fn.f(x) for x in t]), np.array([fn.d1(x) for x in t]))


def chords_inner_pwl(ctx, n: int, points) -> PwlRow:
    c = np.asarray(points, dtype=float)
    if c.size < 2:
        raise ValueError("need at least two points for a chord interpolant")
    if np.any(np.diff(c) <= 0):
        raise ValueError("points must be strictly increasing")
    return make_row(ctx.row(n), c, [CONCAVE] * (c.size - 1))


def inner_from_outer(ctx, n: int, outer: TangentPwl, lo: float, hi: float) -> PwlRow:
    """Chords through the ends and kinks of a tangent envelope.

    Uses as many pieces as ``outer`` has on [lo, hi]; for a concave term its
    max gap never exceeds the envelope's.
    """
    return chords_inner_pwl(ctx, n, outer.breakpoints(lo, hi))


def sampled_max_gap(fn: UnivariateFn, approx, lo: float, hi: float, samples: int = 10_000) -> float:
    zs = np.linspace(lo, hi, samples)
    truth = np.array([fn.f(float(z)) for z in zs])
    return float(np.max(np.abs(truth - approx(zs))))


def segment_gaps(fn: UnivariateFn, row: PwlRow, samples: int = 10_000) -> np.ndarray:
    """Dense-sampled max |fn - chord| per segment of ``row``."""
    out = np.empty(row.n_segments)
    for k in range(row.n_segments):
        zs = np.linspace(row.c[k], row.c[k + 1], samples)
        truth = np.array([fn.f(float(z)) for z in zs])
        chord = row.psi[k] + row.gamma[k] * (zs - row.c[k])
        out[k] = np.max(np.abs(truth - chord))
    return out


def curvature_extremes(fn: UnivariateFn, lo: float, hi: float, samples: int = 10_000):
    zs = np.linspace(lo, hi, samples)
    curv = np.abs(np.array([fn.d2(float(z)) for z in zs]))
    return float(curv.min()), float(curv.max())


def segment_count_bracket(fn: UnivariateFn, lo: float, hi: float, eps: float,
                          samples: int = 10_000):
    """``(lower, upper)`` on the optimal segment count, as usually stated:
    (hi-lo) sqrt(min|f''|) / (2 sqrt(eps)) and (hi-lo) sqrt(max|f''|) / sqrt(2 eps)."""
    cmin, cmax = curvature_extremes(fn, lo, hi, samples)
    return (hi - lo) * np.sqrt(cmin) / (2.0 * np.sqrt(eps)), (hi - lo) * np.sqrt(cmax) / np.sqrt(2.0 * eps)


def segment_count_bracket_sharp(fn: UnivariateFn, lo: float, hi: float, eps: float,
                                samples: int = 10_000):
    """Bracket that provably holds for C2 functions with bounded curvature.

    A chord over width w leaves gap at least min|f''| w^2 / 8 and at most
    max|f''| w^2 / 8, so the minimum count K obeys
    (hi-lo) sqrt(min|f''|) / (2 sqrt(2 eps)) <= K <= (hi-lo) sqrt(max|f''|) / sqrt(8 eps) + 1.
    """
    cmin, cmax = curvature_extremes(fn, lo, hi, samples)
    width = hi - lo
    return (width * np.sqrt(cmin) / (2.0 * np.sqrt(2.0 * eps)),
            width * np.sqrt(cmax) / np.sqrt(8.0 * eps) + 1.0)
