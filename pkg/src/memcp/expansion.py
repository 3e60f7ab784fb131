"""Market-expansion functions g(t).

Each function maps the log-sum utility t = log z of a customer zone to a
demand-scaling factor. All kinds saturate at 1 as t grows. Values and
derivatives are closed forms and work on Python floats (fast scalar path
used by the breakpoint generator) as well as numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

KINDS = ("ratio", "exp_concave", "sigmoid", "identity_one")


@dataclass(frozen=True)
class ExpansionFn:
    kind: str
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown expansion kind {self.kind!r}")
        if self.kind == "ratio" and self.alpha < 0:
            raise ValueError("ratio expansion needs alpha >= 0")
        if self.kind == "exp_concave" and not (self.alpha > 0 and self.beta > 0):
            raise ValueError("exp expansion needs alpha > 0 and beta > 0")
        if self.kind == "sigmoid" and not self.alpha > 0:
            raise ValueError("sigmoid expansion needs alpha > 0")

    def __call__(self, t):
        return g_eval(self, t)

    @property
    def spec(self) -> str:
        """CLI spelling, inverse of :func:`parse_expansion`."""
        if self.kind == "ratio":
            return f"ratio:{self.alpha:g}"
        if self.kind == "exp_concave":
            return f"exp:{self.alpha:g}:{self.beta:g}"
        if self.kind == "sigmoid":
            return f"sigmoid:{self.alpha:g}:{self.beta:g}"
        return "one"


def ratio(alpha: float) -> ExpansionFn:
    return ExpansionFn("ratio", alpha)


def exp_concave(alpha: float, beta: float = 1.0) -> ExpansionFn:
    return ExpansionFn("exp_concave", alpha, beta)


def sigmoid(alpha: float, beta: float) -> ExpansionFn:
    return ExpansionFn("sigmoid", alpha, beta)


def identity_one() -> ExpansionFn:
    return ExpansionFn("identity_one")


def parse_expansion(text: str) -> ExpansionFn:
    """Parse ``ratio:A``, ``exp:A:B``, ``sigmoid:A:B`` or ``one``."""
    parts = text.strip().split(":")
    head = parts[0].lower()
    try:
        nums = [float(p) for p in parts[1:]]
    except ValueError:
        raise ValueError(f"bad expansion spec {text!r}") from None
    if head == "one" and not nums:
        return identity_one()
    if head == "ratio" and len(nums) == 1:
        return ratio(nums[0])
    if head in ("exp", "exp_concave") and len(nums) in (1, 2):
        return exp_concave(*nums)
    if head == "sigmoid" and len(nums) == 2:
        return sigmoid(*nums)
    raise ValueError(f"bad expansion spec {text!r}")


def _is_scalar(t) -> bool:
    return isinstance(t, (float, int))


def _logistic(x):
    if _is_scalar(x):
        if x >= 0:
            return 1.0 / (1.0 + math.exp(-x))
        e = math.exp(x)
        return e / (1.0 + e)
    return expit(x)


def _check_ratio(f: ExpansionFn, t):
    s = t + f.alpha
    if np.any(s == 0):
        raise ZeroDivisionError("ratio expansion evaluated at t = -alpha")
    return s


def g_eval(f: ExpansionFn, t):
    if f.kind == "ratio":
        return t / _check_ratio(f, t)
    if f.kind == "exp_concave":
        ex = math.exp if _is_scalar(t) else np.exp
        return 1.0 - f.beta * ex(-f.alpha * t)
    if f.kind == "sigmoid":
        return _logistic(f.alpha * (t - f.beta))
    return 1.0 if _is_scalar(t) else np.ones_like(np.asarray(t, dtype=float))


def g_d1(f: ExpansionFn, t):
    if f.kind == "ratio":
        s = _check_ratio(f, t)
        return f.alpha / (s * s)
    if f.kind == "exp_concave":
        ex = math.exp if _is_scalar(t) else np.exp
        return f.alpha * f.beta * ex(-f.alpha * t)
    if f.kind == "sigmoid":
        s = _logistic(f.alpha * (t - f.beta))
        return f.alpha * s * (1.0 - s)
    return 0.0 if _is_scalar(t) else np.zeros_like(np.asarray(t, dtype=float))


def g_d2(f: ExpansionFn, t):
    if f.kind == "ratio":
        s = _check_ratio(f, t)
        return -2.0 * f.alpha / (s * s * s)
    if f.kind == "exp_concave":
        ex = math.exp if _is_scalar(t) else np.exp
        return -f.alpha * f.alpha * f.beta * ex(-f.alpha * t)
    if f.kind == "sigmoid":
        s = _logistic(f.alpha * (t - f.beta))
        return f.alpha * f.alpha * s * (1.0 - s) * (1.0 - 2.0 * s)
    return 0.0 if _is_scalar(t) else np.zeros_like(np.asarray(t, dtype=float))


def scalar_fns(f: ExpansionFn):
    """``(g, g', g'')`` as plain float closures with the kind dispatch hoisted out."""
    a, b = f.alpha, f.beta
    exp = math.exp
    if f.kind == "ratio":
        return (lambda t: t / (t + a),
                lambda t: a / ((t + a) * (t + a)),
                lambda t: -2.0 * a / ((t + a) ** 3))
    if f.kind == "exp_concave":
        return (lambda t: 1.0 - b * exp(-a * t),
                lambda t: a * b * exp(-a * t),
                lambda t: -a * a * b * exp(-a * t))
    if f.kind == "sigmoid":
        def s(t):
            return _logistic(a * (t - b))

        def d1(t):
            v = s(t)
            return a * v * (1.0 - v)

        def d2(t):
            v = s(t)
            return a * a * v * (1.0 - v) * (1.0 - 2.0 * v)
        return s, d1, d2
    return (lambda t: 1.0, lambda t: 0.0, lambda t: 0.0)


def check_concavity_conditions(f: ExpansionFn) -> bool:
    """Analytic certificate that g makes every customer term concave.

    True for the ratio family (any alpha >= 0), for ``1 - beta*exp(-alpha t)``
    when ``(alpha + 1) * beta > 1``, and for the constant g = 1. The sigmoid
    family is never certified.
    """
    if f.kind == "ratio":
        return f.alpha >= 0
    if f.kind == "exp_concave":
        return (f.alpha + 1.0) * f.beta > 1.0
    return f.kind == "identity_one"


def g_d1_vs_finite_difference(f: ExpansionFn, t: float, h: float = 1e-5) -> float:
    analytic = g_d1(f, t)
    central = (g_eval(f, t + h) - g_eval(f, t - h)) / (2.0 * h)
    return abs(analytic - central) / max(1.0, abs(analytic))
