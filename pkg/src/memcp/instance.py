"""ME-MCP instances: data model, text format, generators and z-range bounds.

Native text format (UTF-8)::

    # comment lines start with '#'
    N m C
    q_1 alpha_1 Uc_1 V_11 ... V_1m
    ...
    q_N alpha_N Uc_N V_N1 ... V_Nm
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist


class InstanceFormatError(ValueError):
    """Malformed instance file; message carries the offending line number."""


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Instance:
    V: np.ndarray
    Uc: np.ndarray
    q: np.ndarray
    alpha: np.ndarray
    budget: int

    def __post_init__(self):
        V = _frozen(self.V)
        if V.ndim != 2 or V.size == 0:
            raise ValueError("V must be a non-empty N x m matrix")
        N, m = V.shape
        object.__setattr__(self, "V", V)
        for name in ("Uc", "q", "alpha"):
            arr = _frozen(self.__dict__[name])
            if arr.shape != (N,):
                raise ValueError(f"{name} must have length {N}")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "budget", int(self.budget))
        for name in ("V", "Uc", "q", "alpha"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite entries")
        if np.any(self.V <= 0):
            raise ValueError("non-positive utility in V")
        if np.any(self.Uc <= 0):
            raise ValueError("non-positive competitor mass Uc")
        if np.any(self.q < 0) or np.any(self.alpha < 0):
            raise ValueError("q and alpha must be non-negative")
        if self.budget < 1:
            raise ValueError("budget must be at least 1")
        if self.budget > m:
            raise ValueError("budget exceeds locations")

    @property
    def n_customers(self) -> int:
        return self.V.shape[0]

    @property
    def n_locations(self) -> int:
        return self.V.shape[1]

    def with_budget(self, budget: int) -> "Instance":
        return Instance(self.V, self.Uc, self.q, self.alpha, budget)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.budget == other.budget
            and self.V.shape == other.V.shape
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("V", "Uc", "q", "alpha")
            )
        )


@dataclass(frozen=True, eq=False)
class ZBounds:
    L: np.ndarray
    U: np.ndarray


def compute_z_bounds(inst: Instance) -> ZBounds:
    """Range of z_n = Uc_n + sum_{i in S} V_ni over all S with |S| = C."""
    C = inst.budget
    Vs = np.sort(inst.V, axis=1)
    L = inst.Uc + Vs[:, :C].sum(axis=1)
    U = inst.Uc + Vs[:, -C:].sum(axis=1)
    return ZBounds(_frozen(L), _frozen(U))


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_instance(inst: Instance, path) -> None:
    lines = [f"{inst.n_customers} {inst.n_locations} {inst.budget}"]
    for n in range(inst.n_customers):
        row = [inst.q[n], inst.alpha[n], inst.Uc[n], *inst.V[n]]
        lines.append(" ".join(_fmt(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_instance(path) -> Instance:
    text = Path(path).read_text(encoding="utf-8")
    records = [
        (lineno, line.split())
        for lineno, line in enumerate(text.splitlines(), start=1)
        if line.strip() and not line.lstrip().startswith("#")
    ]
    if not records:
        raise InstanceFormatError("empty instance file")
    lineno, head = records[0]
    try:
        N, m, C = (int(tok) for tok in head)
    except ValueError:
        raise InstanceFormatError(f"line {lineno}: malformed header, expected 'N m C'") from None
    if N < 1 or m < 1 or C < 1:
        raise InstanceFormatError(f"line {lineno}: malformed header, N, m, C must be positive")
    if C > m:
        raise InstanceFormatError(f"line {lineno}: budget exceeds locations ({C} > {m})")
    body = records[1:]
    if len(body) != N:
        last = body[-1][0] if body else lineno
        raise InstanceFormatError(
            f"line {last}: dimension mismatch, expected {N} customer records, found {len(body)}"
        )
    q, alpha, Uc = np.empty(N), np.empty(N), np.empty(N)
    V = np.empty((N, m))
    for n, (lineno, toks) in enumerate(body):
        if len(toks) != m + 3:
            raise InstanceFormatError(
                f"line {lineno}: dimension mismatch, expected {m + 3} values, found {len(toks)}"
            )
        try:
            vals = [float(t) for t in toks]
        except ValueError:
            raise InstanceFormatError(f"line {lineno}: unparseable number") from None
        if not all(math.isfinite(v) for v in vals):
            raise InstanceFormatError(f"line {lineno}: non-finite value")
        q[n], alpha[n], Uc[n] = vals[:3]
        if Uc[n] <= 0:
            raise InstanceFormatError(f"line {lineno}: non-positive competitor mass")
        if q[n] < 0 or alpha[n] < 0:
            raise InstanceFormatError(f"line {lineno}: negative q or alpha")
        V[n] = vals[3:]
        if np.any(V[n] <= 0):
            raise InstanceFormatError(f"line {lineno}: non-positive utility")
    return Instance(V, Uc, q, alpha, C)


def build_from_costs(costs, theta: float, gamma: float, competitor_set, budget: int,
                     q=None, alpha=None) -> Instance:
    """Instance from a cost matrix: V = exp(-theta c), Uc = sum_{j in S^c} exp(-gamma theta c)."""
    costs = np.asarray(costs, dtype=float)
    comp = sorted(set(int(j) for j in competitor_set))
    if not comp:
        raise ValueError("empty competitor set (Uc must be positive)")
    if comp[0] < 0 or comp[-1] >= costs.shape[1]:
        raise ValueError("competitor index out of range")
    V = np.exp(-theta * costs)
    Uc = np.exp(-gamma * theta * costs[:, comp]).sum(axis=1)
    N = costs.shape[0]
    q = np.ones(N) if q is None else np.broadcast_to(np.asarray(q, dtype=float), (N,))
    alpha = np.ones(N) if alpha is None else np.broadcast_to(np.asarray(alpha, dtype=float), (N,))
    return Instance(V, Uc, q, alpha, budget)


def gen_euclidean(n_customers: int, n_locations: int, budget: int, theta: float,
                  gamma: float, seed: int) -> Instance:
    """Customers and sites uniform in the unit square; |S^c| = ceil(m/10) competitors."""
    if min(n_customers, n_locations, budget) < 1 or theta <= 0 or gamma <= 0:
        raise ValueError("generator parameters must be positive")
    rng = np.random.default_rng(seed)
    customers = rng.random((n_customers, 2))
    sites = rng.random((n_locations, 2))
    costs = cdist(customers, sites)
    n_comp = math.ceil(n_locations / 10)
    comp = rng.choice(n_locations, size=n_comp, replace=False)
    return build_from_costs(costs, theta, gamma, comp, budget)


def load_costs_csv(path) -> np.ndarray:
    """Read an N x m cost matrix (comma separated, '#' comments)."""
    costs = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if not np.all(np.isfinite(costs)):
        raise ValueError("cost matrix contains non-finite entries")
    return costs
