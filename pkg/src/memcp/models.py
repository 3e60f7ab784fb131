"""Solver-agnostic MILP models for the linearized formulations, with LP-file I/O.

Variable names follow a fixed scheme so models survive a trip through any
LP-reading solver: ``x{i}`` locations, ``z{n}`` attraction mass, ``t{n}``
per-customer value, ``y{n}_{k}`` / ``r{n}_{k}`` segment indicator and fill.
All models maximize.
"""
from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .objective import CONCAVE, ObjectiveCtx
from .pwl import PwlApprox

BINARY_TOL = 1e-6
STATUSES = ("optimal", "feasible", "infeasible", "timeout", "error")


@dataclass(frozen=True, eq=False)
class Constraint:
    name: str
    idx: np.ndarray
    coef: np.ndarray
    sense: str  # "<=", "=", ">="
    rhs: float


@dataclass(frozen=True, eq=False)
class MilpModel:
    names: tuple
    lower: np.ndarray
    upper: np.ndarray
    binary: np.ndarray  # bool per variable
    constraints: tuple
    objective: np.ndarray
    offset: float = 0.0
    roles: dict = field(default_factory=dict)  # role -> array of variable indices
    label: str = ""

    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def n_binaries(self) -> int:
        return int(self.binary.sum())

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    def index(self, name: str) -> int:
        return self._lookup[name]

    @property
    def _lookup(self):
        cache = self.__dict__.get("_lookup_cache")
        if cache is None:
            cache = {nm: k for k, nm in enumerate(self.names)}
            object.__setattr__(self, "_lookup_cache", cache)
        return cache

    def evaluate(self, values: np.ndarray) -> float:
        return float(self.objective @ values + self.offset)

    def max_violation(self, values: np.ndarray) -> float:
        """Largest constraint or bound violation of a full assignment."""
        worst = float(max(np.max(self.lower - values, initial=0.0), np.max(values - self.upper, initial=0.0)))
        for c in self.constraints:
            lhs = float(c.coef @ values[c.idx])
            if c.sense == "<=":
                worst = max(worst, lhs - c.rhs)
            elif c.sense == ">=":
                worst = max(worst, c.rhs - lhs)
            else:
                worst = max(worst, abs(lhs - c.rhs))
        return worst


@dataclass
class Solution:
    values: dict
    objective: float = float("nan")
    status: str = "optimal"
    message: str = ""

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")

    def vector(self, model: MilpModel) -> np.ndarray:
        return np.array([self.values.get(nm, 0.0) for nm in model.names])

    def chosen(self, model: MilpModel) -> list:
        xs = model.roles.get("x", ())
        return [i for i, k in enumerate(xs) if self.values.get(model.names[k], 0.0) > 0.5]

    def binary_violation(self, model: MilpModel) -> float:
        worst = 0.0
        for k in np.flatnonzero(model.binary):
            v = self.values.get(model.names[k], 0.0)
            worst = max(worst, min(abs(v), abs(v - 1.0)))
        return worst

    def check_binaries(self, model: MilpModel, tol: float = BINARY_TOL) -> None:
        if self.status in ("optimal", "feasible"):
            viol = self.binary_violation(model)
            if viol > tol:
                raise ValueError(f"binary variable off by {viol:.3g} from {{0,1}}")


class _Builder:
    def __init__(self):
        self.names, self.lower, self.upper, self.binary, self.obj = [], [], [], [], []
        self.cons = []
        self.roles = {}

    def var(self, name, lo=0.0, hi=1.0, binary=False, obj=0.0, role=None):
        k = len(self.names)
        self.names.append(name)
        self.lower.append(lo)
        self.upper.append(hi)
        self.binary.append(binary)
        self.obj.append(obj)
        if role:
            self.roles.setdefault(role, []).append(k)
        return k

    def con(self, name, terms, sense, rhs):
        idx = np.array([k for k, _ in terms], dtype=int)
        coef = np.array([c for _, c in terms], dtype=float)
        if not np.all(np.isfinite(coef)) or not math.isfinite(rhs):
            raise ValueError(f"non-finite coefficient in {name}")
        self.cons.append(Constraint(name, idx, coef, sense, float(rhs)))

    def build(self, offset=0.0, label=""):
        obj = np.array(self.obj, dtype=float)
        if not np.all(np.isfinite(obj)):
            raise ValueError("non-finite objective coefficient")
        return MilpModel(
            tuple(self.names), np.array(self.lower, dtype=float), np.array(self.upper, dtype=float),
            np.array(self.binary, dtype=bool), tuple(self.cons), obj, float(offset),
            {r: np.array(v, dtype=int) for r, v in self.roles.items()}, label,
        )


def _locations_and_mass(b: _Builder, ctx: ObjectiveCtx):
    """x, z, budget and linking rows shared by every formulation."""
    inst = ctx.inst
    xs = [b.var(f"x{i}", binary=True, role="x") for i in range(inst.n_locations)]
    zs = [b.var(f"z{n}", float(ctx.bounds.L[n]), float(ctx.bounds.U[n]), role="z")
          for n in range(inst.n_customers)]
    b.con("budget", [(k, 1.0) for k in xs], "=", inst.budget)
    for n in range(inst.n_customers):
        terms = [(zs[n], 1.0)] + [(xs[i], -float(inst.V[n, i])) for i in range(inst.n_locations)]
        b.con(f"lk{n}", terms, "=", float(inst.Uc[n]))
    return xs, zs


def build_ia_milp(ctx: ObjectiveCtx, pwl: PwlApprox) -> MilpModel:
    """Chord-envelope model: t_n <= every chord line, no binaries beyond x."""
    if not pwl.all_concave():
        raise ValueError("IA-MILP needs a fully concave approximation")
    b = _Builder()
    _, zs = _locations_and_mass(b, ctx)
    for n, row in enumerate(pwl.rows):
        t = b.var(f"t{n}", -math.inf, math.inf, obj=1.0, role="t")
        if row.n_segments == 0:
            b.con(f"ch{n}_0", [(t, 1.0)], "<=", float(row.psi[0]))
        for k in range(row.n_segments):
            g = float(row.gamma[k])
            b.con(f"ch{n}_{k}", [(t, 1.0), (zs[n], -g)], "<=", float(row.psi[k] - g * row.c[k]))
    return b.build(label="ia")


def _relaxable(row, k: int, keep_run_exits: bool) -> bool:
    if row.curvature[k] != CONCAVE:
        return False
    if keep_run_exits and k + 1 < row.n_segments and row.curvature[k + 1] != CONCAVE:
        return False
    return True


def _segment_model(ctx: ObjectiveCtx, pwl: PwlApprox, relax_concave: bool, label: str,
                   keep_run_exits: bool = False) -> MilpModel:
    b = _Builder()
    _, zs = _locations_and_mass(b, ctx)
    offset = 0.0
    for n, row in enumerate(pwl.rows):
        offset += float(row.psi[0])
        widths = np.diff(row.c)
        ys, rs = [], []
        for k in range(row.n_segments):
            relax = relax_concave and _relaxable(row, k, keep_run_exits)
            ys.append(b.var(f"y{n}_{k}", binary=not relax, role="y"))
            rs.append(b.var(f"r{n}_{k}", obj=float(row.gamma[k] * widths[k]), role="r"))
        for k in range(row.n_segments):
            b.con(f"fa{n}_{k}", [(rs[k], 1.0), (ys[k], -1.0)], ">=", 0.0)
            if k + 1 < row.n_segments:
                b.con(f"or{n}_{k}", [(ys[k], 1.0), (ys[k + 1], -1.0)], ">=", 0.0)
                b.con(f"fb{n}_{k}", [(rs[k + 1], 1.0), (ys[k], -1.0)], "<=", 0.0)
        terms = [(zs[n], 1.0)] + [(rs[k], -float(widths[k])) for k in range(row.n_segments)]
        b.con(f"fz{n}", terms, "=", float(row.c[0]))
    return b.build(offset=offset, label=label)


def build_milp2(ctx: ObjectiveCtx, pwl: PwlApprox) -> MilpModel:
    """Incremental segment model with one binary indicator per segment."""
    return _segment_model(ctx, pwl, relax_concave=False, label="milp2")


def build_milp3(ctx: ObjectiveCtx, pwl: PwlApprox, keep_run_exits: bool = False) -> MilpModel:
    """As :func:`build_milp2` but indicators on concave segments are continuous.

    Relaxing the indicator of the last concave segment before a convex one
    lets the fill of that (steeper) convex segment start before the concave
    run is full, so the model can overstate the chord value. With
    ``keep_run_exits=True`` those indicators stay binary and the model is
    exact; the default relaxes every concave indicator.
    """
    return _segment_model(ctx, pwl, relax_concave=True, label="milp3", keep_run_exits=keep_run_exits)


def segment_objective(row, r: np.ndarray) -> float:
    """Objective contribution of one customer for a fill vector r."""
    return float(row.psi[0] + np.sum(row.gamma * np.diff(row.c) * r))


def build_oa_master(ctx: ObjectiveCtx, cuts, big_m=None) -> MilpModel:
    """Tangent-cut master; ``cuts`` holds ``(n, zbar, value, slope)`` tuples.

    Each t_n is capped by ``big_m[n]`` (default Psi_n(U_n) + 1) so the model
    stays bounded before any cut reaches that customer.
    """
    inst = ctx.inst
    if big_m is None:
        big_m = ctx.psi_all(np.asarray(ctx.bounds.U, dtype=float)) + 1.0
    big_m = np.broadcast_to(np.asarray(big_m, dtype=float), (inst.n_customers,))
    b = _Builder()
    _, zs = _locations_and_mass(b, ctx)
    ts = [b.var(f"t{n}", -math.inf, float(big_m[n]), obj=1.0, role="t") for n in range(inst.n_customers)]
    for j, (n, zbar, val, slope) in enumerate(cuts):
        if not (math.isfinite(slope) and math.isfinite(val)):
            raise ValueError("cut with non-finite value or slope")
        b.con(f"cut{j}", [(ts[n], 1.0), (zs[n], -float(slope))], "<=", float(val - slope * zbar))
    return b.build(label="oa")


# ---------------------------------------------------------------- LP text I/O

def _num(x: float) -> str:
    return format(float(x), ".17g")


def _linear(terms, width=8):
    parts = []
    for coef, name in terms:
        sign = "-" if coef < 0 else "+"
        parts.append(f"{sign} {_num(abs(coef))} {name}")
    if parts and parts[0].startswith("+ "):
        parts[0] = parts[0][2:]
    lines = [" ".join(parts[i:i + width]) for i in range(0, len(parts), width)]
    return "\n   ".join(lines)


def write_lp(model: MilpModel, path) -> None:
    """Write the model in CPLEX LP text format.

    A nonzero objective constant is carried by the fixed variable ``konst``
    so that readers without objective-constant support stay exact.
    """
    for nm in model.names:
        if len(nm) > 16:
            raise ValueError(f"variable name {nm!r} longer than 16 characters")
    terms = [(c, model.names[k]) for k, c in enumerate(model.objective) if c != 0.0]
    if model.offset != 0.0:
        terms.append((model.offset, "konst"))
    out = [f"\\ model {model.label}".rstrip(), "Maximize", " obj: " + (_linear(terms) or "0 x0"), "Subject To"]
    for c in model.constraints:
        body = _linear([(float(a), model.names[k]) for k, a in zip(c.idx, c.coef)]) or "0 x0"
        out.append(f" {c.name}: {body} {c.sense} {_num(c.rhs)}")
    out.append("Bounds")
    for nm, lo, hi, isbin in zip(model.names, model.lower, model.upper, model.binary):
        if isbin:
            continue
        if math.isinf(lo) and math.isinf(hi):
            out.append(f" {nm} free")
        else:
            lo_s = "-inf" if math.isinf(lo) else _num(lo)
            hi_s = "+inf" if math.isinf(hi) else _num(hi)
            out.append(f" {lo_s} <= {nm} <= {hi_s}")
    if model.offset != 0.0:
        out.append(" konst = 1")
    bins = [nm for nm, isbin in zip(model.names, model.binary) if isbin]
    if bins:
        out.append("Binaries")
        out.extend(" " + " ".join(bins[i:i + 10]) for i in range(0, len(bins), 10))
    out.append("End")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


_SECTIONS = {
    "maximize": "max", "maximum": "max", "max": "max",
    "minimize": "min", "minimum": "min", "min": "min",
    "subject to": "st", "such that": "st", "st": "st", "s.t.": "st",
    "bounds": "bounds", "bound": "bounds",
    "binaries": "bin", "binary": "bin", "bin": "bin",
    "generals": "gen", "general": "gen", "gen": "gen",
    "end": "end",
}
_TOKEN = re.compile(r"\s*([<>]=?|=[<>]?|[+-]|[^\s<>=+-]+)")


def _tokens(text):
    return [m.group(1) for m in _TOKEN.finditer(text) if m.group(1)]


def _is_number(tok):
    try:
        float(tok)
    except ValueError:
        return tok.lower() in ("inf", "infinity")
    return True


def _split_expr(toks):
    """Linear expression tokens -> (terms dict, constant); bare numbers count as constants."""
    terms, const = {}, 0.0
    sign, coef = 1.0, None
    for tok in toks:
        if tok in ("+", "-"):
            if coef is not None:
                const += sign * coef
                sign, coef = 1.0, None
            sign *= -1.0 if tok == "-" else 1.0
        elif _is_number(tok):
            coef = float(tok)
        else:
            terms[tok] = terms.get(tok, 0.0) + sign * (1.0 if coef is None else coef)
            sign, coef = 1.0, None
    if coef is not None:
        const += sign * coef
    return terms, const


def read_lp(path) -> MilpModel:
    """Parse the LP subset produced by :func:`write_lp` (plus common variants)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    sense, section = None, None
    chunks = {"obj": [], "st": [], "bounds": [], "bin": [], "gen": []}
    for raw in lines:
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        key = _SECTIONS.get(line.lower())
        if key in ("max", "min"):
            sense, section = key, "obj"
            continue
        if key is not None:
            section = key
            if key == "end":
                break
            continue
        if section is None:
            raise ValueError(f"content before objective section: {line!r}")
        chunks[section].append(line)

    names, index = [], {}

    def var(nm):
        if nm not in index:
            index[nm] = len(names)
            names.append(nm)
        return index[nm]

    obj_text = " ".join(chunks["obj"])
    if ":" in obj_text:
        obj_text = obj_text.split(":", 1)[1]
    obj_terms, obj_const = _split_expr(_tokens(obj_text))
    for nm in obj_terms:
        var(nm)

    # constraints may span lines: a new one starts at "name:" or after a rhs
    cons_raw, cur = [], []
    for line in chunks["st"]:
        cur.append(line)
        if re.search(r"(<=|>=|=<|=>|<|>|=)\s*[-+]?\s*[\d.eE+-]+\s*$", line):
            cons_raw.append(" ".join(cur))
            cur = []
    if cur:
        raise ValueError(f"unterminated constraint: {' '.join(cur)!r}")
    parsed = []
    for k, text in enumerate(cons_raw):
        name = f"c{k}"
        if ":" in text:
            name, text = (s.strip() for s in text.split(":", 1))
        m = re.match(r"(.*?)(<=|>=|=<|=>|<|>|=)\s*([-+]?\s*[\d.eE+-]+)\s*$", text)
        if not m:
            raise ValueError(f"bad constraint {text!r}")
        lhs, op, rhs = m.groups()
        op = {"=<": "<=", "<": "<=", "=>": ">=", ">": ">="}.get(op, op)
        terms, const = _split_expr(_tokens(lhs))
        for nm in terms:
            var(nm)
        parsed.append((name, terms, op, float(rhs.replace(" ", "")) - const))

    bounds = {}
    for line in chunks["bounds"]:
        toks = line.split()
        low = line.lower()
        if low.endswith(" free"):
            bounds[toks[0]] = (-math.inf, math.inf)
            var(toks[0])
            continue
        m = re.match(r"^(\S+)\s*<=\s*(\S+)\s*<=\s*(\S+)$", line)
        if m:
            lo, nm, hi = m.groups()
            bounds[nm] = (float(lo), float(hi))
            var(nm)
            continue
        m = re.match(r"^(\S+)\s*(<=|>=|=)\s*(\S+)$", line)
        if not m:
            raise ValueError(f"bad bound {line!r}")
        a, op, c = m.groups()
        nm, val, flip = (a, float(c), False) if not _is_number(a) else (c, float(a), True)
        lo, hi = bounds.get(nm, (0.0, math.inf))
        if op == "=":
            lo = hi = val
        elif (op == "<=") != flip:
            hi = val
        else:
            lo = val
        bounds[nm] = (lo, hi)
        var(nm)
    bins = set()
    for line in chunks["bin"] + chunks["gen"]:
        for nm in line.split():
            bins.add(nm)
            var(nm)

    nv = len(names)
    lower, upper = np.zeros(nv), np.full(nv, math.inf)
    binary = np.zeros(nv, dtype=bool)
    for nm, (lo, hi) in bounds.items():
        lower[index[nm]], upper[index[nm]] = lo, hi
    for nm in bins:
        k = index[nm]
        binary[k] = True
        lower[k], upper[k] = max(lower[k], 0.0), min(upper[k], 1.0)
    obj = np.zeros(nv)
    for nm, c in obj_terms.items():
        obj[index[nm]] = c
    if sense == "min":
        obj, obj_const = -obj, -obj_const
    cons = tuple(
        Constraint(name, np.array([index[nm] for nm in terms], dtype=int),
                   np.array(list(terms.values()), dtype=float), op, rhs)
        for name, terms, op, rhs in parsed
    )
    roles = {}
    for k, nm in enumerate(names):
        m = re.match(r"^([xztyr])\d", nm)
        if m:
            roles.setdefault(m.group(1), []).append(k)
    roles = {r: np.array(v, dtype=int) for r, v in roles.items()}
    return MilpModel(tuple(names), lower, upper, binary, cons, obj, float(obj_const), roles, "lp")


def write_solution(sol: Solution, path) -> None:
    out = [f"# status: {sol.status}"]
    if math.isfinite(sol.objective):
        out.append(f"# objective: {_num(sol.objective)}")
    out.extend(f"{nm} {_num(v)}" for nm, v in sol.values.items())
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def read_solution(path, model: MilpModel) -> Solution:
    """Parse ``name value`` lines.

    ``#`` starts a comment; ``# status: s`` and ``# objective: v`` are read as
    metadata. Unknown names are ignored; model variables missing from the
    file default to 0 with a warning.
    """
    known = set(model.names)
    values, status, objective = {}, "optimal", float("nan")
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = re.match(r"#\s*(status|objective)\s*:\s*(\S+)", line, re.I)
            if m:
                key, val = m.group(1).lower(), m.group(2)
                if key == "status":
                    if val not in STATUSES:
                        raise ValueError(f"line {lineno}: unknown status {val!r}")
                    status = val
                else:
                    try:
                        objective = float(val)
                    except ValueError:
                        raise ValueError(f"line {lineno}: bad objective {val!r}") from None
            continue
        toks = line.split()
        if len(toks) != 2:
            raise ValueError(f"line {lineno}: expected 'name value', got {line!r}")
        try:
            val = float(toks[1])
        except ValueError:
            raise ValueError(f"line {lineno}: bad value {toks[1]!r}") from None
        if toks[0] in known:
            values[toks[0]] = val
    missing = [nm for nm in model.names if nm not in values]
    if missing and status in ("optimal", "feasible"):
        warnings.warn(f"{len(missing)} variables missing from solution, set to 0 (first: {missing[0]})",
                      stacklevel=2)
    for nm in missing:
        values[nm] = 0.0
    if status in ("optimal", "feasible") and not math.isfinite(objective):
        objective = model.evaluate(np.array([values[nm] for nm in model.names]))
    return Solution(values, objective, status)


def solve_scipy(model: MilpModel, time_limit: float | None = None, mip_rel_gap: float = 1e-10) -> Solution:
    """Solve with scipy's bundled HiGHS MILP."""
    from scipy.optimize import Bounds, LinearConstraint, milp
    from scipy.sparse import coo_matrix

    rows, cols, data, lo, hi = [], [], [], [], []
    for r, c in enumerate(model.constraints):
        rows.extend([r] * len(c.idx))
        cols.extend(c.idx.tolist())
        data.extend(c.coef.tolist())
        lo.append(-math.inf if c.sense == "<=" else c.rhs)
        hi.append(math.inf if c.sense == ">=" else c.rhs)
    cons = []
    if model.constraints:
        A = coo_matrix((data, (rows, cols)), shape=(len(model.constraints), model.n_vars)).tocsr()
        cons.append(LinearConstraint(A, lo, hi))
    opts = {"mip_rel_gap": mip_rel_gap, "disp": False}
    if time_limit is not None:
        opts["time_limit"] = float(time_limit)
    res = milp(-model.objective, constraints=cons, integrality=model.binary.astype(int),
               bounds=Bounds(model.lower, model.upper), options=opts)
    if res.x is None:
        status = "infeasible" if res.status == 2 else ("timeout" if res.status == 1 else "error")
        return Solution({}, float("nan"), status, res.message)
    x = np.where(model.binary, np.round(res.x), res.x)
    status = "optimal" if res.status == 0 else ("timeout" if res.status == 1 else "feasible")
    return Solution(dict(zip(model.names, x.tolist())), model.evaluate(x), status, res.message)
