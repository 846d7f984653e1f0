"""Mixed-integer linear programming: model container, reference solver, export.

The built-in solver is a plain branch-and-bound over dual-simplex LP
relaxations: best-bound node selection, most-fractional branching with
ties broken by lowest variable index, so repeated runs explore the same
tree. A HiGHS-based backend sits behind the same interface for larger
instances; both finish by re-solving the restricted LP at the chosen
integer assignment, so either backend reports the identical polished
solution for a given assignment.
"""

from __future__ import annotations

import heapq
import math
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

INT_TOL = 1e-6


@dataclass
class ModelBuilder:
    """Incremental construction of a MilpInstance."""

    _obj: list = field(default_factory=list)
    _lo: list = field(default_factory=list)
    _hi: list = field(default_factory=list)
    _int: list = field(default_factory=list)
    _names: list = field(default_factory=list)
    _index: dict = field(default_factory=dict)
    _ub_rows: list = field(default_factory=list)  # (coeffs dict, rhs, name)
    _eq_rows: list = field(default_factory=list)

    def add_var(self, name, lo=0.0, hi=math.inf, integer=False, obj=0.0) -> int:
        if name in self._index:
            raise ValueError(f"duplicate variable {name!r}")
        if lo > hi:
            raise ValueError(f"{name!r}: empty bound range [{lo}, {hi}]")
        idx = len(self._names)
        self._index[name] = idx
        self._names.append(name)
        self._lo.append(float(lo))
        self._hi.append(float(hi))
        self._int.append(bool(integer))
        self._obj.append(float(obj))
        return idx

    def __getitem__(self, name) -> int:
        return self._index[name]

    def add_le(self, coeffs: dict, rhs: float, name: str):
        """sum coeffs[i] * x_i <= rhs"""
        self._ub_rows.append((dict(coeffs), float(rhs), name))

    def add_ge(self, coeffs: dict, rhs: float, name: str):
        self.add_le({i: -a for i, a in coeffs.items()}, -rhs, name)

    def add_eq(self, coeffs: dict, rhs: float, name: str):
        self._eq_rows.append((dict(coeffs), float(rhs), name))

    def build(self) -> "MilpInstance":
        n = len(self._names)

        def pack(rows):
            data, ri, ci, rhs, names = [], [], [], [], []
            for r, (coeffs, b, name) in enumerate(rows):
                for i, a in coeffs.items():
                    if i < 0 or i >= n:
                        raise ValueError(f"row {name!r} references unknown variable {i}")
                    if a != 0.0:
                        data.append(float(a))
                        ri.append(r)
                        ci.append(i)
                rhs.append(b)
                names.append(name)
            mat = sparse.csr_matrix(
                (data, (ri, ci)), shape=(len(rows), n), dtype=float
            )
            return mat, np.array(rhs, dtype=float), tuple(names)

        a_ub, b_ub, ub_names = pack(self._ub_rows)
        a_eq, b_eq, eq_names = pack(self._eq_rows)
        return MilpInstance(
            c=np.array(self._obj, dtype=float),
            a_ub=a_ub,
            b_ub=b_ub,
            a_eq=a_eq,
            b_eq=b_eq,
            lo=np.array(self._lo, dtype=float),
            hi=np.array(self._hi, dtype=float),
            integer=np.array(self._int, dtype=bool),
            var_names=tuple(self._names),
            ub_names=ub_names,
            eq_names=eq_names,
        )


@dataclass(frozen=True)
class MilpInstance:
    """min c.x s.t. a_ub.x <= b_ub, a_eq.x = b_eq, lo <= x <= hi, x_I integer."""

    c: np.ndarray
    a_ub: sparse.csr_matrix
    b_ub: np.ndarray
    a_eq: sparse.csr_matrix
    b_eq: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    integer: np.ndarray
    var_names: tuple[str, ...]
    ub_names: tuple[str, ...]
    eq_names: tuple[str, ...]

    @property
    def n_vars(self) -> int:
        return len(self.c)

    def var(self, name: str) -> int:
        return self.var_names.index(name)

    def row_ub(self, name: str) -> tuple[dict[int, float], float]:
        """Coefficients and rhs of a named <= row (first match)."""
        r = self.ub_names.index(name)
        sl = self.a_ub.getrow(r).tocoo()
        return {int(i): float(v) for i, v in zip(sl.col, sl.data)}, float(self.b_ub[r])

    def row_eq(self, name: str) -> tuple[dict[int, float], float]:
        r = self.eq_names.index(name)
        sl = self.a_eq.getrow(r).tocoo()
        return {int(i): float(v) for i, v in zip(sl.col, sl.data)}, float(self.b_eq[r])

    def check(self, x: np.ndarray, tol: float = 1e-6) -> list[tuple[str, float]]:
        """Relative-tolerance constraint violations at x, as (row, amount)."""
        bad = []
        if len(self.b_ub):
            resid = self.a_ub @ x - self.b_ub
            scale = np.maximum(1.0, np.abs(self.b_ub))
            for r in np.flatnonzero(resid > tol * scale):
                bad.append((self.ub_names[r], float(resid[r])))
        if len(self.b_eq):
            resid = np.abs(self.a_eq @ x - self.b_eq)
            scale = np.maximum(1.0, np.abs(self.b_eq))
            for r in np.flatnonzero(resid > tol * scale):
                bad.append((self.eq_names[r], float(resid[r])))
        for i in np.flatnonzero(x < self.lo - tol * np.maximum(1.0, np.abs(self.lo))):
            bad.append((f"lb:{self.var_names[i]}", float(self.lo[i] - x[i])))
        for i in np.flatnonzero(x > self.hi + tol * np.maximum(1.0, np.abs(self.hi))):
            bad.append((f"ub:{self.var_names[i]}", float(x[i] - self.hi[i])))
        for i in np.flatnonzero(self.integer):
            if abs(x[i] - round(x[i])) > INT_TOL:
                bad.append((f"int:{self.var_names[i]}", float(abs(x[i] - round(x[i])))))
        return bad


@dataclass(frozen=True)
class MilpSolution:
    status: str  # optimal | infeasible | unbounded | node-limit
    x: Optional[np.ndarray]
    objective: float
    bound: float
    gap: float
    nodes: int
    certificate: tuple[str, ...] = ()  # rows needing slack when infeasible

    def value(self, instance: MilpInstance, name: str) -> float:
        return float(self.x[instance.var(name)])


def _relax(inst: MilpInstance, lo, hi):
    res = linprog(
        inst.c,
        A_ub=inst.a_ub if inst.a_ub.shape[0] else None,
        b_ub=inst.b_ub if inst.a_ub.shape[0] else None,
        A_eq=inst.a_eq if inst.a_eq.shape[0] else None,
        b_eq=inst.b_eq if inst.a_eq.shape[0] else None,
        bounds=np.column_stack([lo, hi]),
        method="highs-ds",
    )
    return res


def _certificate(inst: MilpInstance, lo, hi) -> tuple[str, ...]:
    """Minimal-slack elastic relaxation: rows that cannot hold simultaneously."""
    n = inst.n_vars
    n_ub, n_eq = inst.a_ub.shape[0], inst.a_eq.shape[0]
    c = np.concatenate([np.zeros(n), np.ones(n_ub + 2 * n_eq)])
    blocks_ub = sparse.hstack(
        [inst.a_ub, -sparse.eye(n_ub), sparse.csr_matrix((n_ub, 2 * n_eq))]
    ) if n_ub else None
    blocks_eq = sparse.hstack(
        [inst.a_eq, sparse.csr_matrix((n_eq, n_ub)), -sparse.eye(n_eq), sparse.eye(n_eq)]
    ) if n_eq else None
    lo_x = np.concatenate([lo, np.zeros(n_ub + 2 * n_eq)])
    hi_x = np.concatenate([hi, np.full(n_ub + 2 * n_eq, np.inf)])
    res = linprog(
        c,
        A_ub=blocks_ub,
        b_ub=inst.b_ub if n_ub else None,
        A_eq=blocks_eq,
        b_eq=inst.b_eq if n_eq else None,
        bounds=np.column_stack([lo_x, hi_x]),
        method="highs-ds",
    )
    if res.status != 0:
        return ("inconsistent-bounds",)
    slack = res.x[n:]
    rows = []
    for r in range(n_ub):
        if slack[r] > 1e-7:
            rows.append(inst.ub_names[r])
    for r in range(n_eq):
        if slack[n_ub + r] > 1e-7 or slack[n_ub + n_eq + r] > 1e-7:
            rows.append(inst.eq_names[r])
    return tuple(rows)


def _polish(inst: MilpInstance, x_int: np.ndarray) -> Optional[tuple[np.ndarray, float]]:
    """Re-solve the LP with every integer pinned, for a canonical solution."""
    lo, hi = inst.lo.copy(), inst.hi.copy()
    ints = np.flatnonzero(inst.integer)
    lo[ints] = hi[ints] = np.round(x_int[ints])
    res = _relax(inst, lo, hi)
    if res.status != 0:
        return None
    x = res.x.copy()
    x[ints] = np.round(x[ints])
    return x, float(res.fun)


def solve_milp(
    inst: MilpInstance,
    gap: float = 1e-3,
    backend: str = "bb",
    max_nodes: int = 100000,
) -> MilpSolution:
    """Solve to proven relative gap.

    ``backend="bb"`` is the deterministic reference branch-and-bound;
    ``backend="highs"`` delegates the search to HiGHS and is the practical
    choice for study-sized instances. Infeasible models come back with a
    certificate naming an irreducibly conflicting row set.
    """
    if backend == "highs":
        return _solve_highs(inst, gap)
    if backend != "bb":
        raise ValueError(f"unknown backend {backend!r}")

    ints = np.flatnonzero(inst.integer)
    root = _relax(inst, inst.lo, inst.hi)
    if root.status == 2:
        return MilpSolution(
            "infeasible", None, math.inf, math.inf, math.inf, 1,
            _certificate(inst, inst.lo, inst.hi),
        )
    if root.status == 3:
        return MilpSolution("unbounded", None, -math.inf, -math.inf, math.inf, 1)
    if root.status != 0:
        raise RuntimeError(f"relaxation failed: {root.message}")

    best_x: Optional[np.ndarray] = None
    best_obj = math.inf

    # rounding probe: often integer-feasible for commitment counts, and a
    # finite incumbent makes best-bound pruning effective immediately
    if len(ints):
        for rounder in (np.round, np.ceil):
            probe = root.x.copy()
            probe[ints] = np.clip(rounder(probe[ints]), inst.lo[ints], inst.hi[ints])
            polished = _polish(inst, probe)
            if polished is not None and polished[1] < best_obj:
                best_x, best_obj = polished

    counter = 0
    heap = [(root.fun, counter, inst.lo, inst.hi, root.x, root.fun)]
    explored = 0
    status = "optimal"
    while heap:
        node_bound, _, lo, hi, x, obj = heapq.heappop(heap)
        if best_obj < math.inf and node_bound >= best_obj - abs(best_obj) * gap:
            continue
        explored += 1
        if explored > max_nodes:
            status = "node-limit"
            break
        frac = np.abs(x[ints] - np.round(x[ints])) if len(ints) else np.array([])
        if not len(ints) or frac.max() <= INT_TOL:
            polished = _polish(inst, x) if len(ints) else (x, obj)
            if polished is not None and polished[1] < best_obj:
                best_x, best_obj = polished
            continue
        pick = ints[int(np.argmax(frac))]  # most fractional; argmax takes lowest index on ties
        floor_v = math.floor(x[pick] + INT_TOL)
        for lo_v, hi_v in ((lo[pick], float(floor_v)), (float(floor_v + 1), hi[pick])):
            if lo_v > hi_v:
                continue
            c_lo, c_hi = lo.copy(), hi.copy()
            c_lo[pick], c_hi[pick] = lo_v, hi_v
            res = _relax(inst, c_lo, c_hi)
            if res.status != 0:
                continue
            if best_obj < math.inf and res.fun >= best_obj - abs(best_obj) * gap:
                continue
            counter += 1
            heapq.heappush(heap, (res.fun, counter, c_lo, c_hi, res.x, res.fun))

    bound = min([h[0] for h in heap], default=best_obj)
    bound = min(bound, best_obj)
    if best_x is None:
        return MilpSolution(
            "infeasible", None, math.inf, math.inf, math.inf, explored,
            _certificate(inst, inst.lo, inst.hi),
        )
    rel_gap = (best_obj - bound) / max(abs(best_obj), 1e-9)
    return MilpSolution(status, best_x, best_obj, bound, max(rel_gap, 0.0), explored)


def _solve_highs(inst: MilpInstance, gap: float) -> MilpSolution:
    from scipy.optimize import Bounds, LinearConstraint, milp

    constraints = []
    if inst.a_ub.shape[0]:
        constraints.append(LinearConstraint(inst.a_ub, -np.inf, inst.b_ub))
    if inst.a_eq.shape[0]:
        constraints.append(LinearConstraint(inst.a_eq, inst.b_eq, inst.b_eq))
    res = milp(
        c=inst.c,
        constraints=constraints,
        integrality=inst.integer.astype(int),
        bounds=Bounds(inst.lo, inst.hi),
        options={"mip_rel_gap": gap},
    )
    if res.status == 2:
        return MilpSolution(
            "infeasible", None, math.inf, math.inf, math.inf, 0,
            _certificate(inst, inst.lo, inst.hi),
        )
    if res.status == 3:
        return MilpSolution("unbounded", None, -math.inf, -math.inf, math.inf, 0)
    if res.x is None:
        raise RuntimeError(f"mip backend failed: {res.message}")
    polished = _polish(inst, res.x)
    if polished is None:
        raise RuntimeError("mip backend returned an assignment the LP rejects")
    x, obj = polished
    bound = float(res.mip_dual_bound) if res.mip_dual_bound is not None else obj
    rel_gap = (obj - bound) / max(abs(obj), 1e-9)
    return MilpSolution("optimal", x, obj, bound, max(rel_gap, 0.0), int(res.mip_node_count or 0))


def _lp_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.]", "_", name)


def export_lp(inst: MilpInstance) -> str:
    """Serialize in the LP text interchange format for external cross-checks."""
    lines = ["Minimize", " obj:"]
    terms = [
        f" {c:+.12g} {_lp_name(inst.var_names[i])}"
        for i, c in enumerate(inst.c)
        if c != 0.0
    ]
    lines[-1] += "".join(terms) if terms else " 0 " + _lp_name(inst.var_names[0])
    lines.append("Subject To")

    def emit_rows(mat, rhs, names, op):
        for r in range(mat.shape[0]):
            sl = mat.getrow(r).tocoo()
            body = "".join(
                f" {v:+.12g} {_lp_name(inst.var_names[i])}" for i, v in zip(sl.col, sl.data)
            )
            if not body:
                continue
            lines.append(f" {_lp_name(names[r])}_{r}:{body} {op} {rhs[r]:.12g}")

    emit_rows(inst.a_ub, inst.b_ub, inst.ub_names, "<=")
    emit_rows(inst.a_eq, inst.b_eq, inst.eq_names, "=")
    lines.append("Bounds")
    for i, name in enumerate(inst.var_names):
        lo, hi = inst.lo[i], inst.hi[i]
        lo_s = "-inf" if math.isinf(lo) else f"{lo:.12g}"
        hi_s = "+inf" if math.isinf(hi) else f"{hi:.12g}"
        lines.append(f" {lo_s} <= {_lp_name(name)} <= {hi_s}")
    generals = [_lp_name(inst.var_names[i]) for i in np.flatnonzero(inst.integer)]
    if generals:
        lines.append("Generals")
        lines.extend(f" {g}" for g in generals)
    lines.append("End")
    return "\n".join(lines) + "\n"
