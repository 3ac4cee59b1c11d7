"""Dense two-phase simplex.

Small, self-contained LP solver used by the offline and online schedulers.
Models are built row by row with sparse ``{column: coefficient}`` dicts and
densified only at solve time.

Pivoting uses Dantzig's rule and switches to Bland's rule once the pivot
count passes ``10 * (m + n)`` so degenerate scheduling LPs cannot cycle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

FEAS_TOL = 1e-7
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


RELATIONS = ("<=", ">=", "==")


@dataclass
class LinearProgram:
    """``min`` (or ``max``) ``c @ x`` subject to linear rows and simple bounds."""

    sense: str = "min"
    cost: list = field(default_factory=list)
    lower: list = field(default_factory=list)
    upper: list = field(default_factory=list)
    names: list = field(default_factory=list)
    rows: list = field(default_factory=list)  # (coeffs: dict, relation, rhs)
    _index: dict = field(default_factory=dict, repr=False)

    @property
    def num_vars(self) -> int:
        return len(self.cost)

    def add_var(self, name=None, cost=0.0, lower=0.0, upper=None) -> int:
        j = len(self.cost)
        self.cost.append(float(cost))
        self.lower.append(float(lower))
        self.upper.append(None if upper is None else float(upper))
        self.names.append(name if name is not None else j)
        if name is not None:
            if name in self._index:
                raise ValueError(f"duplicate variable name {name!r}")
            self._index[name] = j
        return j

    def var(self, name) -> int:
        return self._index[name]

    def add_constraint(self, coeffs, relation: str, rhs: float) -> int:
        if relation not in RELATIONS:
            raise ValueError(f"unknown relation {relation!r}")
        if not isinstance(coeffs, dict):
            coeffs = np.asarray(coeffs, dtype=float)
            if coeffs.shape != (self.num_vars,):
                raise ValueError(
                    f"row width {coeffs.shape} does not match {self.num_vars} variables")
            coeffs = {j: v for j, v in enumerate(coeffs) if v != 0.0}
        for j in coeffs:
            if not 0 <= j < self.num_vars:
                raise ValueError(f"row references unknown column {j}")
        self.rows.append((dict(coeffs), relation, float(rhs)))
        return len(self.rows) - 1

    @classmethod
    def from_arrays(cls, c, A_ub=None, b_ub=None, A_eq=None, b_eq=None,
                    A_lb=None, b_lb=None, sense="min", lower=None, upper=None):
        c = np.asarray(c, dtype=float)
        lp = cls(sense=sense)
        n = len(c)
        for j in range(n):
            lo = 0.0 if lower is None else lower[j]
            hi = None if upper is None else upper[j]
            lp.add_var(cost=c[j], lower=lo, upper=hi)
        for A, b, rel in ((A_ub, b_ub, "<="), (A_lb, b_lb, ">="), (A_eq, b_eq, "==")):
            if A is None:
                continue
            A = np.atleast_2d(np.asarray(A, dtype=float))
            if A.shape[1] != n:
                raise ValueError(f"constraint matrix has {A.shape[1]} columns, expected {n}")
            for row, rhs in zip(A, b):
                lp.add_constraint(row, rel, rhs)
        return lp

    def values_by_name(self, x) -> dict:
        return {name: x[j] for j, name in enumerate(self.names)}


@dataclass
class LpResult:
    status: Status
    objective: float = math.nan
    x: np.ndarray | None = None
    duals: np.ndarray | None = None  # one multiplier per row of the LP
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def _pivot(T, r, j):
    prow = T[r] / T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    nz = np.nonzero(np.abs(col) > 0.0)[0]
    if len(nz):
        T[nz] -= np.outer(col[nz], prow)
    T[r] = prow


def _iterate(T, basis, allowed, max_dantzig, counter):
    """Run simplex pivots on tableau ``T`` until optimal or unbounded."""
    m = T.shape[0] - 1
    cols = np.nonzero(allowed)[0]
    while True:
        d = T[-1, cols]
        bland = counter[0] >= max_dantzig
        if bland:
            neg = np.nonzero(d < -OPT_TOL)[0]
            if not len(neg):
                return Status.OPTIMAL
            j = cols[neg[0]]
        else:
            k = int(np.argmin(d))
            if d[k] >= -OPT_TOL:
                return Status.OPTIMAL
            j = cols[k]
        colj = T[:m, j]
        pos = np.nonzero(colj > PIVOT_TOL)[0]
        if not len(pos):
            return Status.UNBOUNDED
        ratios = T[pos, -1] / colj[pos]
        best = ratios.min()
        ties = pos[ratios <= best + 1e-12]
        if bland:
            r = ties[np.argmin(basis[ties])]
        else:
            r = ties[np.argmax(colj[ties])]
        _pivot(T, r, j)
        basis[r] = j
        counter[0] += 1
        if counter[0] > 50 * max_dantzig + 10000:
            raise RuntimeError("simplex iteration limit exceeded")


def solve(lp: LinearProgram) -> LpResult:
    n = lp.num_vars
    c = np.array(lp.cost, dtype=float)
    if lp.sense == "max":
        c = -c
    elif lp.sense != "min":
        raise ValueError(f"unknown sense {lp.sense!r}")
    lower = np.array(lp.lower, dtype=float)

    # rows of the standard form: the model rows then one row per finite upper bound
    rows = list(lp.rows)
    for j, u in enumerate(lp.upper):
        if u is not None:
            rows.append(({j: 1.0}, "<=", u))
    m = len(rows)

    A = np.zeros((m, n))
    b = np.zeros(m)
    rel = []
    for k, (coeffs, relation, rhs) in enumerate(rows):
        for j, v in coeffs.items():
            A[k, j] = v
        b[k] = rhs
        rel.append(relation)
    b = b - A @ lower  # shift x = x' + lower

    n_slack = sum(1 for r_ in rel if r_ != "==")
    S = np.zeros((m, n_slack))
    sign = np.ones(m)
    s = 0
    slack_of = [-1] * m
    for k, r_ in enumerate(rel):
        if r_ == "<=":
            S[k, s] = 1.0
        elif r_ == ">=":
            S[k, s] = -1.0
        if r_ != "==":
            slack_of[k] = s
            s += 1
        if b[k] < 0:
            sign[k] = -1.0
    A_std = np.hstack([A, S]) * sign[:, None]
    b_std = b * sign

    basis = np.full(m, -1)
    art_rows = []
    for k in range(m):
        sk = slack_of[k]
        if sk >= 0 and A_std[k, n + sk] > 0:
            basis[k] = n + sk
        else:
            art_rows.append(k)
    n_art = len(art_rows)
    width = n + n_slack + n_art
    T = np.zeros((m + 1, width + 1))
    T[:m, : n + n_slack] = A_std
    for a, k in enumerate(art_rows):
        T[k, n + n_slack + a] = 1.0
        basis[k] = n + n_slack + a
    T[:m, -1] = b_std

    max_dantzig = 10 * (m + width)
    counter = [0]

    if n_art:
        T[-1, n + n_slack: width] = 1.0
        for k in art_rows:
            T[-1] -= T[k]
        allowed = np.ones(width, dtype=bool)
        st = _iterate(T, basis, allowed, max_dantzig, counter)
        assert st is Status.OPTIMAL
        infeas = -T[-1, -1]
        if infeas > FEAS_TOL * max(1.0, np.abs(b_std).max(initial=0.0)):
            return LpResult(Status.INFEASIBLE, iterations=counter[0])
        # drive remaining artificials out of the basis
        keep = np.ones(m, dtype=bool)
        for k in range(m):
            if basis[k] >= n + n_slack:
                cand = np.nonzero(np.abs(T[k, : n + n_slack]) > PIVOT_TOL)[0]
                if len(cand):
                    _pivot(T, k, cand[0])
                    basis[k] = cand[0]
                else:
                    keep[k] = False
        if not keep.all():
            T = np.vstack([T[:m][keep], T[-1:]])
            basis = basis[keep]
            m = len(basis)

    # phase 2 over structural + slack columns
    T[-1, :] = 0.0
    T[-1, :n] = c
    for k in range(m):
        cb = T[-1, basis[k]]
        if cb != 0.0:
            T[-1] -= cb * T[k]
    allowed = np.zeros(width, dtype=bool)
    allowed[: n + n_slack] = True
    st = _iterate(T, basis, allowed, max_dantzig, counter)
    if st is Status.UNBOUNDED:
        return LpResult(Status.UNBOUNDED, iterations=counter[0])

    xs = np.zeros(width)
    xs[basis] = T[:m, -1]
    x = np.maximum(xs[:n], 0.0) + lower
    obj = float(np.array(lp.cost) @ x)

    # multipliers y solve B^T y = c_B over the surviving rows
    c_full = np.concatenate([c, np.zeros(n_slack)])
    kept_rows = np.arange(len(rows)) if not n_art else np.nonzero(keep)[0]
    B = A_std[np.ix_(kept_rows, basis)]
    y = np.zeros(len(rows))
    try:
        y[kept_rows] = np.linalg.solve(B.T, c_full[basis])
    except np.linalg.LinAlgError:
        y[kept_rows] = np.linalg.lstsq(B.T, c_full[basis], rcond=None)[0]
    y *= sign
    if lp.sense == "max":
        y = -y
    return LpResult(Status.OPTIMAL, obj, x, y, counter[0])
