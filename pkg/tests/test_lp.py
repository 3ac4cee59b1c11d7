import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asynccache import lp as lpcore
from asynccache.lp import LinearProgram, Status, solve


def test_single_lower_bound():
    prog = LinearProgram()
    x = prog.add_var("x", cost=1.0)
    prog.add_constraint({x: 1.0}, ">=", 3.0)
    res = solve(prog)
    assert res.optimal
    assert res.objective == pytest.approx(3.0)
    assert res.x[0] == pytest.approx(3.0)


def test_infeasible():
    prog = LinearProgram()
    x = prog.add_var("x")
    prog.add_constraint({x: 1.0}, "<=", -1.0)
    assert solve(prog).status is Status.INFEASIBLE


def test_unbounded():
    prog = LinearProgram(sense="max")
    x = prog.add_var("x", cost=1.0)
    prog.add_constraint({x: 1.0}, ">=", 1.0)
    assert solve(prog).status is Status.UNBOUNDED


def test_bounds_and_names():
    prog = LinearProgram(sense="max")
    a = prog.add_var("a", cost=2.0, upper=1.5)
    b = prog.add_var("b", cost=1.0, lower=1.0)
    prog.add_constraint({a: 1.0, b: 1.0}, "<=", 4.0)
    res = solve(prog)
    assert res.objective == pytest.approx(5.5)
    assert prog.values_by_name(res.x) == pytest.approx({"a": 1.5, "b": 2.5})
    with pytest.raises(ValueError):
        prog.add_var("a")


def test_shape_errors():
    prog = LinearProgram()
    prog.add_var()
    with pytest.raises(ValueError):
        prog.add_constraint([1.0, 2.0], "<=", 1.0)
    with pytest.raises(ValueError):
        prog.add_constraint({3: 1.0}, "<=", 1.0)
    with pytest.raises(ValueError):
        LinearProgram.from_arrays([1, 1], A_ub=[[1, 1, 1]], b_ub=[1])


def test_degenerate_transport():
    # many ties; the Bland fallback must still terminate
    n = 4
    c = np.ones(n * n)
    A_eq, b_eq = [], []
    for i in range(n):
        row = np.zeros(n * n)
        row[i * n:(i + 1) * n] = 1
        A_eq.append(row)
        b_eq.append(1)
        col = np.zeros(n * n)
        col[i::n] = 1
        A_eq.append(col)
        b_eq.append(1)
    res = solve(LinearProgram.from_arrays(c, A_eq=A_eq, b_eq=b_eq))
    assert res.optimal and res.objective == pytest.approx(n)


def _vertex_oracle(c, A, b, rel):
    """Minimum over all basic feasible points of ``{x >= 0, A x rel b}``."""
    m, n = A.shape
    G = np.vstack([A, np.eye(n)])
    h = np.concatenate([b, np.zeros(n)])
    best = None
    for active in itertools.combinations(range(m + n), n):
        sub = G[list(active)]
        if abs(np.linalg.det(sub)) < 1e-9:
            continue
        x = np.linalg.solve(sub, h[list(active)])
        if (x < -1e-9).any():
            continue
        lhs = A @ x
        ok = all((r == "<=" and v <= bb + 1e-9) or (r == ">=" and v >= bb - 1e-9)
                 or (r == "==" and abs(v - bb) <= 1e-9) for v, bb, r in zip(lhs, b, rel))
        if ok:
            val = float(c @ x)
            best = val if best is None else min(best, val)
    return best


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    m = int(rng.integers(1, 5))
    c = rng.integers(0, 6, size=n).astype(float)  # nonnegative costs keep the minimum finite
    A = rng.integers(-3, 4, size=(m, n)).astype(float)
    b = rng.integers(-4, 8, size=m).astype(float)
    rel = [("<=", ">=", "==")[k] for k in rng.integers(0, 3, size=m)]
    prog = LinearProgram()
    for j in range(n):
        prog.add_var(cost=c[j])
    for k in range(m):
        prog.add_constraint(A[k], rel[k], b[k])
    res = solve(prog)
    want = _vertex_oracle(c, A, b, rel)
    if want is None:
        assert res.status is Status.INFEASIBLE
        return
    assert res.optimal
    assert res.objective == pytest.approx(want, abs=1e-6)
    x = res.x
    assert (x >= -1e-9).all()
    for k in range(m):
        v = A[k] @ x
        if rel[k] == "<=":
            assert v <= b[k] + lpcore.FEAS_TOL * 10
        elif rel[k] == ">=":
            assert v >= b[k] - lpcore.FEAS_TOL * 10
        else:
            assert abs(v - b[k]) <= lpcore.FEAS_TOL * 10
    # the simplex multipliers certify optimality
    y = res.duals
    assert float(b @ y) == pytest.approx(res.objective, abs=1e-6)
    assert (c - A.T @ y >= -1e-7).all()
    for k in range(m):
        if rel[k] == "<=":
            assert y[k] <= 1e-9
        elif rel[k] == ">=":
            assert y[k] >= -1e-9
