"""Lagrangian decomposition of the offline LP.

Each user's share of the problem is a min-cost flow (parts -> groups ->
intervals -> sink) whose group->interval costs are ``(1 + zeta[l]) *
gamma[i, U, l]``.  The multipliers are driven by projected subgradient
ascent with step ``n ** -alpha`` and a primal point is recovered by
averaging the per-iteration group allocations.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import lp as lpcore
from .flows import COST_RESOLUTION, FlowNetwork, min_cost_flow
from .model import Instance, TimelineIndex, build_timeline
from .offline import OfflineLpVars, build_offline_lp, check_lp_point, fixed_groups_lp, vars_from_solution


class InfeasibleInstance(Exception):
    """Some user cannot be served within its own window."""


@dataclass
class DualState:
    gamma: dict  # (i, U, l) -> multiplier share, sums to 1 over i in U
    zeta: dict  # l -> capacity multiplier
    alpha: float = 0.5
    n: int = 0
    xbar: dict = field(default_factory=dict)  # (U, l) -> recovered allocation
    xbar_user: dict = field(default_factory=dict)  # (i, U, l) -> averaged member flow
    xbar_pointwise: dict = field(default_factory=dict)  # (U, l) -> mean of per-iteration maxima
    flows: dict = field(default_factory=dict)  # i -> {(U, l): flow} of the last evaluation
    value: float = -math.inf  # dual value of the last evaluation


def init_state(timeline: TimelineIndex, alpha: float = 0.5) -> DualState:
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    gamma = {}
    for l in range(1, timeline.beta + 1):
        for g in timeline.user_groups[l]:
            for i in g:
                gamma[(i, g, l)] = 1.0 / len(g)
    zeta = {l: 0.0 for l in range(1, timeline.beta + 1)}
    return DualState(gamma, zeta, alpha)


def step_size(n: int, alpha: float) -> float:
    return float(n) ** -alpha


def build_user_network(i: int, timeline: TimelineIndex, gamma: dict, zeta: dict, r: int):
    """The user's flow network and a map ``(U, l) -> arc index``."""
    net = FlowNetwork()
    om = sorted(timeline.missing.get(i, ()))
    net.add_node("s", r * len(om))
    if not om:
        return net, {}
    groups = [g for g in timeline.groups() if i in g]
    for f in om:
        net.add_arc("s", ("f", f), r, 0.0)
    for g in groups:
        for f in sorted(timeline.eligible[(i, g)]):
            net.add_arc(("f", f), ("U", g), None, 0.0)
    arcs = {}
    intervals = sorted({l for g in groups for l in timeline.group_intervals[g]})
    for g in groups:
        for l in timeline.group_intervals[g]:
            arcs[(g, l)] = net.add_arc(("U", g), ("P", l), None, (1.0 + zeta[l]) * gamma[(i, g, l)])
    for l in intervals:
        net.add_arc(("P", l), "t", timeline.length(l), 0.0)
    net.add_node("t", -r * len(om))
    return net, arcs


def eval_dual(state: DualState, timeline: TimelineIndex, r: int) -> float:
    """Dual function at the current multipliers; stores each user's flow."""
    total = 0.0
    flows = {}
    for i in timeline.users():
        net, arcs = build_user_network(i, timeline, state.gamma, state.zeta, r)
        if not arcs:
            flows[i] = {}
            continue
        res = min_cost_flow(net)
        if not res.feasible:
            raise InfeasibleInstance(f"user {i} cannot receive its parts in its window")
        # the fixed-point cost never exceeds the real one, so this stays a valid bound
        total += res.scaled_cost * COST_RESOLUTION
        flows[i] = {k: res.flow[a] for k, a in arcs.items() if res.flow[a]}
    total -= sum(z * timeline.length(l) for l, z in state.zeta.items())
    state.flows = flows
    state.value = total
    return total


def project_simplex(values) -> np.ndarray:
    """Euclidean projection onto ``{w >= 0, sum(w) = 1}`` by sorted thresholding."""
    v = [float(a) for a in values]
    if len(v) == 1:
        return np.array([1.0])
    # largest k whose shifted k-th entry stays positive
    acc = 0.0
    shift = 0.0
    for k, a in enumerate(sorted(v, reverse=True), start=1):
        acc += a
        t = (acc - 1.0) / k
        if a - t > 0:
            shift = t
    return np.array([max(a - shift, 0.0) for a in v])


def subgradient_step(state: DualState, timeline: TimelineIndex, theta: float | None = None) -> DualState:
    """One projected ascent step using the flows of the last evaluation."""
    n = state.n + 1
    theta = step_size(n, state.alpha) if theta is None else theta
    usage = {l: 0.0 for l in state.zeta}
    for i, fl in state.flows.items():
        for (g, l), v in fl.items():
            usage[l] += state.gamma[(i, g, l)] * v
    new_gamma = {}
    for l in range(1, timeline.beta + 1):
        z = state.zeta[l]
        for g in timeline.user_groups[l]:
            raw = [state.gamma[(i, g, l)] + theta * state.flows.get(i, {}).get((g, l), 0.0) * (1.0 + z)
                   for i in g]
            for i, w in zip(g, project_simplex(raw)):
                new_gamma[(i, g, l)] = float(w)
    new_zeta = {l: max(0.0, z + theta * (usage[l] - timeline.length(l))) for l, z in state.zeta.items()}
    state.gamma = new_gamma
    state.zeta = new_zeta
    state.n = n
    return state


def recover_primal(state: DualState):
    """Fold the latest flows into the running averages.

    Every member's flow through ``(U, l)`` is averaged over the iterations
    seen so far (equal weights ``1/n``) and the group allocation is the
    largest member average.  The average of the per-iteration maxima is
    tracked too, in ``xbar_pointwise``; it overshoots whenever members pick
    different optimal flows among ties.  Returns ``(xbar, sum(xbar))``.
    """
    n = state.n  # folds done so far
    w = n / (n + 1)
    cur = {}
    for i, fl in state.flows.items():
        for k, v in fl.items():
            cur[(i,) + k] = v
    for key in set(state.xbar_user) | set(cur):
        state.xbar_user[key] = w * state.xbar_user.get(key, 0.0) + cur.get(key, 0.0) / (n + 1)
    top = {}
    for (i, g, l), v in cur.items():
        if v > top.get((g, l), 0.0):
            top[(g, l)] = v
    for key in set(state.xbar_pointwise) | set(top):
        state.xbar_pointwise[key] = w * state.xbar_pointwise.get(key, 0.0) + top.get(key, 0.0) / (n + 1)
    xbar = {}
    for (i, g, l), v in state.xbar_user.items():
        if v > xbar.get((g, l), 0.0):
            xbar[(g, l)] = v
    state.xbar = xbar
    return xbar, sum(xbar.values())


@dataclass
class DecompositionResult:
    status: str
    objective: float = math.nan  # value of the returned point (x, y)
    averaged: float = math.nan  # sum of the averaged allocations before any repair
    dual_value: float = -math.inf  # best dual bound seen
    iterations: int = 0
    x: dict = field(default_factory=dict)
    y: dict = field(default_factory=dict)
    y_source: str = ""  # "flow", "reduced-lp" or "full-lp"
    trace: list = field(default_factory=list)  # (iter, dual, primal, gap)

    @property
    def feasible(self) -> bool:
        return self.status == "optimal"

    def as_vars(self) -> OfflineLpVars:
        return OfflineLpVars(self.status, dict(self.x), dict(self.y), self.objective)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "dual_value", "primal_value", "gap"])
        for it, d, p, g in self.trace:
            w.writerow([it, f"{d:.9g}", f"{p:.9g}", f"{g:.9g}"])
        return buf.getvalue()


def _extract_y(xbar: dict, timeline: TimelineIndex, r: int, tol: float = 1e-6):
    z = {}
    for (g, _), v in xbar.items():
        z[g] = z.get(g, 0.0) + v
    y = {}
    for i, om in timeline.missing.items():
        value, yi = fixed_groups_lp(i, z, timeline, r)
        if value < r * len(om) - tol:
            return None
        for (f, g), v in yi.items():
            y[(i, f, g)] = v
    return y


def _reduced_lp(xbar: dict, timeline: TimelineIndex, r: int, floor: float = 1e-6):
    prog = build_offline_lp(timeline, r)
    for name in prog.names:
        if name[0] == "x" and xbar.get((name[1], name[2]), 0.0) <= floor:
            prog.upper[prog.var(name)] = 0.0
    return vars_from_solution(prog, lpcore.solve(prog))


def solve_via_decomposition(instance: Instance, iters: int = 5000, alpha: float = 0.5,
                            timeline: TimelineIndex | None = None, rel_tol: float = 1e-3,
                            patience: int = 50, on_iteration=None) -> DecompositionResult:
    """Maximise the dual by subgradient ascent and recover an offline schedule.

    Stops after ``iters`` iterations or once the relative gap between the
    averaged primal value and the best dual bound has stayed below
    ``rel_tol`` for ``patience`` consecutive iterations.  ``on_iteration`` is
    called with the state after every evaluation (used for duality checks).
    """
    tl = timeline or build_timeline(instance)
    r = instance.r
    state = init_state(tl, alpha)
    capacity = sum(tl.length(l) for l in range(1, tl.beta + 1))
    out = DecompositionResult("optimal")
    if not tl.missing:
        out.objective = 0.0
        out.dual_value = 0.0
        out.y_source = "flow"
        return out

    best = -math.inf
    streak = 0
    primal = math.nan
    for n in range(1, iters + 1):
        try:
            g = eval_dual(state, tl, r)
        except InfeasibleInstance:
            return DecompositionResult("infeasible", iterations=n, trace=out.trace)
        if on_iteration is not None:
            on_iteration(state)
        best = max(best, g)
        if best > capacity + 1e-6:
            # no schedule fits in the available slots
            return DecompositionResult("infeasible", dual_value=best, iterations=n, trace=out.trace)
        _, primal = recover_primal(state)
        gap = (primal - best) / max(abs(primal), 1e-12)
        out.trace.append((n, g, primal, gap))
        streak = streak + 1 if abs(gap) < rel_tol else 0
        subgradient_step(state, tl)
        if streak >= patience:
            break

    out.iterations = len(out.trace)
    out.dual_value = best
    out.averaged = primal
    out.x = {k: v for k, v in state.xbar.items() if v > 0.0}
    out.objective = sum(out.x.values())
    y = _extract_y(out.x, tl, r)
    if y is not None:
        try:
            check_lp_point(OfflineLpVars("optimal", out.x, y), tl, r)
            out.y, out.y_source = y, "flow"
            return out
        except ValueError:
            pass  # averaged point still overbooks some interval
    red = _reduced_lp(out.x, tl, r)
    if red.feasible:
        out.x, out.y, out.y_source, out.objective = red.x, red.y, "reduced-lp", red.objective
        return out
    prog = build_offline_lp(tl, r)
    full = vars_from_solution(prog, lpcore.solve(prog))
    if not full.feasible:
        out.status = "infeasible"
        return out
    out.x, out.y, out.y_source, out.objective = full.x, full.y, "full-lp", full.objective
    return out
