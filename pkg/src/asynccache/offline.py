"""Offline scheduling LP, its interpretation as a schedule, and the
fixed-group variant used to count how many packets a history delivers.

Variables are named ``("x", U, l)`` for the time of interval ``l`` given to
group ``U`` and ``("y", i, f, U)`` for the share of part ``f`` of user
``i``'s file carried by equations of ``U``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

from . import lp as lpcore
from .flows import FlowNetwork, max_flow
from .model import Instance, SubfileId, TimelineIndex, build_timeline, is_all_but_one

TOL = 1e-6


@dataclass
class OfflineLpVars:
    status: str
    x: dict = field(default_factory=dict)  # (U, l) -> value
    y: dict = field(default_factory=dict)  # (i, f, U) -> value
    objective: float = math.nan

    @property
    def feasible(self) -> bool:
        return self.status == "optimal"

    def group_time(self, group) -> float:
        return sum(v for (g, _), v in self.x.items() if g == group)


def _y_support(timeline: TimelineIndex, history=None):
    """(i, f) -> list of groups able to carry part f of user i."""
    inst = timeline.instance
    support = {key: list(gs) for key, gs in timeline.carriers.items()}
    if history:
        for g in sorted(history, key=lambda g: (len(g), g)):
            for i in g:
                if i not in timeline.missing:
                    continue
                for f in sorted(inst.eligible(i, g)):
                    if g not in support[(i, f)]:
                        support[(i, f)].append(g)
    return support


def build_offline_lp(timeline: TimelineIndex, r: int, history: dict | None = None):
    """Assemble the scheduling LP over ``timeline``.

    ``history`` optionally maps groups to time already spent on them; that
    time is added to the right-hand side of each group-sharing row (this is
    the recursive form solved on every online arrival).
    """
    history = history or {}
    prog = lpcore.LinearProgram(sense="min")
    for l in range(1, timeline.beta + 1):
        for g in timeline.user_groups[l]:
            prog.add_var(("x", g, l), cost=1.0)
    support = _y_support(timeline, history)
    for (i, f), gs in support.items():
        for g in gs:
            prog.add_var(("y", i, f, g))

    for l in range(1, timeline.beta + 1):
        cols = {prog.var(("x", g, l)): 1.0 for g in timeline.user_groups[l]}
        if cols:
            prog.add_constraint(cols, "<=", timeline.length(l))

    groups = list(timeline.groups())
    groups += [g for g in sorted(history, key=lambda g: (len(g), g)) if g not in timeline.group_intervals]
    for g in groups:
        for i in g:
            if i not in timeline.missing:
                continue
            row = {}
            for f in sorted(timeline.instance.eligible(i, g)):
                row[prog.var(("y", i, f, g))] = 1.0
            for l in timeline.group_intervals.get(g, ()):
                row[prog.var(("x", g, l))] = -1.0
            prog.add_constraint(row, "<=", history.get(g, 0.0))

    for (i, f), gs in support.items():
        prog.add_constraint({prog.var(("y", i, f, g)): 1.0 for g in gs}, "==", r)
    return prog


def vars_from_solution(prog, result) -> OfflineLpVars:
    if not result.optimal:
        return OfflineLpVars(status=result.status.value)
    x, y = {}, {}
    for name, v in prog.values_by_name(result.x).items():
        if name[0] == "x":
            x[(name[1], name[2])] = float(v)
        else:
            y[(name[1], name[2], name[3])] = float(v)
    return OfflineLpVars("optimal", x, y, float(result.objective))


def solve_offline(instance: Instance, timeline: TimelineIndex | None = None,
                  max_group_size: int | None = None) -> OfflineLpVars:
    """Minimum number of broadcast slots meeting every deadline, or infeasible."""
    tl = timeline or build_timeline(instance, max_group_size=max_group_size)
    prog = build_offline_lp(tl, instance.r)
    return vars_from_solution(prog, lpcore.solve(prog))


def check_lp_point(point: OfflineLpVars, timeline: TimelineIndex, r: int, tol: float = TOL):
    """Raise ``ValueError`` if ``point`` violates the scheduling LP."""
    for key, v in list(point.x.items()) + list(point.y.items()):
        if v < -tol:
            raise ValueError(f"negative value {v} for {key}")
    for l in range(1, timeline.beta + 1):
        used = sum(point.x.get((g, l), 0.0) for g in timeline.user_groups[l])
        if used > timeline.length(l) + tol:
            raise ValueError(f"interval {l} overbooked: {used} > {timeline.length(l)}")
    for (i, f, g), v in point.y.items():
        if f not in timeline.instance.eligible(i, g):
            raise ValueError(f"part {f} of user {i} cannot ride on group {g}")
    for g in timeline.groups():
        total = point.group_time(g)
        for i in g:
            carried = sum(v for (j, _, h), v in point.y.items() if j == i and h == g)
            if carried > total + tol:
                raise ValueError(f"group {g} carries {carried} for user {i} in {total} time")
    for i, om in timeline.missing.items():
        for f in om:
            got = sum(v for (j, h, _), v in point.y.items() if j == i and h == f)
            if abs(got - r) > tol:
                raise ValueError(f"part {f} of user {i} delivered {got} times, need {r}")


@dataclass
class Segment:
    interval: int
    start: float  # offset inside the interval
    length: float
    group: tuple
    assignment: dict  # user -> part

    def to_json(self) -> dict:
        return {
            "interval": self.interval, "start": self.start, "length": self.length,
            "group": list(self.group),
            "assignment": {str(u): f for u, f in sorted(self.assignment.items())},
        }


@dataclass
class Schedule:
    segments: list
    timeline: TimelineIndex | None = None

    def absolute_start(self, seg: Segment) -> float:
        return self.timeline.intervals[seg.interval - 1][0] + seg.start

    def delivered(self) -> dict:
        """(user, part) -> total length of segments carrying it."""
        out = {}
        for s in self.segments:
            for u, f in s.assignment.items():
                out[(u, f)] = out.get((u, f), 0.0) + s.length
        return out

    def validate(self, r: int, tol: float = TOL):
        tl = self.timeline
        inst = tl.instance
        demands = {q.user: q.demand for q in inst.requests}
        by_interval = {}
        for s in self.segments:
            by_interval.setdefault(s.interval, []).append(s)
            eq = [(u, SubfileId(demands[u], f)) for u, f in s.assignment.items()]
            if tuple(sorted(s.assignment)) != s.group or not is_all_but_one(eq, inst.placement, demands):
                raise ValueError(f"segment {s} is not an all-but-one equation")
            if any(u not in tl.active_users[s.interval] for u in s.group):
                raise ValueError(f"segment {s} serves an inactive user")
        for l, segs in by_interval.items():
            segs.sort(key=lambda s: s.start)
            end = 0.0
            for s in segs:
                if s.start < end - tol:
                    raise ValueError(f"overlapping segments in interval {l}")
                end = s.start + s.length
            if end > tl.length(l) + tol:
                raise ValueError(f"interval {l} overflows")
        got = self.delivered()
        for i, om in tl.missing.items():
            for f in om:
                if abs(got.get((i, f), 0.0) - r) > tol:
                    raise ValueError(f"part {f} of user {i} delivered {got.get((i, f), 0.0)}")

    def to_json(self) -> list:
        return [s.to_json() for s in self.segments]

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)

    def summary_csv(self, objective: float) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["objective", "beta", "interval", "length", "used", "utilization"])
        for l in range(1, self.timeline.beta + 1):
            used = sum(s.length for s in self.segments if s.interval == l)
            n = self.timeline.length(l)
            w.writerow([f"{objective:.6f}", self.timeline.beta, l, n, f"{used:.6f}", f"{used / n:.6f}"])
        return buf.getvalue()


def interpret_schedule(point: OfflineLpVars, timeline: TimelineIndex, r: int | None = None,
                       tol: float = 1e-9) -> Schedule:
    """Turn an LP point into concrete equations.

    Each interval is filled with its groups' allocations back to back in
    (size, lexicographic) group order.  A group's pieces, taken in interval
    order, form one stretch of time on which every member lays its parts
    back to back in part order; cutting the stretch at all breakpoints gives
    segments with one part per participating member.
    """
    r = timeline.instance.r if r is None else r
    check_lp_point(point, timeline, r)

    pieces = {}  # group -> [(interval, offset, length)]
    for l in range(1, timeline.beta + 1):
        cursor = 0.0
        for g in timeline.user_groups[l]:
            v = point.x.get((g, l), 0.0)
            if v > tol:
                pieces.setdefault(g, []).append((l, cursor, v))
                cursor += v

    segments = []
    for g, plist in pieces.items():
        total = sum(p[2] for p in plist)
        cuts = {0.0, total}
        acc = 0.0
        for p in plist:
            acc += p[2]
            cuts.add(min(acc, total))
        lanes = {}
        for i in g:
            lane = []
            acc = 0.0
            for f in sorted(timeline.instance.eligible(i, g)):
                v = point.y.get((i, f, g), 0.0)
                if v > tol:
                    hi = min(acc + v, total)
                    lane.append((acc, hi, f))
                    cuts.add(hi)
                    acc = hi
            lanes[i] = lane
        cuts = sorted(cuts)
        for a, b in zip(cuts, cuts[1:]):
            if b - a <= tol:
                continue
            mid = 0.5 * (a + b)
            assignment = {}
            for i, lane in lanes.items():
                for lo, hi, f in lane:
                    if lo <= mid < hi:
                        assignment[i] = f
                        break
            if not assignment:
                continue
            acc = 0.0
            for l, off, length in plist:
                if acc <= mid < acc + length:
                    segments.append(Segment(l, off + (a - acc), b - a, tuple(sorted(assignment)), assignment))
                    break
                acc += length
    segments.sort(key=lambda s: (s.interval, s.start))
    return Schedule(segments, timeline)


def fixed_groups_lp(user: int, history: dict, timeline, r: int | None = None):
    """Most packets ``user`` can extract from group time ``history``.

    Solved as a max flow: source -> part (capacity r) -> group -> sink
    (capacity = time spent on the group).  Returns ``(value, y)`` with ``y``
    keyed by ``(part, group)``; integral whenever the history is.
    """
    inst = timeline.instance if isinstance(timeline, TimelineIndex) else timeline
    r = inst.r if r is None else r
    net = FlowNetwork()
    net.add_node("s")
    net.add_node("t")
    for f in sorted(inst.missing(user)):
        net.add_arc("s", ("f", f), r)
    arcs = []
    for g, z in history.items():
        if user not in g or z <= 0:
            continue
        for f in sorted(inst.eligible(user, g)):
            arcs.append((len(net.arcs), f, g))
            net.add_arc(("f", f), ("U", g), None)
        net.add_arc(("U", g), "t", z)
    res = max_flow(net, "s", "t")
    y = {(f, g): res.flow[k] for k, f, g in arcs if res.flow[k] > 0}
    return res.value, y


def integralize(point: OfflineLpVars, timeline: TimelineIndex, r: int | None = None,
                tol: float = 1e-6) -> OfflineLpVars | None:
    """Integral y for an integral x via per-user max flows, or None if x is fractional."""
    r = timeline.instance.r if r is None else r
    x = {}
    for k, v in point.x.items():
        if abs(v - round(v)) > tol:
            return None
        if round(v):
            x[k] = int(round(v))
    z = {}
    for (g, _), v in x.items():
        z[g] = z.get(g, 0) + v
    y = {}
    for i, om in timeline.missing.items():
        value, yi = fixed_groups_lp(i, z, timeline, r)
        if value < r * len(om):
            return None
        for (f, g), v in yi.items():
            y[(i, f, g)] = v
    return OfflineLpVars("optimal", x, y, float(sum(x.values())))


def build_decoupled_lp(timeline: TimelineIndex, r: int):
    """Equivalent LP with one flow copy of every group allocation per member."""
    prog = lpcore.LinearProgram(sense="min")
    for l in range(1, timeline.beta + 1):
        for g in timeline.user_groups[l]:
            prog.add_var(("x", g, l), cost=1.0)
            for i in g:
                prog.add_var(("xi", i, g, l))
    for (i, f), gs in timeline.carriers.items():
        for g in gs:
            prog.add_var(("y", i, f, g))
    for l in range(1, timeline.beta + 1):
        gs = timeline.user_groups[l]
        if gs:
            prog.add_constraint({prog.var(("x", g, l)): 1.0 for g in gs}, "<=", timeline.length(l))
        for g in gs:
            for i in g:
                prog.add_constraint({prog.var(("xi", i, g, l)): 1.0, prog.var(("x", g, l)): -1.0}, "<=", 0.0)
    for g in timeline.groups():
        for i in g:
            row = {prog.var(("y", i, f, g)): 1.0 for f in timeline.eligible[(i, g)]}
            for l in timeline.group_intervals[g]:
                row[prog.var(("xi", i, g, l))] = -1.0
            prog.add_constraint(row, "==", 0.0)
    for (i, f), gs in timeline.carriers.items():
        prog.add_constraint({prog.var(("y", i, f, g)): 1.0 for g in gs}, "==", r)
    return prog
