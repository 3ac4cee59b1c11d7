"""Integral network-flow solvers.

``min_cost_flow`` is capacity-scaling successive shortest paths (Dijkstra on
reduced costs).  Real arc costs are turned into integers at a fixed
resolution before solving so the whole computation stays in exact integer
arithmetic.  ``max_flow`` is Edmonds-Karp and accepts real capacities.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field

COST_RESOLUTION = 1e-6


class UnboundedFlowError(ValueError):
    """A negative-cost cycle of unlimited capacity exists."""


@dataclass
class Arc:
    tail: object
    head: object
    capacity: float | None = None  # None = uncapacitated
    cost: float = 0.0


@dataclass
class FlowNetwork:
    nodes: list = field(default_factory=list)
    arcs: list = field(default_factory=list)
    supply: dict = field(default_factory=dict)  # positive = source, negative = sink
    _seen: set = field(default_factory=set, repr=False)

    def add_node(self, node, supply=0):
        if node not in self._seen:
            self._seen.add(node)
            self.nodes.append(node)
        if supply:
            self.supply[node] = self.supply.get(node, 0) + supply
        return node

    def add_arc(self, tail, head, capacity=None, cost=0.0) -> int:
        if capacity is not None and capacity < 0:
            raise ValueError("capacities must be nonnegative")
        self.add_node(tail)
        self.add_node(head)
        self.arcs.append(Arc(tail, head, capacity, cost))
        return len(self.arcs) - 1


@dataclass
class FlowResult:
    feasible: bool
    flow: list
    cost: float = 0.0
    value: float = 0.0  # s-t value for max_flow; total supply routed for min_cost_flow
    scaled_cost: int = 0  # cost in integer units of the resolution (min_cost_flow)

    @property
    def status(self) -> str:
        return "feasible" if self.feasible else "infeasible"

    def arc_flows(self, net: FlowNetwork) -> dict:
        return {(a.tail, a.head): f for a, f in zip(net.arcs, self.flow)}


def _fixed_point(cost: float, resolution: float) -> int:
    # floor, except values within rounding noise of an integer multiple
    q = cost / resolution
    k = round(q)
    return int(k) if abs(q - k) < 1e-6 else math.floor(q)


class _Residual:
    def __init__(self, n):
        self.adj = [[] for _ in range(n)]
        self.head = []
        self.cap = []
        self.cost = []

    def add(self, u, v, cap, cost):
        e = len(self.head)
        self.head += [v, u]
        self.cap += [cap, 0]
        self.cost += [cost, -cost]
        self.adj[u].append(e)
        self.adj[v].append(e + 1)
        return e


def _check_negative_cycles(n, arcs):
    # Bellman-Ford over the uncapacitated arcs only
    dist = [0] * n
    for _ in range(n):
        changed = False
        for u, v, c in arcs:
            if dist[u] + c < dist[v]:
                dist[v] = dist[u] + c
                changed = True
        if not changed:
            return
    raise UnboundedFlowError("negative-cost cycle with unlimited capacity")


def min_cost_flow(net: FlowNetwork, resolution: float = COST_RESOLUTION) -> FlowResult:
    idx = {v: k for k, v in enumerate(net.nodes)}
    n = len(net.nodes)
    supply = [0] * n
    for v, s in net.supply.items():
        if s != int(s):
            raise ValueError("supplies must be integral")
        supply[idx[v]] += int(s)
    if sum(supply) != 0:
        raise ValueError("supplies and demands do not balance")
    big = sum(s for s in supply if s > 0)

    R = _Residual(n)
    uncapacitated = []
    arc_ids = []
    cmax = 0
    for a in net.arcs:
        u, v = idx[a.tail], idx[a.head]
        c = _fixed_point(a.cost, resolution)
        if a.capacity is None:
            cap = big
            uncapacitated.append((u, v, c))
        else:
            if a.capacity != int(a.capacity):
                raise ValueError("capacities must be integral")
            cap = int(a.capacity)
        cmax = max(cmax, cap)
        arc_ids.append(R.add(u, v, cap, c))
    if any(c < 0 for _, _, c in uncapacitated):
        _check_negative_cycles(n, uncapacitated)

    excess = supply[:]
    pi = [0] * n
    head, cap, cost, adj = R.head, R.cap, R.cost, R.adj
    tail = [0] * len(head)
    for u in range(n):
        for e in adj[u]:
            tail[e] = u

    top = max(cmax, max((abs(s) for s in supply), default=0), 1)
    delta = 1 << (top.bit_length() - 1)
    while delta >= 1:
        for e in range(len(head)):
            if cap[e] >= delta:
                u, v = tail[e], head[e]
                if cost[e] - pi[u] + pi[v] < 0:
                    f = cap[e]
                    cap[e] -= f
                    cap[e ^ 1] += f
                    excess[u] -= f
                    excess[v] += f
        while True:
            progressed = False
            for s in range(n):
                if excess[s] < delta:
                    continue
                if not any(x <= -delta for x in excess):
                    break
                path_end, dist, pred = _dijkstra(s, delta, excess, pi, head, cap, cost, adj, tail)
                if path_end is None:
                    continue
                dt = dist[path_end]
                for v in range(n):
                    pi[v] -= min(dist[v], dt)
                v = path_end
                while v != s:
                    e = pred[v]
                    cap[e] -= delta
                    cap[e ^ 1] += delta
                    v = tail[e]
                excess[s] -= delta
                excess[path_end] += delta
                progressed = True
                break
            if not progressed:
                break
        delta >>= 1

    flows = []
    total = 0.0
    scaled = 0
    for a, e in zip(net.arcs, arc_ids):
        f = cap[e ^ 1]
        flows.append(f)
        total += f * a.cost
        scaled += f * cost[e]
    feasible = all(x == 0 for x in excess)
    return FlowResult(feasible, flows, total, big, scaled)


def _dijkstra(s, delta, excess, pi, head, cap, cost, adj, tail):
    inf = math.inf
    n = len(adj)
    dist = [inf] * n
    pred = [-1] * n
    dist[s] = 0
    heap = [(0, s)]
    done = [False] * n
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if excess[u] <= -delta:
            return u, dist, pred
        pu = pi[u]
        for e in adj[u]:
            if cap[e] >= delta:
                v = head[e]
                nd = d + cost[e] - pu + pi[v]
                if nd < dist[v]:
                    dist[v] = nd
                    pred[v] = e
                    heapq.heappush(heap, (nd, v))
    return None, dist, pred


def max_flow(net: FlowNetwork, source, sink, eps: float = 1e-12) -> FlowResult:
    """Maximum ``source``-``sink`` flow; integral whenever capacities are."""
    idx = {v: k for k, v in enumerate(net.nodes)}
    n = len(net.nodes)
    finite = sum(a.capacity for a in net.arcs if a.capacity is not None)
    big = finite + 1
    R = _Residual(n)
    arc_ids = [R.add(idx[a.tail], idx[a.head], big if a.capacity is None else a.capacity, 0)
               for a in net.arcs]
    if source not in idx or sink not in idx:
        return FlowResult(True, [0] * len(net.arcs), 0.0, 0)
    s, t = idx[source], idx[sink]
    head, cap, adj = R.head, R.cap, R.adj
    value = 0
    while True:
        pred = [-1] * n
        pred[s] = -2
        q = deque([s])
        while q and pred[t] == -1:
            u = q.popleft()
            for e in adj[u]:
                v = head[e]
                if pred[v] == -1 and cap[e] > eps:
                    pred[v] = e
                    q.append(v)
        if pred[t] == -1:
            break
        push = math.inf
        v = t
        while v != s:
            e = pred[v]
            push = min(push, cap[e])
            v = head[e ^ 1]
        v = t
        while v != s:
            e = pred[v]
            cap[e] -= push
            cap[e ^ 1] += push
            v = head[e ^ 1]
        value += push
        if value >= big:
            return FlowResult(True, [cap[e ^ 1] for e in arc_ids], 0.0, math.inf)
    return FlowResult(True, [cap[e ^ 1] for e in arc_ids], 0.0, value)
