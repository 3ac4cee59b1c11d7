"""Online scheduling: one LP per arrival, one coded packet per slot.

On every arrival the scheduling LP is re-solved over the remaining horizon,
with the time already spent on each group credited as history.  Allocations
of at least one slot become candidates, ordered by interval, then larger
groups first, then lexicographically.  Each slot the first candidate whose
urgency-weighted benefit reaches the threshold is broadcast as a random
linear combination of every packet its members can use.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import lp as lpcore
from .gf import (CodedPacket, DecodeFailure, FileStore, build_decoding_matrix, decode_payload,
                 encode_packet, get_field)
from .model import Instance, SubfileId, build_timeline, is_all_but_one
from .offline import OfflineLpVars, build_offline_lp, fixed_groups_lp

CANDIDATE_TOL = 1e-7


@dataclass(frozen=True)
class Eta0Policy:
    """Threshold ``a - b / gap``; ``b = 0`` gives a constant.

    ``gap`` is the mean number of slots between arrivals, ``1 / (F lambda)``.
    """

    a: float
    b: float = 0.0

    def value(self, gap: float | None = None) -> float:
        if self.b == 0.0:
            return self.a
        if not gap or gap <= 0:
            raise ValueError("this threshold needs a positive mean inter-arrival gap")
        return self.a - self.b / gap


LOW_THRESHOLD = Eta0Policy(0.4, 0.5)
HIGH_THRESHOLD = Eta0Policy(0.8, 0.2)


@dataclass
class Candidate:
    group: tuple
    interval: int
    amount: float

    def sort_key(self):
        return (self.interval, -len(self.group), self.group)


@dataclass
class OnlineState:
    instance: Instance
    coded: bool = True
    z: dict = field(default_factory=dict)  # group -> slots spent, in first-use order
    v: dict = field(default_factory=dict)  # user -> useful packets received
    equations: dict = field(default_factory=dict)  # user -> indices into log kept for decoding
    x_off: dict = field(default_factory=dict)  # (group, offline interval) -> slots
    l_off: int = 0
    candidates: list = field(default_factory=list)
    log: list = field(default_factory=list)  # CodedPacket per transmission
    lp_infeasible: list = field(default_factory=list)  # arrival slots whose LP had no solution
    delivered: dict = field(default_factory=dict)  # user -> set of (f, j), uncoded mode only
    _w_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for i in range(1, self.instance.K + 1):
            self.v.setdefault(i, 0)
            self.equations.setdefault(i, [])
            self.delivered.setdefault(i, set())

    def need(self, i: int) -> int:
        return self.instance.r * len(self.instance.missing(i))

    def history(self, i: int) -> dict:
        return {g: z for g, z in self.z.items() if i in g}


def w_compute(state: OnlineState, i: int, group: tuple, tau: int | None = None) -> int:
    """Packets user ``i`` could hold if ``group`` were sent next."""
    if not state.coded:
        if i not in group:
            return state.v[i]
        return state.v[i] + (1 if _uncoded_pick(state, i, group)[1] else 0)
    key = (i, group)
    hit = state._w_cache.get(key)
    if hit is None:
        hist = state.history(i)
        if i in group:
            hist[group] = hist.get(group, 0) + 1
        hit = int(round(fixed_groups_lp(i, hist, state.instance)[0]))
        state._w_cache[key] = hit
    return hit


def eta(state: OnlineState, group: tuple, tau: int) -> float:
    total = 0.0
    for i in group:
        q = state.instance.request(i)
        left = state.need(i) - state.v[i]
        total += left / (q.deadline - tau) * (w_compute(state, i, group, tau) - state.v[i])
    return total


def _uncoded_pick(state: OnlineState, i: int, group: tuple):
    """Lowest-indexed packet of ``i`` the group can carry: (packet, is_new)."""
    r = state.instance.r
    elig = sorted(state.instance.eligible(i, group))
    for f in elig:
        for j in range(1, r + 1):
            if (f, j) not in state.delivered[i]:
                return (f, j), True
    return (elig[0], 1), False


def recursive_lp(state: OnlineState, tau: int, users):
    """Solve the scheduling LP over ``[tau, ...)`` crediting past group time."""
    inst = state.instance
    tl = build_timeline(inst, users=users, start=tau)
    prog = build_offline_lp(tl, inst.r, history=dict(state.z))
    res = lpcore.solve(prog)
    ok = res.optimal
    if not ok:
        # best effort: let delivery fall short at a steep price
        penalty = 1.0 + sum(tl.length(l) for l in range(1, tl.beta + 1))
        for k, (row, rel, rhs) in enumerate(list(prog.rows)):
            if rel == "==":
                s = prog.add_var(("short", k), cost=penalty)
                row[s] = 1.0
        res = lpcore.solve(prog)
    cands = []
    if res.optimal:
        for name, val in prog.values_by_name(res.x).items():
            if name[0] == "x" and val >= 1.0 - CANDIDATE_TOL:
                cands.append(Candidate(name[1], name[2], float(val)))
    cands.sort(key=Candidate.sort_key)
    return ok, cands


def on_arrival(state: OnlineState, tau: int):
    inst = state.instance
    users = [i for i in range(1, inst.K + 1)
             if inst.request(i).arrival <= tau < inst.request(i).deadline and inst.missing(i)]
    ok, cands = recursive_lp(state, tau, users)
    if not ok:
        state.lp_infeasible.append(tau)
    state.candidates = cands
    return cands


def _starving(state: OnlineState, tau: int) -> bool:
    inst = state.instance
    return any(q.arrival <= tau < q.deadline and state.v[q.user] < state.need(q.user)
               for q in inst.requests)


def _emit(state: OnlineState, group: tuple, tau: int, rng, gf, store):
    inst = state.instance
    r = inst.r
    coeffs = {}
    gains = {}
    for i in group:
        gains[i] = w_compute(state, i, group, tau)
        if state.coded:
            for f in sorted(inst.eligible(i, group)):
                for j in range(1, r + 1):
                    coeffs[(i, f, j)] = int(gf.random(rng))
        else:
            (f, j), new = _uncoded_pick(state, i, group)
            coeffs[(i, f, j)] = 1
            if new:
                state.delivered[i].add((f, j))
    pkt = CodedPacket(tau, group, coeffs)
    if store is not None:
        pkt.payload = encode_packet(pkt, inst, store)
    m = len(state.log)
    state.log.append(pkt)

    state.z[group] = state.z.get(group, 0) + 1
    key = (group, state.l_off)
    state.x_off[key] = state.x_off.get(key, 0) + 1
    for i in group:
        if gains[i] > state.v[i]:
            state.equations[i].append(m)
        state.v[i] = gains[i]
    for key in [k for k in state._w_cache if k[0] in group]:
        del state._w_cache[key]
    return pkt


def step_slot(state: OnlineState, tau: int, eta0: float, rng, gf, store=None, emergency: bool = False):
    """Send at most one packet in slot ``[tau, tau + 1)``."""
    inst = state.instance
    chosen = None
    for c in state.candidates:
        if any(inst.request(i).deadline <= tau for i in c.group):
            continue
        if eta(state, c.group, tau) >= eta0:
            chosen = c
            break
    if chosen is None and emergency:
        chosen = _emergency_pick(state, tau)
    if chosen is None:
        return None
    pkt = _emit(state, chosen.group, tau, rng, gf, store)
    chosen.amount -= 1.0
    if chosen.amount < 1.0 - CANDIDATE_TOL and chosen in state.candidates:
        state.candidates.remove(chosen)
    return pkt


def _emergency_pick(state: OnlineState, tau: int):
    inst = state.instance
    urgent = [i for i in range(1, inst.K + 1)
              if inst.request(i).arrival <= tau < inst.request(i).deadline
              and state.need(i) - state.v[i] >= inst.request(i).deadline - tau > 0]
    for i in urgent:
        for c in state.candidates:
            if i in c.group and all(inst.request(u).deadline > tau for u in c.group) \
                    and w_compute(state, i, c.group, tau) > state.v[i]:
                return c
        if w_compute(state, i, (i,), tau) > state.v[i]:
            return Candidate((i,), 0, 1.0)
    return None


@dataclass
class OnlineResult:
    status: str  # "satisfied" or "infeasible"
    state: OnlineState
    failed: tuple | None = None  # (user, tau) of the first missed deadline
    decode: list = field(default_factory=list)  # per-user dicts

    @property
    def satisfied(self) -> bool:
        return self.status == "satisfied"

    @property
    def packets_sent(self) -> int:
        return len(self.state.log)

    @property
    def all_decoded(self) -> bool:
        return self.satisfied and all(d["decoded"] for d in self.decode)

    def log_json(self) -> str:
        return json.dumps([p.to_json() for p in self.state.log], indent=1)

    def decode_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["user", "needed", "received", "rank", "decoded", "byte_exact"])
        for d in self.decode:
            w.writerow([d["user"], d["needed"], d["received"], d["rank"], int(d["decoded"]), int(d["byte_exact"])])
        return buf.getvalue()


def run_online(instance: Instance, eta0=0.0, seed: int = 0, gap: float | None = None,
               coded: bool = True, emergency: bool = False, payloads: bool = True,
               subfile_bytes: int = 64, resolve: bool = True, on_slot=None) -> OnlineResult:
    """Play the online scheduler over the whole horizon.

    ``eta0`` is a number or an :class:`Eta0Policy` (evaluated at ``gap``).
    ``coded=False`` replaces the random combinations by plain XORs carrying
    one packet per member (lowest index first).  ``resolve`` re-plans from
    the current slot whenever the candidate list runs dry while an active user
    still needs packets; ``emergency`` lets a user that needs every remaining
    slot bypass the threshold.  ``on_slot(state, tau)`` is called after every
    slot.
    """
    threshold = eta0.value(gap) if isinstance(eta0, Eta0Policy) else float(eta0)
    rng = np.random.default_rng(seed)
    gf = get_field(instance.config.field_order)
    store = FileStore.random(instance, np.random.default_rng([seed, 1]), subfile_bytes, gf) if payloads else None
    state = OnlineState(instance, coded=coded)
    reqs = instance.requests
    arrivals = {q.arrival for q in reqs}
    boundaries = arrivals | {q.deadline for q in reqs}
    t_max = max(q.deadline for q in reqs)

    for tau in range(0, t_max + 1):
        for q in sorted(reqs, key=lambda q: q.user):
            if q.deadline == tau and state.v[q.user] < state.need(q.user):
                return OnlineResult("infeasible", state, (q.user, tau))
        if tau in arrivals:
            on_arrival(state, tau)
        if tau in boundaries:
            state.l_off += 1
        if resolve and not state.candidates and _starving(state, tau):
            on_arrival(state, tau)
        if state.candidates or emergency:
            step_slot(state, tau, threshold, rng, gf, store, emergency)
        if on_slot is not None:
            on_slot(state, tau)

    result = OnlineResult("satisfied", state)
    result.decode = decode_report(state, store, gf)
    return result


def decode_report(state: OnlineState, store, gf) -> list:
    inst = state.instance
    out = []
    for i in range(1, inst.K + 1):
        rows = state.equations[i]
        need = state.need(i)
        entry = {"user": i, "needed": need, "received": len(rows), "rank": 0,
                 "decoded": need == 0, "byte_exact": need == 0}
        if need and len(rows) == need:
            B = build_decoding_matrix(i, state.log, rows, inst)
            entry["rank"] = gf.rank(B)
            if store is not None:
                try:
                    got = decode_payload(i, state.log, rows, inst, store)
                except DecodeFailure:
                    got = None
                if got is not None:
                    d = inst.request(i).demand
                    entry["decoded"] = True
                    entry["byte_exact"] = all(
                        got[(f, j)] == store.gf.to_bytes(store.piece(d, f, j)) for (f, j) in got)
            else:
                entry["decoded"] = entry["rank"] == need
        out.append(entry)
    return out


def packet_is_all_but_one(pkt: CodedPacket, instance: Instance) -> bool:
    """Every participant's terms are missing for it and cached by the others."""
    demands = {q.user: q.demand for q in instance.requests}
    by_user = {}
    for (u, f, _), _a in pkt.coeffs.items():
        by_user.setdefault(u, set()).add(f)
    for u, fs in by_user.items():
        for f in fs:
            eq = [(u, SubfileId(demands[u], f))]
            eq += [(o, SubfileId(demands[o], min(by_user[o]))) for o in by_user if o != u]
            if not is_all_but_one(eq, instance.placement, demands):
                return False
    return True


def offline_certificate(state: OnlineState) -> OfflineLpVars:
    """Integral offline LP point built from a successful online run."""
    inst = state.instance
    tl = build_timeline(inst)
    y = {}
    for i in tl.missing:
        _, yi = fixed_groups_lp(i, state.history(i), inst)
        for (f, g), v in yi.items():
            y[(i, f, g)] = v
    x = {k: v for k, v in state.x_off.items()}
    return OfflineLpVars("optimal", x, y, float(sum(x.values())))
