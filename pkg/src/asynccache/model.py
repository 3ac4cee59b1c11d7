"""Problem instances, the interval partition and the derived set families.

Users, files, subfile parts and intervals are all 1-based so that indices in
code line up with the usual notation (user 1 arrives first, interval 1 starts
at the earliest arrival, ...).  A user group is a sorted tuple of user ids.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

Group = tuple  # sorted tuple of 1-based user ids


@dataclass(frozen=True)
class SystemConfig:
    N: int
    K: int
    F: int
    r: int = 1
    field_order: int = 256

    def __post_init__(self):
        if not (self.N >= self.K >= 1):
            raise ValueError(f"need N >= K >= 1, got N={self.N}, K={self.K}")
        if self.F < 1 or self.r < 1:
            raise ValueError("F and r must be positive")
        if self.field_order not in (2**8, 2**16):
            raise ValueError(f"unsupported field order {self.field_order}")


@dataclass(frozen=True, order=True)
class SubfileId:
    file: int
    part: int


@dataclass(frozen=True, order=True)
class PacketId:
    subfile: SubfileId
    piece: int


@dataclass(frozen=True)
class Placement:
    """Uncoded cache contents; ``caches[i - 1]`` is the cache of user ``i``."""

    caches: tuple

    @classmethod
    def from_lists(cls, caches: Iterable[Iterable]) -> "Placement":
        return cls(tuple(frozenset(SubfileId(*s) for s in c) for c in caches))

    def cache(self, user: int) -> frozenset:
        return self.caches[user - 1]

    def validate(self, config: SystemConfig, cache_sizes: Sequence[float] | None = None):
        if len(self.caches) != config.K:
            raise ValueError(f"expected {config.K} caches, got {len(self.caches)}")
        for i, z in enumerate(self.caches, start=1):
            for s in z:
                if not (1 <= s.file <= config.N and 1 <= s.part <= config.F):
                    raise ValueError(f"user {i} caches out-of-range subfile {s}")
            if cache_sizes is not None and len(z) > cache_sizes[i - 1] * config.F:
                raise ValueError(f"user {i} cache exceeds M_i*F")


@dataclass(frozen=True)
class Request:
    user: int
    arrival: int
    slack: int
    demand: int

    def __post_init__(self):
        if self.slack < 1:
            raise ValueError(f"slack must be >= 1 (user {self.user})")
        if self.arrival < 0:
            raise ValueError(f"arrival must be nonnegative (user {self.user})")

    @property
    def deadline(self) -> int:
        return self.arrival + self.slack


@dataclass(eq=False)
class Instance:
    config: SystemConfig
    placement: Placement
    requests: tuple
    _eligible: dict = field(default_factory=dict, init=False, repr=False)
    _missing: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.requests = tuple(self.requests)
        cfg = self.config
        users = sorted(q.user for q in self.requests)
        if users != list(range(1, cfg.K + 1)):
            raise ValueError("need exactly one request per user 1..K")
        for q in self.requests:
            if not 1 <= q.demand <= cfg.N:
                raise ValueError(f"user {q.user} demands unknown file {q.demand}")
        self.placement.validate(cfg)
        self._by_user = {q.user: q for q in self.requests}

    @property
    def K(self) -> int:
        return self.config.K

    @property
    def r(self) -> int:
        return self.config.r

    def request(self, user: int) -> Request:
        return self._by_user[user]

    def users_by_arrival(self) -> list:
        # stable: ties keep input order
        return [q.user for q in sorted(self.requests, key=lambda q: q.arrival)]

    def missing(self, user: int) -> frozenset:
        if user not in self._missing:
            self._missing[user] = missing_set(self, user)
        return self._missing[user]

    def eligible(self, user: int, group: Group) -> frozenset:
        """Parts of the user's file missing locally but cached by the rest of ``group``."""
        key = (user, group)
        hit = self._eligible.get(key)
        if hit is None:
            d = self.request(user).demand
            others = [self.placement.cache(j) for j in group if j != user]
            hit = frozenset(
                f for f in self.missing(user)
                if all(SubfileId(d, f) in z for z in others)
            )
            self._eligible[key] = hit
        return hit

    def is_group(self, group: Group) -> bool:
        return all(self.eligible(i, group) for i in group)

    def uncoded_load(self) -> int:
        return self.r * sum(len(self.missing(i)) for i in range(1, self.K + 1))

    def to_json(self) -> dict:
        cfg = self.config
        return {
            "N": cfg.N, "K": cfg.K, "F": cfg.F, "r": cfg.r,
            "field_order": cfg.field_order,
            "caches": [sorted([s.file, s.part] for s in z) for z in self.placement.caches],
            "requests": [
                {"user": q.user, "arrival": q.arrival, "slack": q.slack, "demand": q.demand}
                for q in self.requests
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Instance":
        cfg = SystemConfig(
            N=data["N"], K=data["K"], F=data["F"], r=data.get("r", 1),
            field_order=data.get("field_order", 256),
        )
        return cls(
            cfg,
            Placement.from_lists(data["caches"]),
            tuple(Request(**q) for q in data["requests"]),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path) -> "Instance":
        return cls.from_json(json.loads(Path(path).read_text()))


def missing_set(instance: Instance, user: int) -> frozenset:
    d = instance.request(user).demand
    z = instance.placement.cache(user)
    return frozenset(f for f in range(1, instance.config.F + 1) if SubfileId(d, f) not in z)


def is_all_but_one(equation, placement: Placement, demands) -> bool:
    """Check an XOR of ``(user, SubfileId)`` terms against the all-but-one rule.

    ``demands`` maps user -> demanded file; each term's subfile must belong to
    that user's file, be absent from that user's cache and present in the
    cache of every other participant.
    """
    terms = list(equation)
    users = [u for u, _ in terms]
    if len(set(users)) != len(users):
        raise ValueError("each user may appear only once in an equation")
    for u, s in terms:
        if s.file != demands[u] or s in placement.cache(u):
            return False
        if any(s not in placement.cache(v) for v in users if v != u):
            return False
    return True


def enumerate_groups(instance: Instance, users: Iterable[int], max_size: int | None = None) -> list:
    """All user groups drawn from ``users``.

    Groups grow one user at a time; a set with some empty eligible family is
    never extended since eligibility only shrinks as the group grows.
    """
    pool = sorted(u for u in set(users) if instance.missing(u))
    cap = len(pool) if max_size is None else max_size
    found = []
    frontier = [(u,) for u in pool]
    while frontier:
        found.extend(frontier)
        nxt = []
        for g in frontier:
            if len(g) >= cap:
                continue
            for u in pool:
                if u <= g[-1]:
                    continue
                cand = g + (u,)
                if instance.is_group(cand):
                    nxt.append(cand)
        frontier = nxt
    return sorted(found, key=lambda g: (len(g), g))


@dataclass
class TimelineIndex:
    """Interval partition with every per-interval and per-group family.

    ``intervals[l - 1]`` is the half-open range of interval ``l``.  All the
    dict-valued families are keyed by the 1-based interval index.
    """

    instance: Instance
    intervals: list
    active_users: dict
    active_demands: dict
    missing: dict
    user_groups: dict
    eligible: dict
    group_intervals: dict
    carriers: dict

    @property
    def beta(self) -> int:
        return len(self.intervals)

    @property
    def t_max(self) -> int:
        return self.intervals[-1][1] if self.intervals else 0

    def length(self, l: int) -> int:
        a, b = self.intervals[l - 1]
        return b - a

    def groups(self) -> list:
        """Every group appearing in some interval, in (size, lexicographic) order."""
        return sorted(self.group_intervals, key=lambda g: (len(g), g))

    def users(self) -> list:
        return sorted(self.missing)

    def interval_of(self, tau: int) -> int | None:
        for l, (a, b) in enumerate(self.intervals, start=1):
            if a <= tau < b:
                return l
        return None


def build_timeline(instance: Instance, users: Iterable[int] | None = None,
                   start: int | None = None, max_group_size: int | None = None) -> TimelineIndex:
    """Partition time by arrivals and deadlines and index the set families.

    ``users`` restricts the requests considered and ``start`` clips every
    window to begin no earlier than ``start`` (windows ending by ``start`` are
    dropped); together they give the forward-looking partition used when a
    new request arrives online.
    """
    chosen = sorted(range(1, instance.K + 1) if users is None else users)
    windows = {}
    for i in chosen:
        q = instance.request(i)
        a, b = q.arrival, q.deadline
        if start is not None:
            a = max(a, start)
        if a < b:
            windows[i] = (a, b)

    points = sorted({t for w in windows.values() for t in w})
    intervals = [(a, b) for a, b in zip(points, points[1:]) if b > a]

    missing = {i: instance.missing(i) for i in windows}
    active = {}
    for l, (a, b) in enumerate(intervals, start=1):
        active[l] = tuple(i for i in sorted(windows)
                          if windows[i][0] <= a and b <= windows[i][1] and missing[i])
    demands = {l: tuple(sorted({instance.request(i).demand for i in us})) for l, us in active.items()}

    all_groups = enumerate_groups(instance, [i for i in windows if missing[i]], max_group_size)
    user_groups = {}
    group_intervals = {}
    for l, us in active.items():
        s = set(us)
        user_groups[l] = [g for g in all_groups if s.issuperset(g)]
        for g in user_groups[l]:
            group_intervals.setdefault(g, []).append(l)

    eligible = {}
    carriers = {(i, f): [] for i in missing for f in sorted(missing[i])}
    for g in sorted(group_intervals, key=lambda g: (len(g), g)):
        for i in g:
            fs = instance.eligible(i, g)
            eligible[(i, g)] = fs
            for f in sorted(fs):
                carriers[(i, f)].append(g)

    return TimelineIndex(
        instance=instance,
        intervals=intervals,
        active_users=active,
        active_demands=demands,
        missing=missing,
        user_groups=user_groups,
        eligible=eligible,
        group_intervals=group_intervals,
        carriers=carriers,
    )

