"""Independent reference computations used by several test modules."""

import itertools
from functools import lru_cache

from asynccache.model import SubfileId, is_all_but_one


def min_integral_schedule(instance, limit=None):
    """Fewest XOR broadcasts meeting every deadline, by exhaustive search.

    Each slot carries nothing or one all-but-one equation made of one
    still-missing part per participating active user (r = 1).  Returns
    None when no schedule exists (or none within ``limit`` sends).
    """
    assert instance.r == 1
    reqs = instance.requests
    demands = {q.user: q.demand for q in reqs}
    need = {q.user: frozenset(instance.missing(q.user)) for q in reqs}
    start = min(q.arrival for q in reqs)
    end = max(q.deadline for q in reqs)
    cap = limit if limit is not None else sum(len(v) for v in need.values())

    def equations(tau, got):
        active = [q.user for q in reqs if q.arrival <= tau < q.deadline and need[q.user] - got[q.user]]
        for k in range(1, len(active) + 1):
            for us in itertools.combinations(active, k):
                for parts in itertools.product(*[sorted(need[u] - got[u]) for u in us]):
                    eq = [(u, SubfileId(demands[u], f)) for u, f in zip(us, parts)]
                    if is_all_but_one(eq, instance.placement, demands):
                        yield tuple(zip(us, parts))

    users = sorted(need)

    @lru_cache(maxsize=None)
    def best(tau, state):
        got = dict(zip(users, state))
        for q in reqs:
            if q.deadline <= tau and need[q.user] - got[q.user]:
                return None
        if all(not (need[u] - got[u]) for u in users):
            return 0
        if tau >= end:
            return None
        out = best(tau + 1, state)
        for eq in equations(tau, got):
            nxt = dict(got)
            for u, f in eq:
                nxt[u] = nxt[u] | {f}
            sub = best(tau + 1, tuple(nxt[u] for u in users))
            if sub is not None and (out is None or sub + 1 < out):
                out = sub + 1
        return out

    res = best(start, tuple(frozenset() for _ in users))
    return res if res is not None and res <= cap else None
