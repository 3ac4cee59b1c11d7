import numpy as np
import pytest

from asynccache.model import Instance, Placement, Request, SystemConfig
from asynccache.sim import placement_centralized

ACCEPTANCE = {}


def three_user(slack3=2):
    caches = [[(2, 1), (2, 2), (3, 3)], [(1, 1), (2, 3), (3, 1)], [(2, 2), (3, 2), (2, 1)]]
    reqs = [Request(1, 0, 5, 1), Request(2, 1, 4, 2), Request(3, 3, slack3, 3)]
    return Instance(SystemConfig(3, 3, 3), Placement.from_lists(caches), reqs)


def staggered_trio(order="nominal"):
    """User i caches part i of every file; arrivals (1, 2, 3) or with users 2 and 3 swapped."""
    pl = Placement.from_lists([[(n, i) for n in range(1, 4)] for i in range(1, 4)])
    T = {1: 1, 2: 2, 3: 3} if order == "nominal" else {1: 1, 2: 3, 3: 2}
    return Instance(SystemConfig(3, 3, 3), pl, [Request(i, T[i], 2, i) for i in (1, 2, 3)])


def five_user():
    """Five users, two-subset placement with ten parts, slack 15."""
    F, pl = placement_centralized(5, 2, 5)
    T = [0, 2, 3, 6, 8]
    return Instance(SystemConfig(5, 5, F), pl, [Request(i, T[i - 1], 15, i) for i in range(1, 6)])


FIVE_USER_HISTORY = {(1,): 2, (1, 2): 1, (1, 3): 1, (2, 3): 1, (1, 2, 3): 1, (1, 2, 4): 1, (2, 3, 4): 1}


def synchronous_mn(r=1, slack=10):
    F, pl = placement_centralized(3, 1, 3)
    return Instance(SystemConfig(3, 3, F, r), pl, [Request(i, 0, slack, i) for i in (1, 2, 3)])


def random_instance(rng, K=None, F=None, r=1, p=0.4):
    K = K or int(rng.integers(2, 7))
    F = F or int(rng.integers(2, 7))
    caches = [[(n, f) for n in range(1, K + 1) for f in range(1, F + 1) if rng.random() < p]
              for _ in range(K)]
    reqs = [Request(i, int(rng.integers(0, 2 * F)), int(rng.integers(F // 2 + 1, 2 * F + 3)), i)
            for i in range(1, K + 1)]
    return Instance(SystemConfig(K, K, F, r), Placement.from_lists(caches), reqs)


@pytest.fixture
def ex1():
    return three_user()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(number, ok, detail=""):
        ACCEPTANCE[number] = (bool(ok), detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
