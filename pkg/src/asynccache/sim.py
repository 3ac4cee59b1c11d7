"""Instance generators and the Monte-Carlo harness.

All randomness flows from one 64-bit seed: trial ``k`` draws from
``SeedSequence([seed, k])`` at every arrival rate, so the grid points share
placements, deadlines and (rescaled) inter-arrival draws.  Differences
across the grid then reflect the rate alone, and no row depends on how many
other trials or grid points are run.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .model import Instance, Placement, Request, SubfileId, SystemConfig
from .offline import solve_offline
from .online import HIGH_THRESHOLD, LOW_THRESHOLD, Eta0Policy, run_online


def placement_centralized(K: int, M: float, N: int, t: float | None = None):
    """Cache part ``k`` of every file at the users in the ``k``-th ``t``-subset.

    Returns ``(F, placement)`` with ``F = C(K, t)``; subsets are numbered in
    ``itertools.combinations`` order.
    """
    t = K * M / N if t is None else t
    if abs(t - round(t)) > 1e-9:
        raise ValueError(f"t = KM/N = {t} is not an integer; use the decentralized placement")
    t = int(round(t))
    if not 0 <= t <= K:
        raise ValueError(f"t must lie in [0, K], got {t}")
    subsets = list(combinations(range(1, K + 1), t))
    caches = [[(n, k) for n in range(1, N + 1) for k, S in enumerate(subsets, start=1) if i in S]
              for i in range(1, K + 1)]
    return len(subsets), Placement.from_lists(caches)


def file_budgets(M: float, N: int, F: int, rng) -> list:
    """Parts cached per file: ``MF/N`` each, or when that is fractional the
    floor everywhere plus one extra part on randomly chosen files so the
    total stays ``floor(MF)``."""
    total = int(math.floor(M * F + 1e-9))
    if total > N * F:
        raise ValueError("cache larger than the library")
    base = total // N
    out = [base] * N
    for n in rng.choice(N, size=total - base * N, replace=False):
        out[int(n)] += 1
    return out


def placement_decentralized(K: int, M: float, N: int, F: int, rng) -> Placement:
    """Each user keeps an independent uniform subset of every file, of the size
    given by :func:`file_budgets` (drawn afresh per user)."""
    rng = np.random.default_rng(rng)
    caches = []
    for _ in range(K):
        z = []
        for n, q in enumerate(file_budgets(M, N, F, rng), start=1):
            z += [(n, int(f) + 1) for f in np.sort(rng.choice(F, size=q, replace=False))]
        caches.append(z)
    return Placement.from_lists(caches)


@dataclass(frozen=True)
class SubfileRequest:
    """One part of one file, wanted by ``user`` within ``[arrival, arrival + slack)``."""

    user: int
    file: int
    part: int
    arrival: int
    slack: int


def virtualize_subfile_deadlines(config: SystemConfig, placement: Placement, requests):
    """Turn per-part requests into an instance with one virtual user per part.

    Every requested part ``W[n, f]`` becomes its own one-part file, so a
    virtual user misses exactly that part.  A virtual user's cache holds the
    new file of every requested part its owner caches; this keeps the set of
    all-but-one equations identical to the original system.  Returns
    ``(instance, origin)`` with ``origin[v] = (user, SubfileId)``.
    """
    requests = sorted(requests, key=lambda q: (q.arrival, q.user, q.file, q.part))
    parts = sorted({SubfileId(q.file, q.part) for q in requests})
    new_file = {s: k for k, s in enumerate(parts, start=1)}
    origin = {}
    caches = []
    reqs = []
    for v, q in enumerate(requests, start=1):
        s = SubfileId(q.file, q.part)
        if s in placement.cache(q.user):
            raise ValueError(f"user {q.user} already caches {s}")
        origin[v] = (q.user, s)
        z = placement.cache(q.user)
        caches.append([(new_file[p], 1) for p in parts if p in z])
        reqs.append(Request(v, q.arrival, q.slack, new_file[s]))
    K = len(reqs)
    cfg = SystemConfig(N=max(len(parts), K), K=K, F=1, r=config.r, field_order=config.field_order)
    return Instance(cfg, Placement.from_lists(caches), reqs), origin


@dataclass(frozen=True)
class ArrivalModel:
    """Poisson arrivals with ``rate`` requests per slot, rounded to the nearest slot."""

    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("arrival rate must be positive")

    @classmethod
    def from_lambda(cls, lam: float, F: int) -> "ArrivalModel":
        return cls(lam * F)

    def sample(self, rng, count: int) -> np.ndarray:
        gaps = rng.standard_exponential(size=count) / self.rate
        return np.rint(np.cumsum(gaps)).astype(int)


@dataclass(frozen=True)
class DeadlineModel:
    """Slack drawn uniformly from the integers in ``[low, high]``."""

    low: int
    high: int

    def __post_init__(self):
        if not 1 <= self.low <= self.high:
            raise ValueError(f"need 1 <= low <= high, got [{self.low}, {self.high}]")

    @classmethod
    def offline_preset(cls, K: int, t: int) -> "DeadlineModel":
        return cls(math.comb(K - 1, t), math.comb(K, t + 1))

    @classmethod
    def online_preset(cls, K: int, M: float, N: int, F: int) -> "DeadlineModel":
        return cls(max(1, int(round(K * M * F / N))), K * F)

    def sample(self, rng, count: int) -> np.ndarray:
        return rng.integers(self.low, self.high + 1, size=count)


@dataclass
class SimConfig:
    K: int = 6
    N: int = 6
    M: float = 2
    F: int = 20
    r: int = 1
    placement: str = "decentralized"  # "centralized", "decentralized" or "virtual"
    lambdas: tuple = (0.2, 0.1, 0.05, 0.025)
    trials: int = 200
    seed: int = 0
    deadlines: DeadlineModel | None = None  # default: online preset
    low: Eta0Policy = LOW_THRESHOLD
    high: Eta0Policy = HIGH_THRESHOLD
    decode: bool = False  # also push payloads through the decoder
    emergency: bool = True  # serve a user about to miss its deadline regardless of the threshold

    def __post_init__(self):
        if self.placement not in ("centralized", "decentralized", "virtual"):
            raise ValueError(f"unknown placement {self.placement!r}")
        if self.placement == "centralized":
            self.F, _ = placement_centralized(self.K, self.M, self.N)

    def deadline_model(self) -> DeadlineModel:
        return self.deadlines or DeadlineModel.online_preset(self.K, self.M, self.N, self.F)


@dataclass
class TrialResult:
    seed: int
    lam: float
    uncoded: int
    offline_status: str
    offline_packets: float = math.nan
    online: dict = field(default_factory=dict)  # label -> (status, packets, all users decoded)

    @property
    def offline_feasible(self) -> bool:
        return self.offline_status == "optimal"

    def gain(self, label: str | None = None) -> float:
        """Uncoded load over packets sent; NaN when the scheme failed."""
        if label is None:
            ok, sent = self.offline_feasible, self.offline_packets
        else:
            status, sent, _ = self.online.get(label, ("skipped", 0, False))
            ok = status == "satisfied"
        if not ok or sent <= 0:
            return math.nan
        return self.uncoded / sent


def trial_instance(cfg: SimConfig, lam: float, rng: np.random.Generator) -> Instance:
    K, N, F = cfg.K, cfg.N, cfg.F
    arrivals = ArrivalModel.from_lambda(lam, F)
    slack = cfg.deadline_model()
    system = SystemConfig(N=N, K=K, F=F, r=cfg.r)
    if cfg.placement == "centralized":
        _, placement = placement_centralized(K, cfg.M, N)
    else:
        placement = placement_decentralized(K, cfg.M, N, F, rng)
    if cfg.placement != "virtual":
        T = arrivals.sample(rng, K)
        D = slack.sample(rng, K)
        reqs = [Request(i, int(T[i - 1]), int(D[i - 1]), i) for i in range(1, K + 1)]
        return Instance(system, placement, reqs)
    wanted = [(i, f) for i in range(1, K + 1) for f in range(1, F + 1)
              if SubfileId(i, f) not in placement.cache(i)]
    order = rng.permutation(len(wanted))
    T = arrivals.sample(rng, len(wanted))
    D = slack.sample(rng, len(wanted))
    subreqs = [SubfileRequest(wanted[k][0], wanted[k][0], wanted[k][1], int(T[n]), int(D[n]))
               for n, k in enumerate(order)]
    return virtualize_subfile_deadlines(system, placement, subreqs)[0]


def run_trial(cfg: SimConfig, lam: float, trial: int) -> TrialResult:
    ss = np.random.SeedSequence([cfg.seed, trial])
    rng = np.random.default_rng(ss)
    inst = trial_instance(cfg, lam, rng)
    online_seed = int(rng.integers(0, 2**63 - 1))
    uncoded = inst.uncoded_load()
    off = solve_offline(inst)
    res = TrialResult(online_seed, lam, uncoded, off.status,
                      off.objective if off.feasible else math.nan)
    if not off.feasible:
        return res
    gap = 1.0 / (lam * cfg.F)
    for label, policy in (("low", cfg.low), ("high", cfg.high)):
        out = run_online(inst, policy, seed=online_seed, gap=gap, payloads=cfg.decode,
                         emergency=cfg.emergency)
        res.online[label] = (out.status, out.packets_sent, out.all_decoded)
    return res


def _mean_se(values):
    v = np.asarray([a for a in values if not math.isnan(a)], dtype=float)
    if len(v) == 0:
        return math.nan, math.nan, 0
    se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else math.nan
    return float(v.mean()), se, len(v)


def _rate_se(hits: int, n: int):
    if n == 0:
        return math.nan, math.nan
    p = hits / n
    return p, math.sqrt(p * (1 - p) / n)


@dataclass
class GridSummary:
    lam: float
    mean_gap: float  # 1 / (F lambda), slots between arrivals on average
    trials: int
    offline_feasible: float
    offline_gain: float
    offline_gain_se: float
    online: dict  # label -> (feasible prob, se, gain, gain se)


def summarize(cfg: SimConfig, lam: float, results) -> GridSummary:
    n = len(results)
    feas = [t for t in results if t.offline_feasible]
    g, se, _ = _mean_se([t.gain() for t in feas])
    online = {}
    for label in ("low", "high"):
        hits = sum(t.online[label][0] == "satisfied" for t in feas)
        p, pse = _rate_se(hits, len(feas))
        gg, gse, _ = _mean_se([t.gain(label) for t in feas])
        online[label] = (p, pse, gg, gse)
    return GridSummary(lam, 1.0 / (cfg.F * lam), n, len(feas) / n if n else math.nan, g, se, online)


def run_trials(cfg: SimConfig, on_trial=None):
    """Run ``cfg.trials`` trials at every arrival rate; returns ``(summaries, trials)``.

    The online scheduler is only tried on instances whose offline LP is
    feasible, and online statistics are conditioned on that event.
    """
    summaries, everything = [], []
    for g, lam in enumerate(cfg.lambdas):
        rows = []
        for k in range(cfg.trials):
            t = run_trial(cfg, lam, k)
            rows.append(t)
            if on_trial is not None:
                on_trial(g, k, t)
        everything += rows
        summaries.append(summarize(cfg, lam, rows))
    return summaries, everything


SUMMARY_HEADER = ["lambda", "mean_gap", "trials", "offline_feasible", "offline_gain", "offline_gain_se",
                  "low_feasible", "low_feasible_se", "low_gain", "low_gain_se",
                  "high_feasible", "high_feasible_se", "high_gain", "high_gain_se"]

TRIAL_HEADER = ["lambda", "trial", "seed", "uncoded", "offline_status", "offline_packets",
                "low_status", "low_packets", "low_decoded", "high_status", "high_packets", "high_decoded"]


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6f}"
    return str(v)


def summary_csv(summaries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for s in summaries:
        row = [s.lam, s.mean_gap, s.trials, s.offline_feasible, s.offline_gain, s.offline_gain_se]
        for label in ("low", "high"):
            row += list(s.online[label])
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def trials_csv(trials, per_grid: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIAL_HEADER)
    for n, t in enumerate(trials):
        row = [t.lam, n % per_grid, t.seed, t.uncoded, t.offline_status, t.offline_packets]
        for label in ("low", "high"):
            st, sent, dec = t.online.get(label, ("skipped", 0, False))
            row += [st, sent, int(dec)]
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()
