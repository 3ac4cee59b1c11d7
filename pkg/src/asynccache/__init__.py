"""Broadcast scheduling for coded caching when requests arrive at different
times and carry individual deadlines."""

from .model import (Instance, Placement, Request, SubfileId, SystemConfig, TimelineIndex,
                    build_timeline, is_all_but_one, missing_set)
from .offline import Schedule, interpret_schedule, solve_offline
from .dual import solve_via_decomposition
from .online import Eta0Policy, run_online
from .sim import SimConfig, run_trials

__version__ = "0.1.0"

__all__ = [
    "Instance", "Placement", "Request", "SubfileId", "SystemConfig", "TimelineIndex",
    "build_timeline", "is_all_but_one", "missing_set", "Schedule", "interpret_schedule",
    "solve_offline", "solve_via_decomposition", "Eta0Policy", "run_online", "SimConfig",
    "run_trials",
]
