"""Multi-resource fair allocation across heterogeneous servers.

The fluid solver equalizes every user's global dominant share with an LP; the
discrete scheduler approximates it task by task (First-Fit, Best-Fit or a
fixed-slot baseline) inside a discrete-event simulator.
"""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    ClusterSpec, DimensionError, UserDemand, demand_from_shares, derive_demand, normalize_cluster,
)
from .fluid import FluidSolution, SolverError, per_server_drf, solve_drfh, solve_finite_tasks, solve_weighted  # noqa: E402
from .scheduler import Scheduler, SchedulerPolicy, Task  # noqa: E402
from .sim import MetricsSeries, UserSpec, Workload, run_simulation, summarize  # noqa: E402

__all__ = [
    "ClusterSpec", "DimensionError", "UserDemand", "demand_from_shares", "derive_demand",
    "normalize_cluster", "FluidSolution", "SolverError", "per_server_drf", "solve_drfh",
    "solve_finite_tasks", "solve_weighted", "Scheduler", "SchedulerPolicy", "Task",
    "MetricsSeries", "UserSpec", "Workload", "run_simulation", "summarize",
]
