"""Canned experiment setups shared by the CLI and the acceptance suite."""

from __future__ import annotations

import numpy as np

from .model import ClusterSpec
from .scheduler import Task
from .sim import UserSpec, Workload
from .traceio import WorkloadConfig

# user id -> (join time s, per-task demand as a share of the largest server)
THREE_USER_JOBS = {
    "1": (0.0, (0.2, 0.3)),
    "2": (200.0, (0.5, 0.1)),
    "3": (500.0, (0.1, 0.3)),
}
THREE_USER_DEPART = {"1": 1080.0}

# about 12k tasks; heavy enough that the cluster stays saturated
UTILIZATION_WORKLOAD = WorkloadConfig(
    n_users=20, span_s=3600.0, jobs_per_user=10, tasks_per_job=60.0,
    duration_median_s=600.0, cpu_heavy_demand=(0.1, 0.02), mem_heavy_demand=(0.02, 0.1),
)
SHARING_WORKLOAD = WorkloadConfig(
    n_users=50, span_s=3600.0, jobs_per_user=10, tasks_per_job=20.0, duration_median_s=600.0,
)


def three_user_workload(cluster: ClusterSpec, seed: int, tasks_per_user: int = 4000,
                        duration_range=(20.0, 60.0)) -> Workload:
    """Three users joining at 0, 200 and 500 s; user 1 leaves at 1080 s.

    Each user submits its whole backlog at join time. Demands are given
    relative to the largest server, so they scale with the sampled cluster.
    """
    unit = cluster.raw.max(axis=0)
    tasks, users = [], {}
    for uid, (join, shape) in THREE_USER_JOBS.items():
        demand = tuple(float(x) for x in np.asarray(shape) * unit)
        rng = np.random.default_rng([seed, int(uid)])
        durations = rng.uniform(*duration_range, size=tasks_per_user)
        tasks.extend(Task(f"{uid}-t{t}", f"{uid}-j0", uid, demand, float(durations[t]), join)
                     for t in range(tasks_per_user))
        users[uid] = UserSpec(uid, join, THREE_USER_DEPART.get(uid))
    return Workload(tasks, users)


def phases(workload: Workload, horizon: float) -> list[tuple[float, float, list[str]]]:
    """Intervals between membership changes with the users active in each."""
    marks = {0.0, float(horizon)}
    for spec in workload.users.values():
        for t in (spec.join_time, spec.depart_time):
            if t is not None and 0 <= t <= horizon:
                marks.add(float(t))
    marks = sorted(marks)
    out = []
    for a, b in zip(marks, marks[1:]):
        active = [u for u, s in workload.users.items()
                  if (s.join_time or 0.0) <= a and (s.depart_time is None or s.depart_time >= b)]
        out.append((a, b, active))
    return out
