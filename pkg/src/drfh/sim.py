"""Discrete-event simulation of the scheduler over a task workload."""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import ClusterSpec
from .scheduler import Scheduler, SchedulerPolicy, Task

log = logging.getLogger(__name__)

# simultaneous events: releases before placements
FINISH, DEPART, JOIN, SUBMIT = 0, 1, 2, 3
EVENT_NAMES = {FINISH: "task_finish", DEPART: "user_depart", JOIN: "user_join", SUBMIT: "task_submit"}


@dataclass(frozen=True)
class UserSpec:
    user_id: str
    join_time: float | None = None  # defaults to the first submission
    depart_time: float | None = None
    weight: float = 1.0


@dataclass
class Workload:
    tasks: list[Task]
    users: dict[str, UserSpec] = field(default_factory=dict)

    def user_ids(self) -> list[str]:
        ids = set(self.users) | {t.user_id for t in self.tasks}
        return sorted(ids, key=_natural_key)

    def for_users(self, user_ids) -> "Workload":
        keep = set(user_ids)
        return Workload([t for t in self.tasks if t.user_id in keep],
                        {u: s for u, s in self.users.items() if u in keep})


def _natural_key(s: str):
    return [int(p) if p.isdigit() else p for p in _split_digits(s)]


def _split_digits(s: str):
    return [''.join(g) for _, g in itertools.groupby(s, str.isdigit)]


@dataclass(frozen=True)
class SimEvent:
    time: float
    kind: int
    seq: int
    payload: object = field(compare=False, default=None)

    def __lt__(self, other: "SimEvent") -> bool:
        return (self.time, self.kind, self.seq) < (other.time, other.kind, other.seq)


@dataclass
class JobStats:
    job_id: str
    user_id: str
    submit: float
    n_tasks: int
    finished: int = 0
    last_finish: float = 0.0

    @property
    def completion_time(self) -> float:
        if self.finished < self.n_tasks:
            return math.nan
        return self.last_finish - self.submit


@dataclass
class MetricsSeries:
    policy: str
    horizon: float
    resource_names: tuple[str, ...]
    user_ids: list[str]
    times: np.ndarray
    utilization: np.ndarray  # T x m, fraction of system total in use
    shares: np.ndarray  # T x n, global dominant share per user
    jobs: dict[str, JobStats]
    submitted: dict[str, int]
    completed: dict[str, int]
    counts: dict[str, int]
    placement_log: list[tuple]

    def mean_utilization(self) -> np.ndarray:
        """Time-weighted mean of the step-wise utilization over [0, horizon]."""
        if self.horizon <= 0 or self.times.size == 0:
            return np.zeros(len(self.resource_names))
        t = np.append(self.times, self.horizon)
        widths = np.clip(np.diff(t), 0.0, None)
        return (self.utilization * widths[:, None]).sum(axis=0) / self.horizon

    def completion_times(self) -> np.ndarray:
        ct = np.array([j.completion_time for j in self.jobs.values()])
        return np.sort(ct[~np.isnan(ct)])

    def completion_ratio(self) -> dict[str, float]:
        return {u: (self.completed.get(u, 0) / n if n else 1.0) for u, n in self.submitted.items()}


def run_simulation(cluster: ClusterSpec, workload: Workload, policy: SchedulerPolicy,
                   horizon: float, sample_interval: float = 10.0) -> MetricsSeries:
    """Replay ``workload`` on ``cluster`` until ``horizon`` seconds.

    State is recorded after every batch of simultaneous events and at every
    multiple of ``sample_interval``.
    """
    if not horizon > 0 or not sample_interval > 0:
        raise ValueError("horizon and sample interval must be positive")
    sched = Scheduler(cluster, policy)
    user_ids = workload.user_ids()
    col = {u: i for i, u in enumerate(user_ids)}
    for uid in user_ids:
        spec = workload.users.get(uid)
        u = sched.user(uid, spec.weight if spec else 1.0, math.inf)
        u.join_scheduled = spec is not None and spec.join_time is not None

    seq = itertools.count()
    heap: list[SimEvent] = []
    for uid, spec in workload.users.items():
        if spec.join_time is not None and spec.join_time <= horizon:
            heap.append(SimEvent(spec.join_time, JOIN, next(seq), spec))
        if spec.depart_time is not None and spec.depart_time <= horizon:
            heap.append(SimEvent(spec.depart_time, DEPART, next(seq), spec))
    for task in sorted(workload.tasks, key=lambda t: t.submit_time):
        if task.submit_time <= horizon:
            heap.append(SimEvent(task.submit_time, SUBMIT, next(seq), task))
    heapq.heapify(heap)

    jobs: dict[str, JobStats] = {}
    submitted = {u: 0 for u in user_ids}
    completed = {u: 0 for u in user_ids}
    counts = {"submitted": 0, "completed": 0, "rejected": 0, "cancelled": 0}
    placement_log: list[tuple] = []
    times: list[float] = []
    util_rows: list[np.ndarray] = []
    share_rows: list[np.ndarray] = []
    shares = np.zeros(len(user_ids))

    def record(t: float) -> None:
        if times and times[-1] == t:
            util_rows[-1] = sched.used.copy()
            share_rows[-1] = shares.copy()
            return
        times.append(t)
        util_rows.append(sched.used.copy())
        share_rows.append(shares.copy())

    next_sample = 0.0

    def sample_until(t: float, inclusive: bool) -> None:
        nonlocal next_sample
        while next_sample < t or (inclusive and next_sample <= t):
            record(next_sample)
            next_sample += sample_interval

    while heap and heap[0].time <= horizon:
        now = heap[0].time
        sample_until(now, inclusive=False)
        while heap and heap[0].time == now:
            ev = heapq.heappop(heap)
            if ev.kind == FINISH:
                task = ev.payload
                l = sched.finish(task)
                shares[col[task.user_id]] = sched.users[task.user_id].share
                completed[task.user_id] += 1
                counts["completed"] += 1
                job = jobs[task.job_id]
                job.finished += 1
                job.last_finish = max(job.last_finish, now)
                placement_log.append((now, "finish", task.id, task.job_id, task.user_id, l))
            elif ev.kind == DEPART:
                for task in sched.depart(ev.payload.user_id):
                    counts["cancelled"] += 1
                    placement_log.append((now, "cancel", task.id, task.job_id, task.user_id, -1))
            elif ev.kind == JOIN:
                spec = ev.payload
                sched.join(spec.user_id, now, spec.weight)
            else:
                task = ev.payload
                counts["submitted"] += 1
                submitted[task.user_id] += 1
                job = jobs.get(task.job_id)
                if job is None:
                    job = jobs[task.job_id] = JobStats(task.job_id, task.user_id, now, 0)
                job.n_tasks += 1
                if not sched.fits_anywhere(task):
                    counts["rejected"] += 1
                    log.warning("task %s exceeds every server's capacity; rejected", task.id)
                    placement_log.append((now, "reject", task.id, task.job_id, task.user_id, -1))
                elif sched.users[task.user_id].departed:
                    counts["cancelled"] += 1
                    placement_log.append((now, "cancel", task.id, task.job_id, task.user_id, -1))
                else:
                    sched.submit(task)
        for task, l in sched.schedule():
            shares[col[task.user_id]] = sched.users[task.user_id].share
            placement_log.append((now, "place", task.id, task.job_id, task.user_id, l))
            heapq.heappush(heap, SimEvent(now + task.duration, FINISH, next(seq), task))
        record(now)

    sample_until(horizon, inclusive=True)
    counts["resident"] = len(sched.location)
    counts["pending"] = sum(len(u.pending) for u in sched.users.values())
    return MetricsSeries(
        policy=policy.label,
        horizon=float(horizon),
        resource_names=tuple(cluster.resource_names),
        user_ids=user_ids,
        times=np.array(times),
        utilization=np.array(util_rows).reshape(len(times), cluster.m),
        shares=np.array(share_rows).reshape(len(times), len(user_ids)),
        jobs=jobs,
        submitted=submitted,
        completed=completed,
        counts=counts,
        placement_log=placement_log,
    )


def summarize(series: MetricsSeries) -> dict:
    """Aggregate figures for one run: utilization, completion times and ratios."""
    mean = series.mean_utilization()
    ct = series.completion_times()
    pct = {f"p{q}": (float(np.percentile(ct, q)) if ct.size else None) for q in (50, 90, 99)}
    return {
        "policy": series.policy,
        "horizon_s": series.horizon,
        "mean_utilization": {name: float(v) for name, v in zip(series.resource_names, mean)},
        "mean_combined_utilization": float(mean.mean()),
        "completion_time_percentiles_s": pct,
        "jobs_completed": int(ct.size),
        "jobs_submitted": len(series.jobs),
        "task_counts": dict(series.counts),
        "user_completion_ratio": series.completion_ratio(),
    }


def completion_cdf(series: MetricsSeries) -> tuple[np.ndarray, np.ndarray]:
    ct = series.completion_times()
    return ct, np.arange(1, ct.size + 1) / max(ct.size, 1)


def _run_one(args):
    return run_simulation(*args)


def run_batch(runs: Sequence[tuple], workers: int | None = None) -> list[MetricsSeries]:
    """Run independent ``run_simulation`` argument tuples, in order.

    ``workers`` defaults to the number of available cores.
    """
    workers = workers or os.cpu_count() or 1
    if workers <= 1 or len(runs) <= 1:
        return [_run_one(r) for r in runs]
    with ProcessPoolExecutor(max_workers=min(workers, len(runs))) as pool:
        return list(pool.map(_run_one, runs))
