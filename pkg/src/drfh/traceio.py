"""Cluster and workload ingestion, synthetic generators and result files.

File formats (all UTF-8, comma separated, header required):

* task trace   ``task_id,job_id,user_id,submit_time_s,duration_s,cpu_units,mem_units``
* cluster      ``server_id,cpu_units,mem_units`` (any ``<name>_units`` columns)
* user demands ``user_id,cpu_units,mem_units[,weight][,task_budget]``
* metrics      ``time_s,cpu_util,mem_util,user_id,dominant_share`` (long format)
* placements   ``time_s,event,task_id,job_id,user_id,server_id``
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import ClusterSpec, UserDemand, derive_demand, normalize_cluster
from .scheduler import Task
from .sim import MetricsSeries, UserSpec, Workload

log = logging.getLogger(__name__)

TRACE_HEADER = ["task_id", "job_id", "user_id", "submit_time_s", "duration_s", "cpu_units", "mem_units"]
METRICS_HEADER = ["time_s", "cpu_util", "mem_util", "user_id", "dominant_share"]
PLACEMENT_HEADER = ["time_s", "event", "task_id", "job_id", "user_id", "server_id"]


class TraceFormatError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


# Google cluster server classes, CPU and memory relative to the largest server.
GOOGLE_SERVER_CLASSES = (
    (6732, 0.50, 0.50),
    (3863, 0.50, 0.25),
    (1001, 0.50, 0.75),
    (795, 1.00, 1.00),
    (126, 0.25, 0.25),
    (52, 0.50, 0.12),
    (5, 0.50, 0.03),
    (5, 0.50, 0.97),
    (3, 1.00, 0.50),
    (1, 0.50, 0.06),
)


@dataclass(frozen=True)
class ServerClassTable:
    rows: tuple[tuple[int, float, float], ...] = GOOGLE_SERVER_CLASSES

    def __post_init__(self):
        if not self.rows:
            raise ValueError("server class table is empty")
        for count, cpu, mem in self.rows:
            if count <= 0 or not (0 < cpu <= 1) or not (0 < mem <= 1):
                raise ValueError(f"invalid server class row {(count, cpu, mem)}")

    @property
    def total(self) -> int:
        return sum(r[0] for r in self.rows)

    @property
    def probabilities(self) -> np.ndarray:
        counts = np.array([r[0] for r in self.rows], dtype=float)
        return counts / counts.sum()


def sample_cluster(table: ServerClassTable, k: int, rng_seed: int,
                   unit_scale: float = 1.0) -> ClusterSpec:
    """Draw ``k`` servers independently with class probability count/total.

    Absolute units are the table's relative sizes times ``unit_scale``.
    """
    if k < 1:
        raise ValueError("need at least one server")
    rng = np.random.default_rng(rng_seed)
    idx = rng.choice(len(table.rows), size=k, p=table.probabilities)
    caps = np.array([[table.rows[i][1], table.rows[i][2]] for i in idx]) * unit_scale
    return normalize_cluster(caps, ("cpu", "mem"))


# -- task traces -----------------------------------------------------------


@dataclass(frozen=True)
class TraceRow:
    task_id: str
    job_id: str
    user_id: str
    submit_time_s: float
    duration_s: float
    cpu_units: float
    mem_units: float

    def to_task(self) -> Task:
        return Task(self.task_id, self.job_id, self.user_id, (self.cpu_units, self.mem_units),
                    self.duration_s, self.submit_time_s)


def _fmt(x: float) -> str:
    return repr(float(x))


def _read_csv(path, header_required: Sequence[str]) -> tuple[list[str], list[tuple[int, list[str]]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise TraceFormatError(path, 1, "missing header") from None
        missing = [h for h in header_required if h not in header]
        if missing:
            raise TraceFormatError(path, 1, f"header lacks columns {missing}")
        rows = [(reader.line_num, row) for row in reader if row and any(c.strip() for c in row)]
    return header, rows


def _positive(path, line, name, value: str, allow_zero=False) -> float:
    try:
        x = float(value)
    except ValueError:
        raise TraceFormatError(path, line, f"{name}={value!r} is not a number") from None
    if not math.isfinite(x) or x < 0 or (x == 0 and not allow_zero):
        raise TraceFormatError(path, line, f"{name}={value!r} must be {'nonnegative' if allow_zero else 'positive'}")
    return x


def load_trace(path) -> list[TraceRow]:
    header, rows = _read_csv(path, TRACE_HEADER)
    col = {h: i for i, h in enumerate(header)}
    out = []
    for line, row in rows:
        if len(row) != len(header):
            raise TraceFormatError(path, line, f"expected {len(header)} fields, got {len(row)}")
        get = lambda name: row[col[name]].strip()  # noqa: E731
        out.append(TraceRow(
            get("task_id"), get("job_id"), get("user_id"),
            _positive(path, line, "submit_time_s", get("submit_time_s"), allow_zero=True),
            _positive(path, line, "duration_s", get("duration_s")),
            _positive(path, line, "cpu_units", get("cpu_units")),
            _positive(path, line, "mem_units", get("mem_units")),
        ))
    times = [r.submit_time_s for r in out]
    if any(b < a for a, b in zip(times, times[1:])):
        log.warning("%s is not sorted by submit time; re-sorting", path)
        out.sort(key=lambda r: r.submit_time_s)
    return out


def write_trace(rows: Iterable[TraceRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in rows:
            w.writerow([r.task_id, r.job_id, r.user_id, _fmt(r.submit_time_s), _fmt(r.duration_s),
                        _fmt(r.cpu_units), _fmt(r.mem_units)])


def rows_to_workload(rows: Iterable[TraceRow], users: dict[str, UserSpec] | None = None) -> Workload:
    return Workload([r.to_task() for r in rows], dict(users or {}))


def workload_to_rows(workload: Workload) -> list[TraceRow]:
    return [TraceRow(t.id, t.job_id, t.user_id, t.submit_time, t.duration, *t.demand)
            for t in sorted(workload.tasks, key=lambda t: t.submit_time)]


# -- clusters and demands --------------------------------------------------


def _unit_columns(header: Sequence[str]) -> list[str]:
    return [h for h in header if h.endswith("_units")]


def load_cluster(path) -> ClusterSpec:
    header, rows = _read_csv(path, ["server_id"])
    units = _unit_columns(header)
    if not units:
        raise TraceFormatError(path, 1, "no <resource>_units columns")
    col = {h: i for i, h in enumerate(header)}
    caps = []
    for line, row in rows:
        if len(row) != len(header):
            raise TraceFormatError(path, line, f"expected {len(header)} fields, got {len(row)}")
        caps.append([_positive(path, line, h, row[col[h]].strip(), allow_zero=True) for h in units])
    if not caps:
        raise TraceFormatError(path, 2, "cluster file lists no servers")
    try:
        return normalize_cluster(caps, [h[:-len("_units")] for h in units])
    except ValueError as exc:
        raise TraceFormatError(path, 1, str(exc)) from None


def write_cluster(cluster: ClusterSpec, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["server_id"] + [f"{n}_units" for n in cluster.resource_names])
        for l, row in enumerate(cluster.raw):
            w.writerow([l] + [_fmt(x) for x in row])


def load_demands(path, cluster: ClusterSpec) -> list[UserDemand]:
    header, rows = _read_csv(path, ["user_id"])
    units = [f"{n}_units" for n in cluster.resource_names]
    missing = [u for u in units if u not in header]
    if missing:
        raise TraceFormatError(path, 1, f"header lacks columns {missing} required by the cluster")
    col = {h: i for i, h in enumerate(header)}
    users = []
    for line, row in rows:
        if len(row) != len(header):
            raise TraceFormatError(path, line, f"expected {len(header)} fields, got {len(row)}")
        demand = [_positive(path, line, h, row[col[h]].strip()) for h in units]
        weight = _positive(path, line, "weight", row[col["weight"]].strip()) if "weight" in col else 1.0
        budget = math.inf
        if "task_budget" in col and row[col["task_budget"]].strip() not in ("", "inf"):
            budget = _positive(path, line, "task_budget", row[col["task_budget"]].strip())
        users.append(derive_demand(demand, cluster, weight, budget, row[col["user_id"]].strip()))
    if not users:
        raise TraceFormatError(path, 2, "demand file lists no users")
    return users


# -- synthetic workloads ---------------------------------------------------


@dataclass(frozen=True)
class WorkloadConfig:
    """Parameters of the synthetic trace generator.

    Users are CPU-heavy or memory-heavy (a two-component mixture); each job
    draws one log-normal demand around its user's component and all its tasks
    share it. Jobs arrive per user as a Poisson process over ``span_s``.
    """

    n_users: int = 20
    span_s: float = 3600.0
    jobs_per_user: float = 10.0  # Poisson mean over the span
    tasks_per_job: float = 10.0  # geometric mean
    cpu_heavy_fraction: float = 0.5
    cpu_heavy_demand: tuple[float, float] = (0.08, 0.03)
    mem_heavy_demand: tuple[float, float] = (0.03, 0.08)
    demand_sigma: float = 0.4
    max_demand: float = 0.5
    min_demand: float = 1e-3
    duration_median_s: float = 300.0
    duration_sigma: float = 0.8

    def __post_init__(self):
        for name in ("n_users", "span_s", "jobs_per_user", "tasks_per_job", "duration_median_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.cpu_heavy_fraction <= 1:
            raise ValueError("cpu_heavy_fraction must lie in [0, 1]")


def generate_workload(config: WorkloadConfig, rng_seed: int) -> list[TraceRow]:
    rng = np.random.default_rng(rng_seed)
    rows = []
    width = len(str(config.n_users))
    for u in range(config.n_users):
        user = f"u{u:0{width}d}"
        center = np.array(config.cpu_heavy_demand if rng.random() < config.cpu_heavy_fraction
                          else config.mem_heavy_demand)
        n_jobs = max(1, rng.poisson(config.jobs_per_user))
        starts = np.sort(rng.uniform(0.0, config.span_s, n_jobs))
        for j, start in enumerate(starts):
            job = f"{user}-j{j}"
            demand = center * rng.lognormal(0.0, config.demand_sigma, 2)
            demand = np.round(np.clip(demand, config.min_demand, config.max_demand), 4)
            n_tasks = int(rng.geometric(1.0 / config.tasks_per_job))
            durations = np.round(rng.lognormal(math.log(config.duration_median_s),
                                               config.duration_sigma, n_tasks), 1)
            for t in range(n_tasks):
                rows.append(TraceRow(f"{job}-t{t}", job, user, round(float(start), 3),
                                     max(float(durations[t]), 0.1),
                                     float(demand[0]), float(demand[1])))
    rows.sort(key=lambda r: r.submit_time_s)
    return rows


# -- results ---------------------------------------------------------------


def write_metrics(series: MetricsSeries, path) -> None:
    util_cols = [f"{n}_util" for n in series.resource_names]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s"] + util_cols + ["user_id", "dominant_share"])
        for t, util, shares in zip(series.times, series.utilization, series.shares):
            head = [_fmt(t)] + [_fmt(x) for x in util]
            if not series.user_ids:
                w.writerow(head + ["", ""])
            for uid, s in zip(series.user_ids, shares):
                w.writerow(head + [uid, _fmt(s)])


def write_placements(series: MetricsSeries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLACEMENT_HEADER)
        for t, event, task_id, job_id, user_id, server in series.placement_log:
            w.writerow([_fmt(t), event, task_id, job_id, user_id, server])


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_json(obj, path) -> None:
    Path(path).write_text(dumps_json(obj), encoding="utf-8")



def load_users(path) -> dict[str, UserSpec]:
    """Optional per-user schedule: ``user_id[,join_time_s][,depart_time_s][,weight]``."""
    header, rows = _read_csv(path, ["user_id"])
    col = {h: i for i, h in enumerate(header)}
    users = {}
    for line, row in rows:
        if len(row) != len(header):
            raise TraceFormatError(path, line, f"expected {len(header)} fields, got {len(row)}")

        def opt(name, allow_zero=True):
            if name not in col or not row[col[name]].strip():
                return None
            return _positive(path, line, name, row[col[name]].strip(), allow_zero)

        uid = row[col["user_id"]].strip()
        weight = opt("weight", allow_zero=False)
        users[uid] = UserSpec(uid, opt("join_time_s"), opt("depart_time_s"),
                              1.0 if weight is None else weight)
    return users


def write_users(users: dict[str, UserSpec], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "join_time_s", "depart_time_s", "weight"])
        for u in users.values():
            w.writerow([u.user_id, "" if u.join_time is None else _fmt(u.join_time),
                        "" if u.depart_time is None else _fmt(u.depart_time), _fmt(u.weight)])
