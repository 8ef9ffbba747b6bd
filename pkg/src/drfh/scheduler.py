"""Progressive filling of indivisible tasks onto a heterogeneous server pool.

At every scheduling opportunity the user with the lowest weighted global
dominant share is served first; its next task goes to the first server that
fits (First-Fit) or to the fitting server whose free-resource shape best
matches the task (Best-Fit). The Slots policy is the single-resource baseline.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .model import ClusterSpec

FIT_TOL = 1e-12

FIRST_FIT = "first_fit_drfh"
BEST_FIT = "best_fit_drfh"
SLOTS = "slots"
POLICY_KINDS = (FIRST_FIT, BEST_FIT, SLOTS)

SKIP = "skip"  # a blocked user is passed over for the next-lowest share
WAIT = "wait"  # nobody is served until the lowest-share user fits
BLOCKING_MODES = (SKIP, WAIT)


@dataclass(frozen=True)
class Task:
    id: str
    job_id: str
    user_id: str
    demand: tuple[float, ...]  # absolute units
    duration: float
    submit_time: float

    def __post_init__(self):
        if not all(x > 0 for x in self.demand):
            raise ValueError(f"task {self.id}: demand must be strictly positive, got {self.demand}")
        if not self.duration > 0:
            raise ValueError(f"task {self.id}: duration must be positive, got {self.duration}")
        if not self.submit_time >= 0:
            raise ValueError(f"task {self.id}: submit time must be nonnegative")


@dataclass(frozen=True)
class SchedulerPolicy:
    kind: str = BEST_FIT
    slots_per_max_server: int = 14
    blocking: str = SKIP

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy {self.kind!r}; expected one of {POLICY_KINDS}")
        if self.blocking not in BLOCKING_MODES:
            raise ValueError(f"unknown blocking mode {self.blocking!r}; expected one of {BLOCKING_MODES}")
        if self.kind == SLOTS and self.slots_per_max_server < 1:
            raise ValueError("slots_per_max_server must be at least 1")

    @property
    def label(self) -> str:
        if self.kind == SLOTS:
            return f"slots_{self.slots_per_max_server}"
        if self.blocking == WAIT:
            return f"{self.kind}_wait"
        return self.kind


@dataclass
class ServerState:
    capacity: np.ndarray
    available: np.ndarray
    resident: set = field(default_factory=set)


def best_fit_score(task_demand, available) -> float:
    """L1 distance between the demand and free-resource shapes, each scaled by resource 0."""
    D = np.asarray(task_demand, dtype=float)
    a = np.asarray(available, dtype=float)
    if a[0] <= 0:
        return math.inf
    return float(np.abs(D / D[0] - a / a[0]).sum())


def _best_fit_scores(demand: np.ndarray, available: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        H = np.abs(demand / demand[0] - available / available[:, :1]).sum(axis=1)
    return np.where(available[:, 0] > 0, H, np.inf)


def choose_server(demand: np.ndarray, available: np.ndarray, kind: str) -> int | None:
    """Index of the server a task of ``demand`` goes to, or None if nothing fits."""
    fits = np.all(available >= demand - FIT_TOL, axis=1)
    if not fits.any():
        return None
    if kind == FIRST_FIT:
        return int(np.argmax(fits))
    H = np.where(fits, _best_fit_scores(demand, available), np.inf)
    best = int(np.argmin(H))
    if not math.isfinite(H[best]):
        return int(np.argmax(fits))  # every fitting server has no free resource 0
    return best


def place_task(demand, servers: Sequence[ServerState], policy: SchedulerPolicy,
               task_id: str | None = None) -> int | None:
    """Choose a server for ``demand`` and charge it; None means blocked."""
    if policy.kind == SLOTS:
        raise ValueError("slot placement ignores demands; drive it through Scheduler")
    demand = np.asarray(demand, dtype=float)
    available = np.array([s.available for s in servers])
    l = choose_server(demand, available, policy.kind)
    if l is not None:
        servers[l].available = servers[l].available - demand
        if task_id is not None:
            servers[l].resident.add(task_id)
    return l


def slots_partition(server_capacity, max_server, slots_per_max: int) -> int:
    """Whole slots of size ``max_server / slots_per_max`` that fit on a server."""
    cap = np.asarray(server_capacity, dtype=float)
    slot = np.asarray(max_server, dtype=float) / slots_per_max
    # guard against 0.5 / (1/14) landing a hair under 7
    return int(np.min(np.floor(cap / slot + 1e-9)))


def pick_next_user(candidates: Iterable[tuple]) -> object | None:
    """Pick the candidate with the smallest key.

    Each candidate is ``(user_id, share, weight, arrival, order, eligible)``;
    ineligible users (no pending work, or blocked) are skipped. Ties on
    ``share / weight`` go to the earliest arrival, then the lowest order.
    """
    best, best_key = None, None
    for uid, share, weight, arrival, order, eligible in candidates:
        if not eligible:
            continue
        key = (share / weight, arrival, order)
        if best_key is None or key < best_key:
            best, best_key = uid, key
    return best


@dataclass
class UserState:
    user_id: str
    order: int
    weight: float = 1.0
    arrival: float = 0.0
    joined: bool = False
    join_scheduled: bool = False  # wait for an explicit join instead of the first submission
    departed: bool = False
    blocked: bool = False
    share: float = 0.0  # global dominant share held by resident tasks
    running: int = 0
    slots_held: int = 0
    pending: deque = field(default_factory=deque)


class Scheduler:
    """Event-driven scheduler state: server pool, per-user queues and shares.

    Demands are converted to shares of the cluster totals on submission. The
    caller drives it with ``submit``/``finish``/``join``/``depart`` and asks
    for placements with ``schedule``.
    """

    def __init__(self, cluster: ClusterSpec, policy: SchedulerPolicy):
        self.cluster = cluster
        self.policy = policy
        self.totals = cluster.totals
        self.capacity = np.array(cluster.capacities)
        self.available = self.capacity.copy()
        self.used = np.zeros(cluster.m)  # shares of the system total
        self.users: dict[str, UserState] = {}
        self.location: dict[str, int] = {}
        self.charge: dict[str, np.ndarray] = {}
        self._shares_cache: dict[str, float] = {}
        if policy.kind == SLOTS:
            max_server = cluster.raw.max(axis=0)
            self.slot_size = max_server / policy.slots_per_max_server / cluster.totals
            self.free_slots = np.array([
                slots_partition(raw, max_server, policy.slots_per_max_server) for raw in cluster.raw])

    # -- bookkeeping -------------------------------------------------------

    def user(self, user_id: str, weight: float = 1.0, arrival: float = 0.0) -> UserState:
        u = self.users.get(user_id)
        if u is None:
            u = UserState(user_id, len(self.users), weight, arrival)
            self.users[user_id] = u
        return u

    def shares(self, task: Task) -> np.ndarray:
        return np.asarray(task.demand, dtype=float) / self.totals

    def dominant_share(self, task: Task) -> float:
        s = self._shares_cache.get(task.id)
        if s is None:
            s = float(np.max(self.shares(task)))
            self._shares_cache[task.id] = s
        return s

    def fits_anywhere(self, task: Task) -> bool:
        return bool(np.any(np.all(self.capacity >= self.shares(task) - FIT_TOL, axis=1)))

    def join(self, user_id: str, time: float, weight: float = 1.0) -> None:
        u = self.user(user_id, weight, time)
        u.joined, u.arrival, u.weight = True, time, weight

    def depart(self, user_id: str) -> list[Task]:
        """Stop serving a user; its queued tasks are cancelled and returned."""
        u = self.user(user_id)
        u.departed = True
        cancelled = list(u.pending)
        u.pending.clear()
        return cancelled

    def submit(self, task: Task) -> None:
        u = self.user(task.user_id)
        if not u.joined and not u.join_scheduled:
            u.joined, u.arrival = True, task.submit_time
        u.pending.append(task)

    def finish(self, task: Task) -> int:
        l = self.location.pop(task.id)
        charge = self.charge.pop(task.id)
        self.available[l] += charge
        self.used -= charge
        u = self.users[task.user_id]
        u.running -= 1
        # reset instead of accumulating rounding once nothing is left
        u.share = u.share - self.dominant_share(task) if u.running else 0.0
        if self.policy.kind == SLOTS:
            self.free_slots[l] += 1
            u.slots_held -= 1
        for other in self.users.values():
            other.blocked = False
        return l

    # -- scheduling --------------------------------------------------------

    def _candidates(self):
        slots = self.policy.kind == SLOTS
        for u in self.users.values():
            eligible = bool(u.pending) and not u.blocked and u.joined and not u.departed
            if slots:
                # slot counts are compared directly; ties go to the lowest id
                yield u.user_id, float(u.slots_held), u.weight, 0.0, u.order, eligible
            else:
                yield u.user_id, u.share, u.weight, u.arrival, u.order, eligible

    def _place(self, task: Task) -> int | None:
        if self.policy.kind == SLOTS:
            free = np.nonzero(self.free_slots > 0)[0]
            if free.size == 0:
                return None
            l = int(free[0])
            self.free_slots[l] -= 1
            # a slot hands out at most its own size of each resource
            charge = np.minimum(self.shares(task), self.slot_size)
        else:
            demand = self.shares(task)
            l = choose_server(demand, self.available, self.policy.kind)
            if l is None:
                return None
            charge = demand
        self.available[l] -= charge
        self.used += charge
        self.charge[task.id] = charge
        self.location[task.id] = l
        return l

    def schedule(self) -> list[tuple[Task, int]]:
        """Serve lowest-share users until nobody can be placed."""
        placed = []
        slots = self.policy.kind == SLOTS
        while True:
            uid = pick_next_user(self._candidates())
            if uid is None:
                return placed
            u = self.users[uid]
            task = u.pending[0]
            l = self._place(task)
            if l is None:
                if slots or self.policy.blocking == WAIT:
                    return placed
                u.blocked = True
                continue
            u.pending.popleft()
            u.share += self.dominant_share(task)
            u.running += 1
            if slots:
                u.slots_held += 1
            placed.append((task, l))
