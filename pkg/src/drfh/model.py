"""Resource vectors, clusters, user demands and the allocation identities.

Everything here works in normalized shares: each resource's capacity summed
over all servers is 1. Absolute units are accepted at the edges and converted
on ingestion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

FEASIBILITY_TOL = 1e-9
IDENTITY_TOL = 1e-12


class DimensionError(ValueError):
    """Vectors or matrices disagree on the number of resources or servers."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def resource_vector(values, m: int | None = None) -> np.ndarray:
    """Validate ``values`` as a nonnegative, finite, read-only 1-d vector."""
    v = np.array(values, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise DimensionError(f"expected a non-empty 1-d vector, got shape {v.shape}")
    if m is not None and v.size != m:
        raise DimensionError(f"expected {m} resources, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"resource vector has non-finite entries: {v}")
    if np.any(v < 0):
        raise ValueError(f"resource vector has negative entries: {v}")
    return _frozen(v)


@dataclass(frozen=True)
class ClusterSpec:
    capacities: np.ndarray  # k x m, normalized shares
    raw: np.ndarray  # k x m, absolute units
    resource_names: tuple[str, ...]

    @property
    def k(self) -> int:
        return self.capacities.shape[0]

    @property
    def m(self) -> int:
        return self.capacities.shape[1]

    @property
    def totals(self) -> np.ndarray:
        """System-wide totals in absolute units."""
        return self.raw.sum(axis=0)

    def subset(self, servers: Sequence[int]) -> "ClusterSpec":
        """Renormalized cluster made of the given server indices."""
        return normalize_cluster(self.raw[list(servers)], self.resource_names)


def default_resource_names(m: int) -> tuple[str, ...]:
    if m == 2:
        return ("cpu", "mem")
    return tuple(f"r{r}" for r in range(m))


def normalize_cluster(raw_servers, resource_names: Sequence[str] | None = None) -> ClusterSpec:
    """Divide every server's capacity by the system total of each resource."""
    try:
        raw = np.array(raw_servers, dtype=float)
    except ValueError as exc:
        raise DimensionError("servers have differing resource counts") from exc
    if raw.ndim != 2 or raw.shape[0] == 0 or raw.shape[1] == 0:
        raise DimensionError(f"expected a k x m capacity matrix, got shape {raw.shape}")
    if not np.all(np.isfinite(raw)) or np.any(raw < 0):
        raise ValueError("capacities must be finite and nonnegative")
    if np.any(raw.max(axis=1) <= 0):
        bad = int(np.argmin(raw.max(axis=1)))
        raise ValueError(f"server {bad} has no capacity in any resource")
    totals = raw.sum(axis=0)
    if np.any(totals <= 0):
        bad = int(np.argmin(totals))
        raise ValueError(f"resource {bad} has zero system-wide capacity")
    names = tuple(resource_names) if resource_names is not None else default_resource_names(raw.shape[1])
    if len(names) != raw.shape[1]:
        raise DimensionError(f"{len(names)} resource names for {raw.shape[1]} resources")
    return ClusterSpec(_frozen(raw / totals), _frozen(raw), names)


@dataclass(frozen=True)
class UserDemand:
    per_task: np.ndarray  # D_i, shares of the system total per task
    normalized: np.ndarray  # d_i = D_i / D_i[dominant]
    dominant: int
    weight: float = 1.0
    task_budget: float = math.inf
    name: str = ""
    raw: np.ndarray | None = field(default=None, compare=False)

    @property
    def dominant_share_per_task(self) -> float:
        return float(self.per_task[self.dominant])

    def with_normalized(self, normalized) -> "UserDemand":
        """Same user claiming a different demand shape (used for misreports).

        The dominant per-task share is kept, so the claimed task size is
        ``D[dominant] * normalized``.
        """
        d = np.array(normalized, dtype=float)
        return demand_from_shares(d * self.dominant_share_per_task / d.max(), self.weight,
                                  self.task_budget, self.name)


def demand_from_shares(per_task_shares, weight: float = 1.0, task_budget: float = math.inf,
                       name: str = "") -> UserDemand:
    D = resource_vector(per_task_shares)
    if np.any(D <= 0):
        raise ValueError(f"demand entries must be strictly positive, got {D}")
    if not weight > 0:
        raise ValueError(f"weight must be positive, got {weight}")
    if not task_budget > 0:
        raise ValueError(f"task budget must be positive, got {task_budget}")
    dominant = int(np.argmax(D))  # first maximum wins ties
    d = D / D[dominant]
    d[dominant] = 1.0
    return UserDemand(D, _frozen(d), dominant, float(weight), float(task_budget), name)


def derive_demand(per_task_absolute, cluster: ClusterSpec, weight: float = 1.0,
                  task_budget: float = math.inf, name: str = "") -> UserDemand:
    """Express an absolute per-task demand as shares of ``cluster``'s totals."""
    raw = resource_vector(per_task_absolute, cluster.m)
    if np.any(raw <= 0):
        raise ValueError(f"demand entries must be strictly positive, got {raw}")
    user = demand_from_shares(raw / cluster.totals, weight, task_budget, name)
    return UserDemand(user.per_task, user.normalized, user.dominant, user.weight,
                      user.task_budget, user.name, raw)


def _allocation(user: UserDemand, allocation) -> np.ndarray:
    A = np.asarray(allocation, dtype=float)
    if A.ndim == 1:
        A = A[None, :]
    if A.ndim != 2 or A.shape[1] != user.per_task.size:
        raise DimensionError(
            f"allocation shape {A.shape} does not match {user.per_task.size} resources")
    return A


def tasks_under_allocation(user: UserDemand, allocation) -> tuple[np.ndarray, float]:
    """Tasks (possibly fractional) the user can run on each server, and in total."""
    A = _allocation(user, allocation)
    per_server = np.min(A / user.per_task, axis=1)
    return per_server, float(per_server.sum())


def global_dominant_share(user: UserDemand, allocation) -> tuple[np.ndarray, float]:
    A = _allocation(user, allocation)
    per_server = np.min(A / user.normalized, axis=1)
    return per_server, float(per_server.sum())


def make_non_wasteful(user: UserDemand, allocation) -> np.ndarray:
    """Dominant-share row g_il such that ``g_il * d_i`` is the trimmed allocation."""
    g, _ = global_dominant_share(user, allocation)
    return g


def allocation_from_shares(users: Sequence[UserDemand], g) -> np.ndarray:
    """Expand an n x k dominant-share matrix into the n x k x m allocation."""
    g = np.asarray(g, dtype=float)
    d = np.stack([u.normalized for u in users])
    return g[:, :, None] * d[:, None, :]


def check_feasible(cluster: ClusterSpec, allocation) -> float:
    """Largest per-server, per-resource overshoot of ``allocation`` (n x k x m)."""
    used = np.asarray(allocation, dtype=float).sum(axis=0)
    if used.shape != cluster.capacities.shape:
        raise DimensionError(f"allocation covers {used.shape}, cluster is {cluster.capacities.shape}")
    return float(max(0.0, np.max(used - cluster.capacities)))
