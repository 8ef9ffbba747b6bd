"""Fluid-model DRFH: equalize global dominant shares across all servers.

The core program, over dominant-share variables g_il and the common level g::

    maximize    g
    subject to  sum_i g_il * d_ir <= c_lr     for every server l, resource r
                sum_l g_il = w_i * g          for every user i
                g_il >= 0

Also here: the finite-task variant (users leave the program once their task
budget is met) and the naive per-server DRF baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .lp import EQ, LE, LpError, LpProblem, solve_lp
from .model import ClusterSpec, UserDemand, FEASIBILITY_TOL

SATURATION_TOL = 1e-9

OPTIMAL = "optimal"
DEGENERATE = "degenerate"  # optimum exists but nobody can be served (g = 0)
INFEASIBLE = "infeasible"


class SolverError(RuntimeError):
    """The LP backing a fluid solve failed; never papered over."""


@dataclass
class FluidSolution:
    shares: np.ndarray  # n x k dominant-share matrix g_il
    g_star: float
    per_user_G: np.ndarray
    status: str
    users: tuple[UserDemand, ...] = field(repr=False, default=())
    saturated: tuple[bool, ...] = ()

    def allocation(self) -> np.ndarray:
        """Non-wasteful n x k x m allocation ``g_il * d_i``."""
        d = np.stack([u.normalized for u in self.users])
        return self.shares[:, :, None] * d[:, None, :]

    def tasks(self) -> np.ndarray:
        """Total (fractional) tasks per user."""
        return np.array([G / u.dominant_share_per_task for G, u in zip(self.per_user_G, self.users)])

    def tasks_per_server(self) -> np.ndarray:
        D = np.array([u.dominant_share_per_task for u in self.users])
        return self.shares / D[:, None]


def _demand_matrix(users: Sequence[UserDemand], m: int) -> np.ndarray:
    if not users:
        raise ValueError("at least one user is required")
    d = np.stack([u.normalized for u in users])
    if d.shape[1] != m:
        raise ValueError(f"users demand {d.shape[1]} resources, cluster has {m}")
    return d


def max_min_shares(capacities: np.ndarray, d: np.ndarray, weights: np.ndarray,
                   g_cap: float = math.inf) -> tuple[np.ndarray, float]:
    """Solve the weighted max-min program directly on share matrices.

    ``capacities`` is k x m (possibly residual), ``d`` is n x m. Returns the
    n x k share matrix and the level g (so that user i holds ``w_i * g``).
    """
    n, m = d.shape
    k = capacities.shape[0]
    nv = n * k + 1
    c = np.zeros(nv)
    c[-1] = 1.0
    cap_rows = np.zeros((k * m, nv))
    for l in range(k):
        for r in range(m):
            cap_rows[l * m + r, l:n * k:k] = d[:, r]
    eq_rows = np.zeros((n, nv))
    for i in range(n):
        eq_rows[i, i * k:(i + 1) * k] = 1.0
        eq_rows[i, -1] = -weights[i]
    A = np.vstack([cap_rows, eq_rows])
    b = np.concatenate([np.maximum(capacities, 0.0).reshape(-1), np.zeros(n)])
    upper = np.full(nv, np.inf)
    upper[-1] = g_cap
    try:
        res = solve_lp(LpProblem(c, A, [LE] * (k * m) + [EQ] * n, b, upper=upper))
    except LpError as exc:
        raise SolverError(f"DRFH program failed ({exc.status}): {exc}") from exc
    g = np.maximum(res.x[:-1].reshape(n, k), 0.0)
    return g, float(res.x[-1])


def _solution(users, g, level, saturated=()) -> FluidSolution:
    G = g.sum(axis=1)
    status = OPTIMAL if level > FEASIBILITY_TOL else DEGENERATE
    return FluidSolution(g, level, G, status, tuple(users), tuple(saturated))


def solve_weighted(cluster: ClusterSpec, users: Sequence[UserDemand],
                   weights: Sequence[float] | None = None) -> FluidSolution:
    """Maximize the minimum of G_i / w_i (weights default to each user's own)."""
    d = _demand_matrix(users, cluster.m)
    w = np.array([u.weight for u in users] if weights is None else weights, dtype=float)
    if w.shape != (len(users),) or np.any(~(w > 0)):
        raise ValueError(f"weights must be positive, one per user: {w}")
    g, level = max_min_shares(cluster.capacities, d, w)
    return _solution(users, g, level)


def solve_drfh(cluster: ClusterSpec, users: Sequence[UserDemand]) -> FluidSolution:
    """Unweighted DRFH: every user receives the same global dominant share."""
    return solve_weighted(cluster, users, np.ones(len(users)))


def solve_finite_tasks(cluster: ClusterSpec, users: Sequence[UserDemand]) -> FluidSolution:
    """Weighted DRFH in rounds, retiring users whose task budget is met.

    Each round re-solves from scratch over the active users on the capacity
    left by retired users, with the level capped where the first active user
    meets its budget. A retired user keeps exactly its budget's worth.
    """
    d = _demand_matrix(users, cluster.m)
    n, k = len(users), cluster.k
    w = np.array([u.weight for u in users])
    # level at which user i has scheduled its whole budget
    level_cap = np.array([u.task_budget * u.dominant_share_per_task / u.weight for u in users])
    g = np.zeros((n, k))
    frozen = np.zeros(n, dtype=bool)
    residual = cluster.capacities.copy()
    level = 0.0
    while not frozen.all():
        active = np.nonzero(~frozen)[0]
        cap = float(level_cap[active].min())
        ga, level = max_min_shares(residual, d[active], w[active], cap)
        g[active] = ga
        done = active[level_cap[active] <= level * (1 + SATURATION_TOL) + SATURATION_TOL]
        if done.size == 0:
            break  # capacity ran out before any budget was met
        for i in done:
            total = g[i].sum()
            target = users[i].task_budget * users[i].dominant_share_per_task
            if total > target:
                g[i] *= target / total
            residual -= g[i][:, None] * d[i][None, :]
            frozen[i] = True
        np.maximum(residual, 0.0, out=residual)
        if np.all(residual.max(axis=1) <= FEASIBILITY_TOL):
            break
    G = g.sum(axis=1)
    level = float(np.min(G / w))
    return FluidSolution(g, level, G, OPTIMAL if G.max() > FEASIBILITY_TOL else DEGENERATE,
                         tuple(users), tuple(bool(f) for f in frozen))


def drf_single_server(capacity, users: Sequence[UserDemand]) -> tuple[float, np.ndarray]:
    """Classic DRF on one server by water-filling.

    A user's dominant share on this server is its largest per-resource fraction
    of the server's capacity. All users rise together at a common dominant share
    s until a resource runs out. Returns s and the n x m allocation.
    """
    c = np.asarray(capacity, dtype=float)
    D = np.stack([u.per_task for u in users])
    with np.errstate(divide="ignore"):
        per_task_share = np.where(c > 0, D / np.where(c > 0, c, 1.0), np.inf).max(axis=1)
    usable = np.isfinite(per_task_share)
    if not usable.any():
        return 0.0, np.zeros_like(D)
    # allocation per unit of dominant share
    unit = np.where(usable[:, None], D / np.where(usable, per_task_share, 1.0)[:, None], 0.0)
    load = unit.sum(axis=0)
    s = float(np.min(np.where(load > 0, c / np.where(load > 0, load, 1.0), np.inf)))
    return s, s * unit


def per_server_drf(cluster: ClusterSpec, users: Sequence[UserDemand]) -> FluidSolution:
    """Run DRF separately on every server and add up the results."""
    d = _demand_matrix(users, cluster.m)
    g = np.zeros((len(users), cluster.k))
    for l in range(cluster.k):
        _, A = drf_single_server(cluster.capacities[l], users)
        g[:, l] = np.min(A / d, axis=1)
    G = g.sum(axis=1)
    return _solution(users, g, float(G.min()))
