"""Brute-force reference solvers for the DRFH program on tiny instances.

They share nothing with the simplex path and are meant for tests.
"""

from __future__ import annotations

import itertools
import math
from typing import Sequence

import numpy as np

from .model import ClusterSpec, UserDemand


def _level_on_last_server(rest_cap: np.ndarray, d: np.ndarray, first: np.ndarray) -> np.ndarray:
    """Best level g given each user's share ``first`` on server 0 (vectorized over rows).

    Server 1 must host ``g - first_i`` for every user, so for every resource
    ``sum_i (g - first_i) d_ir <= c_1r``.
    """
    load = d.sum(axis=0)  # m
    # g <= (c_1r + sum_i first_i d_ir) / sum_i d_ir
    bound = (rest_cap[None, :] + first @ d) / load[None, :]
    g = bound.min(axis=1)
    return np.where(g >= first.max(axis=1), g, -np.inf)


def grid_search_drfh(cluster: ClusterSpec, users: Sequence[UserDemand], step: float = 1e-3) -> float:
    """Optimal level by enumerating server-0 shares on a grid.

    Supports one server (closed form) or two servers with at most two users;
    the second server's shares are then implied by the level.
    """
    d = np.stack([u.normalized for u in users])
    c = cluster.capacities
    if cluster.k == 1:
        return float(np.min(c[0] / d.sum(axis=0)))
    if cluster.k != 2 or len(users) > 2:
        raise ValueError("grid search covers k = 1, or k = 2 with n <= 2")
    n = len(users)
    axes = [np.arange(0.0, float(np.min(c[0] / d[i])) + step / 2, step) for i in range(n)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    feasible = np.all(mesh @ d <= c[0][None, :] + 1e-12, axis=1)
    mesh = mesh[feasible]
    return float(_level_on_last_server(c[1], d, mesh).max())


def vertex_enumeration_drfh(cluster: ClusterSpec, users: Sequence[UserDemand],
                            weights: Sequence[float] | None = None) -> float:
    """Optimal level by checking every basic solution of the program.

    Variables are g_il and the level g; every vertex makes some choice of
    inequality constraints tight. Exponential, fine for n, k <= 3.
    """
    d = np.stack([u.normalized for u in users])
    n, k, m = len(users), cluster.k, cluster.m
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    nv = n * k + 1
    ineq = []
    rhs = []
    for l in range(k):
        for r in range(m):
            row = np.zeros(nv)
            row[l:n * k:k] = d[:, r]
            ineq.append(row)
            rhs.append(cluster.capacities[l, r])
    for v in range(nv):
        row = np.zeros(nv)
        row[v] = -1.0
        ineq.append(row)
        rhs.append(0.0)
    ineq, rhs = np.array(ineq), np.array(rhs)
    eq = np.zeros((n, nv))
    for i in range(n):
        eq[i, i * k:(i + 1) * k] = 1.0
        eq[i, -1] = -w[i]
    need = nv - n
    best = -math.inf
    combos = np.array(list(itertools.combinations(range(len(ineq)), need)))
    for chunk in np.array_split(combos, max(1, len(combos) // 4096)):
        M = np.concatenate([np.broadcast_to(eq, (len(chunk), n, nv)), ineq[chunk]], axis=1)
        b = np.concatenate([np.zeros((len(chunk), n)), rhs[chunk]], axis=1)
        ok = np.abs(np.linalg.det(M)) > 1e-10
        if not ok.any():
            continue
        x = np.linalg.solve(M[ok], b[ok][..., None])[..., 0]
        feasible = np.all(x @ ineq.T <= rhs[None, :] + 1e-9, axis=1)
        if feasible.any():
            best = max(best, float(x[feasible, -1].max()))
    return best
