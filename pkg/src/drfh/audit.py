"""Executable fairness audits over solver outputs and random instances.

Each audit returns an :class:`AuditReport` carrying the worst violation it saw
and, on failure, a witness (offending pair, misreport or removed user).
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Callable, Sequence

import numpy as np

from .fluid import FluidSolution, drf_single_server, solve_drfh
from .lp import GE, LE, LpError, LpProblem, solve_lp
from .model import ClusterSpec, UserDemand, demand_from_shares, normalize_cluster
from .scheduler import SchedulerPolicy
from .sim import Workload, run_simulation

AUDIT_TOL = 1e-6
REDUCTION_TOL = 1e-9


@dataclass
class AuditReport:
    property: str
    passed: bool
    violation: float = 0.0
    witness: dict | None = None
    instance: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, default=float)


def _report(name: str, violation: float, witness: dict | None, tol: float = AUDIT_TOL) -> AuditReport:
    violation = max(0.0, float(violation))
    passed = violation <= tol
    return AuditReport(name, passed, violation, None if passed else witness)


# -- the four mechanism properties -----------------------------------------


def envy_matrix(solution: FluidSolution) -> np.ndarray:
    """E[i, j]: global dominant share user i would get from user j's allocation."""
    d = np.stack([u.normalized for u in solution.users])
    # per server, min_r g_jl d_jr / d_ir = g_jl * min_r d_jr / d_ir
    ratio = np.min(d[None, :, :] / d[:, None, :], axis=2)
    return ratio * solution.shares.sum(axis=1)[None, :]


def audit_envy(solution: FluidSolution) -> AuditReport:
    E = envy_matrix(solution)
    own = solution.shares.sum(axis=1)
    excess = E - own[:, None]
    i, j = np.unravel_index(int(np.argmax(excess)), excess.shape)
    return _report("envy_freeness", excess[i, j], {"user": int(i), "envied": int(j)})


def pareto_improvement(solution: FluidSolution, cluster: ClusterSpec) -> tuple[float, np.ndarray]:
    """Largest total gain sum_i t_i over allocations leaving nobody worse off."""
    users = solution.users
    n, k, m = len(users), cluster.k, cluster.m
    d = np.stack([u.normalized for u in users])
    nv = n * k + n
    c = np.zeros(nv)
    c[n * k:] = 1.0
    rows, senses, rhs = [], [], []
    for l in range(k):
        for r in range(m):
            row = np.zeros(nv)
            row[l:n * k:k] = d[:, r]
            rows.append(row)
            senses.append(LE)
            rhs.append(cluster.capacities[l, r])
    G = solution.shares.sum(axis=1)
    for i in range(n):
        row = np.zeros(nv)
        row[i * k:(i + 1) * k] = 1.0
        row[n * k + i] = -1.0
        rows.append(row)
        senses.append(GE)
        rhs.append(G[i])
    res = solve_lp(LpProblem(c, np.array(rows), senses, np.array(rhs)))
    return res.objective, res.x[n * k:]


def audit_pareto(solution: FluidSolution, cluster: ClusterSpec) -> AuditReport:
    try:
        gain, t = pareto_improvement(solution, cluster)
    except LpError as exc:
        return AuditReport("pareto_optimality", False, math.inf, {"oracle_error": str(exc)})
    return _report("pareto_optimality", gain, {"gains": [float(x) for x in t]})


def random_misreport(rng: np.random.Generator, d: np.ndarray, spread: float = 10.0) -> np.ndarray:
    """Perturb each entry by a log-uniform factor in [1/spread, spread] and renormalize."""
    factors = np.exp(rng.uniform(-math.log(spread), math.log(spread), d.size))
    claimed = d * factors
    return claimed / claimed.max()


def true_tasks(user: UserDemand, received: np.ndarray) -> float:
    """Tasks ``user`` can really run with the k x m allocation it received."""
    return float(np.min(received / user.per_task, axis=1).sum())


def audit_truthfulness(cluster: ClusterSpec, users: Sequence[UserDemand], misreports_per_user: int,
                       rng_seed) -> AuditReport:
    rng = np.random.default_rng(rng_seed)
    honest = solve_drfh(cluster, users)
    honest_tasks = honest.tasks()
    worst, witness = 0.0, None
    for i, user in enumerate(users):
        for _ in range(misreports_per_user):
            claimed_d = random_misreport(rng, user.normalized)
            claimed = list(users)
            claimed[i] = user.with_normalized(claimed_d)
            sol = solve_drfh(cluster, claimed)
            received = sol.shares[i][:, None] * claimed[i].normalized[None, :]
            gain = true_tasks(user, received) - honest_tasks[i]
            if gain > worst:
                worst = gain
                witness = {"user": i, "claimed": [float(x) for x in claimed_d],
                           "true_tasks_honest": float(honest_tasks[i]),
                           "true_tasks_lying": float(honest_tasks[i] + gain)}
    return _report("truthfulness", worst, witness)


def audit_population_monotonicity(cluster: ClusterSpec, users: Sequence[UserDemand]) -> AuditReport:
    if len(users) < 2:
        return _report("population_monotonicity", 0.0, None)
    g = solve_drfh(cluster, users).g_star
    worst, witness = 0.0, None
    for j in range(len(users)):
        rest = [u for i, u in enumerate(users) if i != j]
        g_after = solve_drfh(cluster, rest).g_star
        if g - g_after > worst:
            worst, witness = g - g_after, {"removed": j, "g_before": g, "g_after": g_after}
    return _report("population_monotonicity", worst, witness)


# -- reductions to the classical cases --------------------------------------


def audit_single_server(cluster: ClusterSpec, users: Sequence[UserDemand]) -> AuditReport:
    """With one server, DRFH must equal classic DRF water-filling."""
    if cluster.k != 1:
        raise ValueError("single-server audit needs exactly one server")
    sol = solve_drfh(cluster, users)
    s, A = drf_single_server(cluster.capacities[0], users)
    drf_G = np.array([np.min(A[i] / u.normalized) for i, u in enumerate(users)])
    gap = np.abs(sol.per_user_G - drf_G)
    i = int(np.argmax(gap))
    return _report("single_server_drf", gap[i],
                   {"user": i, "drfh": float(sol.per_user_G[i]), "drf": float(drf_G[i])},
                   REDUCTION_TOL)


def audit_single_resource(cluster: ClusterSpec, users: Sequence[UserDemand]) -> AuditReport:
    """With one resource, every user gets an equal 1/n of it."""
    if cluster.m != 1:
        raise ValueError("single-resource audit needs exactly one resource")
    sol = solve_drfh(cluster, users)
    n = len(users)
    gap = np.abs(sol.per_user_G - 1.0 / n)
    unused = 1.0 - float(sol.per_user_G.sum())
    worst = max(float(gap.max()), abs(unused))
    return _report("single_resource_fairness", worst,
                   {"shares": [float(x) for x in sol.per_user_G], "unallocated": unused})


def audit_bottleneck(cluster: ClusterSpec, users: Sequence[UserDemand]) -> AuditReport:
    """Users sharing one dominant resource split it equally and exhaust it."""
    r = users[0].dominant
    if any(u.dominant != r for u in users):
        raise ValueError("bottleneck audit needs a common dominant resource")
    sol = solve_drfh(cluster, users)
    spread = float(sol.per_user_G.max() - sol.per_user_G.min())
    used = float(sol.allocation()[:, :, r].sum())
    worst = max(spread, abs(1.0 - used))
    return _report("bottleneck_fairness", worst,
                   {"shares": [float(x) for x in sol.per_user_G], "bottleneck_used": used})


# -- random instances -------------------------------------------------------


def random_instance(rng: np.random.Generator, n_range=(1, 5), k_range=(1, 5), m_range=(1, 4),
                    zero_capacity_prob: float = 0.1) -> tuple[ClusterSpec, list[UserDemand]]:
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    k = int(rng.integers(k_range[0], k_range[1] + 1))
    m = int(rng.integers(m_range[0], m_range[1] + 1))
    while True:
        raw = rng.uniform(0.1, 1.0, (k, m))
        if m > 1:
            raw[rng.random((k, m)) < zero_capacity_prob] = 0.0
        if np.all(raw.max(axis=1) > 0) and np.all(raw.sum(axis=0) > 0):
            break
    cluster = normalize_cluster(raw)
    users = [demand_from_shares(rng.uniform(0.01, 0.3, m)) for _ in range(n)]
    return cluster, users


def bottleneck_instance(rng: np.random.Generator, n_range=(1, 5), k_range=(1, 5),
                        m_range=(1, 4)) -> tuple[ClusterSpec, list[UserDemand]]:
    """Instance where every user's dominant resource binds first on every server."""
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    k = int(rng.integers(k_range[0], k_range[1] + 1))
    m = int(rng.integers(m_range[0], m_range[1] + 1))
    cluster = normalize_cluster(rng.uniform(0.1, 1.0, (k, m)))
    b = int(rng.integers(m))
    # d_ir * c_lb <= c_lr on every server keeps resource b the binding one
    limit = np.minimum(1.0, np.min(cluster.capacities / cluster.capacities[:, b:b + 1], axis=0))
    users = []
    for _ in range(n):
        d = rng.uniform(0.05, 1.0, m) * limit
        d[b] = 1.0
        users.append(demand_from_shares(d * rng.uniform(0.01, 0.3)))
    return cluster, users


def _instance_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def _describe(seed, index, cluster, users) -> dict:
    return {"seed": seed, "index": index, "n": len(users), "k": cluster.k, "m": cluster.m}


def _run_instance(args) -> list[AuditReport]:
    suite, seed, index, misreports = args
    rng = _instance_rng(seed, index)
    reports = []
    if suite in ("envy", "pareto", "monotonicity", "truthfulness", "core"):
        lo = 2 if suite in ("truthfulness", "monotonicity") else 1
        cluster, users = random_instance(rng, n_range=(lo, 5))
        sol = solve_drfh(cluster, users) if suite != "truthfulness" else None
        if suite in ("envy", "core"):
            reports.append(audit_envy(sol))
        if suite in ("pareto", "core"):
            reports.append(audit_pareto(sol, cluster))
        if suite in ("monotonicity", "core"):
            reports.append(audit_population_monotonicity(cluster, users))
        if suite == "truthfulness":
            reports.append(audit_truthfulness(cluster, users, misreports, [seed, index, 1]))
    elif suite == "single_server":
        cluster, users = random_instance(rng, k_range=(1, 1))
        reports.append(audit_single_server(cluster, users))
    elif suite == "single_resource":
        cluster, users = random_instance(rng, m_range=(1, 1))
        reports.append(audit_single_resource(cluster, users))
    elif suite == "bottleneck":
        cluster, users = bottleneck_instance(rng)
        reports.append(audit_bottleneck(cluster, users))
    else:
        raise ValueError(f"unknown audit suite {suite!r}")
    for rep in reports:
        rep.instance = _describe(seed, index, cluster, users)
    return reports


SUITES = ("envy", "pareto", "monotonicity", "truthfulness", "single_server", "single_resource",
          "bottleneck")


def run_campaign(suite: str, instances: int, seed: int = 0, misreports: int = 20,
                 workers: int | None = None) -> list[AuditReport]:
    """Audit ``instances`` seeded random instances; ``suite='all'`` runs every suite.

    ``suite='core'`` checks envy, Pareto and monotonicity on shared instances,
    which is also how 'all' runs them.
    """
    if suite == "all":
        jobs = [("core", seed, i, misreports) for i in range(instances)]
        jobs += [(s, seed, i, misreports) for s in SUITES[3:] for i in range(instances)]
    elif suite in SUITES or suite == "core":
        jobs = [(suite, seed, i, misreports) for i in range(instances)]
    else:
        raise ValueError(f"unknown audit suite {suite!r}; expected 'all', 'core' or one of {SUITES}")
    workers = workers or os.cpu_count() or 1
    if workers <= 1 or len(jobs) <= 1:
        results = [_run_instance(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_instance, jobs, chunksize=16))
    return [rep for batch in results for rep in batch]


# -- sharing incentive --------------------------------------------------------


def dedicated_clouds(cluster: ClusterSpec, n: int, rng_seed) -> list[list[int]]:
    """Split servers into ``n`` equal clouds, stratified by server class.

    Servers are grouped by capacity, shuffled within each class and dealt out
    round-robin; the last ``k mod n`` servers in that order stay unassigned.
    """
    if cluster.k < n:
        raise ValueError(f"need at least as many servers ({cluster.k}) as users ({n})")
    rng = np.random.default_rng(rng_seed)
    classes: dict[tuple, list[int]] = {}
    for l, row in enumerate(cluster.raw):
        classes.setdefault(tuple(row), []).append(l)
    order = []
    for key in sorted(classes):
        members = classes[key]
        order.extend(members[i] for i in rng.permutation(len(members)))
    size = cluster.k // n
    return [sorted(order[i:size * n:n]) for i in range(n)]


def sharing_incentive_benchmark(cluster: ClusterSpec, workload: Workload, policy: SchedulerPolicy,
                                rng_seed, horizon: float, sample_interval: float = 60.0,
                                run: Callable = run_simulation) -> dict:
    """Compare each user's completion ratio on its dedicated cloud and on the shared one."""
    user_ids = workload.user_ids()
    clouds = dedicated_clouds(cluster, len(user_ids), rng_seed)
    shared = run(cluster, workload, policy, horizon, sample_interval)
    sc = shared.completion_ratio()
    per_user = {}
    for uid, servers in zip(user_ids, clouds):
        alone = run(cluster.subset(servers), workload.for_users([uid]), policy, horizon, sample_interval)
        per_user[uid] = {"dedicated": alone.completion_ratio()[uid], "shared": sc[uid],
                         "servers": len(servers)}
    worse = [u for u, r in per_user.items() if r["shared"] < r["dedicated"] - 1e-12]
    return {
        "policy": policy.label,
        "users": len(user_ids),
        "servers": cluster.k,
        "per_user": per_user,
        "worse_off_users": worse,
        "worse_off_fraction": len(worse) / len(user_ids) if user_ids else 0.0,
    }
