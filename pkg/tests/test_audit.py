import json

import numpy as np
import pytest

from drfh.audit import (
    SUITES, audit_bottleneck, audit_envy, audit_pareto, audit_population_monotonicity,
    audit_single_resource, audit_single_server, audit_truthfulness, bottleneck_instance,
    dedicated_clouds, envy_matrix, pareto_improvement, random_instance, run_campaign,
    sharing_incentive_benchmark, true_tasks,
)
from drfh.fluid import per_server_drf, solve_drfh
from drfh.model import demand_from_shares, normalize_cluster
from drfh.scheduler import BEST_FIT, SchedulerPolicy, Task
from drfh.sim import Workload
from drfh.traceio import ServerClassTable, sample_cluster


def test_envy_hand_value(two_server):
    cluster, users = two_server
    sol = solve_drfh(cluster, users)
    E = envy_matrix(sol)
    assert E[0, 1] == pytest.approx(1 / 7)
    assert E[1, 0] == pytest.approx(1 / 7)
    assert audit_envy(sol).passed


def test_identical_users_envy_at_equality():
    cluster = normalize_cluster([[1, 2], [2, 1]])
    u = demand_from_shares([0.1, 0.2])
    sol = solve_drfh(cluster, [u, u])
    E = envy_matrix(sol)
    np.testing.assert_allclose(E, sol.per_user_G[0], atol=1e-12)
    assert audit_envy(sol).passed


def test_pareto_flags_baseline(two_server):
    cluster, users = two_server
    good = audit_pareto(solve_drfh(cluster, users), cluster)
    assert good.passed and good.violation <= 1e-6
    bad = audit_pareto(per_server_drf(cluster, users), cluster)
    assert not bad.passed
    # both users can grow from 6 to 10 tasks of dominant share 1/14
    assert bad.violation == pytest.approx(2 * (10 - 6) / 14, abs=1e-9)
    assert bad.witness is not None


def test_single_user_pareto():
    cluster = normalize_cluster([[1, 3], [2, 1]])
    sol = solve_drfh(cluster, [demand_from_shares([0.1, 0.05])])
    assert pareto_improvement(sol, cluster)[0] == pytest.approx(0, abs=1e-9)


def test_truthful_report_beats_claiming_flat_demand(two_server):
    cluster, users = two_server
    honest = solve_drfh(cluster, users).tasks()[0]
    lie = [users[0].with_normalized([1.0, 1.0]), users[1]]
    sol = solve_drfh(cluster, lie)
    received = sol.shares[0][:, None] * lie[0].normalized[None, :]
    assert true_tasks(users[0], received) <= honest + 1e-6


def test_truthfulness_null_and_fuzz(two_server):
    cluster, users = two_server
    same = [users[0].with_normalized(users[0].normalized), users[1]]
    np.testing.assert_allclose(solve_drfh(cluster, same).shares, solve_drfh(cluster, users).shares)
    rep = audit_truthfulness(cluster, users, 50, 3)
    assert rep.passed, rep


def test_monotonicity_examples(two_server):
    cluster, users = two_server
    assert audit_population_monotonicity(cluster, users).passed
    assert audit_population_monotonicity(cluster, users[:1]).passed


def test_reduction_audits():
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert audit_single_server(*random_instance(rng, k_range=(1, 1))).passed
        assert audit_single_resource(*random_instance(rng, m_range=(1, 1))).passed
        assert audit_bottleneck(*bottleneck_instance(rng)).passed
    with pytest.raises(ValueError):
        audit_single_server(*random_instance(rng, k_range=(2, 2)))


def test_campaign_deterministic_and_parallel_safe():
    a = run_campaign("all", 6, seed=5, misreports=3, workers=1)
    b = run_campaign("all", 6, seed=5, misreports=3, workers=2)
    assert [r.to_json() for r in a] == [r.to_json() for r in b]
    assert {r.property for r in a} == {"envy_freeness", "pareto_optimality", "population_monotonicity",
                                       "truthfulness", "single_server_drf", "single_resource_fairness",
                                       "bottleneck_fairness"}
    assert all(r.passed for r in a)
    assert run_campaign("all", 0) == []
    with pytest.raises(ValueError):
        run_campaign("nope", 1)
    assert len(SUITES) == 7


def test_report_json_round_trip(two_server):
    cluster, users = two_server
    rep = audit_pareto(per_server_drf(cluster, users), cluster)
    back = json.loads(rep.to_json())
    assert back["property"] == "pareto_optimality" and back["passed"] is False


def test_dedicated_clouds_are_stratified():
    cluster = sample_cluster(ServerClassTable(), 103, 1)
    clouds = dedicated_clouds(cluster, 10, 7)
    assert [len(c) for c in clouds] == [10] * 10
    flat = [l for c in clouds for l in c]
    assert len(set(flat)) == 100
    # every cloud holds each common class in near-equal numbers
    big = tuple(cluster.raw[np.argmax([np.sum(np.all(cluster.raw == r, axis=1)) for r in cluster.raw])])
    per_cloud = [sum(tuple(cluster.raw[l]) == big for l in c) for c in clouds]
    assert max(per_cloud) - min(per_cloud) <= 1
    with pytest.raises(ValueError):
        dedicated_clouds(cluster, 200, 0)


def _backlog(uid, demand, n):
    return [Task(f"{uid}-{i}", f"{uid}-j", uid, demand, 10.0, 0.0) for i in range(n)]


def test_sharing_identical_users_identical_servers():
    cluster = normalize_cluster([[1.0, 1.0]] * 4)
    tasks = _backlog("a", (0.3, 0.3), 20) + _backlog("b", (0.3, 0.3), 20)
    rep = sharing_incentive_benchmark(cluster, Workload(tasks), SchedulerPolicy(BEST_FIT), 0, 60, 10)
    for r in rep["per_user"].values():
        assert r["dedicated"] == pytest.approx(r["shared"])
    assert rep["worse_off_fraction"] == 0


def test_sharing_single_user_never_worse():
    cluster = sample_cluster(ServerClassTable(), 5, 3)
    rep = sharing_incentive_benchmark(cluster, Workload(_backlog("a", (0.2, 0.2), 50)),
                                      SchedulerPolicy(BEST_FIT), 0, 40, 10)
    r = rep["per_user"]["a"]
    assert r["shared"] >= r["dedicated"]
