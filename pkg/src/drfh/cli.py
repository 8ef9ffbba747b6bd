"""``drfh`` command line: solve, simulate, audit, generate and compare.

Every subcommand writes its artifacts plus a ``manifest.json`` into the
output directory (``--out``, else ``$DRFH_OUT``, else ``./drfh-out``).
Exit status: 0 success, 1 failed audit, 2 usage, input or schema error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import fields
from fractions import Fraction
from pathlib import Path

from . import __version__
from .audit import SUITES, run_campaign, sharing_incentive_benchmark
from .fluid import per_server_drf, solve_drfh, solve_finite_tasks, solve_weighted
from .model import DimensionError
from .scenarios import phases, three_user_workload
from .scheduler import BEST_FIT, BLOCKING_MODES, FIRST_FIT, SKIP, SLOTS, SchedulerPolicy
from .sim import run_batch, run_simulation, summarize
from .traceio import (
    GOOGLE_SERVER_CLASSES, ServerClassTable, TraceFormatError, WorkloadConfig, _fmt,
    generate_workload, load_cluster, load_demands, load_trace, load_users, rows_to_workload,
    sample_cluster, write_cluster, write_json, write_metrics, write_placements, write_trace,
    write_users,
)

log = logging.getLogger("drfh")

ENV_OUT = "DRFH_OUT"
POLICIES = {"best-fit": BEST_FIT, "first-fit": FIRST_FIT, "slots": SLOTS}
# these never change what a run computes, so they stay out of the manifest
NOT_IN_MANIFEST = {"out", "config", "workers", "verbose", "func", "command", "plot"}


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1: {text!r}")
    return v


def _count(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must not be negative: {text!r}")
    return v


# -- parser ----------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help=f"output directory (default ${ENV_OUT} or ./drfh-out)")
    p.add_argument("--config", help="JSON file whose keys mirror this subcommand's flags")
    p.add_argument("-v", "--verbose", action="store_true")


def _sim_flags(p: argparse.ArgumentParser, workers: bool = False) -> None:
    p.add_argument("--cluster", help="cluster CSV (server_id,<resource>_units...)")
    p.add_argument("--trace", help="task trace CSV")
    p.add_argument("--users", help="optional user schedule CSV (join/depart times, weights)")
    p.add_argument("--horizon", type=_positive_float, help="simulated seconds (default: last submission + 1 h)")
    p.add_argument("--sample-interval", type=_positive_float, default=10.0)
    p.add_argument("--blocking", choices=BLOCKING_MODES, default=SKIP,
                   help="skip a user whose task fits nowhere, or wait for it")
    p.add_argument("--plot", action="store_true", help="also render PNG figures (needs matplotlib)")
    if workers:
        p.add_argument("--workers", type=_positive_int, help="worker processes (default: all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drfh", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"drfh {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("solve", help="fluid DRFH allocation for a cluster and user demands")
    _common(p)
    p.add_argument("--cluster", help="cluster CSV")
    p.add_argument("--demands", help="user demands CSV (user_id,<resource>_units...[,weight][,task_budget])")
    p.add_argument("--mode", choices=("drfh", "weighted", "finite", "per-server"), default="drfh",
                   help="weighted uses the weight column, finite also the task_budget column; "
                        "per-server is the naive per-server DRF baseline")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="replay a trace under one scheduling policy")
    _common(p)
    _sim_flags(p)
    p.add_argument("--policy", choices=sorted(POLICIES), default="best-fit")
    p.add_argument("--slots", type=_positive_int, default=14, help="slots per maximum server (slots policy)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="best-fit, first-fit and slots over the same trace")
    _common(p)
    _sim_flags(p, workers=True)
    p.add_argument("--slots", type=_int_list, default=[10, 12, 14, 16, 20],
                   help="comma-separated slot counts to scan")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sharing", help="dedicated-cloud versus shared-cloud completion ratios")
    _common(p)
    _sim_flags(p)
    p.add_argument("--policy", choices=sorted(POLICIES), default="best-fit")
    p.add_argument("--slots", type=_positive_int, default=14)
    p.add_argument("--seed", type=int, default=0, help="seed of the dedicated-cloud partition")
    p.set_defaults(func=cmd_sharing, sample_interval=60.0)

    p = sub.add_parser("audit", help="randomized fairness-property campaigns")
    _common(p)
    p.add_argument("--suite", choices=("all", "core") + SUITES, default="all")
    p.add_argument("--instances", type=_count, default=100, help="instances per suite and seed")
    p.add_argument("--seeds", type=_int_list, default=[0], help="comma-separated campaign seeds")
    p.add_argument("--misreports", type=_positive_int, default=20, help="misreports per user (truthfulness)")
    p.add_argument("--workers", type=_positive_int, help="worker processes (default: all cores)")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("gen-cluster", help="sample servers from a server-class table")
    _common(p)
    p.add_argument("--servers", type=_positive_int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--table", help="CSV of server classes: count,cpu,mem (default: built-in table)")
    p.add_argument("--unit-scale", type=_positive_float, default=1.0,
                   help="absolute units of a server with relative size 1")
    p.set_defaults(func=cmd_gen_cluster)

    p = sub.add_parser("gen-trace", help="synthetic CPU-heavy / memory-heavy task trace")
    _common(p)
    p.add_argument("--seed", type=int, default=0)
    for f in fields(WorkloadConfig):
        flag = "--" + f.name.replace("_", "-")
        if isinstance(f.default, tuple):
            p.add_argument(flag, type=float, nargs=2, metavar=("CPU", "MEM"), default=f.default)
        else:
            p.add_argument(flag, type=type(f.default), default=f.default)
    p.set_defaults(func=cmd_gen_trace)

    p = sub.add_parser("scenario", help="three users joining and leaving on a sampled cluster")
    _common(p)
    p.add_argument("--servers", type=_positive_int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=_positive_float, default=1500.0)
    p.add_argument("--sample-interval", type=_positive_float, default=10.0)
    p.add_argument("--blocking", choices=BLOCKING_MODES, default=SKIP)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_scenario)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        raise UsageError("a command is required")
    if getattr(args, "config", None):
        try:
            config = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise UsageError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {args.config} is not valid JSON: {exc}") from None
        if not isinstance(config, dict):
            raise UsageError(f"config file {args.config} must hold a JSON object")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, value in config.items():
            dest = key.lstrip("-").replace("-", "_")
            if dest not in known or dest in ("help", "config"):
                raise UsageError(f"config key {key!r} is not a flag of '{args.command}'")
            action = known[dest]
            if action.type is not None and isinstance(value, str):
                value = action.type(value)
            if action.dest == "slots" and isinstance(value, list):
                value = [int(v) for v in value]
            defaults[dest] = value
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)  # command line still wins
    return args


# -- helpers ---------------------------------------------------------------


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(ENV_OUT) or "drfh-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(out: Path, args, seeds: dict, inputs: dict, outputs: list[str]) -> None:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in NOT_IN_MANIFEST}
    for key in inputs:
        config.pop(key, None)
    manifest = {
        "tool": "drfh",
        "version": __version__,
        "command": args.command,
        "config": config,
        "seeds": seeds,
        "inputs": {k: {"name": Path(p).name, "sha256": _sha256(p)} for k, p in inputs.items() if p},
        "outputs": sorted(outputs),
    }
    write_json(manifest, out / "manifest.json")


def _require(args, *names) -> None:
    missing = ["--" + n.replace("_", "-") for n in names if not getattr(args, n, None)]
    if missing:
        raise UsageError(f"'{args.command}' needs {', '.join(missing)}")


def _policy(args, kind=None) -> SchedulerPolicy:
    kind = kind or POLICIES[args.policy]
    return SchedulerPolicy(kind, getattr(args, "slots", 14), args.blocking)


def _load_sim_inputs(args):
    _require(args, "cluster", "trace")
    cluster = load_cluster(args.cluster)
    if cluster.m != 2:
        raise UsageError(f"traces carry cpu and mem demands; cluster {args.cluster} has {cluster.m} resources")
    rows = load_trace(args.trace)
    users = load_users(args.users) if args.users else None
    workload = rows_to_workload(rows, users)
    horizon = args.horizon
    if horizon is None:
        horizon = (max((r.submit_time_s for r in rows), default=0.0)) + 3600.0
        args.horizon = horizon
    return cluster, workload, horizon


def _plotting():
    try:
        from . import plots
        plots._pyplot()
    except ImportError:
        raise UsageError("--plot needs matplotlib: pip install 'artifact[plot]'") from None
    return plots


def _fraction(x: float) -> str:
    f = Fraction(x).limit_denominator(1000)
    return f" ({f.numerator}/{f.denominator})" if f.denominator > 1 and abs(float(f) - x) < 1e-9 else ""


# -- subcommands -------------------------------------------------------------


def cmd_solve(args) -> int:
    _require(args, "cluster", "demands")
    cluster = load_cluster(args.cluster)
    users = load_demands(args.demands, cluster)
    solver = {"drfh": solve_drfh, "weighted": solve_weighted, "finite": solve_finite_tasks,
              "per-server": per_server_drf}[args.mode]
    sol = solver(cluster, users)
    tasks = sol.tasks()
    per_server = sol.tasks_per_server()
    print(f"g = {sol.g_star:.6f}{_fraction(sol.g_star)}  [{sol.status}]")
    print("user        G        tasks")
    for u, G, n in zip(users, sol.per_user_G, tasks):
        print(f"{u.name:<10s}  {G:.6f}  {n:.6f}")
    out = _out_dir(args)
    result = {
        "mode": args.mode,
        "status": sol.status,
        "g": sol.g_star,
        "users": [
            {"user_id": u.name, "dominant_share": G, "tasks": n, "tasks_per_server": list(row),
             "dominant_share_per_server": list(gs), "dominant_resource": cluster.resource_names[u.dominant]}
            for u, G, n, row, gs in zip(users, sol.per_user_G, tasks, per_server, sol.shares)
        ],
    }
    write_json(result, out / "solution.json")
    _write_manifest(out, args, {}, {"cluster": args.cluster, "demands": args.demands}, ["solution.json"])
    return 0


def _series_outputs(series, out: Path, prefix: str = "") -> list[str]:
    names = [f"{prefix}metrics.csv", f"{prefix}placements.csv", f"{prefix}summary.json"]
    write_metrics(series, out / names[0])
    write_placements(series, out / names[1])
    write_json(summarize(series), out / names[2])
    return names


def cmd_simulate(args) -> int:
    cluster, workload, horizon = _load_sim_inputs(args)
    plots = _plotting() if args.plot else None
    series = run_simulation(cluster, workload, _policy(args), horizon, args.sample_interval)
    out = _out_dir(args)
    outputs = _series_outputs(series, out)
    if plots:
        plots.plot_shares(series, out / "shares.png")
        outputs.append("shares.png")
    s = summarize(series)
    print(f"{s['policy']}: mean utilization "
          + ", ".join(f"{k} {v:.4f}" for k, v in s["mean_utilization"].items())
          + f"; {s['jobs_completed']}/{s['jobs_submitted']} jobs completed")
    _write_manifest(out, args, {}, {"cluster": args.cluster, "trace": args.trace, "users": args.users}, outputs)
    return 0


def cmd_compare(args) -> int:
    cluster, workload, horizon = _load_sim_inputs(args)
    plots = _plotting() if args.plot else None
    policies = [SchedulerPolicy(BEST_FIT, blocking=args.blocking),
                SchedulerPolicy(FIRST_FIT, blocking=args.blocking)]
    policies += [SchedulerPolicy(SLOTS, s) for s in args.slots]
    runs = run_batch([(cluster, workload, p, horizon, args.sample_interval) for p in policies], args.workers)
    out = _out_dir(args)
    summaries = [summarize(s) for s in runs]
    slot_runs = summaries[2:]
    best_slots = max(slot_runs, key=lambda s: s["mean_combined_utilization"])
    write_json({"policies": summaries, "best_slots": best_slots["policy"]}, out / "comparison.json")
    with open(out / "comparison.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy"] + [f"{n}_util" for n in cluster.resource_names]
                   + ["combined_util", "p50_s", "p90_s", "p99_s", "jobs_completed"])
        for s in summaries:
            pct = s["completion_time_percentiles_s"]
            w.writerow([s["policy"]] + [_fmt(v) for v in s["mean_utilization"].values()]
                       + [_fmt(s["mean_combined_utilization"])]
                       + ["" if pct[q] is None else _fmt(pct[q]) for q in ("p50", "p90", "p99")]
                       + [s["jobs_completed"]])
    with open(out / "utilization.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "time_s"] + [f"{n}_util" for n in cluster.resource_names])
        for s in runs:
            for t, u in zip(s.times, s.utilization):
                w.writerow([s.policy, _fmt(t)] + [_fmt(x) for x in u])
    outputs = ["comparison.json", "comparison.csv", "utilization.csv"]
    if plots:
        shown = runs[:2] + [runs[2 + slot_runs.index(best_slots)]]
        plots.plot_utilization(shown, out / "utilization.png")
        plots.plot_completion_cdf(shown, out / "completion_cdf.png")
        outputs += ["utilization.png", "completion_cdf.png"]
    for s in summaries:
        print(f"{s['policy']:<16s} combined utilization {s['mean_combined_utilization']:.4f}")
    _write_manifest(out, args, {}, {"cluster": args.cluster, "trace": args.trace, "users": args.users}, outputs)
    return 0


def cmd_sharing(args) -> int:
    cluster, workload, horizon = _load_sim_inputs(args)
    plots = _plotting() if args.plot else None
    try:
        report = sharing_incentive_benchmark(cluster, workload, _policy(args), args.seed, horizon,
                                             args.sample_interval)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = _out_dir(args)
    write_json(report, out / "sharing.json")
    with open(out / "sharing.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "servers", "dedicated_ratio", "shared_ratio"])
        for uid, r in report["per_user"].items():
            w.writerow([uid, r["servers"], _fmt(r["dedicated"]), _fmt(r["shared"])])
    outputs = ["sharing.json", "sharing.csv"]
    if plots:
        plots.plot_completion_ratios(report, out / "completion_ratios.png")
        outputs.append("completion_ratios.png")
    print(f"{len(report['worse_off_users'])}/{report['users']} users worse off in the shared cluster "
          f"({report['worse_off_fraction']:.1%})")
    _write_manifest(out, args, {"partition": args.seed},
                    {"cluster": args.cluster, "trace": args.trace, "users": args.users}, outputs)
    return 0


def cmd_audit(args) -> int:
    out = _out_dir(args)
    reports = []
    for seed in args.seeds:
        reports += run_campaign(args.suite, args.instances, seed, args.misreports, args.workers)
    with open(out / "audit.jsonl", "w", encoding="utf-8") as fh:
        for rep in reports:
            fh.write(rep.to_json() + "\n")
    by_property: dict[str, dict] = {}
    for rep in reports:
        agg = by_property.setdefault(rep.property, {"checked": 0, "failed": 0, "worst_violation": 0.0})
        agg["checked"] += 1
        agg["failed"] += not rep.passed
        agg["worst_violation"] = max(agg["worst_violation"], rep.violation)
    failed = sum(a["failed"] for a in by_property.values())
    write_json({"suite": args.suite, "reports": len(reports), "failed": failed, "properties": by_property},
               out / "audit_summary.json")
    for name, agg in sorted(by_property.items()):
        print(f"{name:<24s} {agg['checked'] - agg['failed']}/{agg['checked']} passed, "
              f"worst violation {agg['worst_violation']:.3g}")
    if not reports:
        print("no instances audited (vacuous pass)")
    _write_manifest(out, args, {"campaign": args.seeds}, {}, ["audit.jsonl", "audit_summary.json"])
    return 1 if failed else 0


def _load_table(path) -> ServerClassTable:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line, row in enumerate(csv.reader(fh), 1):
            if not row or (line == 1 and not row[0].strip().lstrip("-").replace(".", "").isdigit()):
                continue  # header or blank
            try:
                rows.append((int(row[0]), float(row[1]), float(row[2])))
            except (ValueError, IndexError):
                raise TraceFormatError(path, line, "expected count,cpu,mem") from None
    try:
        return ServerClassTable(tuple(rows))
    except ValueError as exc:
        raise TraceFormatError(path, 1, str(exc)) from None


def cmd_gen_cluster(args) -> int:
    table = _load_table(args.table) if args.table else ServerClassTable(GOOGLE_SERVER_CLASSES)
    cluster = sample_cluster(table, args.servers, args.seed, args.unit_scale)
    out = _out_dir(args)
    write_cluster(cluster, out / "cluster.csv")
    print(f"wrote {cluster.k} servers to {out / 'cluster.csv'}")
    _write_manifest(out, args, {"cluster": args.seed}, {"table": args.table}, ["cluster.csv"])
    return 0


def cmd_gen_trace(args) -> int:
    values = {f.name: getattr(args, f.name) for f in fields(WorkloadConfig)}
    values = {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
    try:
        config = WorkloadConfig(**values)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rows = generate_workload(config, args.seed)
    out = _out_dir(args)
    write_trace(rows, out / "trace.csv")
    print(f"wrote {len(rows)} tasks from {config.n_users} users to {out / 'trace.csv'}")
    _write_manifest(out, args, {"trace": args.seed}, {}, ["trace.csv"])
    return 0


def cmd_scenario(args) -> int:
    plots = _plotting() if args.plot else None
    cluster = sample_cluster(ServerClassTable(), args.servers, args.seed)
    workload = three_user_workload(cluster, args.seed)
    series = run_simulation(cluster, workload, SchedulerPolicy(BEST_FIT, blocking=args.blocking),
                            args.horizon, args.sample_interval)
    out = _out_dir(args)
    write_cluster(cluster, out / "cluster.csv")
    write_users(workload.users, out / "users.csv")
    outputs = ["cluster.csv", "users.csv"] + _series_outputs(series, out)
    col = {u: i for i, u in enumerate(series.user_ids)}
    levels = []
    for a, b, active in phases(workload, args.horizon):
        mask = (series.times >= a) & (series.times < b)
        mean = series.shares[mask][:, [col[u] for u in active]].mean(axis=0) if mask.any() else []
        levels.append({"start_s": a, "end_s": b, "active": active,
                       "mean_share": {u: float(x) for u, x in zip(active, mean)}})
        print(f"[{a:6.0f}, {b:6.0f})  " + "  ".join(f"user {u}: {x:.3f}" for u, x in zip(active, mean)))
    write_json({"phases": levels}, out / "phases.json")
    outputs.append("phases.json")
    if plots:
        plots.plot_shares(series, out / "shares.png")
        outputs.append("shares.png")
    _write_manifest(out, args, {"cluster": args.seed, "durations": args.seed}, {}, outputs)
    return 0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, argparse.ArgumentTypeError) as exc:
        print(f"drfh: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"drfh {args.command}: error: {exc}", file=sys.stderr)
    except FileNotFoundError as exc:
        print(f"drfh {args.command}: error: file not found: {exc.filename}", file=sys.stderr)
    except (TraceFormatError, DimensionError) as exc:
        print(f"drfh {args.command}: error: {exc}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
