import hashlib
import json
from pathlib import Path

import pytest

from drfh.cli import main

DATA = Path(__file__).resolve().parents[1] / "data"
CLUSTER = str(DATA / "two_server_cluster.csv")
DEMANDS = str(DATA / "two_server_demands.csv")


def _hashes(directory: Path) -> dict:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.iterdir())}


@pytest.fixture(scope="module")
def inputs(tmp_path_factory):
    d = tmp_path_factory.mktemp("inputs")
    assert main(["gen-cluster", "--servers", "40", "--seed", "1", "--out", str(d)]) == 0
    assert main(["gen-trace", "--seed", "2", "--n-users", "4", "--span-s", "600", "--out", str(d)]) == 0
    return d / "cluster.csv", d / "trace.csv"


def test_solve_prints_level_and_tasks(tmp_path, capsys):
    assert main(["solve", "--cluster", CLUSTER, "--demands", DEMANDS, "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "g = 0.714286 (5/7)" in out
    assert out.count("10.000000") == 2
    sol = json.loads((tmp_path / "solution.json").read_text())
    assert sol["g"] == pytest.approx(5 / 7, abs=1e-12)
    assert [u["tasks"] for u in sol["users"]] == pytest.approx([10, 10], abs=1e-9)


def test_solve_baseline_mode(tmp_path, capsys):
    assert main(["solve", "--cluster", CLUSTER, "--demands", DEMANDS, "--mode", "per-server",
                 "--out", str(tmp_path)]) == 0
    assert "g = 0.428571 (3/7)" in capsys.readouterr().out


def test_audit_empty_campaign_passes(tmp_path):
    assert main(["audit", "--suite", "all", "--instances", "0", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "audit.jsonl").read_text() == ""


def test_audit_is_deterministic(tmp_path):
    args = ["audit", "--instances", "5", "--seeds", "3,4", "--misreports", "3", "--workers", "2"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--workers", "1"]) == 0
    assert _hashes(tmp_path / "a") == _hashes(tmp_path / "b")
    lines = (tmp_path / "a" / "audit.jsonl").read_text().splitlines()
    assert len(lines) == 2 * 5 * 7
    assert all(json.loads(line)["passed"] for line in lines)


def test_simulate_is_deterministic(tmp_path, inputs):
    cluster, trace = inputs
    for name in ("a", "b"):
        assert main(["simulate", "--cluster", str(cluster), "--trace", str(trace), "--horizon", "900",
                     "--out", str(tmp_path / name)]) == 0
    assert _hashes(tmp_path / "a") == _hashes(tmp_path / "b")
    header = (tmp_path / "a" / "metrics.csv").read_text().splitlines()[0]
    assert header == "time_s,cpu_util,mem_util,user_id,dominant_share"
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["config"]["policy"] == "best-fit"
    assert manifest["config"]["horizon"] == 900
    assert set(manifest["inputs"]) == {"cluster", "trace"}


def test_compare_scans_slots(tmp_path, inputs):
    cluster, trace = inputs
    assert main(["compare", "--cluster", str(cluster), "--trace", str(trace), "--horizon", "900",
                 "--slots", "10,20", "--workers", "1", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "comparison.json").read_text())
    assert [p["policy"] for p in report["policies"]] == ["best_fit_drfh", "first_fit_drfh", "slots_10", "slots_20"]
    assert report["best_slots"] in ("slots_10", "slots_20")


def test_sharing_and_scenario(tmp_path, inputs):
    cluster, trace = inputs
    assert main(["sharing", "--cluster", str(cluster), "--trace", str(trace), "--horizon", "900",
                 "--out", str(tmp_path / "s")]) == 0
    assert "worse_off_fraction" in json.loads((tmp_path / "s" / "sharing.json").read_text())
    assert main(["scenario", "--servers", "20", "--horizon", "300", "--out", str(tmp_path / "sc")]) == 0
    phases = json.loads((tmp_path / "sc" / "phases.json").read_text())["phases"]
    assert [p["start_s"] for p in phases] == [0, 200]


def test_config_file_and_precedence(tmp_path, inputs):
    cluster, trace = inputs
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"cluster": str(cluster), "trace": str(trace), "policy": "slots",
                               "slots": 12, "horizon": 300}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert json.loads((tmp_path / "a" / "summary.json").read_text())["policy"] == "slots_12"
    assert main(["simulate", "--config", str(cfg), "--slots", "16", "--out", str(tmp_path / "b")]) == 0
    assert json.loads((tmp_path / "b" / "summary.json").read_text())["policy"] == "slots_16"


def test_env_var_sets_output(tmp_path, monkeypatch):
    monkeypatch.setenv("DRFH_OUT", str(tmp_path / "env"))
    assert main(["gen-cluster", "--servers", "3"]) == 0
    assert (tmp_path / "env" / "cluster.csv").exists()


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["simulate", "--bogus"],
    ["solve", "--cluster", CLUSTER],
    ["solve", "--cluster", "missing.csv", "--demands", DEMANDS],
    ["audit", "--instances", "-1"],
    ["compare", "--slots", "ten"],
])
def test_usage_errors_exit_2(tmp_path, argv, capsys):
    assert main(argv + (["--out", str(tmp_path)] if len(argv) > 1 else [])) == 2
    assert "error" in capsys.readouterr().err


def test_schema_error_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("server_id,cpu_units,mem_units\n0,1\n")
    assert main(["solve", "--cluster", str(bad), "--demands", DEMANDS, "--out", str(tmp_path)]) == 2
    assert "bad.csv:2" in capsys.readouterr().err


def test_bad_config_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"warp": 9}')
    assert main(["simulate", "--config", str(cfg)]) == 2
    assert "warp" in capsys.readouterr().err


def test_plot_renders_pngs(tmp_path, inputs):
    pytest.importorskip("matplotlib")
    cluster, trace = inputs
    args = ["simulate", "--cluster", str(cluster), "--trace", str(trace), "--horizon", "600", "--plot"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    png = (tmp_path / "a" / "shares.png").read_bytes()
    assert png.startswith(b"\x89PNG")
    assert png == (tmp_path / "b" / "shares.png").read_bytes()
