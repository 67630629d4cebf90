"""Experiment harness: geometry, cohort placement, runs, suites, tables."""

import csv
import json
import math

import pytest

from carryflow.assignment import Strategy
from carryflow.harness import (assign_cohorts, build, emit_suite, makespan,
                               ring_arc_distance, ring_positions, run_scenario,
                               run_suite, summarize)
from carryflow.scenario import parse_scenario

from test_scenario import RING_INI


@pytest.fixture(scope="module")
def tiny_config():
    return parse_scenario(RING_INI)


def test_ring_positions_spacing():
    n, spacing = 12, 100.0
    pos = ring_positions(n, spacing)
    assert len(pos) == 12
    radius = n * spacing / (2 * math.pi)
    for x, y in pos:
        assert math.hypot(x, y) == pytest.approx(radius)
    chord = math.dist(pos[0], pos[1])
    assert chord < spacing
    arc = ring_arc_distance(n, spacing)
    for i in range(n):
        assert arc(pos[i], pos[(i + 1) % n]) == pytest.approx(spacing)
    # arc distance counts hops the short way around
    assert arc(pos[0], pos[6]) == pytest.approx(6 * spacing)
    assert arc(pos[0], pos[9]) == pytest.approx(3 * spacing)


def test_assign_cohorts_pins_and_shuffles(tiny_config):
    assignment = assign_cohorts(tiny_config)
    assert assignment[1] == 0                  # pinned client cohort
    assert sorted(assignment) == [1, 2, 3, 4, 5, 6]
    assert all(assignment[a] == 1 for a in range(2, 7))

    # an unpinned split shuffles by seed, reproducibly
    text = RING_INI.replace("nodes = 6", "nodes = 10").replace(
        "[cohort:worker]", "[cohort:strong]\ncount = 4\nservices = work\n\n"
                           "[cohort:worker]")
    cfg = parse_scenario(text)
    first = assign_cohorts(cfg)
    assert first == assign_cohorts(cfg)
    assert sum(1 for v in first.values() if v == 1) == 4
    other = assign_cohorts(cfg.with_run(seed=2))
    assert other != first


def test_build_wires_nodes_and_clients(tiny_config):
    built = build(tiny_config)
    assert sorted(built.nodes) == [1, 2, 3, 4, 5, 6]
    assert [c.address for c in built.clients] == [1]
    assert built.nodes[1].worker.services == {}
    assert set(built.nodes[2].worker.services) == {"work"}
    assert built.world.position_of(3) != built.world.position_of(4)


def test_run_scenario_produces_report(tiny_config):
    report = run_scenario(tiny_config)
    assert report.scenario == "tiny-ring"
    assert report.seed == 9
    assert report.strategy == "spread"
    assert len(report.workflows) == 2          # repeat = 2
    assert [w.workflow_id for w in report.workflows] == \
        sorted(w.workflow_id for w in report.workflows)
    for w in report.workflows:
        assert w.status == "succeeded"
        assert w.transmission_s > 0.0
        assert w.execution_s > 0.0
        assert makespan(w) == pytest.approx(w.finished_at - w.offloaded_at)
    # early stop: both workflows finish long before the duration cap
    assert report.duration_s < tiny_config.run.duration_s
    assert report.config_digest == tiny_config.digest()
    assert set(report.residual_energy) == {1, 2, 3, 4, 5, 6}


def test_run_scenario_overrides(tiny_config):
    report = run_scenario(tiny_config, seed=3, strategy=Strategy.BEST)
    assert report.seed == 3
    assert report.strategy == "best"
    assert report.config_digest != tiny_config.digest()


def test_run_suite_order_and_digest(tiny_config):
    suite = run_suite(tiny_config, [1, 2], [Strategy.BEST, Strategy.RANDOM])
    assert [(r.strategy, r.seed) for r in suite.reports] == \
        [("best", 1), ("best", 2), ("random", 1), ("random", 2)]
    assert suite.digest() == run_suite(tiny_config, [1, 2],
                                       [Strategy.BEST, Strategy.RANDOM]).digest()


def test_summarize_aggregates(tiny_config):
    suite = run_suite(tiny_config, [1, 2], [Strategy.BEST])
    summary = summarize(suite.reports)
    row = summary["best"]
    assert row["runs"] == 2
    assert row["workflows"] == 4
    assert 0.0 <= row["success_rate"] <= 1.0
    if row["success_rate"] == 1.0:
        assert row["mean_makespan_s"] > 0.0
    assert row["selection_entropy"] >= 0.0


def test_makespan_none_until_finished(tiny_config):
    report = run_scenario(tiny_config)
    w = report.workflows[0]
    assert makespan(w) is not None
    import dataclasses
    unfinished = dataclasses.replace(w, finished_at=None)
    assert makespan(unfinished) is None


def test_emit_suite_writes_tables(tiny_config, tmp_path):
    suite = run_suite(tiny_config, [1, 2], [Strategy.BEST, Strategy.SPREAD])
    out = tmp_path / "out"
    files = emit_suite(suite, str(out))
    expected = {"report-best-1.json", "report-best-2.json",
                "report-spread-1.json", "report-spread-2.json",
                "phases.csv", "final_states.csv", "load_matrix.csv",
                "summary.csv", "manifest.json"}
    assert set(files) == expected
    assert {p.name for p in out.iterdir()} == expected

    with open(out / "manifest.json") as fh:
        manifest = json.load(fh)
    assert manifest["suite_digest"] == suite.digest()
    assert manifest["seeds"] == [1, 2]
    assert manifest["strategies"] == ["best", "spread"]
    assert "manifest.json" not in manifest["files"]

    with open(out / "phases.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["scenario", "strategy", "seed", "workflow_id", "task",
                       "runtime_s", "transmission_s", "execution_s"]
    # 4 runs x 2 workflows x 2 tasks
    assert len(rows) - 1 == 16

    with open(out / "summary.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:2] == ["scenario", "strategy"]
    assert sorted(r[1] for r in rows[1:]) == ["best", "spread"]

    with open(out / "report-best-1.json") as fh:
        obj = json.load(fh)
    assert obj["seed"] == 1
    assert obj["strategy"] == "best"


def test_waypoint_scenario_runs():
    text = RING_INI.replace(
        "kind = ring\nnodes = 6\nspacing_m = 50",
        "kind = waypoint\nnodes = 8\nwidth_m = 120\nheight_m = 120\n"
        "range_m = 60").replace("duration_s = 60", "duration_s = 120")
    report = run_scenario(parse_scenario(text), seed=4)
    assert len(report.workflows) == 2
    assert report.duration_s <= 120.0
