import json
import math

import pytest
from click.testing import CliRunner

from scenforge.assembly import diff_derivation, expected_count, load_manifest
from scenforge.cli import main
from scenforge.document import load_document
from scenforge.map_graph import load_opendrive
from scenforge.oracle import goal_from_document

from conftest import FIXTURES, MAPS, MAP_OF


def run(*args, ok=True):
    result = CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)
    if ok:
        assert result.exit_code == 0, result.output
    return result


def test_build_map(tmp_path):
    out = tmp_path / "graph.json"
    res = run("build-map", MAPS / "crossroads.xodr", "-o", out)
    net = load_opendrive(MAPS / "crossroads.xodr")
    dump = json.loads(out.read_text())
    assert len(dump["nodes"]) == len(net.segments) and len(dump["edges"]) == len(net.edges)
    assert f"{len(net.segments)} segments" in res.output


def test_build_map_errors(tmp_path):
    assert run("build-map", tmp_path / "nope.xodr", "-o", tmp_path / "g.json", ok=False).exit_code == 2
    bad = tmp_path / "bad.xodr"
    bad.write_text("<OpenDRIVE><road>")
    res = run("build-map", bad, "-o", tmp_path / "g.json", ok=False)
    assert res.exit_code == 3 and "MalformedDocument" in res.output


@pytest.mark.parametrize("rid", ["left_turn", "overtake"])
def test_extract_matches_golden(tmp_path, rid):
    out = tmp_path / "facts.json"
    run("extract", FIXTURES / "reports" / f"{rid}.txt", "-o", out,
        "--transcript", FIXTURES / "transcripts" / f"{rid}.json")
    assert out.read_text() == (FIXTURES / "facts" / f"{rid}.json").read_text()


def test_extract_incomplete(tmp_path):
    text = "It was raining heavily."
    report = tmp_path / "weather.txt"
    report.write_text(text)
    tr = tmp_path / "tr.json"
    tr.write_text(json.dumps({"format": "scenforge.transcript/1", "exchanges": [
        {"request": {"task": "participants", "input": {"report": text}},
         "response": {"av": {}, "npcs": [], "obstacles": []}}]}))
    res = run("extract", report, "-o", tmp_path / "f.json", "--transcript", tr, ok=False)
    assert res.exit_code == 5 and "IncompleteReport" in res.output
    assert not (tmp_path / "f.json").exists()


def test_extract_unreachable_backend(tmp_path, monkeypatch):
    monkeypatch.setenv("SCENFORGE_LLM_URL", "http://127.0.0.1:9/none")
    res = run("extract", FIXTURES / "reports" / "left_turn.txt", "-o", tmp_path / "f.json",
              "--backend", "http", ok=False)
    assert res.exit_code == 6 and "BackendError" in res.output


def test_extract_fixture_backend_needs_transcript(tmp_path):
    res = run("extract", FIXTURES / "reports" / "left_turn.txt", "-o", tmp_path / "f.json", ok=False)
    assert res.exit_code == 6


@pytest.mark.parametrize("rid", ["left_turn", "bicycle_cone", "debris"])
def test_seed_matches_golden_and_repeats(tmp_path, rid):
    args = ["seed", FIXTURES / "facts" / f"{rid}.json", "--map", MAPS / MAP_OF[rid]]
    run(*args, "-o", tmp_path / "a.xosc")
    run(*args, "-o", tmp_path / "b.xosc")
    a = (tmp_path / "a.xosc").read_bytes()
    assert a == (tmp_path / "b.xosc").read_bytes()
    assert a == (FIXTURES / "seeds" / f"{rid}.xosc").read_bytes()


def test_seed_replays_recorded_fill(tmp_path):
    run("seed", FIXTURES / "facts" / "overtake.json", "--map", MAPS / "multilane.xodr", "-o", tmp_path / "s.xosc",
        "--transcript", FIXTURES / "fill" / "overtake.json")
    assert (tmp_path / "s.xosc").read_bytes() == (FIXTURES / "seeds" / "overtake.xosc").read_bytes()


def test_seed_no_candidate(tmp_path):
    res = run("seed", FIXTURES / "facts" / "left_turn.json", "--map", MAPS / "multilane.xodr",
              "-o", tmp_path / "s.xosc", ok=False)
    assert res.exit_code == 7 and "NoCandidate" in res.output


def test_seed_bad_facts(tmp_path):
    bad = tmp_path / "facts.json"
    bad.write_text("{}")
    res = run("seed", bad, "--map", MAPS / "crossroads.xodr", "-o", tmp_path / "s.xosc", ok=False)
    assert res.exit_code == 2


def _grow(tmp_path, rid="left_turn", *extra):
    out = tmp_path / "tree"
    run("--seed", 3, "grow", FIXTURES / "seeds" / f"{rid}.xosc", "--map", MAPS / MAP_OF[rid], "-o", out, *extra)
    return out


def test_grow_counts_and_links(tmp_path):
    out = _grow(tmp_path)
    m = load_manifest(out)
    assert m["seed"] == 3 and m["tool_version"]
    assert len(m["nodes"]) - 1 == expected_count(m["variant_counts"]) == m["expected_count"]
    for n in m["nodes"][1:60]:
        parent = load_document(out / f"node_{n['parent']}.xosc")
        child = load_document(out / f"node_{n['id']}.xosc")
        assert diff_derivation(parent, child).kind == "block_added"
    assert any(n["pruned"] for n in m["nodes"])


def test_grow_full_retention_and_jobs(tmp_path):
    out = tmp_path / "tree"
    run("--jobs", 4, "grow", FIXTURES / "seeds" / "overtake.xosc", "--map", MAPS / "multilane.xodr", "-o", out,
        "--retention", "1.0", "--count", 3)
    m = load_manifest(out)
    assert not any(n["pruned"] for n in m["nodes"])
    assert m["variant_counts"][0] == 3  # WM emits every weather type


def test_grow_deterministic_across_jobs(tmp_path):
    a = _grow(tmp_path / "a")
    b = tmp_path / "b" / "tree"
    run("--seed", 3, "--jobs", 3, "grow", FIXTURES / "seeds" / "left_turn.xosc", "--map",
        MAPS / "crossroads.xodr", "-o", b)
    for f in sorted(a.iterdir()):
        assert f.read_bytes() == (b / f.name).read_bytes(), f.name


def test_grow_bad_retention(tmp_path):
    res = run("grow", FIXTURES / "seeds" / "left_turn.xosc", "--map", MAPS / "crossroads.xodr",
              "-o", tmp_path / "t", "--retention", "0", ok=False)
    assert res.exit_code == 1
    assert "retention" in res.output


def _write_trace(path, samples):
    path.write_text("".join(json.dumps(dict(zip("t x y v heading".split(), s))) + "\n" for s in samples))


def _drive(x0, y0, x1, y1, duration=12.0, dt=0.1, hold=0.0):
    """Straight drive from (x0, y0) to (x1, y1) after standing still for ``hold`` seconds."""
    h = math.atan2(y1 - y0, x1 - x0)
    dist = math.hypot(x1 - x0, y1 - y0)
    speed = dist / (duration - hold)
    out = []
    for k in range(int(round(duration / dt)) + 1):
        t = k * dt
        s = min(max(t - hold, 0.0) * speed, dist)
        out.append((t, x0 + s * math.cos(h), y0 + s * math.sin(h), speed if t >= hold else 0.0, h))
    return out


def test_analyze_constructed_traces(tmp_path):
    tree = _grow(tmp_path, "left_turn", "--retention", "1.0")
    traces = tmp_path / "traces"
    traces.mkdir()
    nodes = load_manifest(tree)["nodes"]
    leaves = [n["id"] for n in nodes if not n["children"]][:4]
    goal = goal_from_document(load_document(tree / f"node_{leaves[0]}.xosc"))
    start = (goal.x - 60 * math.cos(goal.heading), goal.y - 60 * math.sin(goal.heading))
    _write_trace(traces / f"node_{leaves[0]}.jsonl", [(t, *start, 0.0, 0.0) for t in range(15)])
    _write_trace(traces / f"node_{leaves[1]}.jsonl", _drive(*start, goal.x, goal.y))
    _write_trace(traces / f"node_{leaves[2]}.jsonl", _drive(*start, (start[0] + goal.x) / 2, (start[1] + goal.y) / 2))
    _write_trace(traces / f"node_{leaves[3]}.jsonl", _drive(*start, goal.x, goal.y))
    _write_trace(traces / "node_99999.jsonl", _drive(0, 0, 1, 1))
    out, csv_path = tmp_path / "findings.json", tmp_path / "triggers.csv"
    res = run("analyze", tree, traces, "-o", out, "--triggers", csv_path)
    report = json.loads(out.read_text())
    assert report["analyzed"] == 4
    assert report["counts"]["failure_to_start"] == 1
    assert report["counts"]["plan_failure"] == 1
    assert report["nodes"][leaves[1]]["categories"] == []
    assert report["nodes"][leaves[0]]["derivation"]["kind"] == "block_added"
    assert "99999" not in report["nodes"]
    rows = csv_path.read_text().splitlines()
    assert rows[0] == "feature,category,lift,support,n_feature,n_category,n_nodes"
    assert len(rows) - 1 == report["triggers"] > 0
    assert "4 run(s)" in res.output


def test_analyze_empty_traces(tmp_path):
    tree = _grow(tmp_path)
    (tmp_path / "traces").mkdir()
    run("analyze", tree, tmp_path / "traces", "-o", tmp_path / "f.json")
    report = json.loads((tmp_path / "f.json").read_text())
    assert report["analyzed"] == 0 and report["nodes"] == {} and report["triggers"] == 0


def test_analyze_bad_trace_exit_code(tmp_path):
    tree = _grow(tmp_path)
    traces = tmp_path / "traces"
    traces.mkdir()
    _write_trace(traces / "node_1.jsonl", [(0, 0, 0, 0, 0), (0, 0, 0, 0, 0), (1, 0, 0, 0, 0)])
    res = run("analyze", tree, traces, "-o", tmp_path / "f.json", ok=False)
    assert res.exit_code == 11 and "NonMonotonicTime" in res.output


def test_usage_errors_exit_one(tmp_path):
    assert run("grow", ok=False).exit_code == 1
    assert run("nonsense", ok=False).exit_code == 1
    assert run("seed", FIXTURES / "facts" / "left_turn.json", "-o", tmp_path / "s.xosc", ok=False).exit_code == 1


def test_config_file_and_version(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 3, "map_path": str(MAPS / "crossroads.xodr")}))
    out = tmp_path / "tree"
    run("--config", cfg, "grow", FIXTURES / "seeds" / "left_turn.xosc", "-o", out)
    assert load_manifest(out)["seed"] == 3
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nope": 1}))
    assert run("--config", bad, "grow", "x", "-o", out, ok=False).exit_code == 1
    assert "scenforge" in run("--version").output
