import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from scenforge.backends import FixtureBackend, HttpBackend, RecordingBackend
from scenforge.errors import AmbiguousPosition, BackendError, IncompleteReport, UnknownAction
from scenforge.placement import assign_lanes, select_segment
from scenforge.report_extraction import (EventSequence, NpcFact, RelPos, ReportFacts, classify_relative_position,
                                         extract_facts, load_codebook, normalize_events)

from conftest import FIXTURES, REPORT_IDS, facts_for, network_for, report_text, transcript_backend


@pytest.mark.parametrize("phrases,code", [
    (["proceed straight", "turn left"], "ad"),
    (["proceed straight", "change lane left", "turn left"], "afd"),
    (["Go straight", "go straight", "slow down"], "ae"),
])
def test_normalize_events(phrases, code):
    assert normalize_events(phrases).code == code


def test_normalize_unknown():
    with pytest.raises(UnknownAction):
        normalize_events(["levitate"])


def test_codebook_has_thirteen_letters():
    cb = load_codebook()
    assert sorted(cb["actions"]) == list("abcdefghijkmn")


@pytest.mark.parametrize("rid", REPORT_IDS)
def test_fixture_extraction_matches_golden(rid):
    facts = extract_facts(report_text(rid), transcript_backend(rid), rid)
    assert facts.to_json() == (FIXTURES / "facts" / f"{rid}.json").read_text()


def test_bicycle_adjacent_lane_changes_left():
    facts = facts_for("bicycle_cone")
    (npc,) = facts.npcs
    assert npc.category == "bicycle"
    assert npc.rel_pos.code == "R5" and npc.rel_pos.same_segment
    assert "f" in npc.events.actions
    assert npc.lane_alignment == "different_lane"


def test_facts_json_round_trip():
    for rid in REPORT_IDS:
        f = facts_for(rid)
        assert ReportFacts.from_json(f.to_json()) == f


def test_extraction_deterministic():
    a = extract_facts(report_text("left_turn"), transcript_backend("left_turn"), "x")
    b = extract_facts(report_text("left_turn"), transcript_backend("left_turn"), "x")
    assert a == b


def _backend(responses):
    class Scripted:
        def complete(self, request, history=None):
            key = request["task"]
            return responses[key] if not callable(responses[key]) else responses[key](request)
    return Scripted()


def test_weather_only_report_is_incomplete():
    b = _backend({"participants": {"av": {}, "npcs": [], "obstacles": []}})
    with pytest.raises(IncompleteReport):
        extract_facts("It was raining heavily.", b)


def test_empty_text():
    with pytest.raises(IncompleteReport):
        extract_facts("   ", _backend({}))


def test_missing_events_is_incomplete():
    b = _backend({"participants": {"npcs": [{"category": "car", "description": "ahead"}]},
                  "relative_position": {"rel_pos": "R5"}, "events": {"actions": []}})
    with pytest.raises(IncompleteReport):
        extract_facts("A car ahead.", b)


def test_relative_position_same_lane_ahead():
    rel, align = classify_relative_position(
        "in the same lane ahead of the AV", _backend({"relative_position": {"rel_pos": "R5",
                                                                             "lane_alignment": "same_lane"}}))
    assert (rel.code, align) == ("R5", "same_lane")


def test_relative_position_cross_street_drops_alignment():
    rel, align = classify_relative_position(
        "approaching from the cross street",
        _backend({"relative_position": {"rel_pos": "R3", "lane_alignment": "same_lane"}}))
    assert rel.code in ("R1", "R2", "R3", "R4") and align == "unspecified"


def test_relative_position_ambiguous():
    with pytest.raises(AmbiguousPosition):
        classify_relative_position("somewhere nearby", _backend({"relative_position": {"rel_pos": None}}))


def test_alignment_only_for_r5_to_r7():
    with pytest.raises(ValueError):
        NpcFact("n", "sedan", RelPos("R1"), EventSequence(("a",)), "same_lane")


def test_fixture_backend_miss():
    with pytest.raises(BackendError):
        FixtureBackend([]).complete({"task": "participants", "input": {"report": "x"}})


def test_recording_backend_replays():
    rec = RecordingBackend(transcript_backend("left_turn"))
    first = extract_facts(report_text("left_turn"), rec, "left_turn")
    replay = FixtureBackend(rec.transcript()["exchanges"])
    assert extract_facts(report_text("left_turn"), replay, "left_turn") == first


@pytest.mark.parametrize("rid", REPORT_IDS)
def test_extracted_events_accepted_by_placement(rid):
    facts, net = facts_for(rid), network_for(rid)
    assign_lanes(select_segment(net, facts, 0), net, facts)


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        self.server.seen.append((self.headers.get("Authorization"), body))
        reply = {"choices": [{"message": {"content": json.dumps({"rel_pos": "R6", "lane_alignment": None})}}]}
        data = json.dumps(reply).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


def test_http_backend_chat_completion():
    server = HTTPServer(("127.0.0.1", 0), _Handler)
    server.seen = []
    t = threading.Thread(target=server.handle_request)
    t.start()
    try:
        backend = HttpBackend(f"http://127.0.0.1:{server.server_port}/v1/chat/completions", "k", "m")
        rel, _ = classify_relative_position("oncoming in the opposite lane", backend)
    finally:
        t.join(5)
        server.server_close()
    assert rel.code == "R6"
    auth, body = server.seen[0]
    assert auth == "Bearer k" and body["model"] == "m"
    assert body["messages"][-1]["role"] == "user"


def test_http_backend_unreachable():
    backend = HttpBackend("http://127.0.0.1:9/none", timeout=1)
    with pytest.raises(BackendError):
        backend.complete({"task": "participants", "input": {"report": "x"}})


def test_http_backend_needs_url(monkeypatch):
    monkeypatch.delenv("SCENFORGE_LLM_URL", raising=False)
    with pytest.raises(BackendError):
        HttpBackend()
