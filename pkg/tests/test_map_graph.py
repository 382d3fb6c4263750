import json
import math
import xml.etree.ElementTree as ET

import pytest
from hypothesis import given, settings, strategies as st

from scenforge.errors import DanglingReference, MalformedDocument, NoCandidate, OutOfRange, UnknownLane, UnsupportedFeature
from scenforge.map_graph import (SceneConstraints, filter_segments, parse_opendrive, resolve_position,
                                 segment_bounds, to_json)

from conftest import MAPS, STRAIGHT_ROAD


def test_minimal_document():
    net = parse_opendrive(STRAIGHT_ROAD)
    assert list(net.segments) == ["1"]
    assert len(net.segment("1").lanes) == 2
    assert net.edges == ()


def _connection_count(path):
    # independent count: every <laneLink> inside every junction <connection>
    root = ET.parse(path).getroot()
    return sum(len(c.findall("laneLink")) for j in root.iter("junction") for c in j.findall("connection"))


def test_junction_connections_expand_per_lane_link(crossroads):
    junction_edges = [e for e in crossroads.edges if e.junction_id is not None]
    assert len(junction_edges) == _connection_count(MAPS / "crossroads.xodr")
    assert all(e.connecting_road is not None for e in junction_edges)
    assert all(e.from_segment in crossroads.segments and e.to_segment in crossroads.segments
               for e in crossroads.edges)


def test_dangling_successor():
    bad = STRAIGHT_ROAD.replace('junction="-1">', 'junction="-1"><link><successor elementType="road" '
                                'elementId="99" contactPoint="start"/></link>')
    with pytest.raises(DanglingReference):
        parse_opendrive(bad)


@pytest.mark.parametrize("text", ["not xml", "<Other/>"])
def test_malformed(text):
    with pytest.raises(MalformedDocument):
        parse_opendrive(text)


def test_unsupported_geometry():
    with pytest.raises(UnsupportedFeature):
        parse_opendrive(STRAIGHT_ROAD.replace("<line/>", '<spiral curvStart="0" curvEnd="0.01"/>'))


def test_lane_lists_consistent(crossroads, multilane):
    for net in (crossroads, multilane):
        for seg in net.segments.values():
            n = len(seg.lane_ids)
            assert n == len(seg.lane_types) == len(seg.lane_directions) == len(seg.lane_change)
            assert seg.length > 0
            assert 0 not in seg.lane_ids


def test_filter_multilane_no_junction(multilane):
    # brute force over the fixture: roads with >= 2 driving lanes in one travel direction
    expected = sorted(
        sid for sid, seg in multilane.segments.items()
        if any(sum(1 for ln in seg.lanes if ln.lane_type == "driving" and ln.direction == d) >= 2
               for d in ("forward", "backward")))
    got = filter_segments(multilane, SceneConstraints(min_driving_lanes=2, requires_junction=False))
    assert got == expected == ["10", "11", "13"]


def test_filter_left_turn_junction(crossroads):
    got = filter_segments(crossroads, SceneConstraints(requires_junction=True, required_turns=frozenset({"left"}),
                                                       include_connecting=False))
    # manual inspection: all four arms feed the junction with a left-turn connection
    assert got == ["1", "2", "3", "4"]


def test_filter_unsatisfiable(crossroads):
    with pytest.raises(NoCandidate):
        filter_segments(crossroads, SceneConstraints(min_driving_lanes=99))


def test_filter_empty_constraints_returns_drivable(crossroads):
    got = filter_segments(crossroads, SceneConstraints())
    assert got == sorted((s for s, seg in crossroads.segments.items() if seg.drivable), key=int)


def test_resolve_straight_closed_form():
    net = parse_opendrive(STRAIGHT_ROAD)
    p = resolve_position(net, "1", -1, 10.0)
    assert (p.x, p.y, p.heading) == pytest.approx((10.0, -1.75, 0.0))
    start = resolve_position(net, "1", 1, 0.0)
    assert (start.x, start.y) == pytest.approx((0.0, 1.75))
    assert abs(abs(start.heading) - math.pi) < 1e-9  # left lane runs backward


def test_resolve_errors():
    net = parse_opendrive(STRAIGHT_ROAD)
    with pytest.raises(OutOfRange):
        resolve_position(net, "1", -1, 101.0)
    with pytest.raises(UnknownLane):
        resolve_position(net, "1", -5, 1.0)


def test_parse_deterministic():
    text = (MAPS / "crossroads.xodr").read_text()
    assert to_json(parse_opendrive(text)) == to_json(parse_opendrive(text))


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_pose_within_segment_bounds(multilane, data):
    sid = data.draw(st.sampled_from(sorted(multilane.segments)))
    seg = multilane.segment(sid)
    lane = data.draw(st.sampled_from(seg.lane_ids))
    s = data.draw(st.floats(0, seg.length))
    p = resolve_position(multilane, sid, lane, s)
    x0, y0, x1, y1 = segment_bounds(seg)
    assert x0 - 1e-6 <= p.x <= x1 + 1e-6 and y0 - 1e-6 <= p.y <= y1 + 1e-6
    assert -math.pi <= p.heading < math.pi


def test_json_dump_counts(crossroads):
    dump = json.loads(to_json(crossroads))
    assert len(dump["nodes"]) == len(crossroads.segments)
    assert len(dump["edges"]) == len(crossroads.edges)
