"""OpenDRIVE road networks as an in-process graph.

Roads become :class:`RoadSegment` nodes; lane-level transitions (direct
road links and junction connections) become :class:`ConnectionEdge` edges.
Only the 1.4 core subset is read: ``line`` and ``arc`` plan-view geometry,
lane sections with polynomial widths, road/junction links, lane links,
road marks (for lane-change permission) and signals.
"""

from __future__ import annotations

import json
import logging
import math
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Optional

from .errors import (
    DanglingReference,
    IoError,
    MalformedDocument,
    OutOfRange,
    UnknownLane,
    UnknownSegment,
    UnsupportedFeature,
)

log = logging.getLogger(__name__)

DEFAULT_LANE_WIDTH = 3.5
LANE_TYPES = ("driving", "sidewalk", "shoulder", "biking", "other")
TURNS = ("left", "right", "straight", "u_turn")
DUMP_FORMAT = "scenforge.roadnetwork/1"

# accumulated heading change (rad) separating straight / turn / u-turn
_STRAIGHT_LIMIT = math.pi / 6
_UTURN_LIMIT = 5 * math.pi / 6


def normalize_angle(a: float) -> float:
    """Map an angle to [-pi, pi)."""
    return (a + math.pi) % (2 * math.pi) - math.pi


@dataclass(frozen=True)
class WorldPose:
    x: float
    y: float
    heading: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.heading)):
            raise ValueError(f"non-finite pose {self}")


@dataclass(frozen=True)
class Geometry:
    s: float
    x: float
    y: float
    hdg: float
    length: float
    curvature: float = 0.0  # 0 for a straight line

    def pose_at(self, ds: float) -> tuple[float, float, float]:
        k = self.curvature
        if k == 0.0:
            return (self.x + ds * math.cos(self.hdg), self.y + ds * math.sin(self.hdg), self.hdg)
        h = self.hdg + k * ds
        return (
            self.x + (math.sin(h) - math.sin(self.hdg)) / k,
            self.y - (math.cos(h) - math.cos(self.hdg)) / k,
            h,
        )


@dataclass(frozen=True)
class LaneInfo:
    lane_id: int
    lane_type: str
    direction: str  # "forward" travels with increasing s
    lane_change: str = "none"
    turn_affordances: frozenset = frozenset()
    widths: tuple = ((0.0, DEFAULT_LANE_WIDTH, 0.0, 0.0, 0.0),)

    def __post_init__(self):
        if self.lane_id == 0:
            raise ValueError("center lane 0 is not a placeable lane")

    @property
    def drivable(self) -> bool:
        return self.lane_type == "driving"

    def width_at(self, ds: float) -> float:
        rec = self.widths[0]
        for r in self.widths:
            if r[0] <= ds + 1e-9:
                rec = r
        d = ds - rec[0]
        return rec[1] + rec[2] * d + rec[3] * d * d + rec[4] * d ** 3


@dataclass(frozen=True)
class LaneSection:
    s: float
    lanes: tuple  # of LaneInfo


@dataclass(frozen=True)
class Signal:
    id: str
    name: str
    s: float
    t: float
    dynamic: bool
    orientation: str
    x: float
    y: float
    heading: float


@dataclass(frozen=True)
class RoadLink:
    element_type: str  # "road" | "junction"
    element_id: str
    contact_point: Optional[str] = None


@dataclass(frozen=True)
class RoadSegment:
    id: str
    name: str
    length: float
    lanes: tuple  # LaneInfo of the first lane section, ordered left to right
    junction: Optional[str] = None  # set for connecting roads inside a junction
    predecessor: Optional[RoadLink] = None
    successor: Optional[RoadLink] = None
    geometry: tuple = ()
    sections: tuple = ()
    signals: tuple = ()
    features: frozenset = frozenset()

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError(f"road {self.id}: length must be positive")
        ids = [ln.lane_id for ln in self.lanes]
        if len(ids) != len(set(ids)):
            raise ValueError(f"road {self.id}: duplicate lane ids")

    @property
    def drivable(self) -> bool:
        return any(ln.drivable for ln in self.lanes)

    @property
    def lane_ids(self) -> list[int]:
        return [ln.lane_id for ln in self.lanes]

    @property
    def lane_types(self) -> list[str]:
        return [ln.lane_type for ln in self.lanes]

    @property
    def lane_directions(self) -> list[str]:
        return [ln.direction for ln in self.lanes]

    @property
    def lane_change(self) -> list[str]:
        return [ln.lane_change for ln in self.lanes]

    def lane(self, lane_id: int) -> LaneInfo:
        for ln in self.lanes:
            if ln.lane_id == lane_id:
                return ln
        raise UnknownLane(f"road {self.id} has no lane {lane_id}")

    def driving_lanes(self, direction: str) -> list[LaneInfo]:
        """Driving lanes of one travel direction, leftmost first."""
        lanes = [ln for ln in self.lanes if ln.drivable and ln.direction == direction]
        return sorted(lanes, key=lambda ln: abs(ln.lane_id))


@dataclass(frozen=True)
class ConnectionEdge:
    from_segment: str
    to_segment: str
    connecting_road: Optional[str]
    junction_id: Optional[str]
    start_lane_id: int
    end_lane_id: int
    connecting_lane_id: Optional[int] = None
    turn: str = "straight"
    signal_anchor: Optional[tuple] = None
    signal_id: Optional[str] = None

    def __post_init__(self):
        if self.junction_id is not None and self.connecting_road is None:
            raise ValueError("junction edges need a connecting road")
        if self.signal_anchor is not None and not all(map(math.isfinite, self.signal_anchor)):
            raise ValueError("signal anchor must be finite")


@dataclass(frozen=True)
class RoadNetwork:
    segments: Mapping[str, RoadSegment]
    edges: tuple
    source_name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "segments", MappingProxyType(dict(self.segments)))
        for e in self.edges:
            for sid in (e.from_segment, e.to_segment, e.connecting_road):
                if sid is not None and sid not in self.segments:
                    raise DanglingReference(f"edge references unknown road {sid!r}")

    def segment(self, seg_id: str) -> RoadSegment:
        try:
            return self.segments[seg_id]
        except KeyError:
            raise UnknownSegment(f"unknown road segment {seg_id!r}") from None

    def edges_from(self, seg_id: str) -> list[ConnectionEdge]:
        return [e for e in self.edges if e.from_segment == seg_id]

    def junction_edges_from(self, seg_id: str, lane_id: Optional[int] = None) -> list[ConnectionEdge]:
        return [
            e
            for e in self.edges
            if e.from_segment == seg_id and e.junction_id is not None
            and (lane_id is None or e.start_lane_id == lane_id)
        ]

    def signals(self) -> list[Signal]:
        return [sig for sid in sorted_ids(self.segments) for sig in self.segments[sid].signals]


def sorted_ids(ids: Iterable[str]) -> list[str]:
    """Natural ordering: numeric ids by value, then the rest lexically."""

    def key(s: str):
        return (0, int(s), "") if re.fullmatch(r"-?\d+", s) else (1, 0, s)

    return sorted(ids, key=key)


# -- parsing ------------------------------------------------------------------

def _float(el: ET.Element, name: str, default: Optional[float] = None) -> float:
    raw = el.get(name)
    if raw is None:
        if default is None:
            raise MalformedDocument(f"<{el.tag}> missing attribute {name!r}")
        return default
    try:
        return float(raw)
    except ValueError:
        raise MalformedDocument(f"<{el.tag}> attribute {name}={raw!r} is not numeric") from None


def _link(el: Optional[ET.Element]) -> Optional[RoadLink]:
    if el is None:
        return None
    return RoadLink(el.get("elementType", "road"), el.get("elementId", ""), el.get("contactPoint"))


def _lane_type(raw: str) -> str:
    if raw in LANE_TYPES:
        return raw
    if raw in ("bidirectional", "entry", "exit", "onRamp", "offRamp"):
        return "driving"
    return "other"


def _parse_geometry(road_id: str, el: ET.Element) -> Geometry:
    kinds = [c.tag for c in el]
    base = dict(s=_float(el, "s"), x=_float(el, "x"), y=_float(el, "y"),
                hdg=_float(el, "hdg"), length=_float(el, "length"))
    if kinds == ["line"]:
        return Geometry(**base)
    if kinds == ["arc"]:
        return Geometry(**base, curvature=_float(el[0], "curvature"))
    raise UnsupportedFeature(f"road {road_id}: geometry {kinds} outside the line/arc subset")


def _mark_permits(mark: Optional[str], increasing: bool) -> bool:
    mark = mark or "both"
    return mark == "both" or mark == ("increase" if increasing else "decrease")


def _parse_section(road_id: str, el: ET.Element) -> tuple[LaneSection, dict]:
    raw = []  # (id, type, widths, mark)
    for side in ("left", "right"):
        side_el = el.find(side)
        if side_el is None:
            continue
        for lane in side_el.findall("lane"):
            lid = int(lane.get("id", "0"))
            if lid == 0 or (side == "left") != (lid > 0):
                raise MalformedDocument(f"road {road_id}: lane id {lid} on the {side} side")
            widths = tuple(
                (_float(w, "sOffset", 0.0), _float(w, "a"), _float(w, "b", 0.0),
                 _float(w, "c", 0.0), _float(w, "d", 0.0))
                for w in lane.findall("width")
            )
            if not widths:
                log.warning("road %s lane %d has no width record; assuming %.1f m",
                            road_id, lid, DEFAULT_LANE_WIDTH)
                widths = ((0.0, DEFAULT_LANE_WIDTH, 0.0, 0.0, 0.0),)
            mark_el = lane.find("roadMark")
            mark = mark_el.get("laneChange") if mark_el is not None else None
            raw.append((lid, _lane_type(lane.get("type", "none")), widths, mark))

    by_id = {r[0]: r for r in raw}
    marks = {r[0]: r[3] for r in raw}
    def boundary_mark(a: int, b: int) -> Optional[str]:
        # boundary between same-side neighbours is the outer mark of the inner lane
        inner = a if abs(a) < abs(b) else b
        return marks.get(inner)

    lanes = []
    for lid, ltype, widths, _ in raw:
        direction = "forward" if lid < 0 else "backward"
        sign = -1 if lid < 0 else 1
        left_id = lid - sign if abs(lid) > 1 else None  # toward the centre line
        right_id = lid + sign
        can_left = can_right = False
        if ltype == "driving":
            if left_id is not None and by_id.get(left_id, (0, ""))[1] == "driving":
                can_left = _mark_permits(boundary_mark(lid, left_id), left_id > lid)
            if by_id.get(right_id, (0, ""))[1] == "driving":
                can_right = _mark_permits(boundary_mark(lid, right_id), right_id > lid)
        change = {(False, False): "none", (True, False): "left",
                  (False, True): "right", (True, True): "both"}[(can_left, can_right)]
        lanes.append(LaneInfo(lid, ltype, direction, change, frozenset(), widths))
    lanes.sort(key=lambda ln: -ln.lane_id)
    return LaneSection(_float(el, "s", 0.0), tuple(lanes)), by_id


def _reference_pose(geometry: tuple, s: float) -> tuple[float, float, float]:
    geo = geometry[0]
    for g in geometry:
        if g.s <= s + 1e-9:
            geo = g
    return geo.pose_at(s - geo.s)


def _heading_change(geometry: tuple) -> float:
    return sum(g.curvature * g.length for g in geometry)


def _classify_turn(delta: float) -> str:
    if abs(delta) < _STRAIGHT_LIMIT:
        return "straight"
    if abs(delta) >= _UTURN_LIMIT:
        return "u_turn"
    return "left" if delta > 0 else "right"


def parse_opendrive(document: str, source_name: str = "") -> RoadNetwork:
    """Parse an OpenDRIVE document into a :class:`RoadNetwork`."""
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        raise MalformedDocument(f"{source_name or 'document'}: not well-formed XML ({exc})") from None
    if root.tag != "OpenDRIVE":
        raise MalformedDocument(f"root element is <{root.tag}>, expected <OpenDRIVE>")

    roads: dict[str, dict] = {}
    for road in root.findall("road"):
        rid = road.get("id")
        if rid is None:
            raise MalformedDocument("road without id")
        if rid in roads:
            raise MalformedDocument(f"duplicate road id {rid!r}")
        geos = tuple(sorted((_parse_geometry(rid, g) for g in road.findall("planView/geometry")),
                            key=lambda g: g.s))
        if not geos:
            raise MalformedDocument(f"road {rid} has no plan-view geometry")
        section_els = road.findall("lanes/laneSection")
        if not section_els:
            raise MalformedDocument(f"road {rid} has no lane section")
        parsed = [_parse_section(rid, s) for s in section_els]
        sections = tuple(sorted((p[0] for p in parsed), key=lambda sec: sec.s))
        lane_links = {}
        for lane in section_els[0].iter("lane"):
            lid = int(lane.get("id", "0"))
            lane_links[lid] = (lane.find("link/predecessor"), lane.find("link/successor"))
        features = set()
        for ud in road.findall("userData"):
            if ud.get("code") == "feature" and ud.get("value"):
                features.add(ud.get("value"))
        junction = road.get("junction", "-1")
        roads[rid] = dict(
            id=rid,
            name=road.get("name", ""),
            length=_float(road, "length"),
            junction=None if junction == "-1" else junction,
            predecessor=_link(road.find("link/predecessor")),
            successor=_link(road.find("link/successor")),
            geometry=geos,
            sections=sections,
            signal_els=road.findall("signals/signal"),
            lane_links=lane_links,
            features=features,
        )

    junctions: dict[str, ET.Element] = {}
    for j in root.findall("junction"):
        jid = j.get("id")
        if jid is None:
            raise MalformedDocument("junction without id")
        junctions[jid] = j

    for r in roads.values():
        for which in ("predecessor", "successor"):
            link = r[which]
            if link is None:
                continue
            pool = roads if link.element_type == "road" else junctions
            if link.element_id not in pool:
                raise DanglingReference(
                    f"road {r['id']} {which} references missing {link.element_type} {link.element_id!r}")
        if r["junction"] is not None and r["junction"] not in junctions:
            raise DanglingReference(f"road {r['id']} belongs to missing junction {r['junction']!r}")

    signals: dict[str, tuple] = {}
    for rid, r in roads.items():
        out = []
        for sig in r["signal_els"]:
            s, t = _float(sig, "s"), _float(sig, "t", 0.0)
            x, y, h = _reference_pose(r["geometry"], s)
            orientation = sig.get("orientation", "+")
            heading = h if orientation != "-" else h + math.pi
            out.append(Signal(
                id=sig.get("id", ""), name=sig.get("name", ""), s=s, t=t,
                dynamic=sig.get("dynamic", "no") == "yes", orientation=orientation,
                x=x - t * math.sin(h), y=y + t * math.cos(h), heading=normalize_angle(heading),
            ))
        signals[rid] = tuple(out)

    edges: list[ConnectionEdge] = []
    turns: dict[tuple[str, int], set] = {}

    # junction connections: one edge per lane link
    for jid in sorted_ids(junctions):
        for conn in junctions[jid].findall("connection"):
            inc, con = conn.get("incomingRoad"), conn.get("connectingRoad")
            for rid in (inc, con):
                if rid not in roads:
                    raise DanglingReference(f"junction {jid} connection references missing road {rid!r}")
            contact = conn.get("contactPoint", "start")
            croad = roads[con]
            exit_link = croad["successor"] if contact == "start" else croad["predecessor"]
            if exit_link is None or exit_link.element_type != "road":
                raise MalformedDocument(f"connecting road {con} has no outgoing road link")
            delta = _heading_change(croad["geometry"])
            turn = _classify_turn(delta if contact == "start" else -delta)
            for ll in conn.findall("laneLink"):
                start, clane = int(ll.get("from")), int(ll.get("to"))
                pred, succ = croad["lane_links"].get(clane, (None, None))
                nxt = succ if contact == "start" else pred
                end = int(nxt.get("id")) if nxt is not None else clane
                anchor, anchor_id = _approach_signal(roads[inc], signals[inc], start)
                edges.append(ConnectionEdge(
                    from_segment=inc, to_segment=exit_link.element_id, connecting_road=con,
                    junction_id=jid, start_lane_id=start, end_lane_id=end,
                    connecting_lane_id=clane, turn=turn,
                    signal_anchor=anchor, signal_id=anchor_id,
                ))
                turns.setdefault((inc, start), set()).add(turn)

    # direct road-to-road links outside junctions
    for rid in sorted_ids(roads):
        r = roads[rid]
        if r["junction"] is not None:
            continue
        for which, direction in (("successor", "forward"), ("predecessor", "backward")):
            link = r[which]
            if link is None or link.element_type != "road":
                continue
            target = roads[link.element_id]
            target_ids = {ln.lane_id for ln in target["sections"][0].lanes}
            for ln in r["sections"][0].lanes:
                if not ln.drivable or ln.direction != direction:
                    continue
                nxt = r["lane_links"].get(ln.lane_id, (None, None))[1 if which == "successor" else 0]
                end = int(nxt.get("id")) if nxt is not None else ln.lane_id
                if end in target_ids:
                    edges.append(ConnectionEdge(rid, link.element_id, None, None, ln.lane_id, end))

    segments = {}
    for rid, r in roads.items():
        first = r["sections"][0]
        feeds = {lid for (road_id, lid) in turns if road_id == rid}
        lanes = []
        for ln in first.lanes:
            if ln.lane_id in feeds:
                aff = frozenset(turns[(rid, ln.lane_id)])
            elif ln.drivable:
                aff = frozenset({"straight"})
            else:
                aff = frozenset()
            lanes.append(LaneInfo(ln.lane_id, ln.lane_type, ln.direction, ln.lane_change, aff, ln.widths))
        for extra in set(lid for (road_id, lid) in turns if road_id == rid) - {ln.lane_id for ln in lanes}:
            log.warning("road %s: junction lane link from lane %d not in first lane section", rid, extra)
        features = set(r["features"])
        if feeds:
            features.add("junction_approach")
        if any(s.dynamic for s in signals[rid]):
            features.add("signalized")
        sections = (LaneSection(first.s, tuple(lanes)),) + r["sections"][1:]
        segments[rid] = RoadSegment(
            id=rid, name=r["name"], length=r["length"], lanes=tuple(lanes), junction=r["junction"],
            predecessor=r["predecessor"], successor=r["successor"], geometry=r["geometry"],
            sections=sections, signals=signals[rid], features=frozenset(features),
        )
    return RoadNetwork(segments, tuple(edges), source_name)


def _approach_signal(road: dict, sigs: tuple, lane_id: int) -> tuple[Optional[tuple], Optional[str]]:
    want = "+" if lane_id < 0 else "-"
    cands = [s for s in sigs if s.dynamic and s.orientation in (want, "none")]
    if not cands:
        return None, None
    best = max(cands, key=lambda s: s.s) if lane_id < 0 else min(cands, key=lambda s: s.s)
    return (best.x, best.y), best.id


def load_opendrive(path: str | Path) -> RoadNetwork:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read map {path}: {exc}") from None
    return parse_opendrive(text, source_name=path.name)


# -- queries ------------------------------------------------------------------

@dataclass(frozen=True)
class SceneConstraints:
    """Road-shape demands derived from a report.

    ``requires_junction``: True needs a junction approach, False forbids any
    junction involvement, None does not care.
    """

    min_driving_lanes: int = 1
    requires_junction: Optional[bool] = None
    required_turns: frozenset = frozenset()
    required_lane_types: frozenset = frozenset()
    required_features: frozenset = frozenset()
    include_connecting: bool = True
    npc_rel_positions: tuple = ()

    def __post_init__(self):
        if self.min_driving_lanes < 1:
            raise ValueError("min_driving_lanes must be >= 1")
        unknown = set(self.required_turns) - set(TURNS)
        if unknown:
            raise ValueError(f"unknown turn affordances {sorted(unknown)}")
        if self.requires_junction is False and set(self.required_turns) - {"straight"}:
            raise ValueError("turn affordances other than straight need a junction")


def matching_directions(network: RoadNetwork, seg: RoadSegment, c: SceneConstraints) -> list[str]:
    """Travel directions of ``seg`` under which every constraint holds."""
    if not seg.drivable:
        return []
    if not c.include_connecting and seg.junction is not None:
        return []
    if not set(c.required_features) <= seg.features:
        return []
    if not set(c.required_lane_types) <= set(seg.lane_types):
        return []
    has_junction_edges = bool(network.junction_edges_from(seg.id))
    if c.requires_junction is False and (has_junction_edges or seg.junction is not None):
        return []
    out = []
    for direction in ("forward", "backward"):
        lanes = seg.driving_lanes(direction)
        if len(lanes) < c.min_driving_lanes:
            continue
        if c.requires_junction and not any(network.junction_edges_from(seg.id, ln.lane_id) for ln in lanes):
            continue
        offered = set().union(*(ln.turn_affordances for ln in lanes)) if lanes else set()
        if not set(c.required_turns) <= offered:
            continue
        out.append(direction)
    return out


def filter_segments(network: RoadNetwork, constraints: SceneConstraints) -> list[str]:
    from .errors import NoCandidate

    hits = [sid for sid in sorted_ids(network.segments)
            if matching_directions(network, network.segments[sid], constraints)]
    if not hits:
        raise NoCandidate(f"no road segment satisfies {constraints}")
    return hits


def lane_center_offset(seg: RoadSegment, lane_id: int, s: float) -> float:
    """Signed lateral offset (left positive) of a lane centre at ``s``."""
    section = seg.sections[0]
    for sec in seg.sections:
        if sec.s <= s + 1e-9:
            section = sec
    by_id = {ln.lane_id: ln for ln in section.lanes}
    if lane_id not in by_id:
        raise UnknownLane(f"road {seg.id} has no lane {lane_id} at s={s}")
    ds = s - section.s
    sign = 1 if lane_id > 0 else -1
    t = 0.0
    for k in range(1, abs(lane_id)):
        inner = by_id.get(sign * k)
        if inner is None:
            raise UnknownLane(f"road {seg.id}: lane {sign * k} missing inside lane {lane_id}")
        t += inner.width_at(ds)
    t += by_id[lane_id].width_at(ds) / 2
    return sign * t


def lane_width(seg: RoadSegment, lane_id: int, s: float) -> float:
    section = seg.sections[0]
    for sec in seg.sections:
        if sec.s <= s + 1e-9:
            section = sec
    for ln in section.lanes:
        if ln.lane_id == lane_id:
            return ln.width_at(s - section.s)
    raise UnknownLane(f"road {seg.id} has no lane {lane_id}")


def resolve_position(network: RoadNetwork, segment: str, lane: int, s: float,
                     offset: float = 0.0) -> WorldPose:
    """World pose on the centre line of ``lane`` at arclength ``s``.

    ``offset`` shifts laterally (left of the reference line positive).
    Heading follows the lane's travel direction.
    """
    seg = network.segment(segment)
    info = seg.lane(lane)
    if not (-1e-9 <= s <= seg.length + 1e-9):
        raise OutOfRange(f"s={s} outside road {segment} of length {seg.length}")
    s = min(max(s, 0.0), seg.length)
    x, y, h = _reference_pose(seg.geometry, s)
    t = lane_center_offset(seg, lane, s) + offset
    heading = h if info.direction == "forward" else h + math.pi
    return WorldPose(x - t * math.sin(h), y + t * math.cos(h), normalize_angle(heading))


def segment_bounds(seg: RoadSegment, samples: int = 64) -> tuple[float, float, float, float]:
    """Axis-aligned box (xmin, ymin, xmax, ymax) covering every lane of ``seg``."""
    xs, ys = [], []
    for i in range(samples + 1):
        s = seg.length * i / samples
        x, y, h = _reference_pose(seg.geometry, s)
        section = seg.sections[0]
        for sec in seg.sections:
            if sec.s <= s + 1e-9:
                section = sec
        ds = s - section.s
        left = sum(ln.width_at(ds) for ln in section.lanes if ln.lane_id > 0)
        right = sum(ln.width_at(ds) for ln in section.lanes if ln.lane_id < 0)
        for t in (left, -right):
            xs.append(x - t * math.sin(h))
            ys.append(y + t * math.cos(h))
    return min(xs), min(ys), max(xs), max(ys)


def to_json(network: RoadNetwork) -> str:
    """Graph dump (nodes, edges, attributes) for inspection; see README for the schema."""
    nodes = []
    for sid in sorted_ids(network.segments):
        seg = network.segments[sid]
        nodes.append({
            "id": seg.id,
            "name": seg.name,
            "length": seg.length,
            "junction": seg.junction,
            "lane_ids": seg.lane_ids,
            "lane_types": seg.lane_types,
            "lane_directions": seg.lane_directions,
            "lane_change": seg.lane_change,
            "turn_affordances": [sorted(ln.turn_affordances) for ln in seg.lanes],
            "features": sorted(seg.features),
        })
    edges = []
    for e in network.edges:
        edges.append({
            "from": e.from_segment,
            "to": e.to_segment,
            "connecting_road": e.connecting_road,
            "junction_id": e.junction_id,
            "start_lane_id": e.start_lane_id,
            "end_lane_id": e.end_lane_id,
            "connecting_lane_id": e.connecting_lane_id,
            "turn": e.turn,
            "traffic_light_x": None if e.signal_anchor is None else e.signal_anchor[0],
            "traffic_light_y": None if e.signal_anchor is None else e.signal_anchor[1],
            "signal_id": e.signal_id,
        })
    doc = {"format": DUMP_FORMAT, "source": network.source_name, "nodes": nodes, "edges": edges}
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"
