"""Seed scenario generation: template skeleton + content fill.

``init_template`` builds the static skeleton. ``fill_content`` turns facts
and lane assignments into a content-fill request (one slot per block, with
positions already resolved on the map), asks a backend for XML fragments,
validates every fragment and composes the document.

The element builders below are also used by the mutation operators that
have to rebuild structure (category and obstacle changes).
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .backends import ExtractionBackend
from .config import default_operator_config
from .document import EGO, ScenarioBlock, ScenarioDocument, ScenarioTemplate, SLOT_INDEX, block_from_fragment, \
    compose, validate_document
from .errors import FragmentInvalid, GenerationError, InfeasibleAssignment
from .map_graph import RoadNetwork, resolve_position
from .placement import LaneAssignment, PlacementContext, Placement, TURN_OF, assign_lanes, select_segment
from .report_extraction import NpcFact, ReportFacts
from .schema_model import Finding, SchemaGraph, default_schema, validate_block
from .xmlutil import fmt, parse_xml, to_text

STOP_TIME = 60.0
TRIGGER_DISTANCE = 40.0
FILE_DATE = "2024-01-01T00:00:00"
SUNNY = {"type": "sunny", "sun_intensity": 80000.0, "azimuth": 0.0, "elevation": 1.31,
         "visibility": 10000.0, "precipitation": 0.0, "friction": 1.0}
CLOUD_STATE = {"sunny": "free", "rainy": "rainy", "foggy": "overcast"}
AXLE_FRONT = {"maxSteering": 0.5236, "wheelDiameter": 0.8, "positionX": 2.98, "positionZ": 0.4}
AXLE_REAR = {"maxSteering": 0.0, "wheelDiameter": 0.8, "positionX": 0.0, "positionZ": 0.4}


def _sub(parent: ET.Element, tag: str, **attrs) -> ET.Element:
    return ET.SubElement(parent, tag, {k: (v if isinstance(v, str) else fmt(v)) for k, v in attrs.items()})


def _el(tag: str, **attrs) -> ET.Element:
    return ET.Element(tag, {k: (v if isinstance(v, str) else fmt(v)) for k, v in attrs.items()})


# -- element builders ----------------------------------------------------------

def bounding_box(parent: ET.Element, dims) -> None:
    length, width, height = dims
    bb = _sub(parent, "BoundingBox")
    _sub(bb, "Center", x=length * 0.3, y=0.0, z=height / 2)
    _sub(bb, "Dimensions", width=width, length=length, height=height)


def properties(parent: ET.Element, props: Mapping) -> None:
    el = _sub(parent, "Properties")
    for k, v in props.items():
        _sub(el, "Property", name=k, value=v if isinstance(v, str) else fmt(v))


def entity_object(name: str, category: str, *, color: str = "white", rel_pos: Optional[str] = None,
                  dims=None, performance: Optional[Mapping] = None, config: Optional[dict] = None) -> ET.Element:
    """ScenarioObject for a vehicle or pedestrian with category defaults filled in."""
    config = config or default_operator_config()
    cat = config["categories"][category]
    dims = tuple(dims) if dims is not None else tuple(cat["dimensions"])
    obj = _el("ScenarioObject", name=name)
    props = {"category": category, "color": color}
    if rel_pos:
        props["rel_pos"] = rel_pos
    if category == "pedestrian":
        ped = _sub(obj, "Pedestrian", name=cat["model"], model=cat["model"], mass=80.0,
                   pedestrianCategory="pedestrian")
        bounding_box(ped, dims)
        properties(ped, props)
        return obj
    perf = dict(config["performance"])
    perf.update(performance or {})
    veh = _sub(obj, "Vehicle", name=cat["model"], vehicleCategory=cat["osc_category"])
    bounding_box(veh, dims)
    _sub(veh, "Performance", maxSpeed=perf["maxSpeed"], maxAcceleration=perf["maxAcceleration"],
         maxDeceleration=perf["maxDeceleration"])
    axles = _sub(veh, "Axles")
    track = min(dims[1] * 0.9, 1.68)
    _sub(axles, "FrontAxle", trackWidth=track, **AXLE_FRONT)
    _sub(axles, "RearAxle", trackWidth=track, **AXLE_REAR)
    properties(veh, props)
    return obj


def _dynamics(parent: ET.Element, tag: str, dyn: Mapping) -> None:
    _sub(parent, tag, dynamicsShape=dyn.get("shape", "linear"), value=float(dyn.get("value", 1.0)),
         dynamicsDimension=dyn.get("dimension", "time"))


def speed_action(parent: ET.Element, target: float, dyn: Mapping) -> None:
    sa = _sub(_sub(_sub(parent, "PrivateAction"), "LongitudinalAction"), "SpeedAction")
    _dynamics(sa, "SpeedActionDynamics", dyn)
    _sub(_sub(sa, "SpeedActionTarget"), "AbsoluteTargetSpeed", value=float(target))


def lane_change_action(parent: ET.Element, entity: str, delta: int, dyn: Mapping) -> None:
    lc = _sub(_sub(_sub(parent, "PrivateAction"), "LateralAction"), "LaneChangeAction")
    _dynamics(lc, "LaneChangeActionDynamics", dyn)
    _sub(_sub(lc, "LaneChangeTarget"), "RelativeTargetLane", entityRef=entity, value=str(int(delta)))


def route_action(parent: ET.Element, name: str, waypoints) -> None:
    route = _sub(_sub(_sub(_sub(parent, "PrivateAction"), "RoutingAction"), "AssignRouteAction"),
                 "Route", name=name, closed="false")
    for road, lane, s, offset in waypoints:
        wp = _sub(route, "Waypoint", routeStrategy="shortest")
        _sub(_sub(wp, "Position"), "LanePosition", roadId=str(road), laneId=str(lane), s=float(s),
             offset=float(offset))


def teleport_private(name: str, pose: Mapping, speed: Optional[float] = None) -> ET.Element:
    priv = _el("Private", entityRef=name)
    tp = _sub(_sub(priv, "PrivateAction"), "TeleportAction")
    _sub(_sub(tp, "Position"), "WorldPosition", x=pose["x"], y=pose["y"], z=0.0, h=pose["h"])
    if speed is not None:
        speed_action(priv, speed, {"shape": "linear", "value": 0.0, "dimension": "time"})
    return priv


def weather_action(params: Mapping) -> ET.Element:
    ga = _el("GlobalAction")
    env = _sub(_sub(ga, "EnvironmentAction"), "Environment", name="environment")
    _sub(env, "TimeOfDay", animation="false", dateTime="2024-06-01T12:00:00")
    w = _sub(env, "Weather", cloudState=CLOUD_STATE[params["type"]])
    _sub(w, "Sun", intensity=params["sun_intensity"], azimuth=params["azimuth"], elevation=params["elevation"])
    _sub(w, "Fog", visualRange=params["visibility"])
    _sub(w, "Precipitation", intensity=params["precipitation"],
         precipitationType="rain" if params["type"] == "rainy" else "dry")
    _sub(env, "RoadCondition", frictionScaleFactor=params["friction"])
    return ga


def weather_type(ga: ET.Element) -> str:
    """Weather class of an environment action: rain wins, then visibility decides fog."""
    precip = ga.find(".//Precipitation")
    if precip is not None and precip.get("precipitationType") == "rain":
        return "rainy"
    fog = ga.find(".//Fog")
    if fog is not None and float(fog.get("visualRange")) < 1000.0:
        return "foggy"
    return "sunny"


def signal_action(signal_id: str, state: str) -> ET.Element:
    ga = _el("GlobalAction")
    tsa = _sub(_sub(ga, "InfrastructureAction"), "TrafficSignalAction")
    _sub(tsa, "TrafficSignalStateAction", name=signal_id, state=state)
    return ga


def _condition(parent: ET.Element, name: str) -> ET.Element:
    group = _sub(parent, "ConditionGroup")
    return _sub(group, "Condition", name=name, delay=0.0, conditionEdge="rising")


def event_element(c: Mapping) -> ET.Element:
    """Event for one action letter; ``c`` are the slot constraints of the request."""
    name, npc = c["name"], c["npc"]
    ev = _el("Event", name=name, priority="overwrite", maximumExecutionCount="1")
    k = 0

    def action() -> ET.Element:
        nonlocal k
        k += 1
        return _sub(ev, "Action", name=f"{name}_action{k}")

    dyn = c["dynamics"]
    if c.get("waypoints"):
        route_action(action(), f"{name}_route", c["waypoints"])
    if c.get("lane_change"):
        lane_change_action(action(), npc, c["lane_change"], dyn)
    if c.get("target_speed") is not None:
        speed_action(action(), c["target_speed"], dyn)
    trig = _sub(ev, "StartTrigger")
    cond = _condition(trig, f"{name}_start")
    if c.get("after"):
        _sub(_sub(cond, "ByValueCondition"), "StoryboardElementStateCondition", storyboardElementType="event",
             storyboardElementRef=c["after"], state="endTransition")
    else:
        by = _sub(cond, "ByEntityCondition")
        _sub(_sub(by, "TriggeringEntities", triggeringEntitiesRule="any"), "EntityRef", entityRef=EGO)
        _sub(_sub(by, "EntityCondition"), "RelativeDistanceCondition", entityRef=npc, freespace="false",
             relativeDistanceType="cartesianDistance", rule="lessThan", value=float(c["trigger_distance"]))
    return ev


def obstacle_object(name: str, kind: str, dims, props: Mapping) -> ET.Element:
    obj = _el("ScenarioObject", name=name)
    misc = _sub(obj, "MiscObject", name=name, mass=100.0, miscObjectCategory="obstacle")
    bounding_box(misc, dims)
    properties(misc, {"kind": kind, **props})
    return obj


def fragment_for(slot: Mapping, config: Optional[dict] = None) -> str:
    """Deterministic answer for one content-fill slot."""
    kind, c = slot["kind"], slot["constraints"]
    wrapper = ET.Element("Fragment", {"kind": kind})
    if kind == "weather":
        wrapper.append(weather_action(c))
    elif kind == "traffic_signal":
        wrapper.append(signal_action(c["signal_id"], c["state"]))
    elif kind == "npc_definition":
        wrapper.append(entity_object(c["name"], c["category"], color=c["color"], rel_pos=c["rel_pos"],
                                     config=config))
        wrapper.append(teleport_private(c["name"], c["pose"], c["speed"]))
    elif kind == "event":
        wrapper.set("owner", c["npc"])
        wrapper.append(event_element(c))
    elif kind == "obstacle":
        wrapper.append(obstacle_object(c["name"], c["kind"], c["dimensions"], c["properties"]))
        wrapper.append(teleport_private(c["name"], c["pose"]))
    else:
        raise GenerationError(f"unknown slot kind {kind!r}")
    return to_text(wrapper, declaration=False)


class LocalContentBackend:
    """Offline content filler: answers ``fill_content`` from the slot constraints."""

    def __init__(self, config: Optional[dict] = None):
        self.config = config

    def complete(self, request: dict, history: Optional[list] = None) -> dict:
        if request.get("task") != "fill_content":
            raise GenerationError(f"local backend only fills content, not {request.get('task')!r}")
        slots = request["input"]["slots"]
        return {"fragments": {s["slot"]: fragment_for(s, self.config) for s in slots}}


# -- template ------------------------------------------------------------------

def _param(parent: ET.Element, name: str, value: float) -> None:
    _sub(parent, "ParameterDeclaration", name=name, parameterType="double", value=fmt(value))


def signal_anchors(network: RoadNetwork, context: PlacementContext) -> list:
    """Dynamic signals governing the junction the context approaches."""
    if context.junction is None:
        return []
    ids = {e.signal_id for e in network.edges if e.junction_id == context.junction and e.signal_id}
    return [s for s in network.signals() if s.id in ids]


def init_template(network: RoadNetwork, context: PlacementContext, *, map_ref: Optional[str] = None,
                  stop_time: float = STOP_TIME) -> ScenarioTemplate:
    map_ref = map_ref if map_ref is not None else (network.source_name or "map.xodr")
    root = _el("OpenSCENARIO")
    _sub(root, "FileHeader", revMajor="1", revMinor="0", date=FILE_DATE,
         description=f"seed scenario on road {context.segment}", author="scenforge")
    params = _sub(root, "ParameterDeclarations")
    for sig in signal_anchors(network, context):
        _param(params, f"Signal_{sig.id}_X", sig.x)
        _param(params, f"Signal_{sig.id}_Y", sig.y)
        _param(params, f"Signal_{sig.id}_H", sig.heading)
    _sub(root, "CatalogLocations")
    _sub(_sub(root, "RoadNetwork"), "LogicFile", filepath=map_ref)
    _sub(root, "Entities")
    sb = _sub(root, "Storyboard")
    _sub(_sub(sb, "Init"), "Actions")
    act = _sub(_sub(sb, "Story", name="main"), "Act", name="npc_act")
    cond = _condition(_sub(act, "StartTrigger"), "act_start")
    _sub(_sub(cond, "ByValueCondition"), "SimulationTimeCondition", value=0.0, rule="greaterThan")
    cond = _condition(_sub(sb, "StopTrigger"), "stop_time")
    _sub(_sub(cond, "ByValueCondition"), "SimulationTimeCondition", value=float(stop_time), rule="greaterThan")
    metadata = {"map": map_ref, "placement": context.to_dict()}
    return ScenarioTemplate(root, dict(SLOT_INDEX), map_ref, metadata)


def _with_ego(template: ScenarioTemplate, network: RoadNetwork, context: PlacementContext,
              assignment: LaneAssignment, metadata: Mapping) -> ScenarioTemplate:
    root = parse_xml(to_text(template.skeleton))
    pose = resolve_position(network, context.segment, assignment.av_lane, assignment.av_s)
    root.find("Entities").append(entity_object(EGO, "sedan"))
    actions = root.find(SLOT_INDEX["init.private"])
    actions.append(teleport_private(EGO, {"x": pose.x, "y": pose.y, "h": pose.heading}))
    if assignment.av_goal is not None:
        g = assignment.av_goal
        gp = resolve_position(network, g.segment, g.lane, g.s)
        params = root.find("ParameterDeclarations")
        _param(params, "EgoGoalX", gp.x)
        _param(params, "EgoGoalY", gp.y)
        _param(params, "EgoGoalH", gp.heading)
    return ScenarioTemplate(root, dict(template.slot_index), template.road_network_ref, dict(metadata))


# -- content fill --------------------------------------------------------------

@dataclass(frozen=True)
class ContentFillRequest:
    slots: tuple  # of {"slot", "kind", "constraints"}

    def to_request(self) -> dict:
        return {"task": "fill_content", "input": {"slots": [dict(s) for s in self.slots]}}


@dataclass(frozen=True)
class ContentFillResponse:
    fragments: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def from_reply(cls, reply: dict) -> "ContentFillResponse":
        frags = reply.get("fragments") if isinstance(reply, dict) else None
        if not isinstance(frags, dict):
            raise GenerationError("content-fill reply lacks a fragments object")
        return cls(dict(frags))


def _pose(network: RoadNetwork, p: Placement, offset: float = 0.0) -> dict:
    pose = resolve_position(network, p.segment, p.lane, p.s, offset)
    return {"x": round(pose.x, 6), "y": round(pose.y, 6), "h": round(pose.heading, 6)}


def _npc_name(i: int) -> str:
    return f"npc{i + 1}"


def _event_slots(network: RoadNetwork, n: NpcFact, name: str, p: Placement, context: PlacementContext,
                 assignment: LaneAssignment, config: dict) -> list[dict]:
    seg = network.segment(p.segment)
    info = seg.lane(p.lane)
    direction = info.direction
    lanes = seg.driving_lanes(direction) if info.drivable else [info]
    i = next(k for k, ln in enumerate(lanes) if ln.lane_id == p.lane)
    av_i = None
    if p.segment == context.segment:
        ids = [ln.lane_id for ln in lanes]
        if assignment.av_lane in ids:
            av_i = ids.index(assignment.av_lane)
    v0 = float(config["categories"][n.category]["speed"])
    speed = 0.0 if n.category == "pedestrian" else v0
    dyn0 = {"shape": config["operators"]["DTM"]["default_shape"],
            "value": float(config["operators"]["DTM"]["default_value"]), "dimension": "time"}
    end_s = seg.length if direction == "forward" else 0.0
    slots, prev = [], None
    for k, (a, params) in enumerate(zip(n.events.actions, n.events.parameters)):
        params = params or {}
        ev = f"{name}_e{k + 1}_{a}"
        c = {"name": ev, "npc": name, "code": a, "after": prev, "trigger_distance": TRIGGER_DISTANCE,
             "dynamics": dict(dyn0), "target_speed": None, "lane_change": None, "waypoints": None}
        if params.get("duration") is not None:
            c["dynamics"]["value"] = float(params["duration"])
        lane_id = lanes[i].lane_id
        if a in ("a", "c"):
            c["target_speed"] = v0
        elif a == "e":
            c["target_speed"] = round(speed * 0.5, 6)
        elif a == "g":
            c["target_speed"] = round((speed or v0) * 1.5, 6)
        elif a in ("h", "n"):
            c["target_speed"] = 0.0
        elif a == "i":
            c["target_speed"] = -min(2.0, v0)
        elif a in ("f", "k"):
            c["lane_change"] = 1
            i = max(i - 1, 0)
            if a == "k":
                c["target_speed"] = round((speed or v0) * 1.5, 6)
        elif a == "m":
            step = 1 if av_i is None or av_i > i else -1
            c["lane_change"] = -step  # positive target lane values are to the left
            i = min(max(i + step, 0), len(lanes) - 1)
        if a in TURN_OF or a == "c":
            c["waypoints"] = _route(network, seg, lane_id, p.s, end_s, TURN_OF.get(a, "cross"))
            c["target_speed"] = c["target_speed"] if c["target_speed"] is not None else (speed or v0)
        if params.get("target_speed") is not None:
            c["target_speed"] = float(params["target_speed"])
        if c["target_speed"] is not None:
            speed = c["target_speed"]
        slots.append({"slot": f"event:{ev}", "kind": "event", "constraints": c})
        prev = ev
    return slots


def _route(network: RoadNetwork, seg, lane_id: int, s: float, end_s: float, turn: str) -> list:
    start = [seg.id, lane_id, round(s, 6), 0.0]
    if turn == "cross":
        far = max((ln.lane_id for ln in seg.lanes if (ln.lane_id > 0) != (lane_id > 0)), key=abs, default=-lane_id)
        return [start, [seg.id, far, round(s, 6), 0.0]]
    edges = [e for e in network.junction_edges_from(seg.id, lane_id) if e.turn == turn] or \
        [e for e in network.junction_edges_from(seg.id) if e.turn == turn]
    if edges:
        e = edges[0]
        target = network.segment(e.to_segment)
        entered_at_end = target.lane(e.end_lane_id).direction == "backward"
        s2 = target.length - 10.0 if entered_at_end else 10.0
        approach = end_s - 5.0 if end_s > 0 else 5.0
        return [[seg.id, lane_id, round(min(max(approach, 0.0), seg.length), 6), 0.0],
                [target.id, e.end_lane_id, round(min(max(s2, 0.0), target.length), 6), 0.0]]
    if turn == "u_turn":
        opp = [ln for ln in seg.lanes if ln.drivable and (ln.lane_id > 0) != (lane_id > 0)]
        if opp:
            return [start, [seg.id, min(opp, key=lambda ln: abs(ln.lane_id)).lane_id, round(s, 6), 0.0]]
    raise InfeasibleAssignment(f"road {seg.id} lane {lane_id} offers no {turn} route")


def build_fill_request(network: RoadNetwork, context: PlacementContext, facts: ReportFacts,
                       assignment: LaneAssignment, config: Optional[dict] = None) -> ContentFillRequest:
    config = config or default_operator_config()
    slots = [{"slot": "weather", "kind": "weather", "constraints": dict(SUNNY)}]
    for sig in signal_anchors(network, context):
        approach = [e for e in network.junction_edges_from(context.segment, assignment.av_lane) if e.signal_id]
        if approach and approach[0].signal_id == sig.id:
            state = facts.av_context.signal_state or config["operators"]["TSM_signal"]["default_state"]
            slots.append({"slot": f"signal:{sig.id}", "kind": "traffic_signal",
                          "constraints": {"signal_id": sig.id, "state": state}})
    placements = {p.index: p for p in assignment.npc_assignments}
    for idx, n in enumerate(facts.npcs):
        name = _npc_name(idx)
        p = placements[idx]
        speed = 0.0 if n.category == "pedestrian" else float(config["categories"][n.category]["speed"])
        slots.append({"slot": f"npc:{name}", "kind": "npc_definition", "constraints": {
            "name": name, "category": n.category, "color": n.color, "rel_pos": n.rel_pos.code,
            "lane_alignment": n.lane_alignment, "pose": _pose(network, p), "speed": speed,
            "segment": p.segment, "lane": p.lane, "s": round(p.s, 6)}})
    for idx, n in enumerate(facts.npcs):
        slots.extend(_event_slots(network, n, _npc_name(idx), placements[idx], context, assignment, config))
    av_pose = resolve_position(network, context.segment, assignment.av_lane, assignment.av_s)
    for p in assignment.obstacle_assignments:
        o = facts.obstacles[p.index]
        name = f"obstacle{p.index + 1}"
        dims = list(o.dimensions) if o.dimensions else [1.0, 1.0, 1.0]
        pose = _pose(network, p)
        ahead = math.hypot(pose["x"] - av_pose.x, pose["y"] - av_pose.y)
        slots.append({"slot": f"obstacle:{name}", "kind": "obstacle", "constraints": {
            "name": name, "kind": o.kind, "dimensions": dims, "pose": pose,
            "properties": {"rel_pos": o.rel_pos.code, "ahead": round(ahead, 6), "lateral": 0.0,
                           "placement": "blocking"}}})
    return ContentFillRequest(tuple(slots))


def _expected_identity(slot: Mapping) -> tuple:
    kind, c = slot["kind"], slot["constraints"]
    if kind == "weather":
        return ("Environment", "environment")
    if kind == "traffic_signal":
        return ("TrafficSignalStateAction", c["signal_id"])
    if kind == "event":
        return ("Event", c["name"])
    return ("ScenarioObject", c["name"])


def fragment_to_block(slot: Mapping, text, schema: SchemaGraph) -> ScenarioBlock:
    name = slot["slot"]
    if not isinstance(text, str):
        raise FragmentInvalid(name, [Finding("missing", name, "no fragment returned")])
    try:
        block = block_from_fragment(text)
    except (ET.ParseError, ValueError, AttributeError) as exc:
        raise FragmentInvalid(name, [Finding("malformed", name, str(exc))]) from None
    if block.kind != slot["kind"] or block.identity != _expected_identity(slot):
        raise FragmentInvalid(name, [Finding("identity", name,
                                             f"expected {slot['kind']} {_expected_identity(slot)}, "
                                             f"got {block.kind} {block.identity}")])
    report = validate_block(schema, block)
    if not report.ok:
        raise FragmentInvalid(name, report.findings)
    return block


def fill_content(template: ScenarioTemplate, facts: ReportFacts, assignment: LaneAssignment,
                 backend: ExtractionBackend, network: RoadNetwork, *, seed: int = 0,
                 schema: Optional[SchemaGraph] = None, config: Optional[dict] = None) -> ScenarioDocument:
    schema = schema or default_schema()
    context = PlacementContext(**template.metadata["placement"])
    request = build_fill_request(network, context, facts, assignment, config)
    response = ContentFillResponse.from_reply(backend.complete(request.to_request()))
    blocks = [fragment_to_block(slot, response.fragments.get(slot["slot"]), schema) for slot in request.slots]
    metadata = dict(template.metadata)
    metadata.update({"report_id": facts.report_id, "seed": int(seed), "assignment": assignment.to_dict()})
    filled = _with_ego(template, network, context, assignment, metadata)
    doc = compose(filled, blocks)
    report = validate_document(doc, schema)
    if not report.ok:
        raise GenerationError("seed document fails validation: " + "; ".join(map(str, report.findings)))
    return doc


def generate_seed(network: RoadNetwork, facts: ReportFacts, seed: int, backend: Optional[ExtractionBackend] = None,
                  *, map_ref: Optional[str] = None, schema: Optional[SchemaGraph] = None,
                  config: Optional[dict] = None, stop_time: float = STOP_TIME) -> ScenarioDocument:
    context = select_segment(network, facts, seed)
    assignment = assign_lanes(context, network, facts)
    template = init_template(network, context, map_ref=map_ref, stop_time=stop_time)
    return fill_content(template, facts, assignment, backend or LocalContentBackend(config), network,
                        seed=seed, schema=schema, config=config)


def context_from_metadata(metadata: Mapping) -> tuple[Optional[PlacementContext], Optional[dict]]:
    place = metadata.get("placement")
    return (PlacementContext(**place) if place else None), metadata.get("assignment")
