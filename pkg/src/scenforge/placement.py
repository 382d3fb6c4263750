"""Road segment selection and initial lane assignment.

Lanes of one travel direction are handled as a list ordered leftmost
first (nearest the centre line). An event sequence is feasible from a
start lane when replaying it never needs a lane change the markings
forbid or a turn the lane does not offer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .config import derive_rng
from .errors import InfeasibleAssignment, NoCandidate
from .map_graph import RoadNetwork, RoadSegment, SceneConstraints, matching_directions, normalize_angle, \
    resolve_position, sorted_ids
from .report_extraction import NpcFact, ReportFacts, load_codebook

TURN_OF = {"d": "left", "b": "right", "j": "u_turn"}
LANE_CHANGE_CODES = ("f", "k", "m")

AV_BEFORE_STOP_LINE = 30.0
NPC_OFFSETS = {"R5": 15.0, "R6": 40.0, "cross": 25.0, "exit": 20.0, "pedestrian": 20.0, "obstacle": 15.0}
GOAL_ONTO_EXIT = 30.0


class Placement(NamedTuple):
    index: int
    segment: str
    lane: int
    s: float


@dataclass(frozen=True)
class PlacementContext:
    segment: str
    junction: Optional[str]
    rng_seed: int
    direction: str = "forward"

    def to_dict(self) -> dict:
        return {"segment": self.segment, "junction": self.junction,
                "rng_seed": self.rng_seed, "direction": self.direction}


@dataclass(frozen=True)
class LaneAssignment:
    av_lane: int
    av_s: float
    npc_assignments: tuple = ()  # of Placement
    obstacle_assignments: tuple = ()
    av_goal: Optional[Placement] = None
    av_maneuver: str = "straight"
    notes: tuple = field(default=(), compare=False)

    def to_dict(self) -> dict:
        return {"av_lane": self.av_lane, "av_s": round(self.av_s, 6),
                "npcs": [list(p) for p in self.npc_assignments],
                "obstacles": [list(p) for p in self.obstacle_assignments],
                "av_goal": list(self.av_goal) if self.av_goal else None,
                "av_maneuver": self.av_maneuver}


# -- constraints and segment choice --------------------------------------------

def scene_constraints(facts: ReportFacts) -> SceneConstraints:
    av = facts.av_context
    codes = {n.rel_pos.code for n in facts.npcs}
    if av.location == "junction":
        requires_junction = True
    elif av.location == "road":
        requires_junction = False
    else:
        requires_junction = True if codes & {"R1", "R2", "R3", "R4"} else None
    turns = set()
    if requires_junction or av.maneuver != "straight":
        turns.add(av.maneuver)
    for n in facts.npcs:
        if n.rel_pos.code == "R5" and n.category != "pedestrian":
            turns |= {TURN_OF[a] for a in n.events.actions if a in TURN_OF and a != "j"}
    if requires_junction is False:
        turns &= {"straight"}
    min_lanes = av.min_lanes or 1
    for n in facts.npcs:
        if n.rel_pos.code == "R5" and n.category != "pedestrian" and (
                n.lane_alignment == "different_lane" or set(n.events.actions) & set(LANE_CHANGE_CODES)):
            min_lanes = max(min_lanes, 2)
    return SceneConstraints(
        min_driving_lanes=int(min_lanes),
        requires_junction=requires_junction,
        required_turns=frozenset(turns),
        required_features=frozenset(av.features),
        include_connecting=False,
        npc_rel_positions=tuple(n.rel_pos.code for n in facts.npcs),
    )


def _junction_of(network: RoadNetwork, seg_id: str, lanes) -> Optional[str]:
    for ln in lanes:
        for e in network.junction_edges_from(seg_id, ln.lane_id):
            return e.junction_id
    return None


def _supports(network: RoadNetwork, seg: RoadSegment, direction: str, facts: ReportFacts) -> bool:
    """Extra checks the report places on the surroundings of the AV segment."""
    lanes = seg.driving_lanes(direction)
    junction = _junction_of(network, seg.id, lanes)
    for n in facts.npcs:
        code = n.rel_pos.code
        if n.category == "pedestrian":
            continue
        if code == "R6" and not seg.driving_lanes(_opposite(direction)):
            return False
        if code in ("R1", "R2", "R3") and _cross_approach(network, seg, direction, junction, code) is None:
            return False
        if code in ("R4", "R7") and not _exit_options(network, seg, lanes, code, facts.av_context.maneuver):
            return False
    return True


def candidate_segments(network: RoadNetwork, facts: ReportFacts) -> list[tuple[str, str]]:
    c = scene_constraints(facts)
    out = []
    for sid in sorted_ids(network.segments):
        seg = network.segments[sid]
        for direction in matching_directions(network, seg, c):
            if _supports(network, seg, direction, facts):
                out.append((sid, direction))
                break
    return out


def select_segment(network: RoadNetwork, facts: ReportFacts, seed: int) -> PlacementContext:
    cands = candidate_segments(network, facts)
    if not cands:
        raise NoCandidate(f"map {network.source_name or '<memory>'} has no road matching {scene_constraints(facts)}")
    rng = derive_rng(seed, "select_segment", facts.report_id)
    sid, direction = cands[int(rng.integers(len(cands)))]
    seg = network.segment(sid)
    return PlacementContext(sid, _junction_of(network, sid, seg.driving_lanes(direction)), int(seed), direction)


# -- geometry helpers ----------------------------------------------------------

def _opposite(direction: str) -> str:
    return "backward" if direction == "forward" else "forward"


def _along(seg: RoadSegment, direction: str, s: float, ds: float) -> float:
    """Move ``ds`` metres in travel direction, clamped to the segment."""
    s2 = s + ds if direction == "forward" else s - ds
    return min(max(s2, 0.0), seg.length)


def _end_s(seg: RoadSegment, direction: str) -> float:
    return seg.length if direction == "forward" else 0.0


def _approach_heading(network: RoadNetwork, seg: RoadSegment, direction: str) -> float:
    lane = seg.driving_lanes(direction)[0].lane_id
    return resolve_position(network, seg.id, lane, _end_s(seg, direction)).heading


def _cross_approach(network, seg, direction, junction, code) -> Optional[tuple[str, str]]:
    """Approach segment of ``junction`` matching R1 (from left), R2 (opposite) or R3 (from right)."""
    if junction is None:
        return None
    target = {"R1": -math.pi / 2, "R2": math.pi, "R3": math.pi / 2}[code]
    h_av = _approach_heading(network, seg, direction)
    best, best_err = None, math.pi / 4
    for sid in sorted_ids({e.from_segment for e in network.edges if e.junction_id == junction}):
        if sid == seg.id:
            continue
        other = network.segment(sid)
        for d in ("forward", "backward"):
            lanes = other.driving_lanes(d)
            if not lanes or not any(network.junction_edges_from(sid, ln.lane_id) for ln in lanes):
                continue
            rel = normalize_angle(_approach_heading(network, other, d) - h_av)
            err = abs(normalize_angle(rel - target))
            if err < best_err - 1e-9:
                best, best_err = (sid, d), err
    return best


def _exit_options(network, seg, lanes, code, maneuver) -> list:
    """Edges from the AV lanes to the R4 road (beyond the junction on the AV route)
    or the R7 road (next segment straight ahead, junction or direct link)."""
    ids = {ln.lane_id for ln in lanes}
    out = []
    for e in network.edges_from(seg.id):
        if e.start_lane_id not in ids:
            continue
        if code == "R4" and e.junction_id is not None and e.turn == maneuver:
            out.append(e)
        elif code == "R7" and (e.junction_id is None or e.turn == "straight"):
            out.append(e)
    return out


def _lane_index(lanes, lane_id: int) -> int:
    for i, ln in enumerate(lanes):
        if ln.lane_id == lane_id:
            return i
    raise InfeasibleAssignment(f"lane {lane_id} is not a driving lane of this direction")


# -- feasibility replay --------------------------------------------------------

def replay(network: RoadNetwork, seg: RoadSegment, direction: str, start_lane: int, actions,
           av_lane: Optional[int] = None) -> bool:
    """True when every action has a legal lane transition starting from ``start_lane``."""
    lanes = seg.driving_lanes(direction)
    try:
        i = _lane_index(lanes, start_lane)
    except InfeasibleAssignment:
        return False
    av_i = None
    if av_lane is not None and any(ln.lane_id == av_lane for ln in lanes):
        av_i = _lane_index(lanes, av_lane)
    has_uturn = any("u_turn" in ln.turn_affordances for ln in lanes)
    for a in actions:
        ln = lanes[i]
        if a in ("f", "k"):
            if ln.lane_change not in ("left", "both") or i == 0:
                return False
            i -= 1
        elif a == "m":
            step = 1 if av_i is None else (0 if av_i == i else (1 if av_i > i else -1))
            if step == 0:
                return False
            allowed = ("right", "both") if step > 0 else ("left", "both")
            if ln.lane_change not in allowed or not 0 <= i + step < len(lanes):
                return False
            i += step
        elif a in TURN_OF:
            turn = TURN_OF[a]
            if turn == "u_turn" and not has_uturn:
                if not seg.driving_lanes(_opposite(direction)) or i != 0:
                    return False
            elif turn not in ln.turn_affordances:
                return False
    return True


def _first_constraint(actions) -> Optional[str]:
    rules = load_codebook()["lane_constraining"]
    for a in actions:
        if a in rules:
            return rules[a]
    return None


def choose_lane(network: RoadNetwork, seg: RoadSegment, direction: str, actions,
                av_lane: Optional[int] = None, preferred: Optional[int] = None) -> int:
    """Case 1 rule: the first lane-constraining action decides among feasible lanes."""
    lanes = seg.driving_lanes(direction)
    feasible = [ln.lane_id for ln in lanes if replay(network, seg, direction, ln.lane_id, actions, av_lane)]
    if not feasible:
        raise InfeasibleAssignment(
            f"events {''.join(actions)!r} are infeasible from every {direction} lane of road {seg.id}")
    rule = _first_constraint(actions)
    if rule == "rightmost_with_turn":
        return feasible[-1]
    if rule == "adjacent_to_av" and av_lane is not None:
        av_i = _lane_index(lanes, av_lane) if av_lane in [ln.lane_id for ln in lanes] else 0
        return min(feasible, key=lambda lid: (abs(_lane_index(lanes, lid) - av_i), _lane_index(lanes, lid)))
    if rule is None and preferred in feasible:
        return preferred
    return feasible[0]


# -- assignment ----------------------------------------------------------------

def _av_lanes(network: RoadNetwork, seg: RoadSegment, direction: str, maneuver: str, at_junction: bool) -> list[int]:
    lanes = seg.driving_lanes(direction)
    if at_junction:
        ok = [ln.lane_id for ln in lanes if maneuver in ln.turn_affordances]
    else:
        ok = [ln.lane_id for ln in lanes]
    if not ok:
        raise InfeasibleAssignment(f"no {direction} lane of road {seg.id} allows the AV to go {maneuver}")
    return ok


def _case2_trigger(n: NpcFact) -> bool:
    acts = set(n.events.actions)
    return ("k" in acts
            or (n.lane_alignment == "same_lane" and "f" in acts)
            or (n.lane_alignment == "different_lane" and "m" in acts))


def _outermost(seg: RoadSegment, side_positive: bool) -> int:
    ids = [ln.lane_id for ln in seg.lanes if (ln.lane_id > 0) == side_positive]
    if not ids:
        ids = [ln.lane_id for ln in seg.lanes]
    return max(ids, key=abs)


def _exit_s(network: RoadNetwork, seg_id: str, lane: int, dist: float) -> float:
    """Arclength ``dist`` metres past the point where ``lane`` is entered."""
    seg = network.segment(seg_id)
    entered_at_end = seg.lane(lane).direction == "backward"
    return max(seg.length - dist, 0.0) if entered_at_end else min(dist, seg.length)


def assign_lanes(context: PlacementContext, network: RoadNetwork, facts: ReportFacts) -> LaneAssignment:
    seg = network.segment(context.segment)
    direction = context.direction
    maneuver = facts.av_context.maneuver
    at_junction = context.junction is not None
    av_ok = _av_lanes(network, seg, direction, maneuver, at_junction)

    same_seg = [n for n in facts.npcs if n.rel_pos.same_segment and n.category != "pedestrian"]
    notes = []
    av_lane = av_ok[0]
    if any(_case2_trigger(n) for n in same_seg):
        av_lane = av_ok[-1]
        notes.append("AV moved to the rightmost feasible lane")
    if at_junction:
        av_s = max(_end_s(seg, direction) - AV_BEFORE_STOP_LINE, 0.0) if direction == "forward" \
            else min(AV_BEFORE_STOP_LINE, seg.length)
    else:
        av_s = seg.length / 2

    placements = []
    for idx, n in enumerate(facts.npcs):
        placements.append(_place_npc(idx, n, network, seg, direction, context, av_lane, av_s, maneuver))

    obstacles = []
    for idx, o in enumerate(facts.obstacles):
        code = o.rel_pos.code
        if code == "R6" and seg.driving_lanes(_opposite(direction)):
            lane = seg.driving_lanes(_opposite(direction))[0].lane_id
        else:
            lane = av_lane
        obstacles.append(Placement(idx, seg.id, lane, _along(seg, direction, av_s, NPC_OFFSETS["obstacle"])))

    goal = _goal(network, seg, direction, context.junction, av_lane, av_s, maneuver)
    return LaneAssignment(av_lane, av_s, tuple(placements), tuple(obstacles), goal, maneuver, tuple(notes))


def _place_npc(idx, n: NpcFact, network, seg, direction, context, av_lane, av_s, maneuver) -> Placement:
    code = n.rel_pos.code
    actions = n.events.actions
    if n.category == "pedestrian":
        # pedestrians are placed by offset only, on the kerb side the report names
        far_side = code in ("R1", "R6")
        right_side_positive = direction == "backward"
        lane = _outermost(seg, right_side_positive != far_side)
        return Placement(idx, seg.id, lane, _along(seg, direction, av_s, NPC_OFFSETS["pedestrian"]))

    if code == "R5":
        lanes = seg.driving_lanes(direction)
        if n.lane_alignment == "same_lane":
            lane = av_lane
        elif n.lane_alignment == "different_lane":
            av_i = _lane_index(lanes, av_lane)
            others = sorted((ln.lane_id for ln in lanes if ln.lane_id != av_lane),
                            key=lambda lid: (abs(_lane_index(lanes, lid) - av_i), _lane_index(lanes, lid)))
            ok = [lid for lid in others if replay(network, seg, direction, lid, actions, av_lane)]
            if not ok:
                raise InfeasibleAssignment(f"{n.id}: no other lane of road {seg.id} supports {n.events.code!r}")
            lane = ok[0]
        else:
            lane = choose_lane(network, seg, direction, actions, av_lane, preferred=av_lane)
        if not replay(network, seg, direction, lane, actions, av_lane):
            raise InfeasibleAssignment(f"{n.id}: events {n.events.code!r} infeasible from lane {lane}")
        ds = -NPC_OFFSETS["R5"] if "k" in actions else NPC_OFFSETS["R5"]
        return Placement(idx, seg.id, lane, _along(seg, direction, av_s, ds))

    if code == "R6":
        opp = _opposite(direction)
        lane = choose_lane(network, seg, opp, actions)
        return Placement(idx, seg.id, lane, _along(seg, direction, av_s, NPC_OFFSETS["R6"]))

    if code in ("R1", "R2", "R3"):
        found = _cross_approach(network, seg, direction, context.junction, code)
        if found is None:
            raise InfeasibleAssignment(f"{n.id}: junction has no approach matching {code}")
        sid, d = found
        other = network.segment(sid)
        lane = choose_lane(network, other, d, actions)
        s = _along(other, _opposite(d), _end_s(other, d), NPC_OFFSETS["cross"])
        return Placement(idx, sid, lane, s)

    # R4 / R7: the road beyond the AV segment
    edges = _exit_options(network, seg, seg.driving_lanes(direction), code, maneuver)
    if not edges:
        raise InfeasibleAssignment(f"{n.id}: no road beyond segment {seg.id} for {code}")
    aligned = [e for e in edges if e.start_lane_id == av_lane] or edges
    e = aligned[0]
    target = network.segment(e.to_segment)
    d = target.lane(e.end_lane_id).direction
    preferred = e.end_lane_id
    if code == "R7" and n.lane_alignment == "different_lane":
        tl = target.driving_lanes(d)
        i = _lane_index(tl, e.end_lane_id)
        alts = [tl[j].lane_id for j in (i + 1, i - 1) if 0 <= j < len(tl)]
        if not alts:
            raise InfeasibleAssignment(f"{n.id}: road {target.id} has no lane beside {e.end_lane_id}")
        preferred = alts[0]
    lane = choose_lane(network, target, d, actions, preferred=preferred)
    if n.lane_alignment != "unspecified" and lane != preferred and \
            replay(network, target, d, preferred, actions):
        lane = preferred
    s = _exit_s(network, target.id, lane, NPC_OFFSETS["exit"])
    return Placement(idx, target.id, lane, s)


def _goal(network, seg, direction, junction, av_lane, av_s, maneuver) -> Placement:
    if junction is not None:
        for e in network.junction_edges_from(seg.id, av_lane):
            if e.turn == maneuver:
                s = _exit_s(network, e.to_segment, e.end_lane_id, GOAL_ONTO_EXIT)
                return Placement(-1, e.to_segment, e.end_lane_id, s)
    end = _end_s(seg, direction)
    s = end - 1.0 if direction == "forward" else end + 1.0
    return Placement(-1, seg.id, av_lane, min(max(s, 0.0), seg.length))
