"""Accident report text -> ReportFacts.

The report is read in a short dialogue with a backend: first the
participants, then one relative-position question and one event question
per participant. Missing positions or events stop the pipeline instead of
being defaulted.
"""

from __future__ import annotations

import functools
import json
import re
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Optional

from .backends import ExtractionBackend
from .errors import AmbiguousPosition, BackendError, IncompleteReport, UnknownAction

FACTS_FORMAT = "scenforge.facts/1"
CATEGORIES = ("sedan", "van", "truck", "motorbike", "bicycle", "pedestrian")
ALIGNMENTS = ("same_lane", "different_lane", "unspecified")
REL_CODES = ("R1", "R2", "R3", "R4", "R5", "R6", "R7")
SAME_SEGMENT = ("R5", "R6")
ALIGNABLE = ("R5", "R6", "R7")

_CATEGORY_SYNONYMS = {
    "car": "sedan", "vehicle": "sedan", "suv": "sedan", "sedan": "sedan", "passenger car": "sedan",
    "van": "van", "minivan": "van", "truck": "truck", "pickup": "truck", "bus": "truck",
    "motorbike": "motorbike", "motorcycle": "motorbike", "scooter": "motorbike",
    "bicycle": "bicycle", "bike": "bicycle", "cyclist": "bicycle", "bicyclist": "bicycle",
    "pedestrian": "pedestrian", "walker": "pedestrian", "person": "pedestrian",
}


@functools.lru_cache(maxsize=None)
def _default_codebook_text() -> str:
    return resources.files("scenforge.data").joinpath("codebook.json").read_text(encoding="utf-8")


def load_codebook(text: Optional[str] = None) -> dict:
    data = json.loads(text if text is not None else _default_codebook_text())
    if len(data["actions"]) != 13:
        raise ValueError(f"codebook must define 13 actions, found {len(data['actions'])}")
    return data


def _norm(phrase: str) -> str:
    return re.sub(r"\s+", " ", re.sub(r"[^\w\s-]", " ", phrase.lower())).strip()


@functools.lru_cache(maxsize=None)
def _phrase_table() -> dict[str, str]:
    table = {}
    for code, entry in load_codebook()["actions"].items():
        for phrase in [entry["label"], *entry.get("synonyms", ())]:
            table[_norm(phrase)] = code
        table[code] = code
    return table


ACTION_CODES = tuple(load_codebook()["actions"])


@dataclass(frozen=True)
class RelPos:
    code: str

    def __post_init__(self):
        if self.code not in REL_CODES:
            raise ValueError(f"unknown relative position {self.code!r}")

    @property
    def same_segment(self) -> bool:
        return self.code in SAME_SEGMENT

    def __str__(self) -> str:
        return self.code


@dataclass(frozen=True)
class EventSequence:
    actions: tuple  # action letters
    parameters: tuple = ()  # per-action dict or None

    def __post_init__(self):
        if not self.actions:
            raise ValueError("event sequence must not be empty")
        for a in self.actions:
            if a not in ACTION_CODES:
                raise UnknownAction(f"{a!r} is not in the action codebook")
        if not self.parameters:
            object.__setattr__(self, "parameters", (None,) * len(self.actions))
        if len(self.parameters) != len(self.actions):
            raise ValueError("one parameter entry per action expected")

    @property
    def code(self) -> str:
        return "".join(self.actions)


@dataclass(frozen=True)
class NpcFact:
    id: str
    category: str
    rel_pos: RelPos
    events: EventSequence
    lane_alignment: str = "unspecified"
    color: str = "white"
    description: str = ""

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        if self.lane_alignment not in ALIGNMENTS:
            raise ValueError(f"unknown lane alignment {self.lane_alignment!r}")
        if self.lane_alignment != "unspecified" and self.rel_pos.code not in ALIGNABLE:
            raise ValueError(f"lane alignment only applies to R5-R7, not {self.rel_pos}")


@dataclass(frozen=True)
class ObstacleFact:
    id: str
    kind: str
    rel_pos: RelPos
    dimensions: Optional[tuple] = None  # (length, width, height)
    description: str = ""

    def __post_init__(self):
        if self.dimensions is not None:
            if len(self.dimensions) != 3 or any(d <= 0 for d in self.dimensions):
                raise ValueError("obstacle dimensions must be three positive lengths")


@dataclass(frozen=True)
class AvContext:
    description: str = ""
    location: Optional[str] = None  # junction | road | None (unknown)
    maneuver: str = "straight"  # straight | left | right
    min_lanes: Optional[int] = None
    features: tuple = ()
    signal_state: Optional[str] = None


@dataclass(frozen=True)
class ReportFacts:
    npcs: tuple = ()
    obstacles: tuple = ()
    av_context: AvContext = field(default_factory=AvContext)
    report_id: str = ""

    def to_json(self) -> str:
        def conv(obj):
            if isinstance(obj, RelPos):
                return obj.code
            if isinstance(obj, (list, tuple)):
                return [conv(o) for o in obj]
            if isinstance(obj, dict):
                return {k: conv(v) for k, v in obj.items()}
            return obj

        data = {"format": FACTS_FORMAT, "report_id": self.report_id,
                "av_context": conv(asdict(self.av_context)),
                "npcs": [], "obstacles": []}
        for n in self.npcs:
            data["npcs"].append({"id": n.id, "category": n.category, "rel_pos": n.rel_pos.code,
                                 "lane_alignment": n.lane_alignment, "color": n.color,
                                 "description": n.description,
                                 "events": {"actions": list(n.events.actions),
                                            "parameters": conv(n.events.parameters)}})
        for o in self.obstacles:
            data["obstacles"].append({"id": o.id, "kind": o.kind, "rel_pos": o.rel_pos.code,
                                      "dimensions": None if o.dimensions is None else list(o.dimensions),
                                      "description": o.description})
        return json.dumps(data, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ReportFacts":
        data = json.loads(text)
        if data.get("format") != FACTS_FORMAT:
            raise ValueError(f"not a {FACTS_FORMAT} document")
        av = data.get("av_context", {})
        av = AvContext(**{**av, "features": tuple(av.get("features", ()))})
        npcs = tuple(
            NpcFact(n["id"], n["category"], RelPos(n["rel_pos"]),
                    EventSequence(tuple(n["events"]["actions"]), tuple(n["events"].get("parameters") or ())),
                    n.get("lane_alignment", "unspecified"), n.get("color", "white"), n.get("description", ""))
            for n in data.get("npcs", ()))
        obstacles = tuple(
            ObstacleFact(o["id"], o["kind"], RelPos(o["rel_pos"]),
                         None if o.get("dimensions") is None else tuple(o["dimensions"]), o.get("description", ""))
            for o in data.get("obstacles", ()))
        return cls(npcs, obstacles, av, data.get("report_id", ""))


def normalize_events(raw_actions: list, parameters: Optional[list] = None) -> EventSequence:
    """Map phrases onto codebook letters; adjacent repeats collapse to one."""
    table = _phrase_table()
    parameters = list(parameters) if parameters else [None] * len(raw_actions)
    if len(parameters) != len(raw_actions):
        raise BackendError("parameters list does not match actions list")
    codes, params = [], []
    for phrase, p in zip(raw_actions, parameters):
        code = table.get(_norm(str(phrase)))
        if code is None:
            raise UnknownAction(f"action {phrase!r} is not in the codebook")
        if codes and codes[-1] == code:
            continue
        codes.append(code)
        params.append(p)
    if not codes:
        raise IncompleteReport("no actions reported")
    return EventSequence(tuple(codes), tuple(params))


def _ask(backend: ExtractionBackend, history: list, task: str, payload: dict) -> dict:
    request = {"task": task, "input": payload}
    response = backend.complete(request, list(history))
    if not isinstance(response, dict):
        raise BackendError(f"{task} response is not a JSON object")
    history.append((request, response))
    return response


def classify_relative_position(description: str, backend: ExtractionBackend,
                               history: Optional[list] = None) -> tuple[RelPos, str]:
    if not description or not description.strip():
        raise AmbiguousPosition("no position description")
    history = [] if history is None else history
    resp = _ask(backend, history, "relative_position", {"description": description.strip()})
    code = resp.get("rel_pos")
    if code is None:
        raise AmbiguousPosition(f"cannot place {description!r} relative to the AV")
    if code not in REL_CODES:
        raise BackendError(f"relative position {code!r} outside R1-R7")
    alignment = resp.get("lane_alignment") or "unspecified"
    if alignment not in ALIGNMENTS:
        raise BackendError(f"unknown lane alignment {alignment!r}")
    if code not in ALIGNABLE:
        alignment = "unspecified"
    return RelPos(code), alignment


def _category(raw) -> str:
    cat = _CATEGORY_SYNONYMS.get(_norm(str(raw)))
    if cat is None:
        raise BackendError(f"participant category {raw!r} is not supported")
    return cat


def extract_facts(report_text: str, backend: ExtractionBackend, report_id: str = "") -> ReportFacts:
    if not report_text or not report_text.strip():
        raise IncompleteReport("empty report")
    text = report_text.strip()
    history: list = []
    resp = _ask(backend, history, "participants", {"report": text})
    try:
        raw_npcs = list(resp.get("npcs") or ())
        raw_obs = list(resp.get("obstacles") or ())
        raw_av = dict(resp.get("av") or {})
    except (TypeError, ValueError):
        raise BackendError("participants response has the wrong shape") from None
    if not raw_npcs and not raw_obs:
        raise IncompleteReport("report names no traffic participants or obstacles")

    npcs = []
    for i, n in enumerate(raw_npcs, start=1):
        nid = str(n.get("id") or f"npc{i}")
        desc = str(n.get("description") or "").strip()
        if not desc:
            raise IncompleteReport(f"{nid}: no position information")
        rel, alignment = classify_relative_position(desc, backend, history)
        ev = _ask(backend, history, "events", {"report": text, "participant": nid, "description": desc})
        actions = ev.get("actions") or []
        if not actions:
            raise IncompleteReport(f"{nid}: no behaviour reported")
        events = normalize_events(actions, ev.get("parameters"))
        npcs.append(NpcFact(nid, _category(n.get("category", "")), rel, events, alignment,
                            str(n.get("color") or "white"), desc))

    obstacles = []
    for i, o in enumerate(raw_obs, start=1):
        oid = str(o.get("id") or f"obstacle{i}")
        desc = str(o.get("description") or "").strip()
        if not desc:
            raise IncompleteReport(f"{oid}: no position information")
        rel, _ = classify_relative_position(desc, backend, history)
        dims = o.get("dimensions")
        try:
            obstacles.append(ObstacleFact(oid, str(o.get("kind") or "obstacle"), rel,
                                          None if dims is None else tuple(float(d) for d in dims), desc))
        except ValueError as exc:
            raise BackendError(f"{oid}: {exc}") from None

    location = raw_av.get("location")
    if location not in (None, "junction", "road"):
        raise BackendError(f"unknown AV location {location!r}")
    maneuver = raw_av.get("maneuver") or "straight"
    if maneuver not in ("straight", "left", "right"):
        raise BackendError(f"unknown AV maneuver {maneuver!r}")
    av = AvContext(str(raw_av.get("description") or ""), location, maneuver,
                   raw_av.get("min_lanes"), tuple(raw_av.get("features") or ()), raw_av.get("signal_state"))
    return ReportFacts(tuple(npcs), tuple(obstacles), av, report_id)
