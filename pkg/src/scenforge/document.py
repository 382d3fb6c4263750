"""Scenario documents, templates and blocks.

A scenario document is a template (the static skeleton: file header,
parameters, road network reference, the ego entity and the storyboard
shell) plus a set of independently mutable blocks. ``compose`` is the only
way blocks are put into a skeleton, so composing the blocks recovered by
``disassemble`` reproduces the original document exactly.

Block fragments travel as ``<Fragment kind=".." owner="..">`` wrappers
holding one element per slot they occupy.
"""

from __future__ import annotations

import json
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional

from .errors import IoError, SlotConflict
from .schema_model import Finding, SchemaGraph, ValidationReport, default_schema, validate_element
from .xmlutil import atomic_write, canonical, clone, elements, is_comment, parse_xml, to_text

EGO = "ego"
BLOCK_KINDS = ("weather", "npc_definition", "traffic_signal", "event", "obstacle")
KIND_ORDER = {k: i for i, k in enumerate(BLOCK_KINDS)}
METADATA_TAG = "scenforge-metadata"

SLOT_INDEX = {
    "entities": "Entities",
    "init.global": "Storyboard/Init/Actions",
    "init.private": "Storyboard/Init/Actions",
    "story": "Storyboard/Story/Act",
}
_SLOT_OF_TAG = {
    "ScenarioObject": "entities",
    "GlobalAction": "init.global",
    "Private": "init.private",
    "Event": "story",
}


def natural_key(text: str) -> tuple:
    return tuple(int(p) if p.isdigit() else p for p in re.split(r"(\d+)", text))


@dataclass(frozen=True, eq=False)
class ScenarioBlock:
    kind: str
    identity: tuple
    parts: tuple  # ((slot, Element), ...); elements are treated as read-only
    owner: Optional[str] = None

    def canonical(self) -> str:
        return "|".join(f"{slot}:{canonical(el)}" for slot, el in self.parts)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScenarioBlock):
            return NotImplemented
        return (self.kind, self.identity, self.owner, self.canonical()) == \
            (other.kind, other.identity, other.owner, other.canonical())

    def __hash__(self) -> int:
        return hash((self.kind, self.identity))

    @property
    def name(self) -> str:
        return self.identity[1]

    def part(self, slot: str) -> ET.Element:
        for s, el in self.parts:
            if s == slot:
                return el
        raise KeyError(slot)

    def fragment(self) -> ET.Element:
        wrapper = ET.Element("Fragment", {"kind": self.kind})
        if self.owner is not None:
            wrapper.set("owner", self.owner)
        for _, el in self.parts:
            wrapper.append(clone(el))
        return wrapper

    @property
    def xml(self) -> str:
        return to_text(self.fragment(), declaration=False)

    def sort_key(self) -> tuple:
        return (KIND_ORDER[self.kind], natural_key(self.identity[1]))


def _identity(kind: str, parts: list) -> tuple:
    el = parts[0][1]
    if kind == "weather":
        env = el.find("EnvironmentAction/Environment")
        return ("Environment", env.get("name", ""))
    if kind == "traffic_signal":
        tss = el.find("InfrastructureAction/TrafficSignalAction/TrafficSignalStateAction")
        return ("TrafficSignalStateAction", tss.get("name", ""))
    return (el.tag, el.get("name", ""))


def _kind_of(parts: list) -> str:
    el = parts[0][1]
    if el.tag == "GlobalAction":
        return "weather" if el.find("EnvironmentAction") is not None else "traffic_signal"
    if el.tag == "ScenarioObject":
        return "obstacle" if el.find("MiscObject") is not None else "npc_definition"
    if el.tag == "Event":
        return "event"
    raise ValueError(f"<{el.tag}> does not start a block")


def make_block(elements_: Iterable[ET.Element], owner: Optional[str] = None) -> ScenarioBlock:
    parts = []
    for el in elements_:
        slot = _SLOT_OF_TAG.get(el.tag)
        if slot is None:
            raise ValueError(f"<{el.tag}> is not a block part")
        parts.append((slot, el))
    if not parts:
        raise ValueError("empty block")
    kind = _kind_of(parts)
    return ScenarioBlock(kind, _identity(kind, parts), tuple(parts), owner if kind == "event" else None)


def block_from_fragment(fragment: ET.Element | str) -> ScenarioBlock:
    """Inverse of :meth:`ScenarioBlock.fragment`; raises ValueError/ParseError on bad input."""
    if isinstance(fragment, str):
        fragment = parse_xml(fragment)
    if fragment.tag != "Fragment":
        raise ValueError(f"expected <Fragment>, got <{fragment.tag}>")
    block = make_block(list(elements(fragment)), fragment.get("owner"))
    if fragment.get("kind") not in (None, block.kind):
        raise ValueError(f"fragment declares kind {fragment.get('kind')!r} but holds a {block.kind} block")
    if block.kind == "event" and not block.owner:
        raise ValueError("event fragment without owner")
    return block


@dataclass(frozen=True, eq=False)
class ScenarioTemplate:
    skeleton: ET.Element
    slot_index: Mapping[str, str] = field(default_factory=lambda: dict(SLOT_INDEX))
    road_network_ref: str = ""
    metadata: Mapping = field(default_factory=dict)

    def text(self) -> str:
        return to_text(compose(self, []).xml)

    def canonical(self) -> str:
        return canonical(self.skeleton)


@dataclass(frozen=True, eq=False)
class ScenarioDocument:
    xml: ET.Element
    metadata: Mapping = field(default_factory=dict)

    def text(self) -> str:
        return to_text(self.xml)

    def entity_names(self) -> list[str]:
        return [o.get("name") for o in self.xml.iterfind("Entities/ScenarioObject")]


# -- compose / disassemble ----------------------------------------------------

def _metadata_comment(metadata: Mapping) -> ET.Element:
    return ET.Comment(f" {METADATA_TAG} {json.dumps(metadata, sort_keys=True, separators=(',', ':'))} ")


def read_metadata(root: ET.Element) -> dict:
    for c in root:
        if is_comment(c) and (c.text or "").strip().startswith(METADATA_TAG):
            return json.loads(c.text.strip()[len(METADATA_TAG):])
    return {}


def _check_conflicts(blocks: list[ScenarioBlock]) -> None:
    seen: dict[tuple, ScenarioBlock] = {}
    weather = [b for b in blocks if b.kind == "weather"]
    if len(weather) > 1:
        raise SlotConflict(f"{len(weather)} weather blocks target the single environment slot")
    for b in blocks:
        key = ("ScenarioObject", b.name) if b.kind in ("npc_definition", "obstacle") else b.identity
        if key in seen:
            raise SlotConflict(f"two blocks target slot {key}")
        seen[key] = b


def compose(template: ScenarioTemplate, blocks: Iterable[ScenarioBlock]) -> ScenarioDocument:
    blocks = sorted(blocks, key=ScenarioBlock.sort_key)
    _check_conflicts(blocks)
    root = clone(template.skeleton)
    entities = root.find(template.slot_index["entities"])
    actions = root.find(template.slot_index["init.global"])
    act = root.find(template.slot_index["story"])

    globals_ = [c for c in elements(actions) if c.tag == "GlobalAction"]
    privates = [c for c in elements(actions) if c.tag == "Private"]
    groups: dict[str, ET.Element] = {}
    for b in blocks:
        for slot, el in b.parts:
            el = clone(el)
            if slot == "entities":
                entities.append(el)
            elif slot == "init.global":
                globals_.append(el)
            elif slot == "init.private":
                privates.append(el)
            else:
                owner = b.owner
                if owner not in groups:
                    mg = ET.Element("ManeuverGroup", {"name": f"{owner}_mg", "maximumExecutionCount": "1"})
                    actors = ET.SubElement(mg, "Actors", {"selectTriggeringEntities": "false"})
                    ET.SubElement(actors, "EntityRef", {"entityRef": owner})
                    ET.SubElement(mg, "Maneuver", {"name": f"{owner}_maneuver"})
                    groups[owner] = mg
                groups[owner].find("Maneuver").append(el)
    for c in list(actions):
        actions.remove(c)
    actions.extend(globals_ + privates)
    trigger_at = [i for i, c in enumerate(act) if getattr(c, "tag", None) == "StartTrigger"]
    pos = trigger_at[0] if trigger_at else len(act)
    for i, mg in enumerate(groups.values()):
        act.insert(pos + i, mg)

    root.insert(0, _metadata_comment(template.metadata))
    return ScenarioDocument(root, dict(template.metadata))


def disassemble(doc: ScenarioDocument) -> tuple[ScenarioTemplate, list[ScenarioBlock]]:
    root = clone(doc.xml)
    metadata = read_metadata(root) or dict(doc.metadata)
    for c in [c for c in root if is_comment(c)]:
        root.remove(c)
    entities = root.find(SLOT_INDEX["entities"])
    actions = root.find(SLOT_INDEX["init.global"])
    act = root.find(SLOT_INDEX["story"])

    privates = {p.get("entityRef"): p for p in actions.findall("Private")}
    blocks: list[ScenarioBlock] = []
    for g in actions.findall("GlobalAction"):
        blocks.append(make_block([g]))
        actions.remove(g)
    for obj in entities.findall("ScenarioObject"):
        name = obj.get("name")
        if name == EGO:
            continue
        parts = [obj]
        if name in privates:
            parts.append(privates[name])
            actions.remove(privates[name])
        blocks.append(make_block(parts))
        entities.remove(obj)
    for mg in act.findall("ManeuverGroup"):
        owner = mg.find("Actors/EntityRef").get("entityRef")
        for ev in mg.iterfind("Maneuver/Event"):
            blocks.append(make_block([ev], owner))
        act.remove(mg)

    ref = root.find("RoadNetwork/LogicFile")
    template = ScenarioTemplate(root, dict(SLOT_INDEX), ref.get("filepath", "") if ref is not None else "", metadata)
    return template, sorted(blocks, key=ScenarioBlock.sort_key)


# -- validation ---------------------------------------------------------------

def _reference_findings(root: ET.Element) -> list[Finding]:
    out: list[Finding] = []
    names = [o.get("name") for o in root.iterfind("Entities/ScenarioObject")]
    seen = set()
    for n in names:
        if n in seen:
            out.append(Finding("reference", "/OpenSCENARIO/Entities", f"duplicate entity name {n!r}"))
        seen.add(n)
    events = {e.get("name") for e in root.iter("Event")}
    for tag, attr in (("EntityRef", "entityRef"), ("Private", "entityRef"),
                      ("RelativeDistanceCondition", "entityRef"), ("RelativeTargetLane", "entityRef")):
        for el in root.iter(tag):
            if el.get(attr) not in seen:
                out.append(Finding("reference", tag, f"{attr}={el.get(attr)!r} names no entity"))
    for el in root.iter("StoryboardElementStateCondition"):
        if el.get("storyboardElementType") == "event" and el.get("storyboardElementRef") not in events:
            out.append(Finding("reference", "StoryboardElementStateCondition",
                               f"event {el.get('storyboardElementRef')!r} does not exist"))
    return out


def validate_document(doc: ScenarioDocument, schema: Optional[SchemaGraph] = None) -> ValidationReport:
    schema = schema or default_schema()
    findings = validate_element(schema, doc.xml)
    findings.extend(_reference_findings(doc.xml))
    return ValidationReport(findings)


# -- io -----------------------------------------------------------------------

def parse_document(text: str) -> ScenarioDocument:
    root = parse_xml(text)
    return ScenarioDocument(root, read_metadata(root))


def load_document(path: str | Path) -> ScenarioDocument:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from None
    return parse_document(text)


def serialize(doc: ScenarioDocument, path: str | Path) -> None:
    try:
        atomic_write(path, doc.text())
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from None
