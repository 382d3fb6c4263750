"""Block mutation operators and value-selection strategies.

Operators (parameter rows live in ``data/operators.json``):

=============  ==================  =========================================
operator       block kind          what changes
=============  ==================  =========================================
TSM_speed      event               AbsoluteTargetSpeed value
DTM            event               dynamics shape and value
WPM            event               waypoint lateral offsets (or s, map-aware)
VPM            npc_definition      Performance maxima (gaussian)
DM             npc_definition      bounding-box dimensions (gaussian)
NCM            npc_definition      category, with its default shape/dynamics
WM             weather             weather type and its sampled parameters
TSM_signal     traffic_signal      signal state
OIM            obstacle            obstacle position and size
=============  ==================  =========================================
"""

from __future__ import annotations

import copy
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .config import default_operator_config
from .document import ScenarioBlock, ScenarioDocument, make_block, read_metadata
from .errors import DomainExhausted, MutationError, OperatorKindMismatch
from .map_graph import RoadNetwork, lane_width, resolve_position
from .placement import PlacementContext
from .scenario_gen import entity_object, obstacle_object, teleport_private, weather_action, weather_type
from .schema_model import SchemaGraph, ValueDomain, attribute_domain, default_schema, validate_block
from .xmlutil import clone, fmt

OPERATORS = ("TSM_speed", "DTM", "VPM", "WPM", "DM", "NCM", "WM", "TSM_signal", "OIM")
STRATEGIES = ("random_sampling", "gaussian", "context_aware", "enumerative")
ENUMERATIVE = ("NCM", "WM", "TSM_signal")
SPEED_MODE = {"g": "acc", "k": "acc", "e": "dec"}


@dataclass(frozen=True)
class MutationSpec:
    operator: str
    strategy: str = ""
    parameters: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.operator not in OPERATORS:
            raise MutationError(f"unknown operator {self.operator!r}")
        legal = tuple(self.parameters.get("strategies", ()))
        if not self.strategy:
            object.__setattr__(self, "strategy", legal[0] if legal else "random_sampling")
        if self.strategy not in STRATEGIES:
            raise MutationError(f"unknown strategy {self.strategy!r}")
        if legal and self.strategy not in legal:
            raise MutationError(f"{self.operator} does not support strategy {self.strategy!r} (allowed: {legal})")
        if self.strategy == "gaussian" and not self.parameters.get("sigma_fraction", 0) > 0:
            raise MutationError("gaussian strategy needs sigma_fraction > 0")

    @property
    def kinds(self) -> tuple:
        return tuple(self.parameters.get("kinds", ()))


def make_spec(operator: str, strategy: Optional[str] = None, config: Optional[dict] = None,
              **overrides) -> MutationSpec:
    """Spec for ``operator`` with its parameter row taken from the operator config."""
    config = config or default_operator_config()
    if operator not in config["operators"]:
        raise MutationError(f"unknown operator {operator!r}")
    params = copy.deepcopy(config["operators"][operator])
    params["sigma_fraction"] = config["gaussian"]["sigma_fraction"]
    params["clamp"] = tuple(config["gaussian"]["clamp"])
    params["categories"] = config["categories"]
    params["performance"] = config["performance"]
    params.update(overrides)
    return MutationSpec(operator, strategy or "", params)


@dataclass(frozen=True)
class MutationContext:
    network: RoadNetwork
    placement: PlacementContext
    av_lane: int
    av_s: float

    @classmethod
    def from_document(cls, doc: ScenarioDocument, network: RoadNetwork) -> "MutationContext":
        meta = read_metadata(doc.xml) or dict(doc.metadata)
        return cls.from_metadata(meta, network)

    @classmethod
    def from_metadata(cls, meta: Mapping, network: RoadNetwork) -> "MutationContext":
        try:
            place = PlacementContext(**meta["placement"])
            return cls(network, place, int(meta["assignment"]["av_lane"]), float(meta["assignment"]["av_s"]))
        except (KeyError, TypeError) as exc:
            raise MutationError(f"scenario metadata lacks placement information ({exc})") from None


@dataclass(frozen=True, eq=False)
class BlockVariant:
    base: tuple  # identity of the block it derives from
    operator: str
    strategy: str
    block: ScenarioBlock
    provenance: tuple = ()  # (attribute path, old, new)

    @property
    def xml(self) -> str:
        return self.block.xml

    def to_dict(self) -> dict:
        return {"base": list(self.base), "kind": self.block.kind, "operator": self.operator,
                "strategy": self.strategy, "provenance": [list(p) for p in self.provenance]}


# -- value selection -----------------------------------------------------------

def _clip_to_domain(lo: float, hi: float, domain: Optional[ValueDomain]) -> tuple[float, float]:
    if domain is not None and domain.kind == "numeric_range":
        lo, hi = max(lo, domain.lower), min(hi, domain.upper)
    if lo > hi:
        raise DomainExhausted(f"empty sampling range [{lo}, {hi}]")
    return lo, hi


def sample_value(spec: MutationSpec, original, domain: Optional[ValueDomain], rng: np.random.Generator,
                 context: Optional[MutationContext] = None, *, bounds: Optional[tuple] = None,
                 mode: Optional[str] = None, tried: tuple = ()):
    """One value for ``spec`` under its strategy.

    ``bounds`` is the sampling range for random/context-aware draws; when
    omitted it comes from the operator row (TSM_speed: factor range by
    ``mode`` in {acc, dec, keep}; DTM: value range). Enumerative draws pick
    an untried literal.
    """
    strategy = spec.strategy
    if strategy == "enumerative":
        literals = list(bounds) if bounds is not None else list(domain.literals if domain else ())
        left = [v for v in literals if v not in tried]
        if not left:
            raise DomainExhausted(f"{spec.operator}: every literal already tried")
        return left[int(rng.integers(len(left)))]
    if strategy == "gaussian":
        x = float(original)
        c0, c1 = spec.parameters.get("clamp", (0.5, 1.5))
        lo, hi = sorted((c0 * x, c1 * x))
        lo, hi = _clip_to_domain(lo, hi, domain)
        sigma = spec.parameters["sigma_fraction"] * abs(x)
        value = x + rng.normal(0.0, sigma) if sigma > 0 else x
        return float(min(max(value, lo), hi))
    if strategy == "context_aware" and context is None:
        raise MutationError(f"{spec.operator}: context-aware sampling needs map context")
    if domain is not None and domain.kind == "enum_literals":
        choices = list(bounds) if bounds is not None else list(domain.literals)
        return choices[int(rng.integers(len(choices)))]
    if bounds is None:
        if spec.operator == "TSM_speed":
            f0, f1 = spec.parameters["factor"][mode or "keep"]
            bounds = tuple(sorted((f0 * float(original), f1 * float(original))))
        elif spec.operator == "DTM":
            bounds = tuple(spec.parameters["value"])
        else:
            raise MutationError(f"{spec.operator}: no sampling range given")
    lo, hi = _clip_to_domain(float(bounds[0]), float(bounds[1]), domain)
    value = float(rng.uniform(lo, hi)) if hi > lo else lo
    if domain is not None and domain.integer:
        value = float(round(value))
    return value


# -- helpers -------------------------------------------------------------------

def _num(value: float) -> str:
    return fmt(float(value))


class _Editor:
    """Copy of a block whose attribute edits are recorded as provenance."""

    def __init__(self, block: ScenarioBlock):
        self.parts = [(slot, clone(el)) for slot, el in block.parts]
        self.owner = block.owner
        self.changes: list[tuple] = []

    def iter(self, tag: str):
        for _, el in self.parts:
            yield from el.iter(tag)

    def set(self, el: ET.Element, attr: str, value: str, label: Optional[str] = None) -> None:
        old = el.get(attr)
        el.set(attr, value)
        self.changes.append((label or f"{el.tag}@{attr}", old, value))

    def replace(self, slot: str, new: ET.Element) -> None:
        self.parts = [(s, new if s == slot else el) for s, el in self.parts]

    def block(self) -> ScenarioBlock:
        return make_block([el for _, el in self.parts], self.owner)


def _require(block: ScenarioBlock, spec: MutationSpec) -> None:
    if block.kind not in spec.kinds:
        raise OperatorKindMismatch(f"{spec.operator} does not apply to {block.kind} blocks")


def applicable(block: ScenarioBlock, spec: MutationSpec, context: Optional[MutationContext] = None) -> bool:
    """Whether ``mutate_block`` can produce variants for this block."""
    if block.kind not in spec.kinds:
        return False
    root = block.parts[0][1]
    if spec.operator == "TSM_speed":
        return any(float(t.get("value")) != 0.0 for t in root.iter("AbsoluteTargetSpeed"))
    if spec.operator == "DTM":
        return any(True for t in root.iter() if t.tag.endswith("ActionDynamics"))
    if spec.operator == "WPM":
        return context is not None and root.find(".//Waypoint") is not None
    if spec.operator == "VPM":
        return root.find(".//Performance") is not None
    if spec.operator == "OIM":
        return context is not None
    return True


def _event_code(block: ScenarioBlock) -> str:
    return block.name.rsplit("_", 1)[-1]


# -- operators -----------------------------------------------------------------

def _tsm_speed(block, spec, rng, context, schema):
    ed = _Editor(block)
    targets = [t for t in ed.iter("AbsoluteTargetSpeed") if float(t.get("value")) != 0.0]
    if not targets:
        raise OperatorKindMismatch("event has no non-zero target speed")
    domain = attribute_domain(schema, "AbsoluteTargetSpeed", "value")
    mode = SPEED_MODE.get(_event_code(block), "keep")
    for t in targets:
        ed.set(t, "value", _num(sample_value(spec, float(t.get("value")), domain, rng, context, mode=mode)))
    return ed


def _dtm(block, spec, rng, context, schema):
    ed = _Editor(block)
    dyns = [d for _, el in ed.parts for d in el.iter() if d.tag.endswith("ActionDynamics")]
    if not dyns:
        raise OperatorKindMismatch("event has no transition dynamics")
    shape_dom = attribute_domain(schema, "TransitionDynamics", "dynamicsShape")
    value_dom = attribute_domain(schema, "TransitionDynamics", "value")
    for d in dyns:
        ed.set(d, "dynamicsShape", sample_value(spec, d.get("dynamicsShape"), shape_dom, rng, context,
                                                bounds=tuple(spec.parameters["shapes"])))
        ed.set(d, "value", _num(sample_value(spec, float(d.get("value")), value_dom, rng, context,
                                             bounds=tuple(spec.parameters["value"]))))
    return ed


def _wpm(block, spec, rng, context, schema):
    if context is None:
        raise MutationError("WPM needs the road network to size offsets")
    ed = _Editor(block)
    positions = [wp.find("Position/LanePosition") for wp in ed.iter("Waypoint")]
    if not positions:
        raise OperatorKindMismatch("event has no waypoints")
    frac = float(spec.parameters.get("offset_fraction_of_road", 0.5))
    for lp in positions:
        length = context.network.segment(lp.get("roadId")).length
        if spec.strategy == "context_aware":
            domain = attribute_domain(schema, "LanePosition", "s")
            ed.set(lp, "s", _num(sample_value(spec, float(lp.get("s")), domain, rng, context,
                                              bounds=(0.0, length))))
        else:
            domain = attribute_domain(schema, "LanePosition", "offset")
            ed.set(lp, "offset", _num(sample_value(spec, float(lp.get("offset", 0)), domain, rng, context,
                                                   bounds=(-frac * length, frac * length))))
    return ed


def _gaussian_attrs(block, spec, rng, context, schema, tag):
    ed = _Editor(block)
    el = next(ed.iter(tag), None)
    if el is None:
        raise OperatorKindMismatch(f"{spec.operator}: block has no <{tag}>")
    for attr in spec.parameters["attributes"]:
        domain = attribute_domain(schema, tag, attr)
        ed.set(el, attr, _num(sample_value(spec, float(el.get(attr)), domain, rng, context)))
    return ed


def _category_of(root: ET.Element) -> str:
    for p in root.iter("Property"):
        if p.get("name") == "category":
            return p.get("value")
    raise MutationError("entity lacks a category property")


def _prop(root: ET.Element, name: str, default: Optional[str] = None) -> Optional[str]:
    for p in root.iter("Property"):
        if p.get("name") == name:
            return p.get("value")
    return default


def _ncm(block, spec, rng, context, schema) -> list:
    obj = block.part("entities")
    current = _category_of(obj)
    out = []
    for cat in spec.parameters["literals"]:
        if cat == current:
            continue
        ed = _Editor(block)
        name = block.name
        new_obj = entity_object(name, cat, color=_prop(obj, "color", "white"), rel_pos=_prop(obj, "rel_pos"),
                                config={"categories": spec.parameters["categories"],
                                        "performance": spec.parameters["performance"]})
        ed.replace("entities", new_obj)
        ed.changes.append(("category", current, cat))
        priv = dict(ed.parts).get("init.private")
        if priv is not None:
            for t in priv.iter("AbsoluteTargetSpeed"):
                ed.set(t, "value", _num(spec.parameters["categories"][cat]["speed"]), "initial_speed")
        out.append(ed)
    if not out:
        raise DomainExhausted(f"NCM: no category other than {current!r} configured")
    return out


def _wm_params(spec, wtype, rng) -> dict:
    row = spec.parameters["types"][wtype]
    params = {"type": wtype}
    params["visibility"] = float(rng.uniform(*row["visibility"]))
    params["friction"] = float(rng.uniform(*row["friction"]))
    params["precipitation"] = float(rng.uniform(*row["precipitation"])) if row.get("precipitation") else 0.0
    params["azimuth"] = float(rng.uniform(*spec.parameters["azimuth"]))
    params["elevation"] = float(rng.uniform(*spec.parameters["elevation"]))
    params["sun_intensity"] = float(rng.uniform(*spec.parameters["sun_intensity"][wtype]))
    return params


def _wm(block, spec, rng, context, schema) -> list:
    out = []
    for wtype in spec.parameters["types"]:
        ed = _Editor(block)
        old = block.part("init.global")
        new = weather_action(_wm_params(spec, wtype, rng))
        ed.replace("init.global", new)
        ed.changes.append(("weather", weather_type(old), wtype))
        for tag, attr in (("Fog", "visualRange"), ("RoadCondition", "frictionScaleFactor"),
                          ("Precipitation", "intensity"), ("Sun", "azimuth"), ("Sun", "elevation"),
                          ("Sun", "intensity")):
            ed.changes.append((f"{tag}@{attr}", old.find(f".//{tag}").get(attr), new.find(f".//{tag}").get(attr)))
        out.append(ed)
    return out


def _tsm_signal(block, spec, rng, context, schema) -> list:
    domain = attribute_domain(schema, "TrafficSignalStateAction", "state")
    current = block.part("init.global").find(".//TrafficSignalStateAction").get("state")
    out = []
    for state in spec.parameters["literals"]:
        if state == current:
            continue
        if not domain.contains(state):
            raise MutationError(f"signal state {state!r} outside the schema domain")
        ed = _Editor(block)
        ed.set(next(ed.iter("TrafficSignalStateAction")), "state", state)
        out.append(ed)
    if not out:
        raise DomainExhausted(f"TSM_signal: no state other than {current!r} configured")
    return out


def obstacle_variant(name: str, kind: str, spec: MutationSpec, rng: np.random.Generator,
                     context: MutationContext, blocking: bool) -> tuple[ET.Element, ET.Element, dict]:
    """Obstacle ahead of the AV; blocking ones overlap the AV lane, others sit fully outside it."""
    seg = context.network.segment(context.placement.segment)
    w = lane_width(seg, context.av_lane, context.av_s)
    dims_cfg = spec.parameters["dimensions"]
    dims = tuple(float(rng.uniform(*dims_cfg[k])) for k in ("length", "width", "height"))
    ahead = float(rng.uniform(*spec.parameters["ahead"]))
    reach = float(spec.parameters.get("lateral_lane_widths", 1.0)) * w
    if blocking:
        lateral = float(rng.uniform(-min(reach, (w + dims[1]) / 2 - 0.05), min(reach, (w + dims[1]) / 2 - 0.05)))
    else:
        side = 1.0 if rng.random() < 0.5 else -1.0
        lateral = side * ((w + dims[1]) / 2 + float(rng.uniform(0.05, 0.5)))
    forward = seg.lane(context.av_lane).direction == "forward"
    s = context.av_s + ahead if forward else context.av_s - ahead
    s = min(max(s, 0.0), seg.length)
    pose = resolve_position(context.network, seg.id, context.av_lane, s, lateral if forward else -lateral)
    props = {"rel_pos": "R5", "ahead": round(ahead, 6), "lateral": round(lateral, 6),
             "placement": "blocking" if blocking else "clear"}
    obj = obstacle_object(name, kind, dims, props)
    priv = teleport_private(name, {"x": round(pose.x, 6), "y": round(pose.y, 6), "h": round(pose.heading, 6)})
    return obj, priv, {"ahead": ahead, "lateral": lateral, "dims": dims}


def _oim(block, spec, rng, context, schema, count) -> list:
    if context is None:
        raise MutationError("OIM needs the map context to place obstacles")
    obj = block.part("entities")
    kind = _prop(obj, "kind", "obstacle")
    out = []
    for k in range(count):
        new_obj, new_priv, info = obstacle_variant(block.name, kind, spec, rng, context, blocking=(k % 2 == 0))
        ed = _Editor(block)
        ed.replace("entities", new_obj)
        ed.replace("init.private", new_priv)
        ed.changes.extend([("ahead", _prop(obj, "ahead"), _num(info["ahead"])),
                           ("lateral", _prop(obj, "lateral"), _num(info["lateral"])),
                           ("dimensions", None, " ".join(_num(d) for d in info["dims"]))])
        out.append(ed)
    return out


def insert_obstacle(spec: MutationSpec, rng: np.random.Generator, context: MutationContext,
                    name: str = "obstacle1", kind: str = "obstacle", blocking: bool = True) -> ScenarioBlock:
    """Template-level OIM: a fresh obstacle block for seeds that have none."""
    obj, priv, _ = obstacle_variant(name, kind, spec, rng, context, blocking)
    return make_block([obj, priv])


_SAMPLED = {
    "TSM_speed": _tsm_speed,
    "DTM": _dtm,
    "WPM": _wpm,
    "VPM": lambda b, s, r, c, sc: _gaussian_attrs(b, s, r, c, sc, "Performance"),
    "DM": lambda b, s, r, c, sc: _gaussian_attrs(b, s, r, c, sc, "Dimensions"),
}
_ENUMERATED = {"NCM": _ncm, "WM": _wm, "TSM_signal": _tsm_signal}


def mutate_block(block: ScenarioBlock, spec: MutationSpec, count: int, rng: np.random.Generator,
                 context: Optional[MutationContext] = None,
                 schema: Optional[SchemaGraph] = None) -> list[BlockVariant]:
    _require(block, spec)
    if count < 1:
        raise MutationError("variant count must be >= 1")
    schema = schema or default_schema()
    if spec.operator == "VPM" and block.part("entities").find(".//Performance") is None:
        raise OperatorKindMismatch("VPM needs a vehicle with performance limits")
    if spec.operator in _ENUMERATED:
        editors = _ENUMERATED[spec.operator](block, spec, rng, context, schema)
    elif spec.operator == "OIM":
        editors = _oim(block, spec, rng, context, schema, count)
    else:
        editors = [_SAMPLED[spec.operator](block, spec, rng, context, schema) for _ in range(count)]
    variants = []
    for ed in editors:
        new = ed.block()
        report = validate_block(schema, new)
        if not report.ok:
            raise MutationError(f"{spec.operator} produced an invalid {block.kind} block: "
                                + "; ".join(map(str, report.findings)))
        variants.append(BlockVariant(block.identity, spec.operator, spec.strategy, new, tuple(ed.changes)))
    return variants


def default_spec_for(block: ScenarioBlock, index: int, config: Optional[dict] = None,
                     context: Optional[MutationContext] = None) -> MutationSpec:
    """Operator from the configured plan, cycling by block index over the applicable ones."""
    config = config or default_operator_config()
    ops = list(config["plan"][block.kind])
    for k in range(len(ops)):
        spec = make_spec(ops[(index + k) % len(ops)], config=config)
        if applicable(block, spec, context):
            return spec
    raise OperatorKindMismatch(f"no configured operator applies to {block.kind} block {block.name}")
