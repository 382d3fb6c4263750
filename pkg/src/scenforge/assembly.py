"""Derivation trees: grow by block insertion, fingerprint, prune, persist.

Node ids are assigned breadth-first; the root ("0") is the template with
only the ego vehicle. A node at depth k holds one variant of each of the
first k blocks, so every child equals its parent plus one inserted block.
Node documents are composed lazily, which keeps size-law checks cheap.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .config import TOOL_VERSION, default_operator_config, derive_rng
from .document import (KIND_ORDER, ScenarioBlock, ScenarioDocument, ScenarioTemplate, compose,
                       disassemble, serialize)
from .errors import AssemblyError, InvalidOrder
from .mutation import BlockVariant, MutationContext, default_spec_for, insert_obstacle, make_spec, mutate_block
from .scenario_gen import weather_type
from .xmlutil import atomic_write

TREE_FORMAT = "scenforge.tree/1"


def expected_count(variant_counts: Sequence[int]) -> int:
    """Sum over k of the product of the first k variant counts."""
    total, prod = 0, 1
    for m in variant_counts:
        if m < 1:
            raise ValueError("variant counts must be >= 1")
        prod *= m
        total += prod
    return total


def compose_full(template: ScenarioTemplate, blocks: Iterable[ScenarioBlock]) -> ScenarioDocument:
    return compose(template, blocks)


@dataclass(eq=False)
class TreeNode:
    id: str
    parent: Optional[str]
    depth: int
    inserted: Optional[BlockVariant]
    blocks: tuple  # ScenarioBlocks present in this node, in insertion order
    template: ScenarioTemplate = field(repr=False)
    children: list = field(default_factory=list)
    pruned: bool = False

    @functools.cached_property
    def document(self) -> ScenarioDocument:
        return compose(self.template, self.blocks)


@dataclass(eq=False)
class ScenarioTree:
    template: ScenarioTemplate
    nodes: dict  # id -> TreeNode, breadth-first order
    variant_counts: tuple
    seed: Optional[int] = None

    @property
    def root(self) -> TreeNode:
        return self.nodes["0"]

    def edges(self):
        for node in self.nodes.values():
            if node.parent is not None:
                yield node.parent, node.id

    def leaves(self) -> list[TreeNode]:
        return [n for n in self.nodes.values() if not n.children and n.parent is not None]

    def retained(self) -> list[TreeNode]:
        return [n for n in self.nodes.values() if not n.pruned]

    def __len__(self) -> int:
        return len(self.nodes) - 1  # excluding the root


def _check_order(blocks: Sequence[ScenarioBlock]) -> None:
    keys = [b.sort_key() for b in blocks]
    for a, b, blk in zip(keys, keys[1:], blocks[1:]):
        if KIND_ORDER[blk.kind] < a[0] or b <= a:
            raise InvalidOrder(f"block {blk.kind}:{blk.name} is out of the insertion order "
                               "weather, npc_definition, traffic_signal, event, obstacle")


def grow_tree(template: ScenarioTemplate, variants: Sequence[tuple], seed: Optional[int] = None) -> ScenarioTree:
    """Tree for ``variants`` = [(block, [BlockVariant, ...]), ...] in insertion order."""
    blocks = [b for b, _ in variants]
    _check_order(blocks)
    for block, vs in variants:
        if not vs:
            raise AssemblyError(f"no variants for block {block.kind}:{block.name}")
        for v in vs:
            if v.block.identity != block.identity or v.block.kind != block.kind:
                raise AssemblyError(f"variant of {v.base} does not match block {block.identity}")
    root = TreeNode("0", None, 0, None, (), template)
    nodes = {"0": root}
    level = [root]
    next_id = 1
    for depth, (_, vs) in enumerate(variants, start=1):
        new_level = []
        for parent in level:
            for v in vs:
                node = TreeNode(str(next_id), parent.id, depth, v, parent.blocks + (v.block,), template)
                next_id += 1
                nodes[node.id] = node
                parent.children.append(node.id)
                new_level.append(node)
        level = new_level
    return ScenarioTree(template, nodes, tuple(len(vs) for _, vs in variants), seed)


def mutate_all(template: ScenarioTemplate, blocks: Sequence[ScenarioBlock], root_seed: int, *,
               context: Optional[MutationContext] = None, config: Optional[dict] = None,
               count: Optional[int] = None, executor=None) -> list[tuple]:
    """Variants for every block with the configured operator plan and per-block seeds."""
    config = config or default_operator_config()
    count = count or int(config.get("variants_per_block", 2))
    blocks = list(blocks)
    plan = config["plan"]
    if plan.get("insert_obstacle") and context is not None and not any(b.kind == "obstacle" for b in blocks):
        spec = make_spec("OIM", config=config)
        blocks.append(insert_obstacle(spec, derive_rng(root_seed, "insert_obstacle"), context))
    blocks.sort(key=ScenarioBlock.sort_key)

    def one(item):
        i, block = item
        spec = default_spec_for(block, i, config, context)
        rng = derive_rng(root_seed, "mutate", *block.identity, spec.operator)
        return block, mutate_block(block, spec, count, rng, context)

    items = list(enumerate(blocks))
    results = list(executor.map(one, items)) if executor is not None else [one(it) for it in items]
    return results


# -- structural features -------------------------------------------------------

def bin_index(value: float, lo: float, hi: float, bins: int = 5) -> int:
    if hi <= lo:
        return 0
    k = math.floor((float(value) - lo) / (hi - lo) * bins)
    return min(max(k, 0), bins - 1)


@dataclass(frozen=True)
class StructuralFeatures:
    numeric: tuple = ()  # (name, bin index)
    symbolic: tuple = ()  # (name, value)

    def items(self) -> list[str]:
        """Flat ``name=value`` components, the unit counted by lift mining."""
        return [f"{k}={v}" for k, v in self.numeric + self.symbolic]

    def to_dict(self) -> dict:
        return {"numeric": dict(self.numeric), "symbolic": dict(self.symbolic)}


def _prop(el, name):
    for p in el.iter("Property"):
        if p.get("name") == name:
            return p.get("value")
    return None


def _event_code(name: str) -> str:
    return name.rsplit("_", 1)[-1]


def feature_vector(doc: ScenarioDocument, config: Optional[dict] = None) -> StructuralFeatures:
    config = config or default_operator_config()
    feat = config["features"]
    bins = int(feat.get("bins", 5))
    wm = config["operators"]["WM"]
    numeric: list = []
    symbolic: list = []
    _, blocks = disassemble(doc)
    sequences: dict = {}
    for b in blocks:
        root = b.parts[0][1]
        if b.kind == "weather":
            wtype = weather_type(root)
            row = wm["types"].get(wtype, {})
            symbolic.append(("weather.type", wtype))
            fog = root.find(".//Fog")
            fric = root.find(".//RoadCondition")
            sun = root.find(".//Sun")
            prec = root.find(".//Precipitation")
            values = {"visibility": float(fog.get("visualRange")), "friction": float(fric.get("frictionScaleFactor")),
                      "azimuth": float(sun.get("azimuth")), "elevation": float(sun.get("elevation")),
                      "sun_intensity": float(sun.get("intensity")),
                      "precipitation": float(prec.get("intensity", 0))}
            ranges = {"visibility": row.get("visibility"), "friction": row.get("friction"),
                      "azimuth": wm["azimuth"], "elevation": wm["elevation"],
                      "sun_intensity": wm["sun_intensity"].get(wtype), "precipitation": row.get("precipitation")}
            for key in sorted(values):
                if ranges[key]:
                    numeric.append((f"weather.{key}", bin_index(values[key], *ranges[key], bins)))
        elif b.kind == "traffic_signal":
            state = root.find(".//TrafficSignalStateAction").get("state")
            symbolic.append((f"signal.{b.name}.state", state))
        elif b.kind == "npc_definition":
            obj = b.part("entities")
            cat = _prop(obj, "category")
            symbolic.append((f"npc.{b.name}.category", cat))
            symbolic.append((f"npc.{b.name}.rel_pos", _prop(obj, "rel_pos")))
            defaults = config["categories"].get(cat, {})
            dims = obj.find(".//Dimensions")
            for key, idx in (("length", 0), ("width", 1), ("height", 2)):
                d0 = defaults.get("dimensions", [0, 0, 0])[idx]
                if d0:
                    numeric.append((f"npc.{b.name}.{key}", bin_index(float(dims.get(key)), 0.5 * d0, 1.5 * d0, bins)))
            perf = obj.find(".//Performance")
            if perf is not None:
                for key, v0 in sorted(config["performance"].items()):
                    numeric.append((f"npc.{b.name}.{key}", bin_index(float(perf.get(key)), 0.5 * v0, 1.5 * v0, bins)))
        elif b.kind == "event":
            sequences.setdefault(b.owner, []).append(_event_code(b.name))
            for t in root.iter("AbsoluteTargetSpeed"):
                numeric.append((f"event.{b.name}.target_speed", bin_index(float(t.get("value")), *feat["target_speed"], bins)))
            for d in root.iter():
                if d.tag.endswith("ActionDynamics"):
                    symbolic.append((f"event.{b.name}.{d.tag}.shape", d.get("dynamicsShape")))
                    numeric.append((f"event.{b.name}.{d.tag}.value",
                                    bin_index(float(d.get("value")), *config["operators"]["DTM"]["value"], bins)))
            for k, lp in enumerate(root.iter("LanePosition")):
                numeric.append((f"event.{b.name}.wp{k}.offset",
                                bin_index(float(lp.get("offset", 0)), *feat["waypoint_offset"], bins)))
        elif b.kind == "obstacle":
            obj = b.part("entities")
            symbolic.append((f"obstacle.{b.name}.kind", _prop(obj, "kind")))
            symbolic.append((f"obstacle.{b.name}.placement", _prop(obj, "placement") or "blocking"))
            lat = _prop(obj, "lateral")
            if lat is not None:
                numeric.append((f"obstacle.{b.name}.lateral", bin_index(float(lat), *feat["obstacle_lateral"], bins)))
    for owner in sorted(sequences):
        symbolic.append((f"npc.{owner}.sequence", "".join(sequences[owner])))
    symbolic.append(("entities", str(len(doc.entity_names()))))
    return StructuralFeatures(tuple(sorted(numeric)), tuple(sorted(symbolic)))


# -- pruning -------------------------------------------------------------------

def _copy_tree(tree: ScenarioTree) -> ScenarioTree:
    nodes = {}
    for nid, n in tree.nodes.items():
        c = TreeNode(n.id, n.parent, n.depth, n.inserted, n.blocks, n.template, list(n.children), n.pruned)
        if "document" in n.__dict__:
            c.__dict__["document"] = n.__dict__["document"]
        nodes[nid] = c
    return ScenarioTree(tree.template, nodes, tree.variant_counts, tree.seed)


def retained_count(size: int, retention: float) -> int:
    # round() guards against 0.1 * 30 = 3.0000000000000004
    return max(1, math.ceil(round(retention * size, 9)))


def prune(tree: ScenarioTree, retention: float, seed: int,
          feature_fn: Optional[Callable[[TreeNode], object]] = None,
          config: Optional[dict] = None) -> ScenarioTree:
    """Keep ceil(retention * size) random leaves per cluster of identical features."""
    if not 0 < retention <= 1:
        raise ValueError("retention must be in (0, 1]")
    out = _copy_tree(tree)
    if retention >= 1:
        return out
    if feature_fn is None:
        def feature_fn(node):
            return feature_vector(node.document, config)
    clusters: dict = {}
    for leaf in out.leaves():
        clusters.setdefault(feature_fn(leaf), []).append(leaf)
    keep = set()
    for members in clusters.values():
        rng = derive_rng(seed, "prune", members[0].id)
        n = retained_count(len(members), retention)
        picked = rng.choice(len(members), size=n, replace=False)
        keep.update(members[int(i)].id for i in picked)
    for leaf in out.leaves():
        leaf.pruned = leaf.id not in keep
    # internal nodes survive only through retained descendants
    for node in reversed(list(out.nodes.values())):
        if node.children:
            node.pruned = all(out.nodes[c].pruned for c in node.children)
    return out


# -- derivation diff -----------------------------------------------------------

@dataclass(frozen=True)
class BlockDelta:
    kind: str  # block_added | attribute_changed | none | divergent
    blocks: tuple = ()  # identities involved
    block: Optional[ScenarioBlock] = None
    details: str = ""

    def to_dict(self) -> dict:
        return {"kind": self.kind, "blocks": [list(i) for i in self.blocks], "details": self.details}


def diff_derivation(parent: ScenarioDocument, child: ScenarioDocument) -> BlockDelta:
    t1, b1 = disassemble(parent)
    t2, b2 = disassemble(child)
    if t1.canonical() != t2.canonical():
        return BlockDelta("divergent", details="templates differ")
    m1 = {b.identity: b for b in b1}
    m2 = {b.identity: b for b in b2}
    added = [i for i in m2 if i not in m1]
    removed = [i for i in m1 if i not in m2]
    changed = [i for i in m1 if i in m2 and m1[i] != m2[i]]
    if not added and not removed and not changed:
        return BlockDelta("none")
    if len(added) == 1 and not removed and not changed:
        return BlockDelta("block_added", (added[0],), m2[added[0]], f"{m2[added[0]].kind} {added[0][1]}")
    if not added and not removed:
        return BlockDelta("attribute_changed", tuple(changed), details=f"{len(changed)} block(s) differ")
    return BlockDelta("divergent", tuple(added + removed + changed),
                      details=f"{len(added)} added, {len(removed)} removed, {len(changed)} changed")


# -- persistence ---------------------------------------------------------------

def node_filename(node_id: str) -> str:
    return f"node_{node_id}.xosc"


def tree_manifest(tree: ScenarioTree, extra: Optional[Mapping] = None) -> dict:
    nodes = []
    for n in tree.nodes.values():
        entry = {"id": n.id, "parent": n.parent, "depth": n.depth, "pruned": n.pruned,
                 "children": list(n.children), "file": node_filename(n.id), "inserted": None}
        if n.inserted is not None:
            entry["inserted"] = {**n.inserted.to_dict(), "identity": list(n.inserted.block.identity)}
        nodes.append(entry)
    data = {"format": TREE_FORMAT, "tool_version": TOOL_VERSION, "seed": tree.seed,
            "variant_counts": list(tree.variant_counts), "expected_count": expected_count(tree.variant_counts)
            if tree.variant_counts else 0, "nodes": nodes}
    data.update(extra or {})
    return data


def save_tree(tree: ScenarioTree, directory: str | Path, extra: Optional[Mapping] = None,
              executor=None) -> Path:
    """Write every node document and ``tree.json`` (written last)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    def write(node):
        serialize(node.document, directory / node_filename(node.id))

    nodes = list(tree.nodes.values())
    if executor is not None:
        list(executor.map(write, nodes))
    else:
        for n in nodes:
            write(n)
    path = directory / "tree.json"
    atomic_write(path, json.dumps(tree_manifest(tree, extra), indent=2, sort_keys=True) + "\n")
    return path


def load_manifest(directory: str | Path) -> dict:
    from .config import read_text
    data = json.loads(read_text(Path(directory) / "tree.json"))
    if data.get("format") != TREE_FORMAT:
        raise AssemblyError(f"{directory}: not a {TREE_FORMAT} manifest")
    return data
