"""Element/attribute graph of the supported OpenSCENARIO subset.

The graph is loaded from a JSON catalog (``data/schema_catalog.json``; the
format is described in the README). Elements are nodes of kind ``class``,
``enumeration`` or ``primitive``; edges are containment, inheritance and
has-attribute relations. The same graph drives value-domain lookups for
the mutators and structural validation of blocks and whole documents.
"""

from __future__ import annotations

import functools
import json
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from importlib import resources
from types import MappingProxyType
from typing import Mapping, Optional

from .errors import CatalogParseError, InvariantViolation, UnknownAttribute
from .xmlutil import elements, parse_xml

PRIMITIVES = ("double", "int", "string", "boolean")


@dataclass(frozen=True)
class ValueDomain:
    kind: str  # numeric_range | enum_literals | free_text
    lower: float = -math.inf
    upper: float = math.inf
    literals: tuple = ()
    units: Optional[str] = None
    integer: bool = False

    def __post_init__(self):
        if self.kind == "numeric_range" and not self.lower < self.upper:
            raise InvariantViolation(f"numeric domain needs lower < upper, got [{self.lower}, {self.upper}]")
        if self.kind == "enum_literals" and not self.literals:
            raise InvariantViolation("enumeration domain without literals")

    def contains(self, raw: str) -> bool:
        if self.kind == "free_text":
            return True
        if self.kind == "enum_literals":
            return raw in self.literals
        try:
            value = int(raw) if self.integer else float(raw)
        except ValueError:
            return False
        return math.isfinite(value) and self.lower <= value <= self.upper

    def describe(self) -> str:
        if self.kind == "enum_literals":
            return "{" + ", ".join(self.literals) + "}"
        if self.kind == "numeric_range":
            return f"[{self.lower}, {self.upper}]"
        return "text"


@dataclass(frozen=True)
class AttributeDef:
    element: str
    name: str
    domain: ValueDomain
    required: bool = True


@dataclass(frozen=True)
class ElementDef:
    name: str
    kind: str  # class | enumeration | primitive
    children: tuple = ()  # (child name, min, max or None for unbounded)
    content: str = "sequence"  # or "choice": exactly one of the children
    literals: tuple = ()
    extends: Optional[str] = None


@dataclass(frozen=True)
class SchemaEdge:
    source: str
    target: str
    relation: str  # containment | inheritance | has_attribute


@dataclass(frozen=True)
class Finding:
    kind: str  # containment | cardinality | domain | unknown_attribute | missing_attribute | unknown_element
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.kind} at {self.path}: {self.message}"


@dataclass
class ValidationReport:
    findings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def __len__(self) -> int:
        return len(self.findings)


@dataclass(frozen=True)
class SchemaGraph:
    elements: Mapping[str, ElementDef]
    attributes: Mapping[tuple, AttributeDef]
    edges: tuple

    def lineage(self, name: str) -> list[str]:
        """``name`` followed by its base types, nearest first."""
        out = [name]
        while self.elements[out[-1]].extends:
            out.append(self.elements[out[-1]].extends)
        return out

    @functools.cached_property
    def _attrs_by_owner(self) -> dict:
        index: dict = {}
        for (owner, attr), adef in self.attributes.items():
            index.setdefault(owner, {})[attr] = adef
        return index

    def attributes_of(self, name: str) -> dict[str, AttributeDef]:
        attrs: dict[str, AttributeDef] = {}
        for el in reversed(self.lineage(name)):
            attrs.update(self._attrs_by_owner.get(el, {}))
        return attrs

    def children_of(self, name: str) -> tuple[str, tuple]:
        """Content model (``sequence``/``choice``, children) with inheritance applied."""
        content, children = "sequence", ()
        for el in reversed(self.lineage(name)):
            edef = self.elements[el]
            if edef.children:
                content, children = edef.content, children + edef.children
        return content, children


def _domain(spec: dict, enums: dict[str, tuple], where: str) -> ValueDomain:
    t = spec.get("type")
    units = spec.get("units")
    if t == "double" or t == "int":
        lo = spec.get("min", -math.inf)
        hi = spec.get("max", math.inf)
        return ValueDomain("numeric_range", float(lo), float(hi), units=units, integer=(t == "int"))
    if t == "string":
        return ValueDomain("free_text", units=units)
    if t == "boolean":
        return ValueDomain("enum_literals", literals=("true", "false"))
    if t == "enum":
        return ValueDomain("enum_literals", literals=tuple(spec.get("literals", ())), units=units)
    if t in enums:
        return ValueDomain("enum_literals", literals=enums[t], units=units)
    raise InvariantViolation(f"{where}: attribute type {t!r} is neither primitive nor a declared enumeration")


def load_schema(catalog: str) -> SchemaGraph:
    """Build a :class:`SchemaGraph` from catalog JSON text."""
    if not catalog or not catalog.strip():
        raise CatalogParseError("empty schema catalog")
    try:
        data = json.loads(catalog)
    except json.JSONDecodeError as exc:
        raise CatalogParseError(f"schema catalog is not JSON: {exc}") from None
    raw = data.get("elements") if isinstance(data, dict) else None
    if not raw:
        raise CatalogParseError("schema catalog declares no elements")

    elements_: dict[str, ElementDef] = {p: ElementDef(p, "primitive") for p in data.get("primitives", PRIMITIVES)}
    enums: dict[str, tuple] = {}
    specs: dict[str, dict] = {}
    for entry in raw:
        try:
            name, kind = entry["name"], entry["kind"]
        except (KeyError, TypeError):
            raise CatalogParseError(f"element entry without name/kind: {entry!r}") from None
        if name in elements_:
            raise InvariantViolation(f"element {name!r} declared twice")
        if kind not in ("class", "enumeration", "primitive"):
            raise InvariantViolation(f"element {name!r} has unknown kind {kind!r}")
        children = []
        for child in entry.get("children", ()):
            cname, lo, hi = child
            if lo < 0 or (hi is not None and lo > hi):
                raise InvariantViolation(f"{name}/{cname}: bad cardinality [{lo}, {hi}]")
            children.append((cname, int(lo), None if hi is None else int(hi)))
        literals = tuple(entry.get("literals", ()))
        if kind == "enumeration":
            if not literals:
                raise InvariantViolation(f"enumeration {name!r} has no literals")
            enums[name] = literals
        elements_[name] = ElementDef(name, kind, tuple(children), entry.get("content", "sequence"),
                                     literals, entry.get("extends"))
        specs[name] = entry

    edges: list[SchemaEdge] = []
    attributes: dict[tuple, AttributeDef] = {}
    for name, edef in elements_.items():
        for cname, _, _ in edef.children:
            if cname not in elements_:
                raise InvariantViolation(f"{name} contains undeclared element {cname!r}")
            edges.append(SchemaEdge(name, cname, "containment"))
        if edef.extends is not None:
            if edef.extends not in elements_:
                raise InvariantViolation(f"{name} extends undeclared element {edef.extends!r}")
            edges.append(SchemaEdge(name, edef.extends, "inheritance"))
        for aname, aspec in specs.get(name, {}).get("attributes", {}).items():
            adef = AttributeDef(name, aname, _domain(aspec, enums, f"{name}@{aname}"),
                                aspec.get("use", "required") == "required")
            attributes[(name, aname)] = adef
            edges.append(SchemaEdge(name, f"{name}@{aname}", "has_attribute"))

    # inheritance must be acyclic
    for name in elements_:
        seen = {name}
        cur = elements_[name].extends
        while cur is not None:
            if cur in seen:
                raise InvariantViolation(f"inheritance cycle through {name!r}")
            seen.add(cur)
            cur = elements_[cur].extends

    return SchemaGraph(MappingProxyType(elements_), MappingProxyType(attributes), tuple(edges))


@functools.lru_cache(maxsize=None)
def default_schema() -> SchemaGraph:
    text = resources.files("scenforge.data").joinpath("schema_catalog.json").read_text(encoding="utf-8")
    return load_schema(text)


def attribute_domain(schema: SchemaGraph, element: str, attribute: str) -> ValueDomain:
    if element not in schema.elements:
        raise UnknownAttribute(f"unknown element {element!r}")
    for el in schema.lineage(element):
        adef = schema.attributes.get((el, attribute))
        if adef is not None:
            return adef.domain
    raise UnknownAttribute(f"{element} has no attribute {attribute!r}")


def validate_element(schema: SchemaGraph, el: ET.Element, path: str = "") -> list[Finding]:
    path = f"{path}/{el.tag}"
    if el.tag not in schema.elements or schema.elements[el.tag].kind != "class":
        return [Finding("unknown_element", path, f"<{el.tag}> is not part of the schema subset")]
    out: list[Finding] = []
    attrs = schema.attributes_of(el.tag)
    for name, raw in el.attrib.items():
        adef = attrs.get(name)
        if adef is None:
            out.append(Finding("unknown_attribute", path, f"attribute {name!r} not allowed"))
        elif not adef.domain.contains(raw):
            out.append(Finding("domain", path, f"{name}={raw!r} outside {adef.domain.describe()}"))
    for name, adef in attrs.items():
        if adef.required and name not in el.attrib:
            out.append(Finding("missing_attribute", path, f"required attribute {name!r} missing"))

    content, allowed = schema.children_of(el.tag)
    bounds = {c: (lo, hi) for c, lo, hi in allowed}
    kids = list(elements(el))
    counts: dict[str, int] = {}
    for kid in kids:
        if kid.tag not in bounds:
            out.append(Finding("containment", path, f"<{kid.tag}> may not appear inside <{el.tag}>"))
            continue
        counts[kid.tag] = counts.get(kid.tag, 0) + 1
        out.extend(validate_element(schema, kid, path))
    if content == "choice":
        n = sum(counts.values())
        if n != 1:
            out.append(Finding("cardinality", path,
                               f"expected exactly one of {sorted(bounds)}, found {n}"))
    else:
        for cname, (lo, hi) in bounds.items():
            n = counts.get(cname, 0)
            if n < lo or (hi is not None and n > hi):
                out.append(Finding("cardinality", path,
                                   f"<{cname}> occurs {n} times, allowed [{lo}, {'*' if hi is None else hi}]"))
    return out


def validate_block(schema: SchemaGraph, block) -> ValidationReport:
    """Structural and value-domain check of a block, element or XML text.

    Never raises for invalid content; problems come back as findings.
    """
    if isinstance(block, str):
        roots = [parse_xml(block)]
    elif isinstance(block, ET.Element):
        roots = [block]
    else:
        roots = [part for _, part in block.parts]
    findings: list[Finding] = []
    for root in roots:
        findings.extend(validate_element(schema, root))
    return ValidationReport(findings)


# -- XSD export ---------------------------------------------------------------

def _xsd_attr_type(adef: AttributeDef) -> tuple[str, Optional[str]]:
    d = adef.domain
    name = f"A_{adef.element}_{adef.name}"
    if d.kind == "free_text":
        return "xs:string", None
    if d.kind == "enum_literals":
        if d.literals == ("true", "false"):
            return "xs:boolean", None
        enums = "".join(f'<xs:enumeration value="{v}"/>' for v in d.literals)
        return name, f'<xs:simpleType name="{name}"><xs:restriction base="xs:string">{enums}</xs:restriction></xs:simpleType>'
    base = "xs:int" if d.integer else "xs:double"
    facets = ""
    if math.isfinite(d.lower):
        facets += f'<xs:minInclusive value="{d.lower:.17g}"/>'
    if math.isfinite(d.upper):
        facets += f'<xs:maxInclusive value="{d.upper:.17g}"/>'
    if not facets:
        return base, None
    return name, f'<xs:simpleType name="{name}"><xs:restriction base="{base}">{facets}</xs:restriction></xs:simpleType>'


def to_xsd(schema: SchemaGraph, root: str = "OpenSCENARIO") -> str:
    """Render the graph as an XML Schema usable by an external validator."""
    parts = ['<?xml version="1.0" encoding="UTF-8"?>',
             '<xs:schema xmlns:xs="http://www.w3.org/2001/XMLSchema" elementFormDefault="qualified">']
    simple: list[str] = []
    for name, edef in schema.elements.items():
        if edef.kind != "class":
            continue
        particles = ""
        if edef.children:
            items = "".join(
                f'<xs:element name="{c}" type="T_{c}" minOccurs="{lo}" '
                f'maxOccurs="{"unbounded" if hi is None else hi}"/>'
                for c, lo, hi in edef.children)
            tag = "xs:choice" if edef.content == "choice" else "xs:sequence"
            particles = f"<{tag}>{items}</{tag}>"
        attrs = ""
        for (owner, aname), adef in schema.attributes.items():
            if owner != name:
                continue
            t, decl = _xsd_attr_type(adef)
            if decl:
                simple.append(decl)
            use = "required" if adef.required else "optional"
            attrs += f'<xs:attribute name="{aname}" type="{t}" use="{use}"/>'
        if edef.extends:
            body = (f'<xs:complexContent><xs:extension base="T_{edef.extends}">{particles}{attrs}'
                    f"</xs:extension></xs:complexContent>")
        else:
            body = particles + attrs
        parts.append(f'<xs:complexType name="T_{name}">{body}</xs:complexType>')
    parts.extend(simple)
    parts.append(f'<xs:element name="{root}" type="T_{root}"/>')
    parts.append("</xs:schema>")
    return "\n".join(parts) + "\n"
