"""Small ElementTree helpers shared by the scenario modules."""

from __future__ import annotations

import math
import os
import tempfile
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Iterator, Optional


def parse_xml(text: str) -> ET.Element:
    """Parse ``text`` keeping comments (the metadata block lives in one)."""
    parser = ET.XMLParser(target=ET.TreeBuilder(insert_comments=True))
    parser.feed(text)
    return parser.close()


def is_comment(el: ET.Element) -> bool:
    return el.tag is ET.Comment


def elements(el: ET.Element) -> Iterator[ET.Element]:
    """Child elements, comments skipped."""
    return (c for c in el if not is_comment(c))


def clone(el: ET.Element) -> ET.Element:
    """Deep copy of an element subtree; much cheaper than copy.deepcopy."""
    out = ET.Element(el.tag, dict(el.attrib)) if el.tag is not ET.Comment else ET.Comment(el.text)
    out.text, out.tail = el.text, el.tail
    out.extend(clone(c) for c in el)
    return out


def to_text(el: ET.Element, *, declaration: bool = True) -> str:
    el = clone(el)
    ET.indent(el, space="  ")
    body = ET.tostring(el, encoding="unicode")
    if declaration:
        return '<?xml version="1.0" encoding="UTF-8"?>\n' + body + "\n"
    return body


def canonical(el: ET.Element) -> str:
    """Whitespace- and comment-insensitive rendering used for equality checks."""
    parts: list[str] = []

    def walk(e: ET.Element) -> None:
        attrs = " ".join(f'{k}="{v}"' for k, v in sorted(e.attrib.items()))
        text = (e.text or "").strip()
        parts.append(f"<{e.tag} {attrs}>{text}")
        for c in elements(e):
            walk(c)
        parts.append(f"</{e.tag}>")

    walk(el)
    return "".join(parts)


def structurally_equal(a: ET.Element, b: ET.Element) -> bool:
    return canonical(a) == canonical(b)


def fmt(value: float) -> str:
    """Stable textual form for numeric attributes."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if not math.isfinite(value):
        raise ValueError(f"non-finite value {value!r}")
    out = f"{value:.6f}".rstrip("0").rstrip(".")
    return "0" if out in ("-0", "") else out


def find_one(root: ET.Element, path: str) -> Optional[ET.Element]:
    return root.find(path)


def atomic_write(path: os.PathLike | str, data: str) -> None:
    """Write-then-rename so readers never see a partial file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
