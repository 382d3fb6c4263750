"""Regenerate the bundled OpenDRIVE fixture maps.

    python tools/make_maps.py

crossroads.xodr  four-way signalized junction; west/east approaches have a
                 dedicated left-turn lane (3 inbound lanes), north/south
                 approaches have 2 inbound lanes.
multilane.xodr   junction-free roads, one of them an arc.
"""

from __future__ import annotations

import math
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "scenforge" / "data" / "maps"
W = 3.5
HALF = 10.0
ARM = 100.0


def header(name: str) -> str:
    return (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        "<OpenDRIVE>\n"
        f'  <header revMajor="1" revMinor="4" name="{name}" version="1.0"/>\n'
    )


def lane(lid: int, ltype: str = "driving", mark: str | None = None, links: tuple | None = None) -> str:
    link = ""
    if links:
        pred, succ = links
        parts = []
        if pred is not None:
            parts.append(f'<predecessor id="{pred}"/>')
        if succ is not None:
            parts.append(f'<successor id="{succ}"/>')
        link = "<link>" + "".join(parts) + "</link>"
    rm = f'<roadMark sOffset="0" type="broken" laneChange="{mark}"/>' if mark else ""
    return (f'          <lane id="{lid}" type="{ltype}" level="false">{link}'
            f'<width sOffset="0" a="{W}" b="0" c="0" d="0"/>{rm}</lane>\n')


def lanes_xml(left: list[str], right: list[str]) -> str:
    out = '    <lanes>\n      <laneSection s="0">\n'
    if left:
        out += "        <left>\n" + "".join(left) + "        </left>\n"
    out += '        <center><lane id="0" type="none" level="false"/></center>\n'
    if right:
        out += "        <right>\n" + "".join(right) + "        </right>\n"
    return out + "      </laneSection>\n    </lanes>\n"


def geom(x: float, y: float, hdg: float, length: float, curvature: float = 0.0) -> str:
    kind = "<line/>" if curvature == 0.0 else f'<arc curvature="{curvature:.6f}"/>'
    return (f'    <planView><geometry s="0" x="{x:.6f}" y="{y:.6f}" hdg="{hdg:.6f}" '
            f'length="{length:.6f}">{kind}</geometry></planView>\n')


def crossroads() -> str:
    # arm id -> (position angle of the arm around the centre, inbound lane count)
    arms = {"1": (math.pi, 3), "2": (math.pi / 2, 2), "3": (0.0, 3), "4": (3 * math.pi / 2, 2)}
    by_angle = {round(a % (2 * math.pi), 6): rid for rid, (a, _) in arms.items()}

    def arm_at(angle: float) -> str:
        return by_angle[round(angle % (2 * math.pi), 6)]

    out = header("crossroads")
    for rid, (phi, n_in) in arms.items():
        hdg = phi + math.pi  # travel toward the centre
        sx, sy = (HALF + ARM) * math.cos(phi), (HALF + ARM) * math.sin(phi)
        out += f'  <road name="arm_{rid}" length="{ARM:.6f}" id="{rid}" junction="-1">\n'
        out += '    <link><successor elementType="junction" elementId="100"/></link>\n'
        out += geom(sx, sy, hdg, ARM)
        left = [lane(1, mark="both"), lane(2)]
        right = []
        for k in range(1, n_in + 1):
            right.append(lane(-k, mark="both" if k < n_in else "none"))
        right.append(lane(-(n_in + 1), "sidewalk"))
        out += lanes_xml(left, right)
        t = -(n_in * W + 1.0)
        out += ("    <signals>\n"
                f'      <signal s="{ARM - 2:.1f}" t="{t:.1f}" id="s{rid}" name="light_{rid}" dynamic="yes" '
                'orientation="+" zOffset="0" country="OpenDRIVE" type="1000001" subtype="-1" '
                'value="-1" height="0.8" width="0.3"/>\n'
                "    </signals>\n")
        out += "  </road>\n"

    conns = []
    next_id = 500
    for rid, (phi, n_in) in arms.items():
        hdg = phi + math.pi
        x0, y0 = HALF * math.cos(phi), HALF * math.sin(phi)
        movements = [
            ("left", arm_at(phi - math.pi / 2), 1.0 / HALF, [(1, 1)]),
            ("straight", arm_at(phi + math.pi), 0.0,
             [(k, j + 1) for j, k in enumerate(range(n_in - 1, n_in + 1) if n_in == 3 else range(1, n_in + 1))]),
            ("right", arm_at(phi + math.pi / 2), -1.0 / HALF, [(n_in, 2)]),
        ]
        for turn, exit_arm, kappa, links in movements:
            cid = str(next_id)
            next_id += 1
            length = 2 * HALF if kappa == 0.0 else (math.pi / 2) / abs(kappa)
            out += f'  <road name="{turn}_{rid}_{exit_arm}" length="{length:.6f}" id="{cid}" junction="100">\n'
            out += ("    <link>"
                    f'<predecessor elementType="road" elementId="{rid}" contactPoint="end"/>'
                    f'<successor elementType="road" elementId="{exit_arm}" contactPoint="end"/>'
                    "</link>\n")
            out += geom(x0, y0, hdg, length, kappa)
            used = {k for k, _ in links}
            right = [lane(-k, links=(-k, dict(links)[k]) if k in used else None)
                     for k in range(1, max(used) + 1)]
            out += lanes_xml([], right)
            out += "  </road>\n"
            conns.append((cid, rid, links))

    out += '  <junction id="100" name="crossroads">\n'
    for n, (cid, rid, links) in enumerate(conns):
        out += f'    <connection id="{n}" incomingRoad="{rid}" connectingRoad="{cid}" contactPoint="start">\n'
        for k, _ in links:
            out += f'      <laneLink from="{-k}" to="{-k}"/>\n'
        out += "    </connection>\n"
    out += "  </junction>\n</OpenDRIVE>\n"
    return out


def multilane() -> str:
    out = header("multilane")
    out += '  <road name="main" length="200.000000" id="10" junction="-1">\n'
    out += '    <link><successor elementType="road" elementId="11" contactPoint="start"/></link>\n'
    out += geom(0.0, 0.0, 0.0, 200.0)
    out += lanes_xml([], [lane(-1, mark="both"), lane(-2, mark="both"), lane(-3)])
    out += "  </road>\n"
    out += '  <road name="bend" length="100.000000" id="11" junction="-1">\n'
    out += '    <link><predecessor elementType="road" elementId="10" contactPoint="end"/></link>\n'
    out += geom(200.0, 0.0, 0.0, 100.0, 0.005)
    out += lanes_xml([lane(1, mark="both"), lane(2)], [lane(-1, mark="both"), lane(-2)])
    out += "  </road>\n"
    out += '  <road name="single" length="150.000000" id="12" junction="-1">\n'
    out += geom(0.0, 50.0, 0.0, 150.0)
    out += lanes_xml([lane(1)], [lane(-1)])
    out += "  </road>\n"
    out += '  <road name="avenue" length="120.000000" id="13" junction="-1">\n'
    out += geom(0.0, 100.0, 0.0, 120.0)
    out += lanes_xml([], [lane(-1, mark="both"), lane(-2), lane(-3, "sidewalk")])
    out += "  </road>\n"
    return out + "</OpenDRIVE>\n"


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "crossroads.xodr").write_text(crossroads(), encoding="utf-8")
    (OUT / "multilane.xodr").write_text(multilane(), encoding="utf-8")
    print("wrote", OUT)
