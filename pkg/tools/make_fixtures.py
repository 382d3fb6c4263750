"""Regenerate the test fixtures under tests/fixtures.

    python tools/make_fixtures.py

Each report comes with a handwritten extraction transcript (the answers a
careful reader gives to the participants / relative_position / events
questions). From those the script derives, with the package itself:

facts/<id>.json      extracted facts
fill/<id>.json       recorded content-fill exchange
seeds/<id>.xosc      seed scenario (root seed 0)

Re-run after an intentional format change and review the diff.
"""

from __future__ import annotations

import json
from pathlib import Path

from scenforge.backends import TRANSCRIPT_FORMAT, FixtureBackend, RecordingBackend
from scenforge.document import serialize
from scenforge.map_graph import load_opendrive
from scenforge.report_extraction import extract_facts
from scenforge.scenario_gen import LocalContentBackend, generate_seed

ROOT = Path(__file__).resolve().parents[1]
FIX = ROOT / "tests" / "fixtures"
MAPS = ROOT / "src" / "scenforge" / "data" / "maps"
SEED = 0

REPORTS = {
    "left_turn": {
        "map": "crossroads.xodr",
        "text": (
            "The autonomous vehicle was travelling straight through the signalized intersection in its lane. "
            "A white sedan approaching from the opposite direction proceeded into the intersection and turned "
            "left across the path of the autonomous vehicle. The front of the autonomous vehicle made contact "
            "with the right side of the sedan. No injuries were reported."
        ),
        "participants": {
            "av": {"description": "travelling straight through the signalized intersection",
                   "location": "junction", "maneuver": "straight"},
            "npcs": [{"id": "npc1", "category": "sedan", "color": "white",
                      "description": "approaching from the opposite direction and turning left across the AV path"}],
            "obstacles": [],
        },
        "positions": {"npc1": {"rel_pos": "R2", "lane_alignment": None}},
        "events": {"npc1": {"actions": ["proceed straight", "turn left"]}},
    },
    "cross_left": {
        "map": "crossroads.xodr",
        "text": (
            "The autonomous vehicle was proceeding straight towards the intersection. A grey van on the cross "
            "street, approaching from the left of the autonomous vehicle, proceeded towards the intersection, "
            "changed lanes to the left and then turned left into the intersection, where its rear bumper "
            "contacted the front of the autonomous vehicle."
        ),
        "participants": {
            "av": {"description": "proceeding straight towards the intersection",
                   "location": "junction", "maneuver": "straight"},
            "npcs": [{"id": "npc1", "category": "van", "color": "grey",
                      "description": "on the cross street approaching from the AV's left"}],
            "obstacles": [],
        },
        "positions": {"npc1": {"rel_pos": "R1", "lane_alignment": None}},
        "events": {"npc1": {"actions": ["proceed straight", "change lane left", "turn left"]}},
    },
    "overtake": {
        "map": "multilane.xodr",
        "text": (
            "The autonomous vehicle was driving on a multi-lane road away from any intersection. A black "
            "motorcycle travelling behind it in the same lane accelerated and overtook the autonomous vehicle "
            "on the left, clipping its left mirror while passing."
        ),
        "participants": {
            "av": {"description": "driving on a multi-lane road", "location": "road", "maneuver": "straight",
                   "min_lanes": 2},
            "npcs": [{"id": "npc1", "category": "motorcycle", "color": "black",
                      "description": "behind the AV in the same lane, same direction"}],
            "obstacles": [],
        },
        "positions": {"npc1": {"rel_pos": "R5", "lane_alignment": "same_lane"}},
        "events": {"npc1": {"actions": ["proceed straight", "overtake"],
                            "parameters": [None, {"target_speed": 9.0}]}},
    },
    "bicycle_cone": {
        "map": "crossroads.xodr",
        "text": (
            "The autonomous vehicle was approaching the intersection when a cyclist riding in the adjacent lane "
            "in the same direction moved left into the lane of the autonomous vehicle. A traffic cone had been "
            "left in the lane ahead of the autonomous vehicle. The cyclist's handlebar touched the side of the "
            "autonomous vehicle."
        ),
        "participants": {
            "av": {"description": "approaching the intersection", "location": "junction", "maneuver": "straight",
                   "signal_state": "green"},
            "npcs": [{"id": "npc1", "category": "bicycle", "color": "red",
                      "description": "riding in the adjacent lane, same direction as the AV"}],
            "obstacles": [{"id": "obstacle1", "kind": "cone", "dimensions": [0.5, 0.5, 0.8],
                           "description": "in the AV's lane ahead of the AV"}],
        },
        "positions": {"npc1": {"rel_pos": "R5", "lane_alignment": "different_lane"},
                      "obstacle1": {"rel_pos": "R5", "lane_alignment": "same_lane"}},
        "events": {"npc1": {"actions": ["proceed straight", "change lane left"]}},
    },
    "debris": {
        "map": "multilane.xodr",
        "text": (
            "While driving along a straight road the autonomous vehicle struck a wooden pallet lying in its "
            "lane. No other road users were involved."
        ),
        "participants": {
            "av": {"description": "driving along a straight road", "location": "road", "maneuver": "straight"},
            "npcs": [],
            "obstacles": [{"id": "obstacle1", "kind": "pallet", "dimensions": [1.2, 1.0, 0.2],
                           "description": "lying in the AV's lane ahead"}],
        },
        "positions": {"obstacle1": {"rel_pos": "R5", "lane_alignment": None}},
        "events": {},
    },
}


def transcript(entry: dict) -> dict:
    text = entry["text"]
    ex = [{"request": {"task": "participants", "input": {"report": text}}, "response": entry["participants"]}]
    for n in entry["participants"]["npcs"]:
        ex.append({"request": {"task": "relative_position", "input": {"description": n["description"]}},
                   "response": entry["positions"][n["id"]]})
        ex.append({"request": {"task": "events", "input": {"report": text, "participant": n["id"],
                                                           "description": n["description"]}},
                   "response": entry["events"][n["id"]]})
    for o in entry["participants"]["obstacles"]:
        ex.append({"request": {"task": "relative_position", "input": {"description": o["description"]}},
                   "response": entry["positions"][o["id"]]})
    return {"format": TRANSCRIPT_FORMAT, "exchanges": ex}


def dump(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def main() -> None:
    for rid, entry in REPORTS.items():
        (FIX / "reports").mkdir(parents=True, exist_ok=True)
        (FIX / "reports" / f"{rid}.txt").write_text(entry["text"] + "\n", encoding="utf-8")
        tr = transcript(entry)
        dump(FIX / "transcripts" / f"{rid}.json", tr)
        facts = extract_facts(entry["text"], FixtureBackend(tr["exchanges"]), rid)
        (FIX / "facts").mkdir(parents=True, exist_ok=True)
        (FIX / "facts" / f"{rid}.json").write_text(facts.to_json(), encoding="utf-8")
        net = load_opendrive(MAPS / entry["map"])
        rec = RecordingBackend(LocalContentBackend())
        doc = generate_seed(net, facts, SEED, rec, map_ref=entry["map"])
        dump(FIX / "fill" / f"{rid}.json", rec.transcript())
        (FIX / "seeds").mkdir(parents=True, exist_ok=True)
        serialize(doc, FIX / "seeds" / f"{rid}.xosc")
        print(rid, entry["map"], [n.rel_pos.code + n.events.code for n in facts.npcs])
    dump(FIX / "maps.json", {rid: e["map"] for rid, e in REPORTS.items()})


if __name__ == "__main__":
    main()
