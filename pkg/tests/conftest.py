import json
from importlib import resources
from pathlib import Path

import pytest

from scenforge.backends import FixtureBackend
from scenforge.document import load_document
from scenforge.map_graph import load_opendrive
from scenforge.report_extraction import ReportFacts

FIXTURES = Path(__file__).parent / "fixtures"
MAPS = Path(str(resources.files("scenforge.data").joinpath("maps")))
REPORT_IDS = ("left_turn", "cross_left", "overtake", "bicycle_cone", "debris")
MAP_OF = json.loads((FIXTURES / "maps.json").read_text())

STRAIGHT_ROAD = """<?xml version="1.0"?>
<OpenDRIVE>
  <header revMajor="1" revMinor="4" name="straight"/>
  <road name="r" length="100" id="1" junction="-1">
    <planView><geometry s="0" x="0" y="0" hdg="0" length="100"><line/></geometry></planView>
    <lanes><laneSection s="0">
      <left><lane id="1" type="driving"><width sOffset="0" a="3.5" b="0" c="0" d="0"/></lane></left>
      <center><lane id="0" type="none"/></center>
      <right><lane id="-1" type="driving"><width sOffset="0" a="3.5" b="0" c="0" d="0"/></lane></right>
    </laneSection></lanes>
  </road>
</OpenDRIVE>
"""


@pytest.fixture(scope="session")
def crossroads():
    return load_opendrive(MAPS / "crossroads.xodr")


@pytest.fixture(scope="session")
def multilane():
    return load_opendrive(MAPS / "multilane.xodr")


def network_for(report_id):
    return load_opendrive(MAPS / MAP_OF[report_id])


def facts_for(report_id) -> ReportFacts:
    return ReportFacts.from_json((FIXTURES / "facts" / f"{report_id}.json").read_text())


def seed_for(report_id):
    return load_document(FIXTURES / "seeds" / f"{report_id}.xosc")


def transcript_backend(report_id) -> FixtureBackend:
    return FixtureBackend.from_file(FIXTURES / "transcripts" / f"{report_id}.json")


def report_text(report_id) -> str:
    return (FIXTURES / "reports" / f"{report_id}.txt").read_text()


def block_variants(report_id, counts, seed=0):
    """(template, [(block, variants[:m]), ...]) for the first len(counts) blocks of a fixture seed."""
    import numpy as np

    from scenforge.document import disassemble
    from scenforge.mutation import MutationContext, default_spec_for, mutate_block

    doc = seed_for(report_id)
    ctx = MutationContext.from_document(doc, network_for(report_id))
    template, blocks = disassemble(doc)
    out = []
    for i, (block, m) in enumerate(zip(blocks, counts)):
        spec = default_spec_for(block, i, context=ctx)
        vs = mutate_block(block, spec, max(m, 1), np.random.default_rng([seed, i]), ctx)
        assert len(vs) >= m
        out.append((block, vs[:m]))
    return template, out
