"""Command-line front end.

Stages talk through files: map dump JSON, facts JSON, seed ``.xosc``, tree
directory, findings JSON plus a trigger CSV. Every command is
deterministic given its inputs, configuration and ``--seed``.

Exit codes: 0 ok, 1 usage/config, 2 io, 3 map, 4 schema, 5 extraction,
6 backend, 7 placement, 8 generation, 9 mutation, 10 assembly, 11 oracle.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path
from typing import Optional

import click

from .config import TOOL_VERSION, PipelineConfig, load_operator_config, load_pipeline_config, read_text
from .errors import BackendError, IoError, ScenforgeError


@contextmanager
def _executor(jobs: int):
    if jobs <= 1:
        yield None
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            yield pool


def _write(path: str | Path, text: str) -> None:
    from .xmlutil import atomic_write

    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        atomic_write(path, text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from None


class Ctx:
    def __init__(self, cfg: PipelineConfig, seed: Optional[int], jobs: Optional[int]):
        self.cfg = cfg
        self.seed = cfg.seed if seed is None else seed
        self.jobs = cfg.jobs if jobs is None else jobs

    def schema(self):
        from .schema_model import default_schema, load_schema

        return load_schema(read_text(self.cfg.schema_catalog)) if self.cfg.schema_catalog else default_schema()

    def operators(self, override: Optional[str] = None) -> dict:
        return load_operator_config(override or self.cfg.operator_config)

    def network(self, override: Optional[str]):
        from .map_graph import load_opendrive

        path = override or self.cfg.map_path
        if not path:
            raise click.UsageError("no map given (use --map or map_path in the config)")
        return load_opendrive(path)


class _Group(click.Group):
    def main(self, *args, standalone_mode: bool = True, **kwargs):
        if not standalone_mode:
            return super().main(*args, standalone_mode=False, **kwargs)
        # click exits 2 on usage errors; 2 is reserved for io here
        try:
            rv = super().main(*args, standalone_mode=False, **kwargs)
        except click.UsageError as exc:
            exc.show()
            sys.exit(1)
        except click.ClickException as exc:
            exc.show()
            sys.exit(exc.exit_code)
        except click.Abort:
            click.echo("Aborted!", err=True)
            sys.exit(1)
        sys.exit(rv if isinstance(rv, int) else 0)

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except ScenforgeError as exc:
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            ctx.exit(exc.exit_code)


@click.group(cls=_Group)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Pipeline configuration JSON.")
@click.option("--seed", type=int, default=None, help="Root seed (overrides the config).")
@click.option("--jobs", type=int, default=None, help="Worker threads for grow/analyze.")
@click.option("-v", "--verbose", is_flag=True)
@click.version_option(TOOL_VERSION, prog_name="scenforge")
@click.pass_context
def main(ctx, config_path, seed, jobs, verbose):
    """Crash-report driven scenario generation and mutation."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_pipeline_config(config_path)
    except ScenforgeError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        ctx.exit(exc.exit_code)
    ctx.obj = Ctx(cfg, seed, jobs)


@main.command("build-map")
@click.argument("map_path", type=click.Path(dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.pass_obj
def build_map(obj: Ctx, map_path, output):
    """Parse an OpenDRIVE map and write its lane-graph dump."""
    from .map_graph import load_opendrive, to_json

    net = load_opendrive(map_path)
    _write(output, to_json(net))
    click.echo(f"{len(net.segments)} segments, {len(net.edges)} edges -> {output}")


@main.command()
@click.argument("report_path", type=click.Path(dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.option("--backend", type=click.Choice(["fixture", "http"]), default=None)
@click.option("--transcript", type=click.Path(dir_okay=False), help="Recorded exchanges for the fixture backend.")
@click.option("--record", type=click.Path(dir_okay=False), help="Save the exchanges of this run.")
@click.option("--report-id", default=None)
@click.pass_obj
def extract(obj: Ctx, report_path, output, backend, transcript, record, report_id):
    """Read a crash report into facts JSON."""
    from .backends import FixtureBackend, HttpBackend, RecordingBackend
    from .report_extraction import extract_facts

    kind = backend or obj.cfg.backend
    if kind == "http":
        inner = HttpBackend()
    else:
        path = transcript or obj.cfg.transcript
        if not path:
            raise BackendError("fixture backend needs --transcript")
        inner = FixtureBackend.from_file(path)
    rec = RecordingBackend(inner)
    text = read_text(report_path)
    facts = extract_facts(text, rec, report_id or Path(report_path).stem)
    _write(output, facts.to_json())
    if record:
        _write(record, json.dumps(rec.transcript(), indent=2, sort_keys=True) + "\n")
    click.echo(f"{len(facts.npcs)} NPC(s), {len(facts.obstacles)} obstacle(s) -> {output}")


@main.command()
@click.argument("facts_path", type=click.Path(dir_okay=False))
@click.option("--map", "map_path", type=click.Path(dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.option("--transcript", type=click.Path(dir_okay=False),
              help="Replay recorded content-fill exchanges instead of the local filler.")
@click.option("--record", type=click.Path(dir_okay=False), help="Save the content-fill exchange.")
@click.pass_obj
def seed(obj: Ctx, facts_path, map_path, output, transcript, record):
    """Generate the seed scenario for a facts file."""
    from .backends import FixtureBackend, RecordingBackend
    from .document import serialize
    from .report_extraction import ReportFacts
    from .scenario_gen import LocalContentBackend, generate_seed

    try:
        facts = ReportFacts.from_json(read_text(facts_path))
    except (ValueError, KeyError, TypeError) as exc:
        raise IoError(f"{facts_path}: not a facts document ({exc})") from None
    net = obj.network(map_path)
    operators = obj.operators()
    inner = FixtureBackend.from_file(transcript) if transcript else LocalContentBackend(operators)
    rec = RecordingBackend(inner)
    doc = generate_seed(net, facts, obj.seed, rec, map_ref=Path(map_path or obj.cfg.map_path).name,
                        schema=obj.schema(), config=operators, stop_time=obj.cfg.stop_time)
    Path(output).parent.mkdir(parents=True, exist_ok=True)
    serialize(doc, output)
    if record:
        _write(record, json.dumps(rec.transcript(), indent=2, sort_keys=True) + "\n")
    click.echo(f"seed (root seed {obj.seed}) -> {output}")


@main.command()
@click.argument("seed_path", type=click.Path(dir_okay=False))
@click.option("--map", "map_path", type=click.Path(dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(file_okay=False))
@click.option("--operators", type=click.Path(dir_okay=False), help="Operator configuration JSON.")
@click.option("--retention", type=float, default=None)
@click.option("--count", type=int, default=None, help="Variants per sampled block.")
@click.pass_obj
def grow(obj: Ctx, seed_path, map_path, output, operators, retention, count):
    """Mutate the seed's blocks, grow the derivation tree, prune, and save it."""
    from .assembly import expected_count, grow_tree, mutate_all, prune, save_tree
    from .document import disassemble, load_document
    from .mutation import MutationContext

    retention = obj.cfg.retention if retention is None else retention
    if not 0 < retention <= 1:
        raise click.BadParameter("retention must lie in (0, 1]", param_hint="--retention")
    doc = load_document(seed_path)
    net = obj.network(map_path)
    config = obj.operators(operators)
    template, blocks = disassemble(doc)
    context = MutationContext.from_document(doc, net)
    with _executor(obj.jobs) as pool:
        variants = mutate_all(template, blocks, obj.seed, context=context, config=config, count=count,
                              executor=pool)
        tree = grow_tree(template, variants, obj.seed)
        pruned = prune(tree, retention, obj.seed, config=config)
        save_tree(pruned, output, {"retention": retention, "seed_file": Path(seed_path).name}, executor=pool)
    kept = sum(1 for n in pruned.leaves() if not n.pruned)
    click.echo(f"{len(tree)} nodes (expected {expected_count(tree.variant_counts)}), "
               f"{kept}/{len(tree.leaves())} leaves retained -> {output}")


@main.command()
@click.argument("tree_dir", type=click.Path(file_okay=False))
@click.argument("traces_dir", type=click.Path(file_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False), help="Findings report JSON.")
@click.option("--triggers", type=click.Path(dir_okay=False), help="Trigger table CSV.")
@click.pass_obj
def analyze(obj: Ctx, tree_dir, traces_dir, output, triggers):
    """Classify traced runs of a tree and rank trigger features by lift."""
    from .oracle import TRIGGER_HEADER, analyze_tree

    with _executor(obj.jobs) as pool:
        report, assoc = analyze_tree(tree_dir, traces_dir, obj.cfg.oracle, obj.operators(), pool)
    _write(output, json.dumps(report, indent=2, sort_keys=True) + "\n")
    if triggers:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRIGGER_HEADER)
        for a in assoc:
            w.writerow(a.to_row())
        _write(triggers, buf.getvalue())
    click.echo(f"{report['analyzed']} run(s) analysed, {len(assoc)} association(s) -> {output}")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
