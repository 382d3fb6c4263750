import itertools
import json

import pytest
from hypothesis import given, settings, strategies as st

from scenforge.assembly import (bin_index, diff_derivation, expected_count, feature_vector, grow_tree,
                                load_manifest, mutate_all, prune, retained_count, save_tree)
from scenforge.config import default_operator_config
from scenforge.document import compose, disassemble, load_document
from scenforge.errors import AssemblyError, InvalidOrder
from scenforge.mutation import MutationContext, make_spec, mutate_block
from scenforge.document import validate_document
from scenforge.schema_model import default_schema

from conftest import block_variants, network_for, seed_for

import numpy as np


@pytest.mark.parametrize("counts,n", [([2, 2, 2], 14), ([3, 2], 9), ([1], 1), ([1, 1, 1], 3), ([], 0)])
def test_expected_count(counts, n):
    assert expected_count(counts) == n


def test_expected_count_rejects_zero():
    with pytest.raises(ValueError):
        expected_count([2, 0])


def _brute_count(counts):
    # enumerate every non-empty prefix of a choice vector
    return sum(len(list(itertools.product(*[range(m) for m in counts[:k]]))) for k in range(1, len(counts) + 1))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 3), min_size=1, max_size=4))
def test_tree_size_matches_formula(counts):
    template, variants = block_variants("left_turn", counts)
    tree = grow_tree(template, variants)
    assert len(tree) == expected_count(counts) == _brute_count(counts)
    assert len(tree.leaves()) == int(np.prod(counts))


def test_small_tree_structure():
    template, variants = block_variants("left_turn", [3, 2])
    tree = grow_tree(template, variants)
    assert len(tree) == 9
    assert len(tree.leaves()) == 6
    assert tree.root.children == ["1", "2", "3"]
    assert tree.nodes["1"].children == ["4", "5"]
    assert [n.depth for n in tree.leaves()] == [2] * 6
    for parent, child in tree.edges():
        assert int(parent) < int(child)


def test_two_three_two():
    template, variants = block_variants("left_turn", [3, 2, 2])
    tree = grow_tree(template, variants)
    assert len(tree) == 3 + 6 + 12
    template, variants = block_variants("left_turn", [2, 2, 2])
    assert len(grow_tree(template, variants)) == 14


def test_out_of_order_rejected():
    template, variants = block_variants("left_turn", [2, 2, 2])
    with pytest.raises(InvalidOrder):
        grow_tree(template, [variants[1], variants[0], variants[2]])


def test_empty_variants_rejected():
    template, variants = block_variants("left_turn", [2, 2])
    with pytest.raises(AssemblyError):
        grow_tree(template, [variants[0], (variants[1][0], [])])


def test_edges_add_recorded_block():
    template, variants = block_variants("cross_left", [2, 2, 2, 2, 2])
    tree = grow_tree(template, variants)
    assert len(tree) == 62
    schema = default_schema()
    for parent, child in tree.edges():
        node = tree.nodes[child]
        delta = diff_derivation(tree.nodes[parent].document, node.document)
        assert delta.kind == "block_added"
        assert delta.block == node.inserted.block
        assert validate_document(node.document, schema).ok


def test_diff_kinds():
    template, variants = block_variants("left_turn", [2, 2])
    tree = grow_tree(template, variants)
    a, b = tree.nodes["1"].document, tree.nodes["2"].document
    assert diff_derivation(a, a).kind == "none"
    assert diff_derivation(a, b).kind == "attribute_changed"
    assert diff_derivation(seed_for("left_turn"), seed_for("overtake")).kind == "divergent"


def test_bin_index():
    assert bin_index(75, 50, 100) == 2
    assert bin_index(50, 50, 100) == 0
    assert bin_index(100, 50, 100) == 4
    assert bin_index(49, 50, 100) == 0
    assert bin_index(1e9, 50, 100) == 4
    assert bin_index(51, 50, 100) == bin_index(59, 50, 100)


@given(st.floats(-1e6, 1e6, allow_nan=False), st.floats(-100, 100), st.floats(0.001, 100))
def test_bin_index_in_range(v, lo, width):
    assert 0 <= bin_index(v, lo, lo + width) <= 4


def _weather_with_visibility(vis):
    doc = seed_for("left_turn")
    template, blocks = disassemble(doc)
    w = blocks[0]
    w.part("init.global").find(".//Fog").set("visualRange", str(vis))
    return compose(template, blocks)


def test_features_bin_numeric_values():
    # sunny visibility range is [1000, 10000]: 1100 and 2700 share bin 0
    assert feature_vector(_weather_with_visibility(1100)) == feature_vector(_weather_with_visibility(2700))
    assert feature_vector(_weather_with_visibility(1100)) != feature_vector(_weather_with_visibility(9000))


def test_features_distinguish_signal_states():
    doc = seed_for("left_turn")
    template, blocks = disassemble(doc)
    sig = next(b for b in blocks if b.kind == "traffic_signal")
    vs = mutate_block(sig, make_spec("TSM_signal"), 3, np.random.default_rng(0))
    feats = {v.provenance[0][2]: feature_vector(compose(template, [v.block if b is sig else b for b in blocks]))
             for v in vs}
    assert feats["green"] != feats["red"]
    assert "signal.s2.state=green" in feats["green"].items()


@pytest.mark.parametrize("size,r,n", [(2, 0.5, 1), (3, 0.5, 2), (1, 0.1, 1), (30, 0.1, 3), (10, 1.0, 10), (7, 0.3, 3)])
def test_retained_count(size, r, n):
    assert retained_count(size, r) == n


def _leaf_tree(counts):
    template, variants = block_variants("left_turn", counts)
    return grow_tree(template, variants)


def test_prune_four_clusters_of_two():
    tree = _leaf_tree([2, 2, 2])
    leaves = tree.leaves()
    clusters = {leaf.id: i // 2 for i, leaf in enumerate(leaves)}
    out = prune(tree, 0.5, 7, feature_fn=lambda n: clusters[n.id])
    kept = [n for n in out.leaves() if not n.pruned]
    assert len(kept) == 4
    assert sorted({clusters[n.id] for n in kept}) == [0, 1, 2, 3]


def test_prune_cluster_of_three():
    tree = _leaf_tree([3])
    out = prune(tree, 0.5, 1, feature_fn=lambda n: "same")
    assert sum(not n.pruned for n in out.leaves()) == 2


def test_prune_full_retention_is_identity():
    tree = _leaf_tree([2, 2])
    out = prune(tree, 1.0, 0)
    assert [n.pruned for n in out.nodes.values()] == [False] * len(tree.nodes)
    assert out is not tree


def test_prune_rejects_bad_retention():
    with pytest.raises(ValueError):
        prune(_leaf_tree([2]), 0.0, 0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=1, max_size=24), st.floats(0.05, 1.0), st.integers(0, 2**32))
def test_prune_per_cluster_invariants(labels, r, seed):
    template, variants = block_variants("left_turn", [2])
    # synthetic single-level tree with len(labels) leaves, reusing one variant
    vs = [variants[0][1][k % 2] for k in range(len(labels))]
    tree = grow_tree(template, [(variants[0][0], vs)])
    label = {leaf.id: labels[i] for i, leaf in enumerate(tree.leaves())}
    out = prune(tree, r, seed, feature_fn=lambda n: label[n.id])
    for c in set(labels):
        members = [n for n in out.leaves() if label[n.id] == c]
        kept = sum(not n.pruned for n in members)
        assert kept == retained_count(len(members), r) >= 1
    again = prune(tree, r, seed, feature_fn=lambda n: label[n.id])
    assert [n.pruned for n in out.nodes.values()] == [n.pruned for n in again.nodes.values()]


def test_prune_internal_nodes_follow_children():
    tree = _leaf_tree([2, 2])
    out = prune(tree, 0.5, 3, feature_fn=lambda n: n.parent)
    for node in out.nodes.values():
        if node.children:
            assert node.pruned == all(out.nodes[c].pruned for c in node.children)
    assert not out.root.pruned


def test_mutate_all_and_save(tmp_path):
    doc = seed_for("bicycle_cone")
    template, blocks = disassemble(doc)
    ctx = MutationContext.from_document(doc, network_for("bicycle_cone"))
    variants = mutate_all(template, blocks, 11, context=ctx)
    again = mutate_all(template, blocks, 11, context=ctx)
    assert [[v.xml for v in vs] for _, vs in variants] == [[v.xml for v in vs] for _, vs in again]
    tree = grow_tree(template, variants, 11)
    assert len(tree) == expected_count(tree.variant_counts)
    pruned = prune(tree, 0.5, 11)
    path = save_tree(pruned, tmp_path, {"retention": 0.5})
    data = load_manifest(tmp_path)
    assert data["expected_count"] == len(tree) and data["retention"] == 0.5
    assert len(data["nodes"]) == len(tree.nodes)
    leaf = pruned.leaves()[0]
    assert load_document(tmp_path / f"node_{leaf.id}.xosc").text() == leaf.document.text()
    assert json.loads(path.read_text())["seed"] == 11


def test_mutate_all_inserts_obstacle_when_absent():
    doc = seed_for("left_turn")
    template, blocks = disassemble(doc)
    ctx = MutationContext.from_document(doc, network_for("left_turn"))
    assert all(b.kind != "obstacle" for b, _ in mutate_all(template, blocks, 0, context=ctx))
    config = default_operator_config()
    config["plan"]["insert_obstacle"] = True
    variants = mutate_all(template, blocks, 0, context=ctx, config=config)
    assert variants[-1][0].kind == "obstacle"
    assert len(grow_tree(template, variants)) == expected_count([len(vs) for _, vs in variants])


def test_load_manifest_rejects_foreign(tmp_path):
    (tmp_path / "tree.json").write_text('{"format": "other"}')
    with pytest.raises(AssemblyError):
        load_manifest(tmp_path)
