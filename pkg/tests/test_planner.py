import itertools
import random

import networkx as nx
import pytest

from bierte.planner import (
    EDGE,
    VERTEX,
    apply_virtual_links,
    subset_graph,
    suggest_virtual_links,
    validate_subset,
)
from bierte.generate import topology_from_edges, tree_graph
from bierte.topology import load_topology, topology_document



def ring(n=6, members=None, ingresses=(), bsl=16):
    """n-node physical ring; SI 0 holds bidir links between consecutive members."""
    names = [f"R{i}" for i in range(n)]
    members = names if members is None else members
    links = []
    bit = 1
    for a, b in zip(names, names[1:] + names[:1]):
        if a in members and b in members:
            links.append({"from": a, "to": b, "bit": bit, "bidir": True})
            bit += 1
    roles = {n: ["S-BFIR"] if n in ingresses else ["BFR"] for n in names}
    return load_topology(
        {
            "bsl": bsl,
            "nodes": [{"id": n, "roles": roles[n]} for n in names],
            "links": links,
            "underlay": [[a, b] for a, b in zip(names, names[1:] + names[:1])],
            "subsets": [{"si": 0, "ingresses": list(ingresses)}],
        }
    )


def test_full_ring_is_two_connected():
    d = validate_subset(ring(), 0, EDGE)
    assert d.two_edge_connected and d.two_vertex_connected
    assert d.bridges == [] and d.suggested_virtual_links == []


@pytest.mark.parametrize("mode", [EDGE, VERTEX])
def test_arc_is_not_two_connected(mode):
    t = ring(members=["R0", "R1", "R2", "R3"])
    d = validate_subset(t, 0, mode)
    assert not d.two_edge_connected and not d.two_vertex_connected
    assert d.bridges == [("R0", "R1"), ("R1", "R2"), ("R2", "R3")]
    assert d.articulation_points == ["R1", "R2"]


def _min_augmentation(t, si, candidates):
    """Smallest number of extra edges (from candidates) that makes the subset 2-edge-connected."""
    g = nx.MultiGraph(subset_graph(t, si))
    for k in range(0, len(candidates) + 1):
        for combo in itertools.combinations(candidates, k):
            h = g.copy()
            h.add_edges_from(combo)
            if nx.is_connected(h) and not list(nx.bridges(h)):
                return k
    return None


def test_arc_repair_is_minimal_and_avoids_the_arc():
    members = ["R0", "R1", "R2", "R3"]
    t = ring(members=members)
    links, notes = suggest_virtual_links(t, 0, EDGE)
    assert notes == []
    assert _min_augmentation(t, 0, list(itertools.combinations(members, 2))) == len(links) == 1
    (v,) = links
    assert (v.src, v.dst, v.path) == ("R0", "R3", ("R0", "R5", "R4", "R3"))
    fixed = apply_virtual_links(t, 0, links)
    d = validate_subset(fixed, 0, EDGE)
    assert d.two_edge_connected and d.two_vertex_connected
    assert d.used_bits == 4


def test_ingress_count():
    assert not validate_subset(ring(ingresses=["R0"]), 0).ingress_ok
    assert validate_subset(ring(ingresses=["R0", "R3"]), 0).ingress_ok


def test_irreparable_over_single_underlay_edge():
    doc = {
        "bsl": 8,
        "nodes": [{"id": n, "roles": ["BFR"]} for n in "ABCDEF"],
        "links": [
            {"from": a, "to": b, "bit": i + 1, "bidir": True}
            for i, (a, b) in enumerate([("A", "B"), ("B", "C"), ("C", "A"), ("C", "D"), ("D", "E"), ("E", "F"), ("F", "D")])
        ],
        "subsets": [{"si": 0, "ingresses": []}],
    }
    t = load_topology(doc)
    d = validate_subset(t, 0, EDGE)
    assert d.bridges == [("C", "D")]
    assert d.suggested_virtual_links == []
    assert any(n.startswith("irreparable") for n in d.notes)


def test_budget_exceeded():
    t = ring(members=["R0", "R1", "R2", "R3"], bsl=8)
    # use up the remaining bits of the 8-bit BSL with parallel links off the arc
    doc = topology_document(t)
    doc["links"].append({"from": "R4", "to": "R5", "si": 0, "bit": 4})
    doc["links"] += [{"from": "R5", "to": "R4", "si": 0, "bit": b} for b in range(5, 9)]
    d = validate_subset(load_topology(doc), 0, EDGE)
    assert d.used_bits == 8
    assert any("budget exceeded" in n for n in d.notes)


def test_suggestions_never_transit_foreign_ingress():
    t = ring(members=["R0", "R1", "R2", "R3"])
    doc = topology_document(t)
    doc["nodes"] = [dict(n, roles=["S-BFIR"]) if n["id"] == "R4" else n for n in doc["nodes"]]
    doc["links"].append({"from": "R4", "to": "R5", "si": 1, "bit": 1})
    doc["subsets"].append({"si": 1, "ingresses": ["R4"]})
    d = validate_subset(load_topology(doc), 0, EDGE)
    assert d.suggested_virtual_links == []
    assert any(n.startswith("irreparable") for n in d.notes)


def test_vertex_mode_repair():
    # a bowtie: two triangles sharing X, with an underlay detour between them
    doc = {
        "bsl": 16,
        "nodes": [{"id": n, "roles": ["BFR"]} for n in ["A", "B", "X", "C", "D", "U"]],
        "links": [
            {"from": a, "to": b, "bit": i + 1, "bidir": True}
            for i, (a, b) in enumerate([("A", "B"), ("B", "X"), ("X", "A"), ("X", "C"), ("C", "D"), ("D", "X")])
        ],
        "underlay": [["A", "U"], ["U", "D"]],
        "subsets": [{"si": 0, "ingresses": []}],
    }
    t = load_topology(doc)
    d = validate_subset(t, 0, VERTEX)
    assert d.two_edge_connected and not d.two_vertex_connected
    assert d.articulation_points == ["X"]
    assert validate_subset(t, 0, EDGE).suggested_virtual_links == []
    assert all("X" not in v.path for v in d.suggested_virtual_links)
    fixed = apply_virtual_links(t, 0, d.suggested_virtual_links)
    assert validate_subset(fixed, 0, VERTEX).two_vertex_connected


def test_fixture_subsets_diagnostics(two_subsets):
    d1 = validate_subset(two_subsets, 1, EDGE)
    assert d1.ingress_ok and d1.non_transit_ok
    assert validate_subset(two_subsets, 2, EDGE).ingress_ok is False


def test_every_emitted_suggestion_certifies():
    rng = random.Random(8)
    certified = 0
    for _ in range(40):
        n = rng.randint(4, 9)
        edges = tree_graph(n, rng, extra=rng.randint(0, 2))
        doc = topology_from_edges(edges, n, rng, bidir_prob=1.0)
        # the physical underlay is a ring through every node plus the tree edges
        doc["underlay"] = [[f"N{i}", f"N{(i + 1) % n}"] for i in range(n)]
        doc["bsl"] = 32
        t = load_topology(doc)
        for mode in (EDGE, VERTEX):
            d = validate_subset(t, 0, mode)
            if d.suggested_virtual_links and not d.notes:
                certified += 1
                fixed = apply_virtual_links(t, 0, d.suggested_virtual_links)
                assert validate_subset(fixed, 0, mode).connected_enough(mode)
            if d.connected_enough(mode):
                assert d.suggested_virtual_links == []
            else:
                assert d.suggested_virtual_links or d.notes
    assert certified >= 20


def test_two_node_subset_in_vertex_mode():
    t = ring(members=["R0", "R1"])
    d = validate_subset(t, 0, VERTEX)
    assert not d.two_vertex_connected
    (v,) = d.suggested_virtual_links
    assert v.path == ("R0", "R5", "R4", "R3", "R2", "R1")
    assert validate_subset(apply_virtual_links(t, 0, [v]), 0, VERTEX).two_vertex_connected
