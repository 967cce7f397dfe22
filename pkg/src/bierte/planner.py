"""Subset diagnostics and greedy virtual-link repair."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import networkx as nx

from .topology import (
    ROUTED,
    Topology,
    load_topology,
    topology_document,
    transit_violations,
)

EDGE = "edge"
VERTEX = "vertex"


@dataclass(frozen=True)
class VirtualLink:
    src: str
    dst: str
    path: tuple[str, ...]


@dataclass
class SubsetDiagnostics:
    si: int
    used_bits: int
    bsl: int
    two_edge_connected: bool
    two_vertex_connected: bool
    bridges: list[tuple[str, str]]
    articulation_points: list[str]
    ingress_ok: bool
    non_transit_ok: bool
    suggested_virtual_links: list[VirtualLink] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def bs_usage(self) -> float:
        return self.used_bits / self.bsl

    def connected_enough(self, mode: str) -> bool:
        return self.two_edge_connected if mode == EDGE else self.two_vertex_connected

    def to_dict(self) -> dict:
        return {
            "si": self.si,
            "bs_usage": f"{self.used_bits}/{self.bsl}",
            "two_edge_connected": self.two_edge_connected,
            "two_vertex_connected": self.two_vertex_connected,
            "bridges": [list(b) for b in self.bridges],
            "articulation_points": list(self.articulation_points),
            "ingress_ok": self.ingress_ok,
            "non_transit_ok": self.non_transit_ok,
            "suggested_virtual_links": [
                {"from": v.src, "to": v.dst, "path": list(v.path)} for v in self.suggested_virtual_links
            ],
            "notes": list(self.notes),
        }


def subset_graph(t: Topology, si: int) -> nx.MultiGraph:
    """Undirected multigraph of a subset.

    One edge per physical link or routed path, however many directed
    adjacencies ride on it. Each edge carries the underlay edges it uses.
    """
    g = nx.MultiGraph()
    seen = set()
    for a in t.adjacencies_in(si):
        g.add_node(a.src)
        if a.is_decap:
            continue
        g.add_node(a.dst)
        key = (a.kind, frozenset(a.underlay_edges()), frozenset((a.src, a.dst)))
        if key in seen:
            continue
        seen.add(key)
        g.add_edge(a.src, a.dst, underlay=tuple(sorted(tuple(sorted(e)) for e in a.underlay_edges())))
    return g


def _connectivity(g: nx.MultiGraph) -> tuple[bool, bool, list, list]:
    n = g.number_of_nodes()
    if n <= 1:
        return True, True, [], []
    connected = nx.is_connected(g)
    bridges = sorted(tuple(sorted(e)) for e in nx.bridges(g))
    simple = nx.Graph(g)
    aps = sorted(nx.articulation_points(simple))
    two_edge = connected and not bridges
    if n == 2:
        two_vertex = two_edge
    else:
        two_vertex = connected and not aps
    return two_edge, two_vertex, bridges, aps


def validate_subset(t: Topology, si: int, mode: str = EDGE) -> SubsetDiagnostics:
    if si not in t.subsets:
        raise KeyError(f"no subset {si}")
    if mode not in (EDGE, VERTEX):
        raise ValueError(f"mode must be {EDGE!r} or {VERTEX!r}")
    g = subset_graph(t, si)
    two_edge, two_vertex, bridges, aps = _connectivity(g)
    notes = []
    if g.number_of_nodes() > 1 and not nx.is_connected(g):
        notes.append("subset graph is disconnected")
    sub = t.subsets[si]
    diag = SubsetDiagnostics(
        si=si,
        used_bits=len(t.member_bits(si)),
        bsl=t.bsl,
        two_edge_connected=two_edge,
        two_vertex_connected=two_vertex,
        bridges=bridges,
        articulation_points=aps,
        ingress_ok=len(sub.ingresses) >= 2,
        non_transit_ok=not transit_violations(t.adjacencies, t.subsets, si=si),
        notes=notes,
    )
    if diag.used_bits > t.bsl:
        diag.notes.append("member bits exceed BSL")
    if not diag.connected_enough(mode):
        links, notes = suggest_virtual_links(t, si, mode)
        diag.suggested_virtual_links = links
        diag.notes.extend(notes)
    return diag


def _underlay_path(
    t: Topology, src: str, dst: str, avoid_nodes: set, avoid_edges: set
) -> Optional[tuple[str, ...]]:
    """BFS over the physical underlay, neighbours in sorted order."""
    prev = {src: None}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        if u == dst:
            break
        for w in sorted(t.underlay.neighbors(u)):
            if w in prev or frozenset((u, w)) in avoid_edges:
                continue
            if w != dst and w in avoid_nodes:
                continue
            prev[w] = u
            queue.append(w)
    if dst not in prev:
        return None
    path = [dst]
    while prev[path[-1]] is not None:
        path.append(prev[path[-1]])
    return tuple(reversed(path))


def _components(g: nx.MultiGraph, mode: str) -> list[frozenset]:
    if mode == EDGE:
        h = nx.MultiGraph(g)
        h.remove_edges_from(_all_bridges(g))
        return [frozenset(c) for c in nx.connected_components(h)]
    comps = [frozenset(c) for c in nx.biconnected_components(nx.Graph(g))]
    covered = set().union(*comps) if comps else set()
    comps += [frozenset([n]) for n in g.nodes if n not in covered]
    return comps


def _all_bridges(g: nx.MultiGraph) -> list:
    out = []
    for comp in nx.connected_components(g):
        out.extend(nx.bridges(g.subgraph(comp)))
    return out


def _component_tree(comps: list[frozenset], mode: str, g) -> nx.Graph:
    """Bridge tree (edge mode) or block-cut tree (vertex mode) over components."""
    tree = nx.Graph()
    for i, _ in enumerate(comps):
        tree.add_node(("c", i))
    if mode == EDGE:
        where = {n: i for i, c in enumerate(comps) for n in c}
        for u, v in g.edges():
            if where[u] != where[v]:
                tree.add_edge(("c", where[u]), ("c", where[v]))
    else:
        for i, c in enumerate(comps):
            for j in range(i + 1, len(comps)):
                shared = c & comps[j]
                for n in shared:
                    tree.add_edge(("c", i), ("a", n))
                    tree.add_edge(("c", j), ("a", n))
    return tree


def suggest_virtual_links(t: Topology, si: int, mode: str = EDGE) -> tuple[list[VirtualLink], list[str]]:
    """Greedy repair until the subset graph is 2-connected in `mode`.

    Each round joins the two components that are farthest apart in the
    component tree through the shortest underlay path that avoids the
    current bridges (edge mode) or cut vertices (vertex mode) and every
    foreign S-BFIR. Not optimal.
    """
    g = subset_graph(t, si)
    foreign = t.all_ingresses() - set(t.subsets[si].ingresses)
    budget = t.bsl - len(t.member_bits(si))
    links: list[VirtualLink] = []
    notes: list[str] = []
    for _ in range(2 * max(1, g.number_of_nodes())):
        two_edge, two_vertex, bridges, aps = _connectivity(g)
        if (two_edge if mode == EDGE else two_vertex) and nx.is_connected(g):
            return links, notes
        # two nodes joined by one link form a single block; only edge repair applies
        m = EDGE if g.number_of_nodes() == 2 else mode
        comps = _components(g, m)
        tree = _component_tree(comps, m, g)
        reps = {i: _representative(c, set(aps)) for i, c in enumerate(comps)}
        avoid_edges = _bridge_underlay(g) if m == EDGE else set()
        avoid_nodes = set(foreign) | (set(aps) if m == VERTEX else set())
        candidates = []
        for i in range(len(comps)):
            for j in range(i + 1, len(comps)):
                a, b = reps[i], reps[j]
                if a == b:
                    continue
                try:
                    d = nx.shortest_path_length(tree, ("c", i), ("c", j))
                except nx.NetworkXNoPath:
                    d = len(tree) + 1
                candidates.append((-d, min(a, b), max(a, b)))
        chosen = None
        for _, a, b in sorted(candidates):
            path = _underlay_path(t, a, b, avoid_nodes, avoid_edges | _used_edges(g, a, b))
            if path is not None:
                chosen = VirtualLink(a, b, path)
                break
        if chosen is None:
            notes.append("irreparable: underlay offers no path avoiding the cut elements")
            return links, notes
        if budget < 1:
            notes.append("budget exceeded: no bits left for further virtual links")
            return links, notes
        budget -= 1
        links.append(chosen)
        g.add_edge(chosen.src, chosen.dst)
    notes.append("irreparable: repair did not converge")
    return links, notes


def _bridge_underlay(g: nx.MultiGraph) -> set:
    out = set()
    for u, v in _all_bridges(g):
        for data in g.get_edge_data(u, v).values():
            out |= {frozenset(e) for e in data.get("underlay", ())}
    return out


def _used_edges(g, a, b) -> set:
    # a virtual link parallel to an existing direct link adds nothing for edge cuts
    return {frozenset((a, b))} if g.has_edge(a, b) else set()


def _representative(comp: frozenset, aps: set) -> str:
    plain = sorted(n for n in comp if n not in aps)
    return plain[0] if plain else sorted(comp)[0]


def apply_virtual_links(t: Topology, si: int, links: list[VirtualLink]) -> Topology:
    """Return a new Topology with each virtual link added as a routed bidir pair."""
    doc = topology_document(t)
    used = set(t.member_bits(si))
    for v in links:
        bit = 1
        while bit in used:
            bit += 1
        used.add(bit)
        doc["links"].append(
            {"from": v.src, "to": v.dst, "si": si, "bit": bit, "kind": ROUTED, "path": list(v.path), "bidir": True}
        )
    return load_topology(doc)
