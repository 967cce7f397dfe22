"""Random topologies and trees for property tests.

Everything takes an explicit random.Random so runs are reproducible.
"""

from __future__ import annotations

import random
from typing import Optional

from .core import BitString
from .tables import backup_path, bfs_parents
from .topology import Topology, load_topology


def _add(edges: set, a: int, b: int) -> bool:
    e = (min(a, b), max(a, b))
    if a == b or e in edges:
        return False
    edges.add(e)
    return True


def ear_graph(n: int, rng: random.Random, vertex: bool = True, extra: int = 0) -> list[tuple[int, int]]:
    """Undirected simple graph on 0..n-1 built by ear decomposition.

    Open ears keep it 2-vertex-connected. With vertex=False closed ears
    (both ends on one node) are allowed too, which only guarantees
    2-edge-connectivity and usually leaves cut vertices behind.
    """
    if n < 3:
        raise ValueError("need at least 3 nodes")
    c = rng.randint(3, min(n, 6))
    edges: set = set()
    for i in range(c):
        _add(edges, i, (i + 1) % c)
    nxt = c
    while nxt < n:
        left = n - nxt
        closed = not vertex and left >= 2 and rng.random() < 0.5
        k = rng.randint(2 if closed else 1, min(left, 3))
        a = rng.randrange(nxt)
        b = a if closed else rng.choice([x for x in range(nxt) if x != a])
        chain = [a] + list(range(nxt, nxt + k)) + [b]
        for u, v in zip(chain, chain[1:]):
            _add(edges, u, v)
        nxt += k
    for _ in range(extra):
        a, b = rng.sample(range(n), 2)
        _add(edges, a, b)
    return sorted(edges)


def tree_graph(n: int, rng: random.Random, extra: int = 0) -> list[tuple[int, int]]:
    """Random connected graph: a random spanning tree plus `extra` chords."""
    edges: set = set()
    for v in range(1, n):
        _add(edges, v, rng.randrange(v))
    for _ in range(extra):
        a, b = rng.sample(range(n), 2)
        _add(edges, a, b)
    return sorted(edges)


def topology_from_edges(
    edges: list[tuple[int, int]],
    n: int,
    rng: random.Random,
    bfer_prob: float = 0.5,
    bidir_prob: float = 0.0,
    frr: str = "none",
) -> dict:
    """Topology document for SI 0 with N0 as BFIR and S-BFIR.

    Each undirected edge becomes either two directed adjacencies or one
    bidir adjacency sharing a bit. At least one node other than N0 is a
    BFER.
    """
    names = [f"N{i}" for i in range(n)]
    bfers = [i for i in range(1, n) if rng.random() < bfer_prob]
    if not bfers:
        bfers = [rng.randrange(1, n)]
    links = []
    bit = 1
    for a, b in edges:
        if rng.random() < bidir_prob:
            links.append({"from": names[a], "to": names[b], "bit": bit, "bidir": True})
            bit += 1
        else:
            links.append({"from": names[a], "to": names[b], "bit": bit})
            links.append({"from": names[b], "to": names[a], "bit": bit + 1})
            bit += 2
    for i in bfers:
        links.append({"from": names[i], "kind": "decap", "bit": bit})
        bit += 1
    bsl = max(8, -(-(bit - 1) // 8) * 8)
    nodes = []
    for i, name in enumerate(names):
        roles = ["BFIR", "S-BFIR"] if i == 0 else ["BFR"]
        if i in bfers:
            roles.append("BFER")
        nodes.append({"id": name, "roles": roles})
    return {
        "bsl": bsl,
        "nodes": nodes,
        "links": links,
        "subsets": [{"si": 0, "ingresses": [names[0]], "frr": frr}],
    }


def random_tree(
    t: Topology, si: int, root: str, rng: random.Random, receivers: Optional[list[str]] = None
) -> tuple[BitString, list[str]]:
    """Random arborescence from `root` towards a random non-empty set of BFERs.

    Returns the encoded BitString (tree links plus decap bits) and the
    receivers. The spanning arborescence is grown by picking a random
    frontier adjacency each step, so trees are not just shortest paths.
    """
    parent = {}
    reached = {root}
    while True:
        frontier = [
            a for n in sorted(reached) for a in t.owned(n, si) if not a.is_decap and a.dst not in reached
        ]
        if not frontier:
            break
        a = rng.choice(frontier)
        parent[a.dst] = a
        reached.add(a.dst)
    bfers = sorted(n for n in reached if t.decap_bit(n, si) is not None)
    if receivers is None:
        k = rng.randint(1, len(bfers))
        receivers = sorted(rng.sample(bfers, k))
    bits = set()
    for r in receivers:
        n = r
        while n != root:
            a = parent[n]
            bits.add(a.bit)
            n = a.src
        bits.add(t.decap_bit(r, si))
    return BitString.from_positions(t.bsl, bits), list(receivers)


def with_group(doc: dict, gid: str, receivers: list[str], tree: Optional[BitString] = None, si: int = 0) -> dict:
    out = dict(doc)
    item: dict = {"id": gid, "receivers": list(receivers)}
    if tree is not None:
        item["trees"] = {si: list(tree.positions())}
    out["groups"] = [item]
    return out


def random_instance(
    rng: random.Random,
    n: Optional[int] = None,
    shape: str = "connected",
    frr: str = "none",
    bidir_prob: float = 0.2,
    max_nodes: int = 12,
) -> tuple[Topology, BitString, list[str]]:
    """Topology with group 'G' whose tree is random.

    shape: 'connected' (random tree plus chords), 'edge' (2-edge-connected)
    or 'vertex' (2-vertex-connected).
    """
    n = n or rng.randint(3, max_nodes)
    extra = rng.randint(0, n // 2)
    if shape == "connected":
        edges = tree_graph(n, rng, extra)
    elif shape in ("edge", "vertex"):
        edges = ear_graph(n, rng, vertex=shape == "vertex", extra=extra)
    else:
        raise ValueError(f"unknown shape {shape!r}")
    doc = topology_from_edges(edges, n, rng, bidir_prob=bidir_prob, frr=frr)
    base = load_topology(doc)
    tree, receivers = random_tree(base, 0, "N0", rng)
    return load_topology(with_group(doc, "G", receivers, tree)), tree, receivers


def tree_edges(t: Topology, si: int, tree: BitString) -> list:
    """Non-decap adjacencies whose bits are set in `tree`."""
    return [a for a in t.adjacencies_in(si) if not a.is_decap and tree.test(a.bit)]


def reachable(t: Topology, si: int, src: str) -> set[str]:
    return set(bfs_parents(t, si, src)) | {src}


def random_bitstring(width: int, rng: random.Random, density: float = 0.5) -> BitString:
    bits = [p for p in range(1, width + 1) if rng.random() < density]
    return BitString.from_positions(width, bits)


def node_backup_is_duplicate_free(t: Topology, tree: BitString, failed: str, si: int = 0) -> bool:
    """True when node protection of `failed` cannot duplicate packets for `tree`.

    The backup paths that fire (one per next-next hop in the tree) must form
    an arborescence rooted at the PLR, and none of their nodes apart from
    the next-next hops may be on the tree, where set tree bits would
    trigger extra copies.
    """
    edges = tree_edges(t, si, tree)
    into = [a for a in edges if a.dst == failed]
    if len(into) != 1:
        return False
    plr = into[0].src
    on_tree = {a.src for a in edges} | {a.dst for a in edges}
    nnhs = sorted({a.dst for a in edges if a.src == failed})
    used = set()
    for n in nnhs:
        path = backup_path(t, si, plr, n, banned_nodes={failed})
        if path is None:
            return False
        used.update(path)
    heads = [a.dst for a in used]
    if len(set(heads)) != len(heads) or plr in heads:
        return False
    return all(h in nnhs or h not in on_tree for h in heads)
