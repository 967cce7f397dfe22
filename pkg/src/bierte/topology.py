"""BIER-TE domain model and topology-file ingestion.

The topology file is YAML (JSON works too). Top-level keys::

    bsl: 8                       # BitString length, 8..256
    nodes:
      - {id: BFR1, roles: [BFR]}
    links:                       # one directed adjacency each
      - {from: BFIR, to: BFR1, si: 0, bit: 1}
      - {from: BFR1, to: BFR2, si: 0, bit: 2, bidir: true}
      - {from: A, to: C, si: 0, bit: 9, kind: routed, path: [A, X, C]}
      - {from: BFER1, si: 0, bit: 7, kind: decap}
    underlay: [[A, X], [X, C]]   # extra physical links (connected links are implied)
    subsets:
      - {si: 0, ingresses: [S1, S2], protection: {S1: S2}, frr: link}
    tunnels:
      - {from: BFIR, to: S1, label: 100, hops: [BFIR, P, S1],
         backup: {label: 101, hops: [P, S2], ingress: S2}}
    groups:
      - {id: G1, receivers: [BFER1, BFER2], trees: {0: [1, 2, 4]}, bfirs: [BFIR]}

``bidir: true`` declares both directions of one physical link sharing a
single bit. ``bit`` may be omitted on every link when the file sets
``autoassign: true``.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import networkx as nx
import yaml

from .core import MAX_LABEL, BitString

BFIR = "BFIR"
S_BFIR = "S-BFIR"
BFR = "BFR"
BFER = "BFER"
ROLES = (BFIR, S_BFIR, BFR, BFER)
FORWARDING_ROLES = frozenset({S_BFIR, BFR, BFER})

CONNECTED = "connected"
ROUTED = "routed"
DECAP = "decap"
KINDS = (CONNECTED, ROUTED, DECAP)

FRR_MODES = ("none", "link", "node")


class TopologyError(ValueError):
    """Schema or invariant violation in a topology document."""


@dataclass(frozen=True)
class Adjacency:
    src: str
    dst: str
    si: int
    bit: int
    kind: str = CONNECTED
    path: tuple[str, ...] = ()

    @property
    def is_decap(self) -> bool:
        return self.kind == DECAP

    def underlay_edges(self) -> list[frozenset]:
        if self.kind == CONNECTED:
            return [frozenset((self.src, self.dst))]
        if self.kind == ROUTED:
            return [frozenset(p) for p in zip(self.path, self.path[1:])]
        return []

    def __str__(self) -> str:
        if self.is_decap:
            return f"{self.src}:decap(si={self.si},bit={self.bit})"
        return f"{self.src}->{self.dst}(si={self.si},bit={self.bit})"


@dataclass(frozen=True)
class Subset:
    si: int
    ingresses: tuple[str, ...] = ()
    protection: dict = field(default_factory=dict, hash=False)
    frr: str = "none"
    members: frozenset = frozenset()

    @property
    def primary(self) -> Optional[str]:
        return self.ingresses[0] if self.ingresses else None


@dataclass(frozen=True)
class TunnelBackup:
    label: int
    hops: tuple[str, ...]
    ingress: str


@dataclass(frozen=True)
class Tunnel:
    src: str
    dst: str
    label: int
    hops: tuple[str, ...]
    backup: Optional[TunnelBackup] = None

    @property
    def plr(self) -> Optional[str]:
        return self.hops[-2] if len(self.hops) >= 2 else None


@dataclass(frozen=True)
class Group:
    gid: str
    receivers: tuple[str, ...]
    trees: dict = field(default_factory=dict, hash=False)
    bfirs: tuple[str, ...] = ()


class Topology:
    """Cross-referenced, immutable view of one BIER-TE domain."""

    def __init__(self, bsl, nodes, adjacencies, subsets, tunnels, groups, underlay):
        self.bsl: int = bsl
        self.nodes: dict[str, frozenset] = dict(nodes)
        self.adjacencies: tuple[Adjacency, ...] = tuple(
            sorted(adjacencies, key=lambda a: (a.si, a.bit, a.src, a.dst))
        )
        self.subsets: dict[int, Subset] = dict(sorted(subsets.items()))
        self.tunnels: tuple[Tunnel, ...] = tuple(tunnels)
        self.groups: dict[str, Group] = dict(groups)
        self.underlay: nx.Graph = underlay

        self._by_bit: dict[tuple[int, int], list[Adjacency]] = defaultdict(list)
        self._owned: dict[tuple[str, int], list[Adjacency]] = defaultdict(list)
        for a in self.adjacencies:
            self._by_bit[(a.si, a.bit)].append(a)
            self._owned[(a.src, a.si)].append(a)

    def has_role(self, node: str, role: str) -> bool:
        return role in self.nodes.get(node, ())

    def nodes_with(self, role: str) -> list[str]:
        return sorted(n for n, r in self.nodes.items() if role in r)

    @property
    def sis(self) -> list[int]:
        return sorted({a.si for a in self.adjacencies} | set(self.subsets))

    def adjacencies_in(self, si: int) -> list[Adjacency]:
        return [a for a in self.adjacencies if a.si == si]

    def owned(self, node: str, si: int) -> list[Adjacency]:
        """Adjacencies whose bit this node acts on, ascending by bit."""
        return list(self._owned.get((node, si), ()))

    def by_bit(self, si: int, bit: int) -> list[Adjacency]:
        return list(self._by_bit.get((si, bit), ()))

    def decap_bit(self, node: str, si: int) -> Optional[int]:
        for a in self._owned.get((node, si), ()):
            if a.is_decap:
                return a.bit
        return None

    def member_bits(self, si: int) -> list[int]:
        return sorted({a.bit for a in self.adjacencies if a.si == si})

    def subset_nodes(self, si: int) -> list[str]:
        out = set()
        for a in self.adjacencies_in(si):
            out.add(a.src)
            out.add(a.dst)
        return sorted(out)

    def bfer_sis(self, node: str) -> list[int]:
        return sorted(a.si for a in self.adjacencies if a.is_decap and a.src == node)

    def ingress_sis(self, node: str) -> list[int]:
        return [s.si for s in self.subsets.values() if node in s.ingresses]

    def all_ingresses(self) -> set[str]:
        return {n for s in self.subsets.values() for n in s.ingresses}

    def tunnel(self, src: str, dst: str) -> Optional[Tunnel]:
        for t in self.tunnels:
            if t.src == src and t.dst == dst:
                return t
        return None

    def zeros(self) -> BitString:
        return BitString.zeros(self.bsl)


def adjacent_bits(t: Topology, node: str, si: int) -> BitString:
    """Bits of the adjacencies this node forwards on in `si`, plus its decap bit."""
    if node not in t.nodes:
        raise TopologyError(f"unknown node {node!r}")
    return BitString.from_positions(t.bsl, (a.bit for a in t.owned(node, si)))


# -- loading ---------------------------------------------------------------


def load_topology_file(path) -> Topology:
    text = Path(path).read_text()
    try:
        return load_topology(text)
    except TopologyError as exc:
        raise TopologyError(f"{path}: {exc}") from None


def load_topology(document) -> Topology:
    """Build a Topology from YAML/JSON text or an already-parsed mapping."""
    if isinstance(document, str):
        try:
            document = yaml.safe_load(document)
        except yaml.YAMLError as exc:
            raise TopologyError(f"unparseable document: {exc}") from None
    if document is None:
        document = {}
    if not isinstance(document, dict):
        raise TopologyError("top level must be a mapping")
    return _Loader(document).build()


class _Loader:
    def __init__(self, doc: dict):
        self.doc = doc

    def fail(self, where: str, msg: str):
        raise TopologyError(f"{where}: {msg}")

    def build(self) -> Topology:
        doc = self.doc
        bsl = doc.get("bsl", 256)
        if not isinstance(bsl, int) or not 8 <= bsl <= 256:
            self.fail("bsl", f"{bsl!r} not in 8..256")

        nodes = self._nodes(doc.get("nodes") or [])
        links = doc.get("links") or []
        if doc.get("autoassign"):
            links = autoassign_bits(links)
        adjacencies = self._links(links, nodes, bsl)
        underlay = self._underlay(doc.get("underlay") or [], nodes, adjacencies)
        subsets = self._subsets(doc.get("subsets") or [], nodes, adjacencies, bsl)
        tunnels = self._tunnels(doc.get("tunnels") or [], nodes, subsets, underlay)
        groups = self._groups(doc.get("groups") or [], nodes)
        self._check_non_transit(adjacencies, subsets)
        return Topology(bsl, nodes, adjacencies, subsets, tunnels, groups, underlay)

    def _nodes(self, items) -> dict[str, frozenset]:
        nodes: dict[str, frozenset] = {}
        for i, item in enumerate(items):
            where = f"nodes[{i}]"
            if not isinstance(item, dict) or "id" not in item:
                self.fail(where, "node needs an 'id'")
            nid = str(item["id"])
            roles = item.get("roles") or []
            if isinstance(roles, str):
                roles = [roles]
            if not roles:
                self.fail(where, f"node {nid} has no role")
            bad = [r for r in roles if r not in ROLES]
            if bad:
                self.fail(where, f"unknown role(s) {bad} for {nid}")
            if nid in nodes:
                self.fail(where, f"duplicate node id {nid}")
            nodes[nid] = frozenset(roles)
        return nodes

    def _links(self, items, nodes, bsl) -> list[Adjacency]:
        adjs: list[Adjacency] = []
        where_of: dict[Adjacency, str] = {}
        for i, item in enumerate(items):
            where = f"links[{i}]"
            if not isinstance(item, dict):
                self.fail(where, "link must be a mapping")
            src = item.get("from")
            kind = item.get("kind", CONNECTED)
            if kind not in KINDS:
                self.fail(where, f"unknown kind {kind!r}")
            dst = item.get("to", src if kind == DECAP else None)
            for end in (src, dst):
                if end is None:
                    self.fail(where, "missing 'from'/'to'")
                if str(end) not in nodes:
                    self.fail(where, f"dangling node reference {end!r}")
            src, dst = str(src), str(dst)
            si, bit = item.get("si", 0), item.get("bit")
            if not isinstance(si, int) or si < 0:
                self.fail(where, f"bad si {si!r}")
            if not isinstance(bit, int):
                self.fail(where, f"missing or non-integer bit {bit!r}")
            if not 1 <= bit <= bsl:
                self.fail(where, f"bit {bit} outside 1..{bsl} (member count exceeds BSL)")
            path: tuple[str, ...] = ()
            if kind == DECAP:
                if dst != src:
                    self.fail(where, "decap link must have to == from")
                if BFER not in nodes[src]:
                    self.fail(where, f"decap bit on {src}, which lacks role BFER")
            else:
                if src == dst:
                    self.fail(where, "self-loop adjacency")
                if not nodes[src] & FORWARDING_ROLES:
                    self.fail(where, f"{src} owns an adjacency but has no forwarding role")
                if kind == ROUTED:
                    path = tuple(str(n) for n in item.get("path") or ())
                    if len(path) < 2 or path[0] != src or path[-1] != dst:
                        self.fail(where, "routed path must run from 'from' to 'to'")
                    for n in path:
                        if n not in nodes:
                            self.fail(where, f"dangling node reference {n!r} in path")
            a = Adjacency(src, dst, si, bit, kind, path)
            adjs.append(a)
            where_of[a] = where
            if item.get("bidir"):
                if kind == DECAP:
                    self.fail(where, "decap links cannot be bidir")
                b = Adjacency(dst, src, si, bit, kind, tuple(reversed(path)))
                if not nodes[dst] & FORWARDING_ROLES:
                    self.fail(where, f"{dst} owns an adjacency but has no forwarding role")
                adjs.append(b)
                where_of[b] = where

        by_bit: dict[tuple[int, int], list[Adjacency]] = defaultdict(list)
        for a in adjs:
            by_bit[(a.si, a.bit)].append(a)
        for (si, bit), group in by_bit.items():
            if len(group) == 1:
                continue
            if len(group) == 2 and _reverse_pair(*group):
                continue
            self.fail(where_of[group[1]], f"duplicate bit {bit} in SI {si}")

        decaps: dict[tuple[str, int], int] = {}
        for a in adjs:
            if a.is_decap:
                if (a.src, a.si) in decaps:
                    self.fail(where_of[a], f"second decap bit for {a.src} in SI {a.si}")
                decaps[(a.src, a.si)] = a.bit
        for n, roles in sorted(nodes.items()):
            if BFER in roles and not any(k[0] == n for k in decaps):
                self.fail("links", f"BFER {n} has no decap bit")
        return adjs

    def _underlay(self, items, nodes, adjs) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(sorted(nodes))
        for i, pair in enumerate(items):
            if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                self.fail(f"underlay[{i}]", "expected a [a, b] pair")
            a, b = str(pair[0]), str(pair[1])
            for n in (a, b):
                if n not in nodes:
                    self.fail(f"underlay[{i}]", f"dangling node reference {n!r}")
            g.add_edge(a, b)
        for a in adjs:
            if a.kind == CONNECTED:
                g.add_edge(a.src, a.dst)
        for a in adjs:
            if a.kind == ROUTED:
                for x, y in zip(a.path, a.path[1:]):
                    if not g.has_edge(x, y):
                        self.fail("links", f"routed path of {a} uses {x}-{y}, not an underlay link")
        return g

    def _subsets(self, items, nodes, adjs, bsl) -> dict[int, Subset]:
        members: dict[int, set] = defaultdict(set)
        for a in adjs:
            members[a.si].add(a.bit)
        subsets: dict[int, Subset] = {}
        for i, item in enumerate(items):
            where = f"subsets[{i}]"
            si = item.get("si")
            if not isinstance(si, int) or si < 0:
                self.fail(where, f"bad si {si!r}")
            if si in subsets:
                self.fail(where, f"duplicate subset {si}")
            ingresses = tuple(str(n) for n in item.get("ingresses") or ())
            for n in ingresses:
                if n not in nodes:
                    self.fail(where, f"dangling node reference {n!r}")
                if not nodes[n] & {S_BFIR, BFIR}:
                    self.fail(where, f"ingress {n} lacks role S-BFIR")
            if len(set(ingresses)) != len(ingresses):
                self.fail(where, "repeated ingress")
            protection = {str(k): str(v) for k, v in (item.get("protection") or {}).items()}
            for k, v in protection.items():
                if k not in ingresses or v not in ingresses:
                    self.fail(where, f"protection {k}->{v} names a non-ingress")
                if k == v:
                    self.fail(where, f"{k} cannot protect itself")
            frr = item.get("frr", "none")
            if frr not in FRR_MODES:
                self.fail(where, f"frr must be one of {FRR_MODES}")
            if len(members[si]) > bsl:
                self.fail(where, f"{len(members[si])} member bits exceed BSL {bsl}")
            subsets[si] = Subset(si, ingresses, protection, frr, frozenset(members[si]))
        for si, bits in members.items():
            if si not in subsets:
                subsets[si] = Subset(si, members=frozenset(bits))
        return subsets

    def _tunnels(self, items, nodes, subsets, underlay) -> list[Tunnel]:
        labels: dict[int, str] = {}
        tunnels = []

        def take_label(label, where):
            if not isinstance(label, int) or not 0 <= label <= MAX_LABEL:
                self.fail(where, f"bad MPLS label {label!r}")
            if label in labels:
                self.fail(where, f"label {label} already used by {labels[label]}")
            labels[label] = where

        def check_hops(hops, where):
            for n in hops:
                if n not in nodes:
                    self.fail(where, f"dangling node reference {n!r}")
            for x, y in zip(hops, hops[1:]):
                if not underlay.has_edge(x, y):
                    self.fail(where, f"hop {x}-{y} is not an underlay link")

        for i, item in enumerate(items):
            where = f"tunnels[{i}]"
            src, dst = str(item.get("from")), str(item.get("to"))
            hops = tuple(str(n) for n in item.get("hops") or (src, dst))
            if src not in nodes or dst not in nodes:
                self.fail(where, "dangling node reference")
            if BFIR not in nodes[src]:
                self.fail(where, f"tunnel head {src} lacks role BFIR")
            protected_by = None
            for s in subsets.values():
                if dst in s.ingresses:
                    protected_by = s.protection.get(dst, protected_by)
                    break
            else:
                self.fail(where, f"tunnel tail {dst} is not a subset ingress")
            if hops[0] != src or hops[-1] != dst:
                self.fail(where, "hops must start at 'from' and end at 'to'")
            check_hops(hops, where)
            take_label(item.get("label"), where)
            backup = None
            if item.get("backup"):
                b = item["backup"]
                bw = where + ".backup"
                bhops = tuple(str(n) for n in b.get("hops") or ())
                bing = str(b.get("ingress", bhops[-1] if bhops else ""))
                if len(hops) < 2:
                    self.fail(bw, "a zero-length tunnel has no point of local repair")
                if len(bhops) < 2 or bhops[0] != hops[-2] or bhops[-1] != bing:
                    self.fail(bw, "backup hops must run from the penultimate hop to the backup ingress")
                if dst in bhops:
                    self.fail(bw, f"backup path must avoid protected ingress {dst}")
                if protected_by != bing:
                    self.fail(bw, f"{bing} is not configured as backup ingress of {dst}")
                check_hops(bhops, bw)
                take_label(b.get("label"), bw)
                backup = TunnelBackup(b["label"], bhops, bing)
            tunnels.append(Tunnel(src, dst, item["label"], hops, backup))
        return tunnels

    def _groups(self, items, nodes) -> dict[str, Group]:
        groups: dict[str, Group] = {}
        for i, item in enumerate(items):
            where = f"groups[{i}]"
            gid = str(item.get("id"))
            if gid in groups:
                self.fail(where, f"duplicate group {gid}")
            receivers = tuple(sorted(str(n) for n in item.get("receivers") or ()))
            for n in receivers:
                if n not in nodes:
                    self.fail(where, f"dangling node reference {n!r}")
                if BFER not in nodes[n]:
                    self.fail(where, f"receiver {n} lacks role BFER")
            trees = {int(k): tuple(sorted(int(b) for b in v)) for k, v in (item.get("trees") or {}).items()}
            bfirs = tuple(str(n) for n in item.get("bfirs") or ())
            for n in bfirs:
                if n not in nodes or BFIR not in nodes[n]:
                    self.fail(where, f"{n!r} is not a BFIR")
            groups[gid] = Group(gid, receivers, trees, bfirs)
        return groups

    def _check_non_transit(self, adjs, subsets) -> None:
        for v in transit_violations(adjs, subsets, foreign_only=True):
            node, adj = v
            self.fail("links", f"S-BFIR {node} is a transit node of {adj}")


def _reverse_pair(a: Adjacency, b: Adjacency) -> bool:
    return (
        a.kind == b.kind
        and a.kind != DECAP
        and a.src == b.dst
        and a.dst == b.src
        and a.path == tuple(reversed(b.path))
    )


def transit_violations(adjs, subsets, foreign_only: bool = False, si: Optional[int] = None):
    """(node, adjacency) pairs where an S-BFIR sits inside a routed path."""
    owners: dict[str, set] = defaultdict(set)
    for s in subsets.values():
        for n in s.ingresses:
            owners[n].add(s.si)
    out = []
    for a in adjs:
        if a.kind != ROUTED or (si is not None and a.si != si):
            continue
        for n in a.path[1:-1]:
            if n in owners and (not foreign_only or a.si not in owners[n]):
                out.append((n, a))
    return out


def autoassign_bits(links: list[dict]) -> list[dict]:
    """Number links lacking a bit per SI, sorted by (from, to), from 1 upward."""
    out = [dict(item) for item in links]
    used: dict[int, set] = defaultdict(set)
    for item in out:
        if isinstance(item.get("bit"), int):
            used[item.get("si", 0)].add(item["bit"])
    pending = [item for item in out if not isinstance(item.get("bit"), int)]
    pending.sort(key=lambda d: (d.get("si", 0), str(d["from"]), str(d.get("to", d["from"]))))
    for item in pending:
        si = item.get("si", 0)
        bit = 1
        while bit in used[si]:
            bit += 1
        item["bit"] = bit
        used[si].add(bit)
    return out


# -- serialization ---------------------------------------------------------


def topology_document(t: Topology) -> dict:
    """Inverse of load_topology; shared-bit pairs collapse to one bidir link."""
    links = []
    seen = set()
    for a in t.adjacencies:
        if (a.si, a.bit) in seen:
            continue
        seen.add((a.si, a.bit))
        item: dict = {"from": a.src, "to": a.dst, "si": a.si, "bit": a.bit}
        if a.kind != CONNECTED:
            item["kind"] = a.kind
        if a.kind == DECAP:
            del item["to"]
        if a.kind == ROUTED:
            item["path"] = list(a.path)
        if len(t.by_bit(a.si, a.bit)) == 2:
            item["bidir"] = True
        links.append(item)
    implied = {frozenset((a.src, a.dst)) for a in t.adjacencies if a.kind == CONNECTED}
    underlay = sorted(
        sorted(e) for e in (frozenset(e) for e in t.underlay.edges()) if e not in implied
    )
    doc = {
        "bsl": t.bsl,
        "nodes": [{"id": n, "roles": [r for r in ROLES if r in rs]} for n, rs in sorted(t.nodes.items())],
        "links": links,
        "underlay": [list(e) for e in underlay],
        "subsets": [
            {"si": s.si, "ingresses": list(s.ingresses), "protection": dict(s.protection), "frr": s.frr}
            for s in t.subsets.values()
        ],
        "tunnels": [],
        "groups": [],
    }
    for tn in t.tunnels:
        item = {"from": tn.src, "to": tn.dst, "label": tn.label, "hops": list(tn.hops)}
        if tn.backup:
            item["backup"] = {"label": tn.backup.label, "hops": list(tn.backup.hops), "ingress": tn.backup.ingress}
        doc["tunnels"].append(item)
    for g in t.groups.values():
        item = {"id": g.gid, "receivers": list(g.receivers)}
        if g.trees:
            item["trees"] = {si: list(bits) for si, bits in sorted(g.trees.items())}
        if g.bfirs:
            item["bfirs"] = list(g.bfirs)
        doc["groups"].append(item)
    return doc


def dump_topology(t: Topology) -> str:
    return yaml.safe_dump(topology_document(t), sort_keys=False, default_flow_style=None)
