"""Control-plane compiler: Topology -> per-node forwarding tables."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .core import BitString
from .topology import (
    BFER,
    BFIR,
    CONNECTED,
    ROUTED,
    S_BFIR,
    BFR,
    Adjacency,
    Topology,
    adjacent_bits,
)

DEFAULT_SBTAFT_CAP = 10

FWD_CONNECTED = "forward_connected"
FWD_ROUTED = "forward_routed"
ACT_DECAP = "decap"

MPLS_FORWARD = "forward"
MPLS_POP_BIERTE = "pop_bierte"
MPLS_POP_SBTAFT = "pop_sbtaft"


class CompileError(ValueError):
    """The topology cannot be compiled into consistent tables."""


@dataclass(frozen=True)
class BiftEntry:
    si: int
    key_bit: int
    fbm: BitString
    action: str
    next_hop: Optional[str] = None
    path: tuple[str, ...] = ()

    def describe(self) -> str:
        if self.action == FWD_CONNECTED:
            return f"forward_connected({self.next_hop})"
        if self.action == FWD_ROUTED:
            return f"forward_routed({'>'.join(self.path)})"
        return "decap"


@dataclass(frozen=True)
class BtaftEntry:
    si: int
    protected_bit: int
    nnh_bit: Optional[int]
    reset: BitString
    add: BitString


@dataclass(frozen=True)
class SBtaftEntry:
    si: int
    protected_ingress: str
    nnh_combination: BitString
    reset: BitString
    add: BitString


@dataclass(frozen=True)
class MeptEntry:
    node: str
    primary_label: int
    primary_next: str
    backup_label: int
    backup_next: str


@dataclass(frozen=True)
class MplsAction:
    kind: str
    next_hop: Optional[str] = None
    protected_ingress: Optional[str] = None

    def describe(self) -> str:
        if self.kind == MPLS_FORWARD:
            return f"forward({self.next_hop})"
        if self.kind == MPLS_POP_SBTAFT:
            return f"pop_sbtaft({self.protected_ingress})"
        return "pop_bierte"


@dataclass(frozen=True)
class IpTarget:
    si: int
    bs_template: BitString
    label: Optional[int]
    ingress: str


@dataclass(frozen=True)
class IpEncapEntry:
    bfir: str
    group: str
    targets: tuple[IpTarget, ...]


@dataclass
class NodeTables:
    node: str
    adjacent: dict[int, BitString] = field(default_factory=dict)
    bift: dict[tuple[int, int], BiftEntry] = field(default_factory=dict)
    btaft: dict[tuple[int, int], list[BtaftEntry]] = field(default_factory=dict)
    btaft_mode: dict[int, str] = field(default_factory=dict)
    sbtaft: dict[tuple[int, str], dict[int, SBtaftEntry]] = field(default_factory=dict)
    sbtaft_keys: dict[tuple[int, str], BitString] = field(default_factory=dict)
    mept: dict[int, MeptEntry] = field(default_factory=dict)
    mpls: dict[int, MplsAction] = field(default_factory=dict)
    ip: dict[str, IpEncapEntry] = field(default_factory=dict)


@dataclass
class TableSet:
    bsl: int
    nodes: dict[str, NodeTables]

    def __getitem__(self, node: str) -> NodeTables:
        return self.nodes[node]


# -- path search -------------------------------------------------------------


def _usable(a: Adjacency, banned_edges: set, banned_nodes: set) -> bool:
    if a.is_decap or a.dst in banned_nodes:
        return False
    if a.kind == ROUTED and any(n in banned_nodes for n in a.path[1:-1]):
        return False
    return not any(e in banned_edges for e in a.underlay_edges())


def bfs_parents(
    t: Topology,
    si: int,
    src: str,
    banned_edges: Iterable = (),
    banned_nodes: Iterable = (),
) -> dict[str, Adjacency]:
    """Shortest-path parent adjacency per reachable node.

    Adjacencies are expanded in ascending bit order from a FIFO queue, so
    the recovered path to each node is the shortest one and, among those,
    the lexicographically smallest bit sequence.
    """
    banned_edges, banned_nodes = set(banned_edges), set(banned_nodes)
    parent: dict[str, Adjacency] = {}
    seen = {src}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for a in t.owned(u, si):
            if a.dst in seen or not _usable(a, banned_edges, banned_nodes):
                continue
            seen.add(a.dst)
            parent[a.dst] = a
            queue.append(a.dst)
    return parent


def _trace_back(parent: dict[str, Adjacency], src: str, dst: str) -> Optional[list[Adjacency]]:
    if dst == src:
        return []
    if dst not in parent:
        return None
    path = []
    n = dst
    while n != src:
        a = parent[n]
        path.append(a)
        n = a.src
    return path[::-1]


def backup_path(t, si, src, dst, banned_edges=(), banned_nodes=()) -> Optional[list[Adjacency]]:
    return _trace_back(bfs_parents(t, si, src, banned_edges, banned_nodes), src, dst)


def _mask(t: Topology, bits: Iterable[int]) -> BitString:
    return BitString.from_positions(t.bsl, bits)


# -- builders ----------------------------------------------------------------


def build_bift(t: Topology, node: str) -> list[BiftEntry]:
    if not t.nodes.get(node, frozenset()) & {BFR, S_BFIR, BFER}:
        return []
    entries = []
    for si in t.sis:
        owned = t.owned(node, si)
        if not owned:
            continue
        fbm = ~adjacent_bits(t, node, si)
        for a in owned:
            if a.kind == CONNECTED:
                entries.append(BiftEntry(si, a.bit, fbm, FWD_CONNECTED, a.dst))
            elif a.kind == ROUTED:
                entries.append(BiftEntry(si, a.bit, fbm, FWD_ROUTED, a.dst, a.path))
            else:
                entries.append(BiftEntry(si, a.bit, fbm, ACT_DECAP))
    return entries


def build_btaft(t: Topology, node: str, mode: str, si: Optional[int] = None) -> list[BtaftEntry]:
    """Link or node protection entries for the connected adjacencies of `node`."""
    if mode not in ("link", "node"):
        raise ValueError(f"mode must be 'link' or 'node', not {mode!r}")
    sis = t.sis if si is None else [si]
    entries = []
    for s in sis:
        for a in t.owned(node, s):
            if a.kind != CONNECTED:
                continue
            if mode == "link":
                path = backup_path(t, s, node, a.dst, banned_edges={frozenset((node, a.dst))})
                if path is None:
                    raise CompileError(f"no link-disjoint backup path protects {a}")
                entries.append(BtaftEntry(s, a.bit, None, _mask(t, [a.bit]), _mask(t, [p.bit for p in path])))
                continue
            failed = a.dst
            parent = bfs_parents(t, s, node, banned_nodes={failed})
            for nnh in t.owned(failed, s):
                if nnh.is_decap:
                    continue
                path = _trace_back(parent, node, nnh.dst)
                if path is None:
                    raise CompileError(
                        f"no backup path from {node} to next-next hop {nnh.dst} avoiding {failed}; "
                        f"cannot node-protect {a}"
                    )
                entries.append(
                    BtaftEntry(s, a.bit, nnh.bit, _mask(t, [a.bit, nnh.bit]), _mask(t, [p.bit for p in path]))
                )
    return entries


def _sbtaft_singletons(t: Topology, backup: str, protected: str, si: int) -> list[tuple[int, BitString, BitString]]:
    parent = bfs_parents(t, si, backup, banned_nodes={protected})
    out = []
    for a in t.owned(protected, si):
        if a.is_decap or a.dst == backup:
            add = t.zeros()
        else:
            path = _trace_back(parent, backup, a.dst)
            if path is None:
                raise CompileError(
                    f"backup ingress {backup} cannot reach {a.dst} without {protected}; cannot protect {a}"
                )
            add = _mask(t, [p.bit for p in path])
        out.append((a.bit, _mask(t, [a.bit]), add))
    return out


def build_sbtaft(
    t: Topology,
    backup: str,
    protected_ingress: str,
    si: Optional[int] = None,
    cap: int = DEFAULT_SBTAFT_CAP,
) -> list[SBtaftEntry]:
    """One entry per non-empty combination of the protected ingress's bits."""
    if si is None:
        sis = [s.si for s in t.subsets.values() if s.protection.get(protected_ingress) == backup]
        if len(sis) != 1:
            raise CompileError(f"{backup} is not the backup ingress of {protected_ingress} in exactly one subset")
        si = sis[0]
    singles = _sbtaft_singletons(t, backup, protected_ingress, si)
    k = len(singles)
    if k > cap:
        raise CompileError(
            f"protected ingress {protected_ingress} has {k} adjacency bits, above the S-BTAFT "
            f"combination cap {cap}; split the subset or move the ingress"
        )
    zero = t.zeros()
    comb = [zero] * (1 << k)
    reset = [zero] * (1 << k)
    add = [zero] * (1 << k)
    entries = []
    for m in range(1, 1 << k):
        low = (m & -m).bit_length() - 1
        rest = m & (m - 1)
        bit, r, a = singles[low]
        comb[m] = comb[rest].set(bit)
        reset[m] = reset[rest] | r
        add[m] = add[rest] | a
        entries.append(SBtaftEntry(si, protected_ingress, comb[m], reset[m], add[m]))
    entries.sort(key=lambda e: e.nnh_combination.value)
    return entries


def build_mept(t: Topology) -> list[MeptEntry]:
    protected = {p for s in t.subsets.values() for p in s.protection}
    entries = []
    for tn in t.tunnels:
        if tn.dst in protected and tn.backup is None:
            raise CompileError(f"tunnel {tn.src}->{tn.dst} (label {tn.label}) ends at a protected ingress but has no backup")
        if tn.backup is None:
            continue
        entries.append(MeptEntry(tn.plr, tn.label, tn.dst, tn.backup.label, tn.backup.hops[1]))
    return sorted(entries, key=lambda e: (e.node, e.primary_label))


def build_mpls(t: Topology) -> dict[str, dict[int, MplsAction]]:
    table: dict[str, dict[int, MplsAction]] = {}

    def put(node, label, action):
        slot = table.setdefault(node, {})
        if label in slot and slot[label] != action:
            raise CompileError(f"label {label} maps to two actions at {node}")
        slot[label] = action

    for tn in t.tunnels:
        if len(tn.hops) < 2:
            continue
        for here, nxt in zip(tn.hops, tn.hops[1:]):
            put(here, tn.label, MplsAction(MPLS_FORWARD, nxt))
        put(tn.dst, tn.label, MplsAction(MPLS_POP_BIERTE))
        if tn.backup:
            bh = tn.backup.hops
            for here, nxt in zip(bh, bh[1:]):
                put(here, tn.backup.label, MplsAction(MPLS_FORWARD, nxt))
            put(tn.backup.ingress, tn.backup.label, MplsAction(MPLS_POP_SBTAFT, protected_ingress=tn.dst))
    return table


def shortest_path_tree(t: Topology, si: int, root: str, receivers: Iterable[str]) -> BitString:
    """Bits of the BFS tree from `root` to every receiver, plus their decap bits."""
    parent = bfs_parents(t, si, root)
    bits = set()
    for r in receivers:
        path = _trace_back(parent, root, r)
        if path is None:
            raise CompileError(f"receiver {r} unreachable from {root} in SI {si}")
        bits.update(a.bit for a in path)
        bits.add(t.decap_bit(r, si))
    return _mask(t, bits)


def build_ip(t: Topology, groups: Optional[dict] = None) -> list[IpEncapEntry]:
    """Per-BFIR encapsulation entries; each group is split by subset."""
    if groups is None:
        groups = {g.gid: g for g in t.groups.values()}
    entries = []
    for gid in sorted(groups):
        g = groups[gid]
        receivers = getattr(g, "receivers", g)
        trees = getattr(g, "trees", {}) or {}
        bfirs = getattr(g, "bfirs", ()) or t.nodes_with(BFIR)
        by_si: dict[int, list[str]] = {}
        for r in sorted(receivers):
            sis = t.bfer_sis(r)
            if not sis:
                raise CompileError(f"group {gid} references BFER {r} in no subset")
            by_si.setdefault(sis[0], []).append(r)
        templates = {}
        for si, members in sorted(by_si.items()):
            sub = t.subsets.get(si)
            if sub is None or sub.primary is None:
                raise CompileError(f"group {gid}: SI {si} has no ingress")
            if si in trees:
                template = _mask(t, trees[si])
                stray = set(trees[si]) - set(t.member_bits(si))
                if stray:
                    raise CompileError(f"group {gid}: bits {sorted(stray)} are not members of SI {si}")
                decaps = {b for b in trees[si] if any(a.is_decap for a in t.by_bit(si, b))}
                want = {t.decap_bit(r, si) for r in members}
                if decaps != want:
                    raise CompileError(f"group {gid}: SI {si} tree decap bits {sorted(decaps)} != receivers' {sorted(want)}")
            else:
                template = shortest_path_tree(t, si, sub.primary, members)
            templates[si] = (template, sub.primary)
        for bfir in bfirs:
            targets = []
            for si, (template, ingress) in templates.items():
                if bfir == ingress:
                    targets.append(IpTarget(si, template, None, ingress))
                    continue
                tn = t.tunnel(bfir, ingress)
                if tn is None:
                    raise CompileError(f"group {gid}: no tunnel from {bfir} to S-BFIR {ingress} of SI {si}")
                targets.append(IpTarget(si, template, tn.label, ingress))
            entries.append(IpEncapEntry(bfir, gid, tuple(targets)))
    return sorted(entries, key=lambda e: (e.bfir, e.group))


def compile_tables(
    t: Topology,
    frr: Optional[str] = None,
    sbtaft_cap: int = DEFAULT_SBTAFT_CAP,
) -> TableSet:
    """Compile every table for every node.

    `frr` overrides the per-subset FRR mode ('none', 'link' or 'node').
    """
    if frr not in (None, "none", "link", "node"):
        raise ValueError(f"bad frr mode {frr!r}")
    nodes = {n: NodeTables(n) for n in sorted(t.nodes)}
    for n, nt in nodes.items():
        for si in t.sis:
            bits = adjacent_bits(t, n, si)
            if bits:
                nt.adjacent[si] = bits
        for e in build_bift(t, n):
            nt.bift[(e.si, e.key_bit)] = e

    for sub in t.subsets.values():
        mode = frr or sub.frr
        if mode == "none":
            continue
        for n, nt in nodes.items():
            if not any(a.kind == CONNECTED for a in t.owned(n, sub.si)):
                continue
            nt.btaft_mode[sub.si] = mode
            for e in build_btaft(t, n, mode, sub.si):
                nt.btaft.setdefault((e.si, e.protected_bit), []).append(e)

    for sub in t.subsets.values():
        for protected, backup in sorted(sub.protection.items()):
            entries = build_sbtaft(t, backup, protected, sub.si, sbtaft_cap)
            key = (sub.si, protected)
            nodes[backup].sbtaft[key] = {e.nnh_combination.value: e for e in entries}
            nodes[backup].sbtaft_keys[key] = adjacent_bits(t, protected, sub.si)

    for e in build_mept(t):
        nodes[e.node].mept[e.primary_label] = e
    for n, labels in build_mpls(t).items():
        nodes[n].mpls.update(sorted(labels.items()))
    for e in build_ip(t):
        nodes[e.bfir].ip[e.group] = e
    return TableSet(t.bsl, nodes)


def dump_tables(ts: TableSet) -> str:
    """Stable text dump, one section per node, entries sorted by (si, key)."""
    lines = [f"# bierte tables bsl={ts.bsl}"]
    for n in sorted(ts.nodes):
        nt = ts.nodes[n]
        lines.append(f"[{n}]")
        for si, bits in sorted(nt.adjacent.items()):
            lines.append(f"adjacent si={si} {bits}")
        for (si, bit), e in sorted(nt.bift.items()):
            key = BitString.from_positions(ts.bsl, [bit])
            lines.append(f"bift si={si} key={key} fbm={e.fbm} {e.describe()}")
        for si, mode in sorted(nt.btaft_mode.items()):
            lines.append(f"btaft-mode si={si} {mode}")
        for (si, bit), es in sorted(nt.btaft.items()):
            for e in sorted(es, key=lambda e: e.nnh_bit or 0):
                nnh = "-" if e.nnh_bit is None else str(e.nnh_bit)
                lines.append(f"btaft si={si} protected={bit} nnh={nnh} reset={e.reset} add={e.add}")
        for (si, p), table in sorted(nt.sbtaft.items()):
            for _, e in sorted(table.items()):
                lines.append(
                    f"sbtaft si={si} protected={p} comb={e.nnh_combination} reset={e.reset} add={e.add}"
                )
        for label, e in sorted(nt.mept.items()):
            lines.append(
                f"mept label={label} primary_next={e.primary_next} "
                f"backup_label={e.backup_label} backup_next={e.backup_next}"
            )
        for label, act in sorted(nt.mpls.items()):
            lines.append(f"mpls label={label} {act.describe()}")
        for gid, e in sorted(nt.ip.items()):
            for tg in e.targets:
                label = "-" if tg.label is None else str(tg.label)
                lines.append(f"ip group={gid} si={tg.si} bs={tg.bs_template} label={label} ingress={tg.ingress}")
    return "\n".join(lines) + "\n"
