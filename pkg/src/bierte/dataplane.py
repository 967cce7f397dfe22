"""Per-node packet processing: the IP, MPLS and BIER-TE chains.

Every chain returns a HopOutput. Recirculation counts model a switch
pipeline that copies and recirculates: one per matched BIFT entry, one
per matched NNH entry in the BTAFT loop plus the final pass, one per
subset-tunnel decapsulation and one per IP encapsulation copy. They are bookkeeping only and never change
forwarding results.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .core import BierTeHeader, BitString, MplsHeader, Packet
from .tables import (
    ACT_DECAP,
    FWD_CONNECTED,
    MPLS_FORWARD,
    MPLS_POP_BIERTE,
    MPLS_POP_SBTAFT,
    TableSet,
)

EMIT_ADJACENCY = "adjacency"
EMIT_ROUTED = "routed"
EMIT_TUNNEL = "tunnel"


class ConsistencyError(RuntimeError):
    """Tables violate a guarantee the compiler is supposed to provide."""


class PortState:
    """Link and node liveness. A down node takes all its ports down."""

    def __init__(self):
        self.links_down: set[frozenset] = set()
        self.nodes_down: set[str] = set()

    def link_down(self, a: str, b: str) -> None:
        self.links_down.add(frozenset((a, b)))

    def link_up(self, a: str, b: str) -> None:
        self.links_down.discard(frozenset((a, b)))

    def node_down(self, n: str) -> None:
        self.nodes_down.add(n)

    def node_up(self, n: str) -> None:
        self.nodes_down.discard(n)

    def is_node_up(self, n: str) -> bool:
        return n not in self.nodes_down

    def port_up(self, a: str, b: str) -> bool:
        return (
            frozenset((a, b)) not in self.links_down
            and a not in self.nodes_down
            and b not in self.nodes_down
        )

    def copy(self) -> PortState:
        other = PortState()
        other.links_down = set(self.links_down)
        other.nodes_down = set(self.nodes_down)
        return other


@dataclass(frozen=True)
class TraceRecord:
    node: str
    chain: str
    action: str
    matched_key: str = "-"
    bs_before: Optional[BitString] = None
    bs_after: Optional[BitString] = None

    def line(self) -> str:
        before = "-" if self.bs_before is None else self.bs_before.render()
        after = "-" if self.bs_after is None else self.bs_after.render()
        return f"{self.node} {self.chain} {self.action} {self.matched_key} {before} {after}"


@dataclass(frozen=True)
class Emission:
    target: str
    packet: Packet
    kind: str
    path: tuple[str, ...]
    bit: Optional[int] = None


@dataclass(frozen=True)
class Delivery:
    bfer: str
    group: str
    payload_len: int
    si: int


@dataclass
class HopOutput:
    emissions: list[Emission] = field(default_factory=list)
    deliveries: list[Delivery] = field(default_factory=list)
    recircs: int = 0
    trace: list[TraceRecord] = field(default_factory=list)

    def extend(self, other: HopOutput) -> HopOutput:
        self.emissions.extend(other.emissions)
        self.deliveries.extend(other.deliveries)
        self.recircs += other.recircs
        self.trace.extend(other.trace)
        return self

    def note(self, *args, **kw) -> None:
        self.trace.append(TraceRecord(*args, **kw))


def _bs(pkt: Packet) -> Optional[BitString]:
    return pkt.bierte.bs if pkt.bierte else None


def _key(width: int, bit: int) -> str:
    return BitString.from_positions(width, [bit]).render()


def process(node: str, pkt: Packet, tables: TableSet, ports: PortState) -> HopOutput:
    """Dispatch on the outermost header present."""
    if pkt.mpls is not None:
        return mpls_chain(node, pkt, tables, ports)
    if pkt.bierte is not None:
        return bierte_chain(node, pkt, tables, ports)
    return ip_chain(node, pkt, tables, ports)


def ip_chain(node: str, pkt: Packet, tables: TableSet, ports: Optional[PortState] = None) -> HopOutput:
    ports = ports or PortState()
    out = HopOutput()
    entry = tables[node].ip.get(pkt.ipmc_group)
    if entry is None:
        out.note(node, "ip", "drop(no_ip_match)", pkt.ipmc_group)
        return out
    out.recircs += len(entry.targets)
    out.note(node, "ip", f"encap(copies={len(entry.targets)})", pkt.ipmc_group)
    for i, tg in enumerate(entry.targets):
        copy = replace(
            pkt,
            bierte=BierTeHeader(tg.si, tg.bs_template),
            mpls=None if tg.label is None else MplsHeader(tg.label),
            recirc_count=pkt.recirc_count + i + 1,
        )
        if tg.label is None:
            out.extend(bierte_chain(node, copy, tables, ports))
        else:
            out.extend(mpls_chain(node, copy, tables, ports))
    return out


def mpls_chain(node: str, pkt: Packet, tables: TableSet, ports: PortState) -> HopOutput:
    out = HopOutput()
    nt = tables[node]
    label = pkt.mpls.label
    bs = _bs(pkt)
    action = nt.mpls.get(label)
    if action is None:
        out.note(node, "mpls", "drop(unknown_label)", str(label), bs, bs)
        return out

    if action.kind == MPLS_FORWARD:
        nh = action.next_hop
        if ports.port_up(node, nh):
            out.note(node, "mpls", f"forward({nh})", str(label), bs, bs)
            out.emissions.append(Emission(nh, pkt, EMIT_TUNNEL, (node, nh)))
            return out
        mept = nt.mept.get(label)
        if mept is None:
            out.note(node, "mpls", "drop(unprotected_tunnel_failure)", str(label), bs, bs)
            return out
        if not ports.port_up(node, mept.backup_next):
            out.note(node, "mept", "drop(backup_port_down)", str(label), bs, bs)
            return out
        swapped = replace(pkt, mpls=MplsHeader(mept.backup_label))
        out.note(node, "mept", f"swap({mept.backup_label},{mept.backup_next})", str(label), bs, bs)
        out.emissions.append(Emission(mept.backup_next, swapped, EMIT_TUNNEL, (node, mept.backup_next)))
        return out

    inner = replace(pkt, mpls=None)
    if action.kind == MPLS_POP_BIERTE:
        out.recircs += 1
        out.note(node, "mpls", "pop_bierte", str(label), bs, bs)
        return out.extend(bierte_chain(node, inner.recirculated(), tables, ports))

    if action.kind == MPLS_POP_SBTAFT:
        out.note(node, "mpls", f"pop_sbtaft({action.protected_ingress})", str(label), bs, bs)
        inner, rec = sbtaft_apply(node, inner, action.protected_ingress, tables)
        out.trace.append(rec)
        return out.extend(bierte_chain(node, inner, tables, ports))

    raise ConsistencyError(f"unknown MPLS action {action.kind!r}")


def bierte_chain(
    node: str,
    pkt: Packet,
    tables: TableSet,
    ports: PortState,
    frr_seen: frozenset = frozenset(),
) -> HopOutput:
    """Single-pass BIFT processing.

    Every set local bit yields one copy whose BitString is masked with the
    entry's F-BM, so each copy carries the same non-local bits.
    """
    out = HopOutput()
    nt = tables[node]
    hdr = pkt.bierte
    bs = hdr.bs
    local = nt.adjacent.get(hdr.si)
    active = bs & local if local is not None else BitString.zeros(bs.width)
    if not active:
        out.note(node, "bierte", "discard", "-", bs, bs)
        return out
    matched = list(active.positions())
    out.recircs += len(matched)
    for i, bit in enumerate(matched):
        e = nt.bift[(hdr.si, bit)]
        key = _key(bs.width, bit)
        if e.action == ACT_DECAP:
            out.note(node, "bierte", "decap", key, bs, bs)
            out.deliveries.append(Delivery(node, pkt.ipmc_group, pkt.ipmc_payload_len, hdr.si))
            continue
        new_bs = bs & e.fbm
        child = replace(pkt, bierte=replace(hdr, bs=new_bs), recirc_count=pkt.recirc_count + i)
        if e.action == FWD_CONNECTED:
            if ports.port_up(node, e.next_hop):
                out.note(node, "bierte", e.describe(), key, bs, new_bs)
                out.emissions.append(Emission(e.next_hop, child, EMIT_ADJACENCY, (node, e.next_hop), bit))
            else:
                out.note(node, "bierte", f"port_down({e.next_hop})", key, bs, new_bs)
                out.extend(btaft_apply(node, child, bit, tables, ports, frr_seen))
        else:
            out.note(node, "bierte", e.describe(), key, bs, new_bs)
            out.emissions.append(Emission(e.next_hop, child, EMIT_ROUTED, e.path, bit))
    return out


def bierte_chain_recirculating(
    node: str,
    pkt: Packet,
    tables: TableSet,
    ports: PortState,
    frr_seen: frozenset = frozenset(),
) -> HopOutput:
    """Step-by-step model of a copy-and-recirculate pipeline.

    Each pass matches the lowest remaining local bit, applies the entry to
    one copy and recirculates the other with that bit cleared. Used to
    cross-check bierte_chain.
    """
    out = HopOutput()
    nt = tables[node]
    si = pkt.bierte.si
    local = nt.adjacent.get(si)
    current = pkt
    while True:
        bs = current.bierte.bs
        hit = None
        if local is not None:
            for (esi, bit), e in sorted(nt.bift.items()):
                if esi == si and bs.test(bit):
                    hit = e
                    break
        if hit is None:
            out.note(node, "bierte", "discard", "-", bs, bs)
            return out
        out.recircs += 1
        key = _key(bs.width, hit.key_bit)
        if hit.action == ACT_DECAP:
            out.note(node, "bierte", "decap", key, bs, bs)
            out.deliveries.append(Delivery(node, pkt.ipmc_group, pkt.ipmc_payload_len, si))
        else:
            new_bs = bs & hit.fbm
            fwd = current.with_bs(new_bs)
            if hit.action == FWD_CONNECTED:
                if ports.port_up(node, hit.next_hop):
                    out.note(node, "bierte", hit.describe(), key, bs, new_bs)
                    out.emissions.append(Emission(hit.next_hop, fwd, "adjacency", (node, hit.next_hop), hit.key_bit))
                else:
                    out.note(node, "bierte", f"port_down({hit.next_hop})", key, bs, new_bs)
                    out.extend(btaft_apply(node, fwd, hit.key_bit, tables, ports, frr_seen, recirculating=True))
            else:
                out.note(node, "bierte", hit.describe(), key, bs, new_bs)
                out.emissions.append(Emission(hit.next_hop, fwd, EMIT_ROUTED, hit.path, hit.key_bit))
        current = current.with_bs(bs.clear(hit.key_bit)).recirculated()


def btaft_apply(
    node: str,
    pkt: Packet,
    failed_bit: int,
    tables: TableSet,
    ports: PortState,
    frr_seen: frozenset = frozenset(),
    recirculating: bool = False,
) -> HopOutput:
    """Rewrite the BitString around a failed adjacency and re-run the BIFT."""
    out = HopOutput()
    nt = tables[node]
    si = pkt.bierte.si
    bs = pkt.bierte.bs
    key = _key(bs.width, failed_bit)
    entries = nt.btaft.get((si, failed_bit))
    if not entries:
        out.note(node, "btaft", "drop(unprotected_adjacency)", key, bs, bs)
        return out
    if failed_bit in frr_seen:
        out.note(node, "btaft", "drop(repeated_failure)", key, bs, bs)
        return out
    zero = BitString.zeros(bs.width)
    if nt.btaft_mode.get(si) == "node":
        matched = [e for e in entries if e.nnh_bit is not None and bs.test(e.nnh_bit)]
        reset, add = zero, zero
        for e in matched:
            reset, add = reset | e.reset, add | e.add
        out.recircs += len(matched) + 1
        action = f"node(nnh={len(matched)})"
    else:
        e = entries[0]
        reset, add = e.reset, e.add
        out.recircs += 1
        action = "link"
    new_bs = bs.andnot(reset) | add
    out.note(node, "btaft", action, key, bs, new_bs)
    rewritten = replace(pkt, bierte=replace(pkt.bierte, bs=new_bs)).recirculated()
    chain = bierte_chain_recirculating if recirculating else bierte_chain
    return out.extend(chain(node, rewritten, tables, ports, frr_seen | {failed_bit}))


def sbtaft_apply(
    backup_node: str,
    pkt: Packet,
    protected_ingress: str,
    tables: TableSet,
) -> tuple[Packet, TraceRecord]:
    """One-shot node protection at a backup subset ingress; no recirculation."""
    nt = tables[backup_node]
    si = pkt.bierte.si
    bs = pkt.bierte.bs
    keymask = nt.sbtaft_keys.get((si, protected_ingress))
    if keymask is None:
        raise ConsistencyError(f"{backup_node} has no S-BTAFT for {protected_ingress} in SI {si}")
    comb = bs & keymask
    if not comb:
        return pkt, TraceRecord(backup_node, "sbtaft", "identity", "-", bs, bs)
    entry = nt.sbtaft[(si, protected_ingress)].get(comb.value)
    if entry is None:
        raise ConsistencyError(f"S-BTAFT at {backup_node} lacks combination {comb}")
    new_bs = bs.andnot(entry.reset) | entry.add
    rec = TraceRecord(backup_node, "sbtaft", f"apply(bits={comb.count()})", comb.render(), bs, new_bs)
    return pkt.with_bs(new_bs), rec
