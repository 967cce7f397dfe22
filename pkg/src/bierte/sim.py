"""Deterministic scenario runner and delivery oracle.

Scenario files are YAML::

    events:
      - inject: {group: G1, at: BFIR, payload_len: 100}
      - link_down: [BFR1, BFR2]
      - node_down: BFR2
      - link_up: [BFR1, BFR2]
      - node_up: BFR2
"""

from __future__ import annotations

import json
from collections import Counter, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .core import BitString, Packet
from .dataplane import EMIT_TUNNEL, PortState, TraceRecord, process
from .tables import TableSet
from .topology import Topology

EVENT_KINDS = ("inject", "link_down", "link_up", "node_down", "node_up")


class ScenarioError(ValueError):
    pass


class NonQuiescenceError(RuntimeError):
    """Propagation exceeded the hop budget; almost certainly a forwarding loop."""


@dataclass(frozen=True)
class Event:
    kind: str
    args: tuple

    def __str__(self) -> str:
        return f"{self.kind}({','.join(map(str, self.args))})"


@dataclass
class Scenario:
    events: list[Event] = field(default_factory=list)

    def inject(self, group: str, at: str, payload_len: int = 100) -> Scenario:
        self.events.append(Event("inject", (group, at, payload_len)))
        return self

    def link_down(self, a: str, b: str) -> Scenario:
        self.events.append(Event("link_down", (a, b)))
        return self

    def link_up(self, a: str, b: str) -> Scenario:
        self.events.append(Event("link_up", (a, b)))
        return self

    def node_down(self, n: str) -> Scenario:
        self.events.append(Event("node_down", (n,)))
        return self

    def node_up(self, n: str) -> Scenario:
        self.events.append(Event("node_up", (n,)))
        return self


def load_scenario(document, t: Optional[Topology] = None) -> Scenario:
    if isinstance(document, str):
        document = yaml.safe_load(document)
    items = (document or {}).get("events") or []
    sc = Scenario()
    for i, item in enumerate(items):
        where = f"events[{i}]"
        if not isinstance(item, dict) or len(item) != 1:
            raise ScenarioError(f"{where}: expected a single-key mapping")
        (kind, arg), = item.items()
        if kind not in EVENT_KINDS:
            raise ScenarioError(f"{where}: unknown event {kind!r}")
        if kind == "inject":
            if not isinstance(arg, dict) or "group" not in arg or "at" not in arg:
                raise ScenarioError(f"{where}: inject needs group and at")
            ev = Event(kind, (str(arg["group"]), str(arg["at"]), int(arg.get("payload_len", 100))))
        elif kind.startswith("link"):
            if not isinstance(arg, (list, tuple)) or len(arg) != 2:
                raise ScenarioError(f"{where}: {kind} needs [a, b]")
            ev = Event(kind, (str(arg[0]), str(arg[1])))
        else:
            ev = Event(kind, (str(arg),))
        if t is not None:
            _check_event(t, ev, where)
        sc.events.append(ev)
    return sc


def load_scenario_file(path, t: Optional[Topology] = None) -> Scenario:
    try:
        return load_scenario(Path(path).read_text(), t)
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from None


def _check_event(t: Topology, ev: Event, where: str) -> None:
    if ev.kind == "inject":
        group, at, _ = ev.args
        if group not in t.groups:
            raise ScenarioError(f"{where}: unknown group {group!r}")
        if at not in t.nodes:
            raise ScenarioError(f"{where}: unknown node {at!r}")
    elif ev.kind.startswith("link"):
        a, b = ev.args
        if not t.underlay.has_edge(a, b):
            raise ScenarioError(f"{where}: no physical link {a}-{b}")
    elif ev.args[0] not in t.nodes:
        raise ScenarioError(f"{where}: unknown node {ev.args[0]!r}")


def oracle_deliveries(t: Topology, si: int, bs: BitString, start: str) -> set[str]:
    """BFERs reached by walking the tree encoded in `bs` from `start`.

    Works from the adjacency list alone: at each node the bits it owns are
    consumed and the rest travel on. Exhaustive over (node, bits) states.
    """
    owned: dict[str, list] = {}
    for a in t.adjacencies:
        if a.si == si:
            owned.setdefault(a.src, []).append(a)
    reached: set[str] = set()
    seen = set()
    stack = [(start, bs.value)]
    while stack:
        node, bits = stack.pop()
        if (node, bits) in seen:
            continue
        seen.add((node, bits))
        mine = owned.get(node, [])
        local = 0
        for a in mine:
            local |= 1 << (a.bit - 1)
        rest = bits & ~local
        for a in mine:
            if not bits >> (a.bit - 1) & 1:
                continue
            if a.is_decap:
                reached.add(node)
            else:
                stack.append((a.dst, rest))
    return reached


@dataclass
class InjectionResult:
    group: str
    at: str
    expected: list[str]
    copies: dict[str, int]
    exactly_once: bool
    loop_free: bool
    oracle_match: bool


@dataclass
class DeliveryReport:
    copies: dict[str, int] = field(default_factory=dict)
    traversals: dict[str, int] = field(default_factory=dict)
    recircs: dict[str, int] = field(default_factory=dict)
    injections: list[InjectionResult] = field(default_factory=list)
    lost: list[str] = field(default_factory=list)

    @property
    def exactly_once(self) -> bool:
        return all(r.exactly_once for r in self.injections)

    @property
    def loop_free(self) -> bool:
        return all(r.loop_free for r in self.injections)

    @property
    def oracle_match(self) -> bool:
        return all(r.oracle_match for r in self.injections)

    @property
    def ok(self) -> bool:
        return self.exactly_once and self.loop_free and self.oracle_match

    def traversal(self, si: int, bit: int) -> int:
        return self.traversals.get(f"{si}:{bit}", 0)

    def to_dict(self) -> dict:
        return {
            "verdicts": {
                "exactly_once": self.exactly_once,
                "loop_free": self.loop_free,
                "oracle_match": self.oracle_match,
            },
            "copies": dict(sorted(self.copies.items())),
            "traversals": dict(sorted(self.traversals.items(), key=lambda kv: tuple(map(int, kv[0].split(":"))))),
            "recirculations": dict(sorted(self.recircs.items())),
            "lost": list(self.lost),
            "injections": [
                {
                    "group": r.group,
                    "at": r.at,
                    "expected": r.expected,
                    "copies": dict(sorted(r.copies.items())),
                    "exactly_once": r.exactly_once,
                    "loop_free": r.loop_free,
                    "oracle_match": r.oracle_match,
                }
                for r in self.injections
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


@dataclass
class SimResult:
    report: DeliveryReport
    traces: list[TraceRecord]

    def trace_text(self) -> str:
        return "".join(r.line() + "\n" for r in self.traces)


def expected_deliveries(t: Topology, tables: TableSet, group: str, at: str) -> set[str]:
    entry = tables[at].ip.get(group)
    if entry is None:
        return set()
    out: set[str] = set()
    for tg in entry.targets:
        out |= oracle_deliveries(t, tg.si, tg.bs_template, tg.ingress)
    return out


def run(
    t: Topology,
    tables: TableSet,
    scenario: Scenario,
    hop_budget: Optional[int] = None,
    ports: Optional[PortState] = None,
) -> SimResult:
    """Apply events in order; each injection propagates to quiescence (FIFO)."""
    ports = ports or PortState()
    if hop_budget is None:
        nbits = len({(a.si, a.bit) for a in t.adjacencies})
        hop_budget = max(1, len(t.nodes)) * max(1, nbits) * 4
    report = DeliveryReport()
    traces: list[TraceRecord] = []
    traversals: Counter = Counter()
    copies: Counter = Counter()
    recircs: Counter = Counter()
    seq = 0

    for ev in scenario.events:
        if ev.kind == "link_down":
            ports.link_down(*ev.args)
        elif ev.kind == "link_up":
            ports.link_up(*ev.args)
        elif ev.kind == "node_down":
            ports.node_down(*ev.args)
        elif ev.kind == "node_up":
            ports.node_up(*ev.args)
        else:
            group, at, payload_len = ev.args
            seq += 1
            pkt = Packet(group, payload_len, trace_id=f"p{seq}")
            got: Counter = Counter()
            loop_free = True
            queue = deque([(at, pkt, frozenset())])
            hops = 0
            if not ports.is_node_up(at):
                traces.append(TraceRecord(at, "sim", "lost(ingress_down)"))
                queue.clear()
            while queue:
                hops += 1
                if hops > hop_budget:
                    raise NonQuiescenceError(
                        f"injection {seq} ({group} at {at}) exceeded {hop_budget} hops; "
                        f"busiest adjacencies: {traversals.most_common(3)}"
                    )
                node, p, lineage = queue.popleft()
                out = process(node, p, tables, ports)
                traces.extend(out.trace)
                recircs[node] += out.recircs
                for d in out.deliveries:
                    got[d.bfer] += 1
                for em in out.emissions:
                    broken = _broken_hop(em.path, ports)
                    if broken:
                        traces.append(TraceRecord(node, "sim", f"lost({broken})"))
                        report.lost.append(f"{p.trace_id}:{node}->{em.target}:{broken}")
                        continue
                    child_lineage = lineage
                    if em.kind != EMIT_TUNNEL:
                        key = (em.packet.bierte.si, em.bit)
                        traversals[key] += 1
                        # a shared bit is one adjacency per direction, so key loops on the sender too
                        hop = (node, key)
                        if hop in lineage:
                            loop_free = False
                        child_lineage = lineage | {hop}
                    queue.append((em.target, em.packet, child_lineage))

            expected = {b for b in expected_deliveries(t, tables, group, at) if ports.is_node_up(b)}
            exactly_once = all(got[b] == 1 for b in expected) and set(got) <= expected
            report.injections.append(
                InjectionResult(
                    group,
                    at,
                    sorted(expected),
                    dict(got),
                    exactly_once,
                    loop_free,
                    set(got) == expected,
                )
            )
            copies.update(got)
            for b in expected:
                copies.setdefault(b, 0)

    report.copies = dict(copies)
    report.traversals = {f"{si}:{bit}": n for (si, bit), n in traversals.items()}
    report.recircs = {n: c for n, c in recircs.items() if c}
    return SimResult(report, traces)


def _broken_hop(path: tuple[str, ...], ports: PortState) -> Optional[str]:
    for a, b in zip(path, path[1:]):
        if not ports.port_up(a, b):
            return f"{a}-{b}_down"
    return None
