"""Wire a scenario into switches, hosts, links and (for SDTP) a controller,
then drive it with the event loop."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import networkx as nx

from ..control_plane import Controller, FunctionParams, LinkStatusTable
from ..cr_node import NoRoute, SdtpSwitch
from ..messages import CancelTimer, HostSend, Note, SdtpPacket, Send, SetTimer, ToController
from ..packet_codec import decode, encode
from .engine import Event, EventKind, Simulator, TraceLog
from .hosts import Host, HostParams
from .links import Link, ScriptedDrop, describe
from .metrics import (
    Conservation, LinkLedger, MetricsSummary, delay_stats, host_ledger,
    measure_connection_delay, measure_e2e_delay, retransmissions,
)
from .scenario import Scenario


class ForwardingSwitch:
    """Plain destination-based forwarding for the TCP baseline."""

    def __init__(self, node_id: str, routes: Dict[str, str]):
        self.node_id = node_id
        self.routes = routes
        self.counters: Counter = Counter()

    def receive(self, packet, frm: str, now: int) -> list:
        try:
            nxt = self.routes[packet.dst]
        except KeyError:
            raise NoRoute(f"{self.node_id}: no route to {packet.dst}") from None
        self.counters["forwarded"] += 1
        return [Send(packet, nxt)]

    def on_timer(self, key, now: int) -> list:
        return []

    def export_counters(self) -> Dict[str, int]:
        return dict(sorted(self.counters.items()))


@dataclass
class RunResult:
    scenario: Scenario
    trace: TraceLog
    conn_delay_ms: Dict[int, Optional[float]]
    e2e: dict
    retx: Dict[int, int]
    conservation: Conservation
    links: Dict[str, Link]
    switch_counters: Dict[str, Dict[str, int]]
    placements: Dict[int, dict] = field(default_factory=dict)
    control_traversals: Dict[int, int] = field(default_factory=dict)
    end_us: int = 0
    completed: bool = False

    @property
    def delays_ms(self) -> Dict[int, List[float]]:
        return {c: s.series for c, s in self.e2e.items()}

    def summary(self) -> MetricsSummary:
        sc = self.scenario
        conn = [v for v in self.conn_delay_ms.values() if v is not None]
        every = [d for s in self.e2e.values() for d in s.series]
        mean, jitter = delay_stats(every)
        return MetricsSummary(
            scenario_id=sc.scenario_id,
            protocol=sc.protocol,
            loss_rate=float(sc.loss_rate or 0.0),
            control_delay_ms=float(sc.control_delay_ms),
            seed=sc.seed,
            conn_delay_ms=sum(conn) / len(conn) if conn else None,
            mean_e2e_ms=mean,
            jitter_ms=jitter,
            retx_count=sum(self.retx.values()),
            undelivered=sum(h.undelivered for h in self.conservation.hosts.values()),
        )


class Network:
    def __init__(self, scenario: Scenario):
        self.sc = sc = scenario.validate()
        self.sim = Simulator()
        self.trace = TraceLog()
        self.sdtp = sc.protocol == "sdtp"
        self.hosts_set = set(sc.hosts)
        self.switch_set = set(sc.switches)

        self.links: Dict[tuple, Link] = {}
        for ln in sc.effective_links():
            for a, b in ((ln.a, ln.b), (ln.b, ln.a)):
                link_id = f"{a}->{b}"
                drops = [ScriptedDrop(d.kind, d.seq, d.conn) for d in sc.drops if d.link == link_id]
                self.links[(a, b)] = Link(a, b, int(round(ln.delay_ms * 1000)), ln.loss, sc.seed, drops)

        params = HostParams(sc.syn_timeout_ms, sc.max_retries, sc.rto_min_ms, sc.rto_initial_ms,
                            dupack_threshold=sc.dupack_threshold)
        self.hosts: Dict[str, Host] = {h: Host(h, sc.edge_of(h), params) for h in sc.hosts}
        for c in sc.connections:
            self.hosts[c.src].add_sender(c.conn_id, c.dst, c.packets, int(round(c.send_interval_ms * 1000)),
                                         c.payload_bytes)
            self.hosts[c.dst].add_receiver(c.conn_id, c.src)
        self.expected = {c.conn_id: c.packets for c in sc.connections}
        self.delivered: Counter = Counter()

        self.controller: Optional[Controller] = None
        if self.sdtp:
            attached = defaultdict(list)
            for h in sc.hosts:
                attached[sc.edge_of(h)].append(h)
            self.switches = {s: SdtpSwitch(s, attached[s]) for s in sc.switches}
            table = LinkStatusTable()
            for ln in sc.effective_links():
                if ln.a in self.switch_set and ln.b in self.switch_set:
                    table.add_link(ln.a, ln.b, ln.delay_ms, ln.loss)
            fparams = {c.conn_id: FunctionParams(
                k=sc.k, loss_threshold=sc.loss_threshold, send_interval_ms=c.send_interval_ms,
                payload_bytes=c.payload_bytes, cache_capacity=sc.cache_capacity, cn_period_ms=sc.cn_period_ms,
                initial_rto_ms=sc.initial_rto_ms, t_fire_limit=sc.t_fire_limit, slice_id=c.slice_id,
            ) for c in sc.connections}
            self.controller = Controller(table, {h: sc.edge_of(h) for h in sc.hosts}, sc.control_delay_ms,
                                         fparams, switches=self.switch_set)
        else:
            g = sc.graph()
            self.switches = {}
            for s in sc.switches:
                routes = {}
                for h in sc.hosts:
                    if nx.has_path(g, s, h):
                        routes[h] = nx.dijkstra_path(g, s, h, weight="weight")[1]
                self.switches[s] = ForwardingSwitch(s, routes)

        for c in sc.connections:
            self.sim.schedule(int(round(c.start_ms * 1000)), EventKind.HOST_SEND, c.src, (c.conn_id, "connect"))

    # -- action execution

    def node(self, node_id: str):
        return self.hosts.get(node_id) or self.switches[node_id]

    def _transmit(self, frm: str, packet, to: str) -> None:
        now = self.sim.now
        link = self.links.get((frm, to))
        if link is None:
            raise NoRoute(f"{frm}: no link to {to}")
        kind, conn, seq = describe(packet)
        fate = link.transmit(packet)
        self.trace.add(now, "TX", frm, conn, seq, f"link={link.link_id} kind={kind}")
        if fate is not None:
            self.trace.add(now, fate, frm, conn, seq, f"link={link.link_id} kind={kind}")
            return
        wire = packet
        if isinstance(packet, SdtpPacket):
            wire = encode(packet.header, packet.payload)
        delay = link.delay_us + (self.sc.processing_us if frm in self.switch_set else 0)
        self.sim.schedule(now + delay, EventKind.LINK_DELIVER, to, (frm, wire))

    def apply(self, node_id: str, actions) -> None:
        now = self.sim.now
        for act in actions:
            if isinstance(act, Send):
                self._transmit(node_id, act.packet, act.to)
            elif isinstance(act, SetTimer):
                self.sim.set_timer(node_id, act.key, act.at_us)
            elif isinstance(act, CancelTimer):
                self.sim.cancel_timer(node_id, act.key)
            elif isinstance(act, HostSend):
                self.sim.schedule(act.at_us, EventKind.HOST_SEND, node_id, (act.conn_id, "tick"))
            elif isinstance(act, Note):
                self.trace.add(now, act.event, node_id, act.conn, act.seq, act.detail)
                if act.event == "DELIVER":
                    self.delivered[act.conn] += 1
            elif isinstance(act, ToController):
                seg = act.message.segment
                self.trace.add(now, "PACKET_IN", node_id, seg.conn_id, -1, f"kind={seg.kind}")
                for cs in self.controller.handle_packet_in(act.message, now):
                    self.trace.add(now, "CTRL_OUT", "ctrl", getattr(cs.message, "conn_id", -1), -1,
                                   f"to={cs.node} msg={type(cs.message).__name__} at={cs.at_us}")
                    self.sim.schedule(cs.at_us, EventKind.CONTROL_DELIVER, cs.node, cs.message)
            else:
                raise TypeError(f"unknown action {act!r}")

    def handle(self, ev: Event) -> None:
        now = ev.time
        if ev.kind is EventKind.LINK_DELIVER:
            frm, wire = ev.payload
            self.links[(frm, ev.target)].arrive()
            packet = SdtpPacket(*decode(wire)) if isinstance(wire, bytes) else wire
            self.apply(ev.target, self.node(ev.target).receive(packet, frm, now))
        elif ev.kind is EventKind.TIMER_FIRE:
            self.apply(ev.target, self.node(ev.target).on_timer(ev.payload, now))
        elif ev.kind is EventKind.CONTROL_DELIVER:
            self.apply(ev.target, self.switches[ev.target].on_control(ev.payload, now))
        elif ev.kind is EventKind.HOST_SEND:
            conn_id, what = ev.payload
            host = self.hosts[ev.target]
            acts = host.connect(conn_id, now) if what == "connect" else host.on_send_tick(conn_id, now)
            self.apply(ev.target, acts)

    def finished(self) -> bool:
        """All data delivered and every endpoint done with its handshake."""
        if not all(self.delivered[c] >= n for c, n in self.expected.items()):
            return False
        return all(r.state in ("ESTABLISHED", "FAILED") for h in self.hosts.values() for r in h.roles.values())

    # -- run

    def run(self) -> RunResult:
        end = self.sim.run(self.handle, until=self.sc.horizon_us(), stop=self.finished)
        return self.result(end)

    def result(self, end_us: int) -> RunResult:
        queued: Counter = Counter()
        for ev in self.sim.pending():
            if ev.kind is EventKind.LINK_DELIVER:
                queued[(ev.payload[0], ev.target)] += 1
        ledger = Conservation(
            links={l.link_id: LinkLedger(l.transmitted, l.arrived, l.lost, l.dropped, l.in_flight,
                                         queued[(l.src, l.dst)])
                   for _, l in sorted(self.links.items())},
            hosts=host_ledger(self.trace, self.expected),
        )
        placements, traversals = {}, {}
        if self.controller is not None:
            for cid, rec in sorted(self.controller.records.items()):
                placements[cid] = rec.placement
                traversals[cid] = rec.traversals
        return RunResult(
            scenario=self.sc,
            trace=self.trace,
            conn_delay_ms=measure_connection_delay(self.trace, self.sc.protocol),
            e2e=measure_e2e_delay(self.trace),
            retx=retransmissions(self.trace, self.sc.protocol, self.expected),
            conservation=ledger,
            links={l.link_id: l for l in self.links.values()},
            switch_counters={s: sw.export_counters() for s, sw in sorted(self.switches.items())},
            placements=placements,
            control_traversals=traversals,
            end_us=end_us,
            completed=self.finished(),
        )


def run(scenario: Scenario) -> RunResult:
    return Network(scenario).run()
