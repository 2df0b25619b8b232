"""SDN controller model.

The controller mediates the two-way handshake: the sending edge punts the
host's SYN to the controller, which checks (or deploys) a path and hands the
SYN to the receiving edge; the SYN-ACK travels back the same way. While doing
so it activates caching/retransmission functions along the forward path.
Control traffic rides dedicated lossless links and costs a fixed
edge-to-edge ``control_delay``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import networkx as nx

from .cr_node import ConnConfig, FlowInstall
from .messages import ControlSend, Established, PacketIn, PacketOut, PathFailed
from .placement import PathSpec, partition_ep, select_caching_nodes, summary


class PathFailure(RuntimeError):
    pass


@dataclass
class LinkStatus:
    up: bool = True
    delay_ms: float = 0.0
    loss: float = 0.0


class LinkStatusTable:
    """Directed link state plus installed edge-to-edge paths."""

    def __init__(self):
        self.links: Dict[Tuple[str, str], LinkStatus] = {}
        self.paths: Dict[Tuple[str, str], Tuple[str, ...]] = {}

    def add_link(self, a: str, b: str, delay_ms: float, loss: float = 0.0, up: bool = True,
                 both_ways: bool = True) -> None:
        self.links[(a, b)] = LinkStatus(up, delay_ms, loss)
        if both_ways:
            self.links[(b, a)] = LinkStatus(up, delay_ms, loss)

    def set_state(self, a: str, b: str, up: bool) -> None:
        for key in ((a, b), (b, a)):
            if key in self.links:
                self.links[key].up = up
        if not up:
            self.paths = {k: p for k, p in self.paths.items() if self.path_is_up(p)}

    def path_is_up(self, path) -> bool:
        return all(self.links.get((a, b), LinkStatus(up=False)).up for a, b in zip(path, path[1:]))

    def install(self, src_edge: str, dst_edge: str, path) -> None:
        path = tuple(path)
        if path[0] != src_edge or path[-1] != dst_edge or not self.path_is_up(path):
            raise PathFailure(f"cannot install {path} for {src_edge}->{dst_edge}")
        self.paths[(src_edge, dst_edge)] = path

    def lookup(self, src_edge: str, dst_edge: str) -> Optional[Tuple[str, ...]]:
        path = self.paths.get((src_edge, dst_edge))
        if path is not None and not self.path_is_up(path):
            del self.paths[(src_edge, dst_edge)]
            return None
        return path

    def compute(self, src_edge: str, dst_edge: str, nodes=None) -> Optional[Tuple[str, ...]]:
        g = nx.DiGraph()
        g.add_nodes_from([src_edge, dst_edge])
        for (a, b), st in sorted(self.links.items()):
            if st.up and (nodes is None or (a in nodes and b in nodes)):
                g.add_edge(a, b, weight=st.delay_ms)
        try:
            return tuple(nx.dijkstra_path(g, src_edge, dst_edge, weight="weight"))
        except nx.NetworkXNoPath:
            return None

    def path_spec(self, path) -> PathSpec:
        hops = list(zip(path, path[1:]))
        return PathSpec(tuple(path), tuple(self.links[h].loss for h in hops),
                        tuple(self.links[h].delay_ms for h in hops))


class ConnState(enum.Enum):
    SYN_SEEN = "SYN_SEEN"
    ESTABLISHED = "ESTABLISHED"
    FAILED = "FAILED"


@dataclass
class ConnectionRecord:
    conn_id: int
    endpoints: Tuple[str, str]
    state: ConnState = ConnState.SYN_SEEN
    path_forward: Optional[Tuple[str, ...]] = None
    path_reverse: Optional[Tuple[str, ...]] = None
    placement: Optional[dict] = None
    traversals: int = 0


@dataclass
class FunctionParams:
    """Per-connection knobs the controller uses when activating functions."""

    k: int = 2
    loss_threshold: float = 0.0
    send_interval_ms: float = 15.0
    payload_bytes: int = 0
    cache_capacity: int = 4096
    cn_period_ms: Optional[float] = None  # default 10 x send interval
    initial_rto_ms: Optional[float] = None  # default 2 x the longest segment round trip
    t_fire_limit: int = 3
    slice_id: int = 1


class Controller:
    def __init__(self, table: LinkStatusTable, host_edges: Dict[str, str], control_delay_ms: float,
                 params: Optional[Dict[int, FunctionParams]] = None, switches=None):
        self.table = table
        self.host_edges = dict(host_edges)
        self.control_delay_us = int(round(control_delay_ms * 1000))
        self.params = params or {}
        self.switches = set(switches) if switches is not None else None
        self.records: Dict[int, ConnectionRecord] = {}

    def _edge(self, host: str) -> str:
        try:
            return self.host_edges[host]
        except KeyError:
            raise PathFailure(f"host {host} is not attached to any edge switch") from None

    def resolve_path(self, src_edge: str, dst_edge: str) -> Tuple[str, ...]:
        path = self.table.lookup(src_edge, dst_edge)
        if path is None:
            path = self.table.compute(src_edge, dst_edge, self.switches)
            if path is None:
                raise PathFailure(f"no path {src_edge}->{dst_edge}")
            self.table.install(src_edge, dst_edge, path)
        return path

    def handle_packet_in(self, msg: PacketIn, now_us: int) -> List[ControlSend]:
        seg = msg.segment
        if seg.kind not in ("SYN", "SYN_ACK"):
            raise ValueError(f"controller only mediates SYN/SYN_ACK, got {seg.kind}")
        out_at = now_us + self.control_delay_us
        if seg.kind == "SYN":
            rec = self.records.get(seg.conn_id)
            if rec is None or rec.state is ConnState.FAILED:
                rec = self.records[seg.conn_id] = ConnectionRecord(seg.conn_id, (seg.src, seg.dst))
            try:
                rec.path_forward = self.resolve_path(msg.edge, self._edge(seg.dst))
            except PathFailure:
                rec.state = ConnState.FAILED
                return [ControlSend(msg.edge, PathFailed(seg.conn_id, seg.src), now_us)]
            sends = self.install_placement(rec, now_us)
            rec.traversals += 1
            sends.append(ControlSend(rec.path_forward[-1], PacketOut(seg), out_at, traversal=True))
            return sends

        rec = self.records.get(seg.conn_id)
        if rec is None:
            raise PathFailure(f"SYN_ACK for unknown connection {seg.conn_id}")
        try:
            rec.path_reverse = self.resolve_path(msg.edge, self._edge(seg.dst))
        except PathFailure:
            rec.state = ConnState.FAILED
            return [ControlSend(msg.edge, PathFailed(seg.conn_id, seg.src), now_us)]
        rec.state = ConnState.ESTABLISHED
        rec.traversals += 1
        return [
            ControlSend(rec.path_reverse[-1], PacketOut(seg), out_at, traversal=True),
            # the receiving edge learns the reverse path is in place and
            # completes host B's handshake on host A's behalf
            ControlSend(msg.edge, Established(seg.conn_id, host=seg.src, peer=seg.dst), out_at),
        ]

    def install_placement(self, rec: ConnectionRecord, now_us: int) -> List[ControlSend]:
        params = self.params.get(rec.conn_id, FunctionParams())
        spec = self.table.path_spec(rec.path_forward)
        caching = select_caching_nodes(spec, params.loss_threshold)
        rec.placement = summary(spec, caching, partition_ep(spec, caching, params.k))
        configs = build_configs(spec, rec.conn_id, rec.endpoints[0], rec.endpoints[1], params)
        return [ControlSend(node, FlowInstall(cfg), now_us) for node, cfg in configs]


def build_configs(spec: PathSpec, conn_id: int, src_host: str, dst_host: str,
                  params: FunctionParams) -> List[Tuple[str, ConnConfig]]:
    """Per-switch function activation for one connection's forward path."""
    caching = select_caching_nodes(spec, params.loss_threshold)
    segments = partition_ep(spec, caching, params.k)
    ret_nodes = [s.retransmission_node for s in segments]
    nodes = spec.nodes
    cum = [0.0]
    for d in spec.link_delay:
        cum.append(cum[-1] + d)
    pos = {n: i for i, n in enumerate(nodes)}

    bounds = [0] + [pos[r] for r in ret_nodes]
    seg_rtts = [2 * (cum[b] - cum[a]) for a, b in zip(bounds, bounds[1:])]
    initial_rto = params.initial_rto_ms
    if initial_rto is None:
        initial_rto = 2 * max(seg_rtts) if max(seg_rtts) > 0 else 2 * params.send_interval_ms
    cn_period = params.cn_period_ms if params.cn_period_ms is not None else 10 * params.send_interval_ms

    def serving_ret(i: int) -> str:
        # retransmission node whose RRs this caching node answers
        return next(r for r in ret_nodes if pos[r] > i) if i < len(nodes) - 1 else nodes[-1]

    out = []
    for i, node in enumerate(nodes):
        window_us = int(2 * (cum[pos[serving_ret(i)]] - cum[i]) * 1000)
        cfg = ConnConfig(
            conn_id=conn_id,
            slice_id=params.slice_id,
            src_host=src_host,
            dst_host=dst_host,
            upstream=nodes[i - 1] if i > 0 else src_host,
            downstream=nodes[i + 1] if i < len(nodes) - 1 else dst_host,
            sending_edge=i == 0,
            receiving_edge=i == len(nodes) - 1,
            caching=node in caching,
            retransmission=node in ret_nodes,
            downstream_ret=any(pos[r] > i for r in ret_nodes) and node != nodes[-1],
            send_interval_ms=params.send_interval_ms,
            payload_bytes=params.payload_bytes,
            cache_capacity=params.cache_capacity,
            cn_period_us=int(math.ceil(cn_period * 1000)),
            initial_rto_ms=initial_rto,
            suppress_window_us=window_us,
            t_fire_limit=params.t_fire_limit,
        )
        out.append((node, cfg))
    return out
