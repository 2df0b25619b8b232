"""In-path switch behaviour: forwarding, caching and retransmission.

A :class:`SdtpSwitch` carries per-connection function configuration pushed
by the controller. Depending on it the switch

* forwards only,
* caches every data packet it forwards and answers RR packets with RD
  packets, releasing cached copies when the next caching node downstream
  reports (CN) that it holds them,
* runs loss detection (retransmission node), emitting RR upstream and RI
  downstream, and absorbing RD packets addressed to it,
* converts between host-side segments and SDTP packets at the edges.

Methods return action lists (see :mod:`sdtp.messages`).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Optional

from .detection import DetectionState, compute_addl
from .messages import (
    CancelTimer, Established, HostSegment, Note, PacketIn, PacketOut, PathFailed,
    SdtpPacket, Send, SetTimer, ToController,
)
from .packet_codec import (
    SEQ_INFINITY, U32, Kind, OptionalBlock, PacketFlag, SdtpHeader, Trigger,
)


class NoRoute(RuntimeError):
    pass


class UnrecoverableLoss(RuntimeError):
    pass


def payload_for(seq: int, size: int) -> bytes:
    if size <= 0:
        return b""
    word = (seq & U32).to_bytes(4, "big")
    return (word * (size // 4 + 1))[:size]


@dataclass(frozen=True)
class ConnConfig:
    """Functions activated at one switch for one connection."""

    conn_id: int
    slice_id: int
    src_host: str
    dst_host: str
    upstream: Optional[str]  # neighbour toward the sender; the host at the sending edge
    downstream: Optional[str]  # neighbour toward the receiver; the host at the receiving edge
    sending_edge: bool = False
    receiving_edge: bool = False
    caching: bool = False
    retransmission: bool = False
    downstream_ret: bool = False  # another retransmission node follows
    send_interval_ms: float = 15.0
    payload_bytes: int = 0
    cache_capacity: int = 4096
    cn_period_us: int = 150_000
    initial_rto_ms: float = 100.0
    suppress_window_us: int = 0
    t_fire_limit: int = 3
    initial_seq: int = 0

    @property
    def segment_head(self) -> bool:
        """Upstream-most caching node of the segment an RR from below belongs to."""
        return self.sending_edge or self.retransmission


@dataclass(frozen=True)
class FlowInstall:
    config: ConnConfig


class CachingBuffer:
    def __init__(self, conn_id: int, capacity: int, initial_seq: int = 0):
        if capacity < 1:
            raise ValueError("caching buffer needs room for at least one packet")
        self.conn_id = conn_id
        self.capacity = capacity
        self.entries: Dict[int, bytes] = {}
        self.prefix = initial_seq - 1  # all seqs <= prefix have passed through here
        self.released_through = initial_seq - 1
        self._ahead = set()
        self.cached_losses = 0
        self.released = 0

    def __contains__(self, seq: int) -> bool:
        return seq in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, seq: int) -> bytes:
        return self.entries[seq]

    def insert(self, seq: int, payload: bytes) -> bool:
        self._saw(seq)
        if seq in self.entries or seq <= self.released_through:
            return False
        self.entries[seq] = payload
        if len(self.entries) > self.capacity:
            del self.entries[min(self.entries)]
            self.cached_losses += 1
        return True

    def release_through(self, seq: int) -> int:
        if seq <= self.released_through:
            return 0
        self.released_through = seq
        doomed = [s for s in self.entries if s <= seq]
        for s in doomed:
            del self.entries[s]
        self.released += len(doomed)
        return len(doomed)

    def _saw(self, seq: int) -> None:
        if seq <= self.prefix:
            return
        self._ahead.add(seq)
        while self.prefix + 1 in self._ahead:
            self.prefix += 1
            self._ahead.discard(self.prefix)


class _Conn:
    def __init__(self, cfg: ConnConfig):
        self.cfg = cfg
        self.cache = CachingBuffer(cfg.conn_id, cfg.cache_capacity, cfg.initial_seq) if cfg.caching else None
        self.detector = None
        if cfg.retransmission:
            self.detector = DetectionState(cfg.send_interval_ms, cfg.initial_seq,
                                           cfg.initial_rto_ms, cfg.t_fire_limit)
        self.served: Dict[tuple, int] = {}
        self.next_deliver = cfg.initial_seq
        self.reorder = set()
        self.host_seen = set()
        self.host_prefix = cfg.initial_seq - 1
        self.host_high = cfg.initial_seq - 1
        self.last_cn_aux = -1
        self.cn_armed = False
        self.timers: Dict[str, int] = {}


def _runs(seqs: List[int]):
    start = prev = seqs[0]
    for s in seqs[1:]:
        if s != prev + 1:
            yield start, prev + 1
            start = s
        prev = s
    yield start, prev + 1


class SdtpSwitch:
    def __init__(self, node_id: str, hosts=()):
        self.node_id = node_id
        self.hosts = set(hosts)
        self.conns: Dict[int, _Conn] = {}
        self.counters: Counter = Counter()

    def install(self, cfg: ConnConfig) -> None:
        current = self.conns.get(cfg.conn_id)
        if current is not None and current.cfg == cfg:
            return
        self.conns[cfg.conn_id] = _Conn(cfg)

    def export_counters(self) -> Dict[str, int]:
        counters = dict(self.counters)
        counters["cached_losses"] = sum(c.cache.cached_losses for c in self.conns.values()
                                        if c.cache is not None)
        counters["evicted"] = counters["cached_losses"]
        return dict(sorted(counters.items()))

    def config(self, conn_id: int) -> Optional[ConnConfig]:
        rt = self.conns.get(conn_id)
        return rt.cfg if rt else None

    def detector(self, conn_id: int) -> Optional[DetectionState]:
        rt = self.conns.get(conn_id)
        return rt.detector if rt else None

    def cache(self, conn_id: int) -> Optional[CachingBuffer]:
        rt = self.conns.get(conn_id)
        return rt.cache if rt else None

    # -- entry points

    def receive(self, packet, frm: str, now: int) -> list:
        if isinstance(packet, HostSegment):
            return self._from_host(packet, now)
        kind = packet.header.kind
        rt = self.conns.get(packet.header.conn_id)
        if rt is None:
            raise NoRoute(f"{self.node_id}: no flow entry for connection {packet.header.conn_id}")
        if kind in (Kind.DATA, Kind.RD):
            return self.forward_and_cache(rt, packet, now)
        if kind is Kind.RR:
            if rt.cache is None:
                self.counters["rr_relayed"] += 1
                return [Send(packet, rt.cfg.upstream)]
            return self.handle_rr(rt, packet, now)
        if kind is Kind.CN:
            if rt.cache is None:
                return [Send(packet, rt.cfg.upstream)]
            rt.cache.release_through(packet.header.optional.aux)
            self.counters["cn_received"] += 1
            return []
        if kind is Kind.RI:
            if rt.detector is None:
                return [Send(packet, rt.cfg.downstream)]
            rt.detector.apply_ri(packet.header.optional)
            self.counters["ri_applied"] += 1
            return [Send(packet, rt.cfg.downstream)] if rt.cfg.downstream_ret else []
        raise NoRoute(f"{self.node_id}: {kind.name} is not forwarded in the data plane")

    def on_control(self, message, now: int) -> list:
        if isinstance(message, FlowInstall):
            self.install(message.config)
            return []
        if isinstance(message, PacketOut):
            seg = message.segment
            return [Send(seg, seg.dst)]
        if isinstance(message, Established):
            return self.edge_patch_ack(message, now)
        if isinstance(message, PathFailed):
            self.counters["path_failures"] += 1
            return [Note("PATH_FAILED", conn=message.conn_id)]
        raise TypeError(f"unexpected control message {message!r}")

    def on_timer(self, key, now: int) -> list:
        name, conn_id = key
        rt = self.conns[conn_id]
        rt.timers.pop(name, None)
        acts: list = []
        if name == "cn":
            rt.cn_armed = False
            acts += self.emit_cn(rt, now)
        elif name == "ia":
            for trig in rt.detector.on_interarrival_timeout(now):
                acts += self.trigger_retransmission(rt, trig.trigger, trig.entry, now)
            acts += self._rearm(rt, now)
        elif name == "rt":
            for trig in rt.detector.due_rto(now):
                acts += self.trigger_retransmission(rt, trig.trigger, trig.entry, now)
            acts += self._rearm(rt, now)
        return acts

    # -- host side

    def _from_host(self, seg: HostSegment, now: int) -> list:
        if seg.kind in ("SYN", "SYN_ACK"):
            return [ToController(PacketIn(seg, self.node_id))]
        rt = self.conns.get(seg.conn_id)
        if seg.kind == "ACK":
            if rt is not None and rt.cfg.sending_edge:
                self.counters["host_ack_dropped"] += 1
                return [Note("DROP_HOST_ACK", f"ack={seg.ack}", conn=seg.conn_id)]
            self.counters["host_ack_absorbed"] += 1
            return []
        if rt is None or not rt.cfg.sending_edge:
            raise NoRoute(f"{self.node_id}: no flow entry for host data on connection {seg.conn_id}")
        cfg = rt.cfg
        acts: list = []
        if seg.seq not in rt.host_seen and seg.seq > rt.host_prefix:
            rt.host_seen.add(seg.seq)
            rt.host_high = max(rt.host_high, seg.seq)
            while rt.host_prefix + 1 in rt.host_seen:
                rt.host_prefix += 1
                rt.host_seen.discard(rt.host_prefix)
            header = SdtpHeader(PacketFlag(Kind.DATA), slice_id=cfg.slice_id, conn_id=cfg.conn_id,
                                seq=seg.seq, payload_len=cfg.payload_bytes, timestamp=now & U32)
            acts += self.forward_and_cache(rt, SdtpPacket(header, payload_for(seg.seq, cfg.payload_bytes)), now)
        else:
            self.counters["host_duplicates"] += 1
        # the sending edge takes over reliability from the host
        acts.append(Send(HostSegment("ACK", cfg.conn_id, src=cfg.dst_host, dst=cfg.src_host,
                                     ack=rt.host_prefix + 1), cfg.upstream))
        return acts

    def edge_patch_ack(self, msg: Established, now: int) -> list:
        """Complete the host's three-way handshake without an end-to-end ACK."""
        self.counters["ack_synthesized"] += 1
        return [Send(HostSegment("ACK", msg.conn_id, src=msg.peer, dst=msg.host, seq=1, ack=1), msg.host)]

    # -- data path

    def forward_and_cache(self, rt: _Conn, packet: SdtpPacket, now: int) -> list:
        cfg = rt.cfg
        h = packet.header
        acts: list = []
        if rt.detector is not None:
            out = rt.detector.on_packet(h.seq, now)
            if out.duplicate:
                self.counters["duplicates_dropped"] += 1
                return [Note("DUPLICATE", f"kind={h.kind.name}", conn=cfg.conn_id, seq=h.seq)]
            if h.kind is Kind.RD:
                acts += self.handle_rd(rt, packet, out, now)
                packet = SdtpPacket(SdtpHeader(PacketFlag(Kind.DATA), slice_id=h.slice_id,
                                               conn_id=h.conn_id, seq=h.seq,
                                               payload_len=h.payload_len, timestamp=now & U32),
                                    packet.payload)
            for trig in out.triggers:
                acts += self.trigger_retransmission(rt, trig.trigger, trig.entry, now)
            acts += self._rearm(rt, now)
        if rt.cache is not None:
            if rt.cache.insert(h.seq, packet.payload):
                self.counters["cached"] += 1
            if not rt.cn_armed and not cfg.sending_edge:
                rt.cn_armed = True
                acts.append(SetTimer(("cn", cfg.conn_id), now + cfg.cn_period_us))
        if cfg.receiving_edge:
            acts += self._deliver_in_order(rt, h.seq)
        else:
            self.counters["forwarded"] += 1
            acts.append(Send(packet, cfg.downstream))
        return acts

    def _deliver_in_order(self, rt: _Conn, seq: int) -> list:
        cfg = rt.cfg
        rt.reorder.add(seq)
        acts = []
        while rt.next_deliver in rt.reorder:
            rt.reorder.discard(rt.next_deliver)
            acts.append(Send(HostSegment("DATA", cfg.conn_id, src=cfg.src_host, dst=cfg.dst_host,
                                         seq=rt.next_deliver, payload_len=cfg.payload_bytes),
                             cfg.downstream))
            rt.next_deliver += 1
            self.counters["delivered"] += 1
        if acts and rt.cache is not None:
            rt.cache.release_through(rt.next_deliver - 1)
        return acts

    def handle_rd(self, rt: _Conn, packet: SdtpPacket, out, now: int) -> list:
        """RD reaching the retransmission node that asked for it."""
        self.counters["rd_received"] += 1
        det = rt.detector
        opt = packet.header.optional
        if out.accepted and out.filled_was_requested and opt is not None:
            sample_us = ((now & U32) - opt.aux) & U32
            det.rto.update(sample_us / 1000.0)
            return [Note("RTT_SAMPLE", f"ms={sample_us / 1000.0!r}", conn=rt.cfg.conn_id, seq=packet.seq)]
        return []

    def trigger_retransmission(self, rt: _Conn, trigger: Trigger, entry, now: int) -> list:
        cfg, det = rt.cfg, rt.detector
        ts = now & U32
        if trigger is Trigger.T:
            opt = OptionalBlock(num=entry.num, start_seq=entry.start_seq, end_seq=SEQ_INFINITY,
                                start_num=entry.start_num, aux=ts)
            lo = entry.locator_seq()
            hi = lo + 1
        else:
            lo, hi = entry.request_range()
            opt = OptionalBlock(num=entry.num, start_seq=lo, end_seq=hi, start_num=0, aux=ts)
        rr = SdtpHeader(PacketFlag(Kind.RR, trigger), slice_id=cfg.slice_id, conn_id=cfg.conn_id,
                        seq=lo, timestamp=ts, optional=opt)
        acts: list = [Note(f"TRIGGER_{trigger.name}", f"range=[{lo},{hi}) rt_cnt={entry.rt_cnt + 1}",
                           conn=cfg.conn_id, seq=lo),
                      Send(SdtpPacket(rr), cfg.upstream)]
        self.counters["rr_sent"] += 1
        if trigger is Trigger.C and cfg.downstream_ret:
            addl = compute_addl(det.rto.expected_rtt, det.interarrival.expected_ms, Trigger.C)
            ri = SdtpHeader(PacketFlag(Kind.RI), slice_id=cfg.slice_id, conn_id=cfg.conn_id, seq=lo,
                            timestamp=ts, optional=OptionalBlock(num=entry.num, start_seq=lo,
                                                                 end_seq=hi, start_num=0, aux=addl))
            acts.append(Send(SdtpPacket(ri), cfg.downstream))
            self.counters["ri_sent"] += 1
        det.mark_requested(entry, trigger, now)
        return acts

    def handle_rr(self, rt: _Conn, packet: SdtpPacket, now: int) -> list:
        cfg = rt.cfg
        h = packet.header
        opt = h.optional
        if h.trigger is Trigger.T:
            wanted = [opt.start_seq + opt.start_num]
        else:
            wanted = list(range(opt.start_seq, opt.end_seq))
        self.counters["rr_received"] += 1
        acts: list = []
        missing = []
        for seq in wanted:
            if seq not in rt.cache:
                missing.append(seq)
                continue
            key = (seq, h.trigger)
            last = rt.served.get(key)
            if last is not None and now - last < cfg.suppress_window_us:
                self.counters["rr_suppressed"] += 1
                continue
            rt.served[key] = now
            payload = rt.cache.get(seq)
            rd = SdtpHeader(PacketFlag(Kind.RD, h.trigger), slice_id=cfg.slice_id, conn_id=cfg.conn_id,
                            seq=seq, payload_len=len(payload), timestamp=now & U32,
                            optional=OptionalBlock(num=opt.num, start_seq=opt.start_seq,
                                                   end_seq=opt.end_seq, start_num=opt.start_num,
                                                   aux=opt.aux))
            acts.append(Note("RD_SENT", f"trigger={h.trigger.name}", conn=cfg.conn_id, seq=seq))
            acts.append(Send(SdtpPacket(rd, payload), cfg.downstream))
            self.counters["rd_sent"] += 1
        if len(missing) < len(wanted):
            self.counters["rr_served"] += 1
        if len(rt.served) > 4096:
            horizon = now - cfg.suppress_window_us
            rt.served = {k: t for k, t in rt.served.items() if t >= horizon}
        if not missing:
            return acts
        if cfg.segment_head:
            for seq in missing:
                if cfg.sending_edge:
                    if seq > rt.host_high and seq not in rt.host_seen:
                        self.counters["rr_unsent"] += 1
                        continue
                elif rt.detector is not None and rt.detector.awaiting(seq):
                    self.counters["rr_absorbed"] += 1
                    continue
                raise UnrecoverableLoss(
                    f"{self.node_id}: connection {cfg.conn_id} seq {seq} no longer cached in its segment"
                )
            return acts
        self.counters["rr_forwarded"] += 1
        if len(missing) == len(wanted):
            acts.append(Send(packet, cfg.upstream))
            return acts
        for lo, hi in _runs(missing):
            fwd = SdtpHeader(PacketFlag(Kind.RR, h.trigger), slice_id=h.slice_id, conn_id=h.conn_id,
                             seq=lo, timestamp=h.timestamp,
                             optional=OptionalBlock(num=opt.num, start_seq=lo, end_seq=hi,
                                                    start_num=0, aux=opt.aux))
            acts.append(Send(SdtpPacket(fwd), cfg.upstream))
        return acts

    def emit_cn(self, rt: _Conn, now: int) -> list:
        cfg = rt.cfg
        if rt.cache is None or cfg.sending_edge:
            return []
        release = rt.cache.prefix
        if release < cfg.initial_seq or release <= rt.last_cn_aux:
            return []
        rt.last_cn_aux = release
        cn = SdtpHeader(PacketFlag(Kind.CN), slice_id=cfg.slice_id, conn_id=cfg.conn_id, seq=release,
                        timestamp=now & U32, optional=OptionalBlock(start_seq=release, end_seq=release,
                                                                    aux=release))
        self.counters["cn_sent"] += 1
        return [Send(SdtpPacket(cn), cfg.upstream)]

    # -- timers

    def _rearm(self, rt: _Conn, now: int) -> list:
        det = rt.detector
        acts = []
        for name, deadline in (("ia", det.next_interarrival_deadline()), ("rt", det.next_rt_deadline())):
            current = rt.timers.get(name)
            if deadline == current:
                continue
            key = (name, rt.cfg.conn_id)
            if deadline is None:
                rt.timers.pop(name, None)
                acts.append(CancelTimer(key))
            else:
                rt.timers[name] = max(deadline, now + 1)
                acts.append(SetTimer(key, rt.timers[name]))
        return acts
