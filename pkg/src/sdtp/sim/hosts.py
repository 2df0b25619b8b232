"""End hosts: handshake, a paced TCP-like sender and a cumulative-ACK receiver.

Hosts run the same stack whether the network speaks SDTP or not; with SDTP
the edge switches simply answer on the far end's behalf.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional

from ..detection import RtoEstimator
from ..messages import CancelTimer, HostSegment, HostSend, Note, Send, SetTimer


@dataclass(frozen=True)
class HostParams:
    syn_timeout_ms: float = 1000.0
    max_retries: int = 3
    rto_min_ms: float = 200.0
    rto_initial_ms: float = 1000.0
    rto_max_ms: float = 60000.0
    dupack_threshold: int = 3


def _us(ms: float) -> int:
    return int(round(ms * 1000))


class TcpSender:
    """Window-free sender paced at a fixed interval.

    One retransmission timer guards the oldest unacknowledged packet and is
    restarted whenever the cumulative ACK advances; three duplicate ACKs
    trigger a fast retransmit. RTT samples follow Karn's rule.
    """

    def __init__(self, conn_id: int, src: str, dst: str, packets: int, interval_us: int,
                 payload_bytes: int = 0, params: HostParams = HostParams()):
        self.conn_id = conn_id
        self.src, self.dst = src, dst
        self.packets = packets
        self.interval_us = interval_us
        self.payload_bytes = payload_bytes
        self.params = params
        self.rto = RtoEstimator(initial_ms=params.rto_initial_ms)
        self.next_seq = 0
        self.snd_una = 0
        self.first_sent: Dict[int, int] = {}
        self.retransmitted = set()
        self.backoff = 0
        self.dupacks = 0
        self.retx_count = 0
        self.fast_retx = 0
        self.timeouts = 0

    @property
    def done(self) -> bool:
        return self.snd_una >= self.packets

    def rto_us(self) -> int:
        base = max(self.params.rto_min_ms, self.rto.threshold)
        return _us(min(self.params.rto_max_ms, base * (2 ** self.backoff)))

    def _segment(self, seq: int) -> HostSegment:
        return HostSegment("DATA", self.conn_id, self.src, self.dst, seq=seq, payload_len=self.payload_bytes)

    def _arm(self, now: int) -> list:
        key = ("rto", self.conn_id)
        if self.done or self.snd_una >= self.next_seq:
            return [CancelTimer(key)]
        return [SetTimer(key, now + self.rto_us())]

    def tick(self, now: int, first_hop: str) -> list:
        if self.next_seq >= self.packets:
            return []
        seq = self.next_seq
        self.next_seq += 1
        self.first_sent[seq] = now
        acts = [Note("DATA_SENT", "first", conn=self.conn_id, seq=seq), Send(self._segment(seq), first_hop)]
        if seq == self.snd_una:
            acts += self._arm(now)
        if self.next_seq < self.packets:
            acts.append(HostSend(self.conn_id, now + self.interval_us))
        return acts

    def _retransmit(self, seq: int, why: str, first_hop: str) -> list:
        self.retransmitted.add(seq)
        self.retx_count += 1
        return [Note("DATA_SENT", why, conn=self.conn_id, seq=seq), Send(self._segment(seq), first_hop)]

    def on_ack(self, ack: int, now: int, first_hop: str) -> list:
        if ack > self.snd_una:
            if ack == self.snd_una + 1 and self.snd_una not in self.retransmitted:
                self.rto.update((now - self.first_sent[self.snd_una]) / 1000.0)
            self.snd_una = min(ack, self.next_seq)
            self.dupacks = 0
            self.backoff = 0
            acts = self._arm(now)
            if self.done:
                acts.append(Note("SENDER_DONE", conn=self.conn_id))
            return acts
        if ack == self.snd_una and self.snd_una < self.next_seq:
            self.dupacks += 1
            if self.dupacks == self.params.dupack_threshold:
                self.fast_retx += 1
                return self._retransmit(self.snd_una, "fast", first_hop) + self._arm(now)
        return []

    def on_timeout(self, now: int, first_hop: str) -> list:
        if self.done or self.snd_una >= self.next_seq:
            return []
        self.timeouts += 1
        self.backoff += 1
        self.dupacks = 0
        return self._retransmit(self.snd_una, "rto", first_hop) + self._arm(now)


class TcpReceiver:
    def __init__(self, conn_id: int, local: str, peer: str):
        self.conn_id = conn_id
        self.local, self.peer = local, peer
        self.expected = 0
        self.buffer = set()
        self.delivered: List[int] = []
        self.duplicates = 0

    def on_data(self, seq: int, now: int, first_hop: str) -> list:
        acts: list = []
        if seq < self.expected or seq in self.buffer:
            self.duplicates += 1
            acts.append(Note("DUP_RX", conn=self.conn_id, seq=seq))
        else:
            self.buffer.add(seq)
            while self.expected in self.buffer:
                self.buffer.discard(self.expected)
                self.delivered.append(self.expected)
                acts.append(Note("DELIVER", conn=self.conn_id, seq=self.expected))
                self.expected += 1
        acts.append(Send(HostSegment("ACK", self.conn_id, self.local, self.peer, ack=self.expected), first_hop))
        return acts


@dataclass
class _Role:
    conn_id: int
    peer: str
    sender: Optional[TcpSender] = None
    receiver: Optional[TcpReceiver] = None
    state: str = "CLOSED"
    attempts: int = 0


class Host:
    """A host with one access link. Connection roles are registered up front."""

    def __init__(self, node_id: str, first_hop: str, params: HostParams = HostParams()):
        self.node_id = node_id
        self.first_hop = first_hop
        self.params = params
        self.roles: Dict[int, _Role] = {}

    def add_sender(self, conn_id: int, peer: str, packets: int, interval_us: int, payload_bytes: int = 0) -> None:
        self.roles[conn_id] = _Role(conn_id, peer, sender=TcpSender(
            conn_id, self.node_id, peer, packets, interval_us, payload_bytes, self.params))

    def add_receiver(self, conn_id: int, peer: str) -> None:
        self.roles[conn_id] = _Role(conn_id, peer, receiver=TcpReceiver(conn_id, self.node_id, peer), state="LISTEN")

    def _syn_timeout(self, attempt: int) -> int:
        return _us(self.params.syn_timeout_ms * (2 ** attempt))

    def _handshake_send(self, role: _Role, kind: str, now: int) -> list:
        seg = HostSegment(kind, role.conn_id, self.node_id, role.peer, seq=0, ack=0 if kind == "SYN" else 1)
        acts = [Note(f"{kind}_SENT", f"attempt={role.attempts}", conn=role.conn_id),
                Send(seg, self.first_hop),
                SetTimer(("hs", role.conn_id), now + self._syn_timeout(role.attempts))]
        role.attempts += 1
        return acts

    def connect(self, conn_id: int, now: int) -> list:
        role = self.roles[conn_id]
        role.state = "SYN_SENT"
        return self._handshake_send(role, "SYN", now)

    def _established(self, role: _Role) -> list:
        role.state = "ESTABLISHED"
        return [Note("ESTABLISHED", f"peer={role.peer}", conn=role.conn_id), CancelTimer(("hs", role.conn_id))]

    def receive(self, seg: HostSegment, frm: str, now: int) -> list:
        role = self.roles.get(seg.conn_id)
        if role is None:
            return [Note("NO_CONN", seg.kind, conn=seg.conn_id, seq=seg.seq)]
        if role.sender is not None:
            return self._sender_rx(role, seg, now)
        return self._receiver_rx(role, seg, now)

    def _sender_rx(self, role: _Role, seg: HostSegment, now: int) -> list:
        if seg.kind == "SYN_ACK":
            ack = Send(HostSegment("ACK", role.conn_id, self.node_id, role.peer, seq=1, ack=1), self.first_hop)
            if role.state == "SYN_SENT":
                return self._established(role) + [ack, HostSend(role.conn_id, now)]
            return [ack]  # our ACK was lost; the peer asked again
        if seg.kind == "ACK" and role.state == "ESTABLISHED":
            return role.sender.on_ack(seg.ack, now, self.first_hop)
        return []

    def _receiver_rx(self, role: _Role, seg: HostSegment, now: int) -> list:
        if seg.kind == "SYN":
            if role.state == "ESTABLISHED":
                return []
            role.state = "SYN_RCVD"
            return self._handshake_send(role, "SYN_ACK", now)
        if seg.kind == "ACK":
            if role.state == "SYN_RCVD":
                return self._established(role)
            return []
        if seg.kind == "DATA":
            return role.receiver.on_data(seg.seq, now, self.first_hop)
        return []

    def on_send_tick(self, conn_id: int, now: int) -> list:
        role = self.roles[conn_id]
        return role.sender.tick(now, self.first_hop)

    def on_timer(self, key, now: int) -> list:
        name, conn_id = key
        role = self.roles[conn_id]
        if name == "rto":
            return role.sender.on_timeout(now, self.first_hop)
        if name == "hs":
            if role.state not in ("SYN_SENT", "SYN_RCVD"):
                return []
            if role.attempts > self.params.max_retries:
                role.state = "FAILED"
                return [Note("CONN_FAILED", f"attempts={role.attempts}", conn=conn_id)]
            return self._handshake_send(role, "SYN" if role.sender is not None else "SYN_ACK", now)
        raise KeyError(key)
