"""Metrics computed from a trace, plus the per-run CSV row."""

from __future__ import annotations

import statistics
from collections import defaultdict
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional

from .engine import TraceLog

CSV_FIELDS = ("scenario_id", "protocol", "loss_rate", "control_delay_ms", "seed",
              "conn_delay_ms", "mean_e2e_ms", "jitter_ms", "retx_count", "undelivered")


def measure_connection_delay(trace: TraceLog, protocol: str) -> Dict[int, Optional[float]]:
    """Milliseconds from the first SYN until the connection is usable.

    SDTP counts until both endpoints consider themselves established (the
    sender on SYN-ACK, the receiver on the edge's synthesized ACK). The TCP
    baseline counts until the receiver gets the final handshake ACK.
    ``None`` marks a connection that never completed.
    """
    first_syn: Dict[int, int] = {}
    ready: Dict[int, Dict[str, int]] = defaultdict(dict)
    role: Dict[int, Dict[str, str]] = defaultdict(dict)
    for r in trace:
        if r.kind == "SYN_SENT":
            first_syn.setdefault(r.conn, r.time_us)
            role[r.conn]["src"] = r.node
        elif r.kind == "SYN_ACK_SENT":
            role[r.conn]["dst"] = r.node
        elif r.kind == "ESTABLISHED":
            ready[r.conn].setdefault(r.node, r.time_us)
    out: Dict[int, Optional[float]] = {}
    for conn, t0 in sorted(first_syn.items()):
        src, dst = role[conn].get("src"), role[conn].get("dst")
        src_t, dst_t = ready[conn].get(src), ready[conn].get(dst)
        if protocol == "tcp":
            done = dst_t
        else:
            done = None if src_t is None or dst_t is None else max(src_t, dst_t)
        out[conn] = None if done is None else (done - t0) / 1000.0
    return out


@dataclass
class E2eStats:
    delays_ms: Dict[int, float]  # seq -> delay
    sent: int
    mean_ms: Optional[float]
    jitter_ms: Optional[float]

    @property
    def series(self) -> List[float]:
        return [self.delays_ms[s] for s in sorted(self.delays_ms)]

    @property
    def undelivered(self) -> int:
        return self.sent - len(self.delays_ms)


def delay_stats(values: List[float]):
    if not values:
        return None, None
    return statistics.fmean(values), statistics.pstdev(values)


def measure_e2e_delay(trace: TraceLog) -> Dict[int, E2eStats]:
    """Per-packet delay from the first transmission at the sending host to
    in-order delivery at the receiving host; jitter is the standard deviation."""
    sent: Dict[int, Dict[int, int]] = defaultdict(dict)
    got: Dict[int, Dict[int, int]] = defaultdict(dict)
    for r in trace:
        if r.kind == "DATA_SENT" and r.detail == "first":
            sent[r.conn].setdefault(r.seq, r.time_us)
        elif r.kind == "DELIVER":
            got[r.conn].setdefault(r.seq, r.time_us)
    out = {}
    for conn in sorted(sent):
        delays = {s: (t - sent[conn][s]) / 1000.0 for s, t in got[conn].items() if s in sent[conn]}
        mean, jitter = delay_stats([delays[s] for s in sorted(delays)])
        out[conn] = E2eStats(delays, len(sent[conn]), mean, jitter)
    return out


def retransmissions(trace: TraceLog, protocol: str, conn_ids=()) -> Dict[int, int]:
    """In-path RD packets plus host retransmissions (SDTP), or sender
    retransmissions (TCP baseline)."""
    counts: Dict[int, int] = defaultdict(int)
    for c in conn_ids:
        counts[c] = 0
    for r in trace:
        if r.kind == "DATA_SENT" and r.detail != "first":
            counts[r.conn] += 1
        elif r.kind == "RD_SENT" and protocol == "sdtp":
            counts[r.conn] += 1
    return dict(sorted(counts.items()))


@dataclass(frozen=True)
class MetricsSummary:
    scenario_id: str
    protocol: str
    loss_rate: float
    control_delay_ms: float
    seed: int
    conn_delay_ms: Optional[float]
    mean_e2e_ms: Optional[float]
    jitter_ms: Optional[float]
    retx_count: int
    undelivered: int

    def row(self) -> List[str]:
        return [_fmt(getattr(self, f)) for f in CSV_FIELDS]

    @classmethod
    def from_row(cls, row: Dict[str, str]) -> "MetricsSummary":
        conv = {f.name: f.type for f in fields(cls)}
        vals = {}
        for name in CSV_FIELDS:
            raw = row[name]
            t = conv[name]
            if raw == "":
                vals[name] = None
            elif t == "int":
                vals[name] = int(raw)
            elif t == "str":
                vals[name] = raw
            else:
                vals[name] = float(raw)
        return cls(**vals)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class LinkLedger:
    transmitted: int
    arrived: int
    lost: int
    dropped: int
    in_flight: int
    queued: int  # deliveries still pending in the event queue

    @property
    def balanced(self) -> bool:
        return (self.transmitted == self.arrived + self.lost + self.dropped + self.in_flight
                and self.in_flight == self.queued)


@dataclass
class HostLedger:
    sent: int
    delivered: int
    undelivered: int
    duplicate_deliveries: int
    in_order: bool

    @property
    def balanced(self) -> bool:
        return (self.sent == self.delivered + self.undelivered
                and self.duplicate_deliveries == 0 and self.in_order)


@dataclass
class Conservation:
    links: Dict[str, LinkLedger] = field(default_factory=dict)
    hosts: Dict[int, HostLedger] = field(default_factory=dict)

    @property
    def balanced(self) -> bool:
        return all(l.balanced for l in self.links.values()) and all(h.balanced for h in self.hosts.values())

    def problems(self) -> List[str]:
        bad = [f"link {k}: {v}" for k, v in self.links.items() if not v.balanced]
        return bad + [f"conn {k}: {v}" for k, v in self.hosts.items() if not v.balanced]


def host_ledger(trace: TraceLog, conn_ids) -> Dict[int, HostLedger]:
    sent: Dict[int, set] = defaultdict(set)
    deliveries: Dict[int, List[int]] = defaultdict(list)
    for r in trace:
        if r.kind == "DATA_SENT":
            sent[r.conn].add(r.seq)
        elif r.kind == "DELIVER":
            deliveries[r.conn].append(r.seq)
    out = {}
    for conn in sorted(conn_ids):
        seqs = deliveries[conn]
        unique = set(seqs)
        out[conn] = HostLedger(
            sent=len(sent[conn]),
            delivered=len(unique & sent[conn]),
            undelivered=len(sent[conn] - unique),
            duplicate_deliveries=len(seqs) - len(unique),
            in_order=all(a < b for a, b in zip(seqs, seqs[1:])),
        )
    return out
