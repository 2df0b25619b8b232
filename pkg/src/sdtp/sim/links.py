"""Directional links with fixed delay and Bernoulli loss."""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from ..messages import HostSegment, SdtpPacket


def link_rng(seed: int, link_id: str) -> random.Random:
    """Independent stream per link so topology edits leave other links untouched."""
    digest = hashlib.sha256(f"{seed}:{link_id}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def describe(packet) -> Tuple[str, int, int]:
    """(kind, conn_id, seq) of anything that travels on a link."""
    if isinstance(packet, SdtpPacket):
        h = packet.header
        return h.kind.name, h.conn_id, h.seq
    if isinstance(packet, HostSegment):
        return packet.kind, packet.conn_id, packet.seq
    raise TypeError(f"not a packet: {packet!r}")


@dataclass
class ScriptedDrop:
    kind: str
    seq: int
    conn: Optional[int] = None
    used: bool = False

    def matches(self, kind: str, conn: int, seq: int) -> bool:
        return (not self.used and self.kind == kind and self.seq == seq
                and (self.conn is None or self.conn == conn))


@dataclass
class Link:
    src: str
    dst: str
    delay_us: int
    loss: float = 0.0
    seed: int = 0
    drops: List[ScriptedDrop] = field(default_factory=list)
    transmitted: int = 0
    arrived: int = 0
    lost: int = 0
    dropped: int = 0
    in_flight: int = 0

    def __post_init__(self):
        if not 0.0 <= self.loss <= 1.0:
            raise ValueError(f"loss probability out of range on {self.link_id}: {self.loss}")
        if self.delay_us < 0:
            raise ValueError(f"negative delay on {self.link_id}")
        self.rng = link_rng(self.seed, self.link_id)

    @property
    def link_id(self) -> str:
        return f"{self.src}->{self.dst}"

    def transmit(self, packet) -> Optional[str]:
        """Decide the packet's fate. Returns None if it will arrive, else the
        reason it was discarded ("LOSS" or "DROP")."""
        self.transmitted += 1
        kind, conn, seq = describe(packet)
        # draw for every packet so scripted drops do not shift the loss stream
        unlucky = self.loss > 0.0 and self.rng.random() < self.loss
        for rule in self.drops:
            if rule.matches(kind, conn, seq):
                rule.used = True
                self.dropped += 1
                return "DROP"
        if unlucky:
            self.lost += 1
            return "LOSS"
        self.in_flight += 1
        return None

    def arrive(self) -> None:
        self.in_flight -= 1
        self.arrived += 1

    def balanced(self) -> bool:
        return self.transmitted == self.arrived + self.lost + self.dropped + self.in_flight
