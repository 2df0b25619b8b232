"""Messages and actions exchanged between simulated components.

Nodes and hosts never touch the event loop; they return lists of actions
(:class:`Send`, :class:`SetTimer`, ...) that the engine carries out.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional, Tuple

from .packet_codec import SdtpHeader


@dataclass(frozen=True)
class SdtpPacket:
    header: SdtpHeader
    payload: bytes = b""

    @property
    def kind(self):
        return self.header.kind

    @property
    def seq(self) -> int:
        return self.header.seq


@dataclass(frozen=True)
class HostSegment:
    """A TCP-style segment on a host access link (or end to end for the
    TCP baseline). Sequence numbers count packets."""

    kind: str  # SYN, SYN_ACK, ACK, DATA
    conn_id: int
    src: str
    dst: str
    seq: int = 0
    ack: int = 0
    payload_len: int = 0


# -- actions ------------------------------------------------------------------


@dataclass(frozen=True)
class Send:
    packet: Any
    to: str


@dataclass(frozen=True)
class SetTimer:
    key: Tuple
    at_us: int


@dataclass(frozen=True)
class CancelTimer:
    key: Tuple


@dataclass(frozen=True)
class ToController:
    message: Any


@dataclass(frozen=True)
class Note:
    """Trace-only annotation (host state changes, drops, triggers)."""

    event: str
    detail: str = ""
    conn: int = -1
    seq: int = -1


@dataclass(frozen=True)
class HostSend:
    """Ask the engine for a traffic-source tick on ``conn_id`` at ``at_us``."""

    conn_id: int
    at_us: int


# -- control plane ------------------------------------------------------------


@dataclass(frozen=True)
class PacketIn:
    segment: HostSegment
    edge: str


@dataclass(frozen=True)
class PacketOut:
    segment: HostSegment


@dataclass(frozen=True)
class Established:
    conn_id: int
    host: str  # host at the receiving edge that gets the synthesized ACK
    peer: str


@dataclass(frozen=True)
class PathFailed:
    conn_id: int
    host: str


@dataclass
class ControlSend:
    """Controller output: ``message`` reaches ``node`` at ``at_us``."""

    node: str
    message: Any
    at_us: int
    traversal: bool = field(default=False)  # counts as an edge-to-edge signalling hop
