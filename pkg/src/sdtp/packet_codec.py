"""SDTP header wire format.

Layout (big-endian), required part = 24 bytes::

    0   flag        1B  upper 5 bits kind, lower 3 bits trigger
    1   reserved    1B  bit 0 set when the optional block follows
    2   payload_len 2B
    4   slice_id    4B
    8   conn_id     4B
    12  seq         4B
    16  timestamp   4B  simulation microseconds, mod 2**32
    20  checksum    2B
    22  reserved    2B

Optional part = 20 bytes: num, start_seq, end_seq, start_num, aux (4B each).

The checksum is the IP-style 16-bit one's-complement checksum over the
whole datagram (header with checksum zeroed, optional block, payload).
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Optional, Tuple

REQUIRED_LEN = 24
OPTIONAL_LEN = 20
SEQ_INFINITY = 0xFFFF_FFFF
U32 = 0xFFFF_FFFF
U16 = 0xFFFF

_REQUIRED = struct.Struct(">BBHIIIIHH")
_OPTIONAL = struct.Struct(">IIIII")
_OPT_PRESENT = 0x01
_CHECKSUM_OFFSET = 20


class CodecError(ValueError):
    pass


class InvalidHeader(CodecError):
    pass


class Truncated(CodecError):
    pass


class BadChecksum(CodecError):
    pass


class UnknownFlag(CodecError):
    pass


class Kind(enum.IntEnum):
    DATA = 1
    SYN = 2
    SYN_ACK = 3
    RR = 4
    RD = 5
    RI = 6
    CN = 7


class Trigger(enum.IntEnum):
    C = 1  # interarrival counter threshold
    T = 2  # interarrival timeout
    R = 3  # retransmission timeout


_TRIGGERED = (Kind.RR, Kind.RD)


@dataclass(frozen=True)
class PacketFlag:
    kind: Kind
    trigger: Optional[Trigger] = None

    def validate(self) -> None:
        if not isinstance(self.kind, Kind):
            raise InvalidHeader(f"kind must be a Kind, got {self.kind!r}")
        if (self.kind in _TRIGGERED) != (self.trigger is not None):
            raise InvalidHeader(
                f"{self.kind.name} packets {'need' if self.kind in _TRIGGERED else 'take no'} trigger"
            )

    def to_byte(self) -> int:
        return (int(self.kind) << 3) | (int(self.trigger) if self.trigger else 0)

    @classmethod
    def from_byte(cls, value: int) -> "PacketFlag":
        kind_bits, trig_bits = value >> 3, value & 0x07
        try:
            kind = Kind(kind_bits)
        except ValueError:
            raise UnknownFlag(f"unknown kind {kind_bits} in flag byte 0x{value:02x}") from None
        trigger = None
        if trig_bits:
            try:
                trigger = Trigger(trig_bits)
            except ValueError:
                raise UnknownFlag(f"unknown trigger {trig_bits} in flag byte 0x{value:02x}") from None
        flag = cls(kind, trigger)
        try:
            flag.validate()
        except InvalidHeader as exc:
            raise UnknownFlag(str(exc)) from None
        return flag


@dataclass(frozen=True)
class OptionalBlock:
    """Retransmission context.

    ``aux`` is AddL for RI packets, the timestamp echo for RR/RD packets and
    the cumulative release sequence for CN packets.
    """

    num: int = 0
    start_seq: int = 0
    end_seq: int = SEQ_INFINITY
    start_num: int = 0
    aux: int = 0

    @property
    def open_ended(self) -> bool:
        return self.end_seq == SEQ_INFINITY

    def validate(self) -> None:
        for name in ("num", "start_seq", "end_seq", "start_num", "aux"):
            value = getattr(self, name)
            if not isinstance(value, int) or not 0 <= value <= U32:
                raise InvalidHeader(f"optional.{name}={value!r} is not a 32-bit unsigned int")
        if not self.open_ended and self.start_seq > self.end_seq:
            raise InvalidHeader(f"start_seq {self.start_seq} > end_seq {self.end_seq}")


@dataclass(frozen=True)
class SdtpHeader:
    flag: PacketFlag
    slice_id: int = 0
    conn_id: int = 0
    seq: int = 0
    payload_len: int = 0
    timestamp: int = 0
    optional: Optional[OptionalBlock] = None
    # filled in by encode/decode; not part of header identity
    checksum: int = field(default=0, compare=False)

    @property
    def kind(self) -> Kind:
        return self.flag.kind

    @property
    def trigger(self) -> Optional[Trigger]:
        return self.flag.trigger

    @property
    def wire_len(self) -> int:
        return REQUIRED_LEN + (OPTIONAL_LEN if self.optional is not None else 0) + self.payload_len

    def validate(self) -> None:
        self.flag.validate()
        for name, limit in (("slice_id", U32), ("conn_id", U32), ("seq", U32),
                            ("timestamp", U32), ("payload_len", U16)):
            value = getattr(self, name)
            if not isinstance(value, int) or not 0 <= value <= limit:
                raise InvalidHeader(f"{name}={value!r} out of range")
        if self.optional is not None:
            self.optional.validate()
            if self.kind is Kind.RR and self.trigger is Trigger.T and not self.optional.open_ended:
                raise InvalidHeader("RR(T) locates a single packet; end_seq must be open")
        elif self.kind in (Kind.RR, Kind.RI, Kind.CN):
            raise InvalidHeader(f"{self.kind.name} requires an optional block")


def ones_complement_sum(data: bytes) -> int:
    """16-bit one's-complement sum with end-around carry (RFC 1071)."""
    if len(data) & 1:
        data = data + b"\x00"
    total = sum(struct.unpack(f">{len(data) // 2}H", data))
    while total >> 16:
        total = (total & U16) + (total >> 16)
    return total


def internet_checksum(data: bytes) -> int:
    return ~ones_complement_sum(data) & U16


def _pack(header: SdtpHeader, checksum: int) -> bytes:
    opt = header.optional
    head = _REQUIRED.pack(
        header.flag.to_byte(),
        _OPT_PRESENT if opt is not None else 0,
        header.payload_len,
        header.slice_id,
        header.conn_id,
        header.seq,
        header.timestamp,
        checksum,
        0,
    )
    if opt is None:
        return head
    return head + _OPTIONAL.pack(opt.num, opt.start_seq, opt.end_seq, opt.start_num, opt.aux)


def encode(header: SdtpHeader, payload: bytes = b"") -> bytes:
    header.validate()
    if header.payload_len != len(payload):
        raise InvalidHeader(f"payload_len {header.payload_len} != len(payload) {len(payload)}")
    body = _pack(header, 0) + bytes(payload)
    checksum = internet_checksum(body)
    return body[:_CHECKSUM_OFFSET] + checksum.to_bytes(2, "big") + body[_CHECKSUM_OFFSET + 2:]


def decode(buf: bytes) -> Tuple[SdtpHeader, bytes]:
    if len(buf) < REQUIRED_LEN:
        raise Truncated(f"{len(buf)} bytes, need at least {REQUIRED_LEN}")
    flag_byte, reserved, payload_len, slice_id, conn_id, seq, ts, checksum, tail = \
        _REQUIRED.unpack_from(buf, 0)
    has_opt = bool(reserved & _OPT_PRESENT)
    total = REQUIRED_LEN + (OPTIONAL_LEN if has_opt else 0) + payload_len
    if len(buf) < total:
        raise Truncated(f"{len(buf)} bytes, header declares {total}")
    if len(buf) > total:
        raise InvalidHeader(f"{len(buf) - total} trailing bytes after a {total}-byte datagram")
    buf = bytes(buf)
    if ones_complement_sum(buf) != U16:
        raise BadChecksum(f"checksum mismatch (field 0x{checksum:04x})")
    if reserved & ~_OPT_PRESENT or tail:
        raise InvalidHeader("reserved bits must be zero")
    flag = PacketFlag.from_byte(flag_byte)
    opt = None
    if has_opt:
        opt = OptionalBlock(*_OPTIONAL.unpack_from(buf, REQUIRED_LEN))
    header = SdtpHeader(flag=flag, slice_id=slice_id, conn_id=conn_id, seq=seq,
                        payload_len=payload_len, timestamp=ts, optional=opt, checksum=checksum)
    header.validate()
    start = total - payload_len
    return header, buf[start:total]


def hexdump(buf: bytes) -> str:
    """Golden-file format: 16 bytes per line, space separated."""
    rows = [buf[i:i + 16].hex(" ") for i in range(0, len(buf), 16)]
    return "\n".join(rows) + "\n"


def parse_hexdump(text: str) -> bytes:
    return bytes.fromhex("".join(line.split("#", 1)[0] for line in text.splitlines()))
