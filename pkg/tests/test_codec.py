import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from golden_vectors import VECTORS, golden_bytes
from sdtp.packet_codec import (
    OPTIONAL_LEN, REQUIRED_LEN, SEQ_INFINITY, BadChecksum, CodecError, InvalidHeader, Kind,
    OptionalBlock, PacketFlag, SdtpHeader, Trigger, Truncated, UnknownFlag, decode, encode,
    hexdump, internet_checksum, parse_hexdump,
)


def header_from(fields):
    opt = fields.get("optional")
    trig = fields.get("trigger")
    payload = fields.get("payload", b"")
    h = SdtpHeader(
        flag=PacketFlag(Kind[fields["kind"]], Trigger[trig] if trig else None),
        slice_id=fields.get("slice_id", 0),
        conn_id=fields.get("conn_id", 0),
        seq=fields.get("seq", 0),
        payload_len=len(payload),
        timestamp=fields.get("timestamp", 0),
        optional=OptionalBlock(*opt) if opt else None,
    )
    return h, payload


@pytest.mark.parametrize("name", sorted(VECTORS))
def test_golden_vectors_byte_exact(name):
    h, payload = header_from(VECTORS[name])
    assert encode(h, payload) == golden_bytes(name)


@pytest.mark.parametrize("name", sorted(VECTORS))
def test_golden_vectors_decode(name):
    h, payload = header_from(VECTORS[name])
    got_h, got_p = decode(golden_bytes(name))
    assert (got_h, got_p) == (h, payload)


def test_field_offsets():
    h = SdtpHeader(PacketFlag(Kind.RR, Trigger.C), slice_id=0x01020304, conn_id=0x05060708,
                   seq=0x090A0B0C, timestamp=0x0D0E0F10, optional=OptionalBlock(1, 2, 3, 4, 5))
    buf = encode(h)
    assert buf[0] == (4 << 3) | 1
    assert buf[1] == 0x01
    assert buf[4:8] == bytes([1, 2, 3, 4])
    assert buf[8:12] == bytes([5, 6, 7, 8])
    assert buf[12:16] == bytes([9, 10, 11, 12])
    assert buf[16:20] == bytes([13, 14, 15, 16])
    assert buf[22:24] == b"\x00\x00"
    assert buf[24:28] == (1).to_bytes(4, "big")
    assert buf[40:44] == (5).to_bytes(4, "big")


def test_required_and_optional_sizes():
    assert REQUIRED_LEN == 24 and OPTIONAL_LEN == 20
    assert len(encode(SdtpHeader(PacketFlag(Kind.DATA)))) == 24
    assert len(encode(SdtpHeader(PacketFlag(Kind.CN), optional=OptionalBlock()))) == 44


def test_23_byte_buffer_is_truncated():
    buf = encode(SdtpHeader(PacketFlag(Kind.DATA), seq=1))
    with pytest.raises(Truncated):
        decode(buf[:23])


def test_declared_payload_missing_is_truncated():
    buf = encode(SdtpHeader(PacketFlag(Kind.DATA), payload_len=4), b"abcd")
    with pytest.raises(Truncated):
        decode(buf[:-1])


def test_trailing_bytes_rejected():
    buf = encode(SdtpHeader(PacketFlag(Kind.DATA), seq=1))
    with pytest.raises(InvalidHeader):
        decode(buf + b"\x00\x00")


def test_unknown_flag():
    h = SdtpHeader(PacketFlag(Kind.DATA), seq=9)
    body = bytearray(encode(h))
    body[0] = 31 << 3  # kind 31 does not exist
    body[20:22] = b"\x00\x00"
    body[20:22] = oracles.checksum16(bytes(body)).to_bytes(2, "big")
    with pytest.raises(UnknownFlag):
        decode(bytes(body))


def test_trigger_on_data_flag_rejected():
    body = bytearray(oracles.pack("DATA", seq=1))
    body[0] |= 1
    body[20:22] = b"\x00\x00"
    body[20:22] = oracles.checksum16(bytes(body)).to_bytes(2, "big")
    with pytest.raises(UnknownFlag):
        decode(bytes(body))


def test_flag_trigger_presence_rule():
    with pytest.raises(InvalidHeader):
        PacketFlag(Kind.RR).validate()
    with pytest.raises(InvalidHeader):
        PacketFlag(Kind.DATA, Trigger.C).validate()
    PacketFlag(Kind.RD, Trigger.R).validate()


def test_header_validation():
    with pytest.raises(InvalidHeader):
        encode(SdtpHeader(PacketFlag(Kind.RR, Trigger.C)))  # RR needs optional block
    with pytest.raises(InvalidHeader):
        encode(SdtpHeader(PacketFlag(Kind.DATA), seq=1 << 32))
    with pytest.raises(InvalidHeader):
        encode(SdtpHeader(PacketFlag(Kind.DATA), payload_len=3), b"ab")
    with pytest.raises(InvalidHeader):
        encode(SdtpHeader(PacketFlag(Kind.RR, Trigger.T), optional=OptionalBlock(end_seq=5)))


def test_infinity_sentinel():
    opt = OptionalBlock(start_seq=10)
    assert opt.end_seq == SEQ_INFINITY == 0xFFFFFFFF and opt.open_ended


def test_checksum_field_ignored_by_equality():
    a = SdtpHeader(PacketFlag(Kind.DATA), seq=3)
    b = SdtpHeader(PacketFlag(Kind.DATA), seq=3, checksum=0xBEEF)
    assert a == b


def test_checksum_matches_reference():
    rng = random.Random(7)
    for _ in range(200):
        data = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 80)))
        assert internet_checksum(data) == oracles.checksum16(data)


def test_hexdump_roundtrip():
    buf = encode(SdtpHeader(PacketFlag(Kind.DATA), seq=77, payload_len=20), bytes(range(20)))
    assert parse_hexdump("# comment\n" + hexdump(buf)) == buf


def random_packet(rng):
    kind = rng.choice(list(Kind))
    trig = rng.choice(list(Trigger)) if kind in (Kind.RR, Kind.RD) else None
    need_opt = kind in (Kind.RR, Kind.RI, Kind.CN)
    opt = None
    if need_opt or rng.random() < 0.5:
        start = rng.randrange(1 << 32)
        if kind is Kind.RR and trig is Trigger.T:
            end = SEQ_INFINITY
        else:
            end = rng.choice([SEQ_INFINITY, rng.randrange(start, 1 << 32)])
        opt = OptionalBlock(rng.randrange(1 << 32), start, end, rng.randrange(1 << 32), rng.randrange(1 << 32))
    payload = bytes(rng.randrange(256) for _ in range(rng.choice([0, 0, 1, 7, 64])))
    h = SdtpHeader(PacketFlag(kind, trig), rng.randrange(1 << 32), rng.randrange(1 << 32),
                   rng.randrange(1 << 32), len(payload), rng.randrange(1 << 32), opt)
    return h, payload


def test_roundtrip_10k_random_packets():
    rng = random.Random(20240601)
    for _ in range(10_000):
        h, payload = random_packet(rng)
        buf = encode(h, payload)
        assert len(buf) == 24 + (20 if h.optional else 0) + len(payload)
        assert decode(buf) == (h, payload)


def test_encode_matches_reference_packer():
    rng = random.Random(99)
    for _ in range(500):
        h, payload = random_packet(rng)
        opt = h.optional
        ref = oracles.pack(h.kind.name, h.trigger.name if h.trigger else None, h.slice_id, h.conn_id, h.seq,
                           h.timestamp, (opt.num, opt.start_seq, opt.end_seq, opt.start_num, opt.aux) if opt else None,
                           payload)
        assert encode(h, payload) == ref


def test_every_single_bit_flip_detected():
    rng = random.Random(5)
    for _ in range(40):
        h, payload = random_packet(rng)
        buf = encode(h, payload)
        for bit in range(len(buf) * 8):
            bad = bytearray(buf)
            bad[bit // 8] ^= 1 << (bit % 8)
            with pytest.raises(CodecError):
                decode(bytes(bad))


def test_flipped_payload_bit_is_bad_checksum():
    rng = random.Random(11)
    h = SdtpHeader(PacketFlag(Kind.DATA), seq=5, payload_len=32)
    buf = bytearray(encode(h, bytes(32)))
    off = rng.randrange(24, len(buf))
    buf[off] ^= 1 << rng.randrange(8)
    with pytest.raises(BadChecksum):
        decode(bytes(buf))


@settings(max_examples=300, deadline=None)
@given(seq=st.integers(0, 2**32 - 1), conn=st.integers(0, 2**32 - 1), payload=st.binary(max_size=100),
       with_opt=st.booleans())
def test_roundtrip_property(seq, conn, payload, with_opt):
    opt = OptionalBlock(1, seq, SEQ_INFINITY, 0, conn) if with_opt else None
    h = SdtpHeader(PacketFlag(Kind.RD, Trigger.T), 1, conn, seq, len(payload), seq ^ conn, opt)
    assert decode(encode(h, payload)) == (h, payload)
