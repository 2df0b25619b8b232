import pytest

from sdtp.cr_node import CachingBuffer, ConnConfig, NoRoute, SdtpSwitch, UnrecoverableLoss, payload_for
from sdtp.messages import Established, HostSegment, Note, SdtpPacket, Send, SetTimer, ToController
from sdtp.packet_codec import SEQ_INFINITY, Kind, OptionalBlock, PacketFlag, SdtpHeader, Trigger

MS = 1000


def cfg(**kw):
    base = dict(conn_id=1, slice_id=1, src_host="A", dst_host="B", upstream="U", downstream="D",
                send_interval_ms=15, cn_period_us=150 * MS, initial_rto_ms=40, suppress_window_us=50 * MS)
    base.update(kw)
    return ConnConfig(**base)


def switch(**kw):
    sw = SdtpSwitch("X")
    sw.install(cfg(**kw))
    return sw


def data(seq, ts=0, payload=b""):
    return SdtpPacket(SdtpHeader(PacketFlag(Kind.DATA), 1, 1, seq, len(payload), ts), payload)


def rr(trigger, start, end=SEQ_INFINITY, start_num=0, ts=0):
    opt = OptionalBlock(1, start, end, start_num, ts)
    return SdtpPacket(SdtpHeader(PacketFlag(Kind.RR, trigger), 1, 1, start, 0, ts, opt))


def sends(acts, kind=None):
    out = [a for a in acts if isinstance(a, Send)]
    if kind is not None:
        out = [a for a in out if isinstance(a.packet, SdtpPacket) and a.packet.kind is kind]
    return out


def notes(acts, event):
    return [a for a in acts if isinstance(a, Note) and a.event == event]


# -- caching


def test_data_forwarded_and_cached():
    sw = switch(caching=True)
    acts = sw.receive(data(7), "U", 0)
    assert [(s.packet.seq, s.to) for s in sends(acts, Kind.DATA)] == [(7, "D")]
    assert 7 in sw.cache(1)
    assert any(isinstance(a, SetTimer) and a.key == ("cn", 1) for a in acts)


def test_forward_only_node_keeps_nothing():
    sw = switch()
    sw.receive(data(7), "U", 0)
    assert sw.cache(1) is None and sw.detector(1) is None


def test_cache_overflow_evicts_lowest():
    buf = CachingBuffer(1, 2)
    for s in (1, 2, 3):
        buf.insert(s, b"")
    assert set(buf.entries) == {2, 3}
    assert buf.cached_losses == 1


def test_control_packets_not_cached():
    sw = switch(caching=True)
    sw.receive(data(0), "U", 0)
    ri = SdtpPacket(SdtpHeader(PacketFlag(Kind.RI), 1, 1, 5, 0, 0, OptionalBlock(1, 5, 6, 0, 2)))
    sw.receive(ri, "U", 1)
    sw.receive(rr(Trigger.C, 0, 1), "D", 2)
    assert set(sw.cache(1).entries) == {0}
    assert sw.counters["cached"] == 1


def test_no_flow_entry():
    sw = SdtpSwitch("X")
    with pytest.raises(NoRoute):
        sw.receive(data(0), "U", 0)


# -- caching notification


def test_cn_reports_contiguous_prefix():
    sw = switch(caching=True)
    for s in range(10):
        sw.receive(data(s), "U", s)
    acts = sw.on_timer(("cn", 1), 150 * MS)
    (cn,) = sends(acts, Kind.CN)
    assert cn.to == "U" and cn.packet.header.optional.aux == 9


def test_cn_not_sent_when_empty():
    sw = switch(caching=True)
    assert sw.on_timer(("cn", 1), 150 * MS) == []


def test_cn_releases_upstream_copies():
    sw = switch(caching=True)
    for s in range(12):
        sw.receive(data(s), "U", s)
    cn = SdtpPacket(SdtpHeader(PacketFlag(Kind.CN), 1, 1, 9, 0, 0, OptionalBlock(0, 9, 9, 0, 9)))
    sw.receive(cn, "D", 100)
    assert set(sw.cache(1).entries) == {10, 11}


def test_cn_monotone():
    sw = switch(caching=True)
    for s in range(5):
        sw.receive(data(s), "U", s)
    first = sends(sw.on_timer(("cn", 1), 150 * MS), Kind.CN)
    assert first[0].packet.header.optional.aux == 4
    assert sw.on_timer(("cn", 1), 300 * MS) == []  # nothing new
    sw.receive(data(5), "U", 301 * MS)
    assert sends(sw.on_timer(("cn", 1), 450 * MS), Kind.CN)[0].packet.header.optional.aux == 5


# -- RR handling


def cached_node(n=10, **kw):
    sw = switch(caching=True, **kw)
    for s in range(n):
        sw.receive(data(s, payload=payload_for(s, 8)), "U", s)
    return sw


def test_rr_range_answered():
    sw = cached_node()
    acts = sw.receive(rr(Trigger.C, 3, 5, ts=77), "D", 10 * MS)
    rds = sends(acts, Kind.RD)
    assert [(r.packet.seq, r.to) for r in rds] == [(3, "D"), (4, "D")]
    h = rds[0].packet.header
    assert h.trigger is Trigger.C and h.optional.aux == 77 and h.optional.start_seq == 3
    assert rds[0].packet.payload == payload_for(3, 8)


def test_rr_t_locator():
    sw = cached_node()
    acts = sw.receive(rr(Trigger.T, 3, start_num=2), "D", 10 * MS)
    assert [r.packet.seq for r in sends(acts, Kind.RD)] == [5]


def test_rr_not_cached_forwarded_upstream():
    sw = cached_node(3)  # holds 0..2, neither edge nor retransmission node
    msg = rr(Trigger.C, 5, 7)
    acts = sw.receive(msg, "D", 10 * MS)
    assert sends(acts) == [Send(msg, "U")]


def test_rr_partly_cached_splits():
    sw = cached_node(4)
    acts = sw.receive(rr(Trigger.C, 2, 6), "D", 10 * MS)
    assert [r.packet.seq for r in sends(acts, Kind.RD)] == [2, 3]
    (fwd,) = sends(acts, Kind.RR)
    assert (fwd.packet.header.optional.start_seq, fwd.packet.header.optional.end_seq, fwd.to) == (4, 6, "U")


def test_rr_missing_at_segment_head_is_unrecoverable():
    sw = cached_node(10, retransmission=True)
    sw.cache(1).release_through(5)
    with pytest.raises(UnrecoverableLoss):
        sw.receive(rr(Trigger.C, 3, 4), "D", 10 * MS)


def test_rr_for_unsent_seq_at_sending_edge():
    sw = cached_node(3, sending_edge=True, upstream="A")
    acts = sw.receive(rr(Trigger.T, 3), "D", 10 * MS)
    assert sends(acts) == []
    assert sw.counters["rr_unsent"] == 1


def test_duplicate_rr_suppressed_within_window():
    sw = cached_node()
    assert len(sends(sw.receive(rr(Trigger.C, 3, 4), "D", 10 * MS), Kind.RD)) == 1
    assert sends(sw.receive(rr(Trigger.C, 3, 4), "D", 20 * MS), Kind.RD) == []
    # another trigger type is a different condition
    assert len(sends(sw.receive(rr(Trigger.R, 3, 4), "D", 21 * MS), Kind.RD)) == 1
    # after the window the same request is served again
    assert len(sends(sw.receive(rr(Trigger.C, 3, 4), "D", 61 * MS), Kind.RD)) == 1
    assert sw.counters["rr_suppressed"] == 1


def test_relay_node_passes_rr_up():
    sw = switch()
    msg = rr(Trigger.C, 1, 2)
    assert sw.receive(msg, "D", 0) == [Send(msg, "U")]


# -- retransmission node


def ret_node(**kw):
    return switch(caching=True, retransmission=True, downstream_ret=True, **kw)


def feed(sw, seqs, t0=0, step=15 * MS):
    acts = []
    for i, s in enumerate(seqs):
        acts += sw.receive(data(s), "U", t0 + i * step)
    return acts


def test_c_trigger_sends_rr_and_ri():
    sw = ret_node()
    acts = feed(sw, [0, 1, 2, 5, 6])
    (req,) = sends(acts, Kind.RR)
    h = req.packet.header
    assert req.to == "U" and h.trigger is Trigger.C
    assert (h.optional.start_seq, h.optional.end_seq) == (3, 5)
    assert h.timestamp == 4 * 15 * MS and h.optional.aux == h.timestamp
    (ri,) = sends(acts, Kind.RI)
    assert ri.to == "D" and ri.packet.header.optional.aux >= 1
    assert sw.detector(1).entries[0].rt_cnt == 1


def test_no_ri_without_downstream_retransmission_node():
    sw = switch(caching=True, retransmission=True)
    acts = feed(sw, [0, 1, 2, 5, 6])
    assert len(sends(acts, Kind.RR)) == 1 and sends(acts, Kind.RI) == []


def test_t_trigger_sends_rr_only():
    sw = ret_node()
    feed(sw, [0, 1])
    acts = sw.on_timer(("ia", 1), 15 * MS + 18_751)
    (req,) = sends(acts, Kind.RR)
    assert req.packet.header.trigger is Trigger.T
    assert req.packet.header.optional.end_seq == SEQ_INFINITY
    assert req.packet.header.optional.start_seq == 2
    assert sends(acts, Kind.RI) == []


def rd_for(seq, rr_ts, ts=0):
    opt = OptionalBlock(1, seq, seq + 1, 0, rr_ts)
    return SdtpPacket(SdtpHeader(PacketFlag(Kind.RD, Trigger.C), 1, 1, seq, 0, ts, opt))


def test_rd_gives_rtt_sample_and_is_forwarded():
    sw = ret_node()
    acts = feed(sw, [0, 1, 2, 4, 5])
    t_rr = sends(acts, Kind.RR)[0].packet.header.timestamp
    acts = sw.receive(rd_for(3, t_rr), "U", t_rr + 35 * MS)
    (note,) = notes(acts, "RTT_SAMPLE")
    assert note.detail == "ms=35.0" and note.seq == 3
    assert sw.detector(1).rto.mean_ms == 35
    fwd = sends(acts, Kind.DATA)
    assert [f.packet.seq for f in fwd] == [3] and fwd[0].to == "D"
    assert not sw.detector(1).entries


def test_rd_for_filled_gap_is_duplicate():
    sw = ret_node()
    feed(sw, [0, 1, 2, 4, 5, 3])
    acts = sw.receive(rd_for(3, 0), "U", 200 * MS)
    assert notes(acts, "DUPLICATE") and not sends(acts)


def test_lost_rd_re_requested_with_type_r():
    sw = ret_node()
    acts = feed(sw, [0, 1, 2, 4, 5])
    t_rr = sends(acts, Kind.RR)[0].packet.header.timestamp
    timer = [a for a in acts if isinstance(a, SetTimer) and a.key == ("rt", 1)][-1]
    assert timer.at_us == t_rr + 40 * MS + 1
    acts = sw.on_timer(("rt", 1), timer.at_us)
    (req,) = sends(acts, Kind.RR)
    assert req.packet.header.trigger is Trigger.R
    assert sends(acts, Kind.RI) == []
    assert sw.detector(1).entries[0].rt_cnt == 2
    assert notes(acts, "TRIGGER_R")[0].detail.endswith("rt_cnt=2")


def test_ri_applied_and_propagated():
    sw = ret_node()
    feed(sw, [0, 1, 2, 5])
    ri = SdtpPacket(SdtpHeader(PacketFlag(Kind.RI), 1, 1, 3, 0, 0, OptionalBlock(1, 3, 5, 0, 3)))
    acts = sw.receive(ri, "U", 100 * MS)
    assert sw.detector(1).entries[0].cnt_thres == 4
    assert sends(acts) == [Send(ri, "D")]


# -- edges


def test_receiving_edge_delivers_in_order():
    sw = switch(caching=True, retransmission=True, receiving_edge=True, downstream="B")
    acts = feed(sw, [0, 2, 3])
    assert [s.packet.seq for s in sends(acts) if isinstance(s.packet, HostSegment)] == [0]
    acts = sw.receive(data(1), "U", 100 * MS)
    got = [s.packet for s in sends(acts) if isinstance(s.packet, HostSegment)]
    assert [(p.kind, p.seq, p.dst) for p in got] == [("DATA", 1, "B"), ("DATA", 2, "B"), ("DATA", 3, "B")]


def test_sending_edge_converts_and_acks_host():
    sw = switch(caching=True, sending_edge=True, upstream="A")
    acts = sw.receive(HostSegment("DATA", 1, "A", "B", seq=0), "A", 5)
    (pkt,) = sends(acts, Kind.DATA)
    assert pkt.packet.header.timestamp == 5 and pkt.to == "D"
    ack = [a for a in sends(acts) if isinstance(a.packet, HostSegment)]
    assert ack[0].packet.kind == "ACK" and ack[0].packet.ack == 1 and ack[0].to == "A"


def test_host_ack_dropped_at_sending_edge():
    sw = switch(caching=True, sending_edge=True, upstream="A")
    acts = sw.receive(HostSegment("ACK", 1, "A", "B", seq=1, ack=1), "A", 0)
    assert sends(acts) == [] and notes(acts, "DROP_HOST_ACK")
    assert sw.counters["host_ack_dropped"] == 1


def test_syn_goes_to_controller():
    sw = SdtpSwitch("S1", hosts=("A",))
    acts = sw.receive(HostSegment("SYN", 1, "A", "B"), "A", 0)
    assert len(acts) == 1 and isinstance(acts[0], ToController)
    assert acts[0].message.edge == "S1"


def test_edge_patch_ack_synthesizes_one_ack():
    sw = SdtpSwitch("S5", hosts=("B",))
    acts = sw.on_control(Established(1, host="B", peer="A"), 0)
    assert len(acts) == 1
    seg = acts[0].packet
    assert (seg.kind, seg.src, seg.dst, acts[0].to) == ("ACK", "A", "B", "B")


def test_install_idempotent():
    sw = switch(caching=True)
    sw.receive(data(0), "U", 0)
    sw.install(cfg(caching=True))
    assert 0 in sw.cache(1)
