import pytest

from sdtp.control_plane import (
    ConnState, Controller, FunctionParams, LinkStatusTable, PathFailure, build_configs,
)
from sdtp.cr_node import FlowInstall, SdtpSwitch
from sdtp.messages import Established, HostSegment, PacketIn, PacketOut, PathFailed

CORE = ["S1", "S2", "S3", "S4", "S5"]
MS = 1000


def table(loss=0.01):
    t = LinkStatusTable()
    for a, b in zip(CORE, CORE[1:]):
        t.add_link(a, b, 5.0, loss)
    return t


def controller(params=None, t=None):
    return Controller(t or table(), {"A": "S1", "B": "S5"}, 10.0, {1: params or FunctionParams()})


SYN = HostSegment("SYN", 1, "A", "B")
SYN_ACK = HostSegment("SYN_ACK", 1, "B", "A", ack=1)


def test_syn_packet_out_after_control_delay():
    c = controller()
    sends = c.handle_packet_in(PacketIn(SYN, "S1"), 3 * MS)
    outs = [s for s in sends if isinstance(s.message, PacketOut)]
    assert [(s.node, s.at_us, s.traversal) for s in outs] == [("S5", 13 * MS, True)]
    installs = [s for s in sends if isinstance(s.message, FlowInstall)]
    assert sorted(s.node for s in installs) == sorted(CORE)
    # functions go out before the SYN is handed to the receiving edge
    assert all(s.at_us <= 3 * MS for s in installs)
    assert c.records[1].state is ConnState.SYN_SEEN
    assert c.records[1].path_forward == tuple(CORE)


def test_path_deployed_then_reused():
    t = table()
    c = controller(t=t)
    assert t.lookup("S1", "S5") is None
    c.handle_packet_in(PacketIn(SYN, "S1"), 0)
    assert t.lookup("S1", "S5") == tuple(CORE)
    t.paths[("S1", "S5")] = tuple(CORE)
    assert c.resolve_path("S1", "S5") == tuple(CORE)


def test_no_path_is_path_failure():
    t = table()
    t.set_state("S3", "S4", up=False)
    c = controller(t=t)
    sends = c.handle_packet_in(PacketIn(SYN, "S1"), 0)
    assert len(sends) == 1
    assert sends[0].node == "S1" and isinstance(sends[0].message, PathFailed)
    assert c.records[1].state is ConnState.FAILED
    with pytest.raises(PathFailure):
        c.resolve_path("S1", "S5")


def test_link_down_drops_installed_path():
    t = table()
    t.install("S1", "S5", CORE)
    t.set_state("S2", "S3", up=False)
    assert t.lookup("S1", "S5") is None
    assert all(t.path_is_up(p) for p in t.paths.values())
    with pytest.raises(PathFailure):
        t.install("S1", "S5", CORE)


def test_syn_then_syn_ack_establishes():
    c = controller()
    c.handle_packet_in(PacketIn(SYN, "S1"), 0)
    sends = c.handle_packet_in(PacketIn(SYN_ACK, "S5"), 30 * MS)
    rec = c.records[1]
    assert rec.state is ConnState.ESTABLISHED
    assert rec.path_reverse == tuple(reversed(CORE))
    by_type = {type(s.message): s for s in sends}
    assert by_type[PacketOut].node == "S1" and by_type[PacketOut].at_us == 40 * MS
    est = by_type[Established]
    assert est.node == "S5" and est.message.host == "B" and est.message.peer == "A"
    # exactly two edge-to-edge traversals
    assert rec.traversals == 2
    assert sum(s.traversal for s in sends) == 1


def test_only_handshake_packets_accepted():
    c = controller()
    with pytest.raises(ValueError):
        c.handle_packet_in(PacketIn(HostSegment("DATA", 1, "A", "B"), "S1"), 0)


def configs(params):
    t = table()
    return dict(build_configs(t.path_spec(CORE), 1, "A", "B", params))


def test_k2_configuration_snapshot():
    cf = configs(FunctionParams(k=2, loss_threshold=0.0))
    assert [n for n in CORE if cf[n].caching] == CORE
    assert [n for n in CORE if cf[n].retransmission] == ["S3", "S5"]
    assert [n for n in CORE if cf[n].downstream_ret] == ["S1", "S2", "S3", "S4"]
    assert cf["S1"].sending_edge and cf["S1"].upstream == "A"
    assert cf["S5"].receiving_edge and cf["S5"].downstream == "B"
    # both segments span two 5 ms links: 20 ms round trip, doubled
    assert {cf[n].initial_rto_ms for n in CORE} == {40.0}
    # suppress window is the round trip to the retransmission node served
    assert [cf[n].suppress_window_us for n in CORE] == [20 * MS, 10 * MS, 20 * MS, 10 * MS, 0]
    assert cf["S1"].cn_period_us == 150 * MS


def test_k1_only_receiving_edge_retransmits():
    cf = configs(FunctionParams(k=1, loss_threshold=0.5))
    assert [n for n in CORE if cf[n].retransmission] == ["S5"]
    assert [n for n in CORE if cf[n].caching] == ["S1", "S5"]
    assert cf["S1"].initial_rto_ms == 80.0


def test_placement_summary_recorded():
    c = controller(FunctionParams(k=2))
    c.handle_packet_in(PacketIn(SYN, "S1"), 0)
    assert c.records[1].placement["retransmission_nodes"] == ["S3", "S5"]


def test_reinstall_idempotent():
    c = controller()
    first = c.handle_packet_in(PacketIn(SYN, "S1"), 0)
    again = c.install_placement(c.records[1], 5 * MS)
    cfgs = lambda sends: {s.node: s.message.config for s in sends if isinstance(s.message, FlowInstall)}
    assert cfgs(first) == cfgs(again)
    sw = SdtpSwitch("S3")
    sw.on_control(FlowInstall(cfgs(first)["S3"]), 0)
    state = sw.conns[1]
    sw.on_control(FlowInstall(cfgs(again)["S3"]), 1)
    assert sw.conns[1] is state


def test_retried_syn_reuses_record():
    c = controller()
    c.handle_packet_in(PacketIn(SYN, "S1"), 0)
    rec = c.records[1]
    c.handle_packet_in(PacketIn(SYN, "S1"), 1000 * MS)
    assert c.records[1] is rec


def test_unknown_host_fails():
    c = controller()
    sends = c.handle_packet_in(PacketIn(HostSegment("SYN", 1, "A", "Z"), "S1"), 0)
    assert isinstance(sends[0].message, PathFailed)
