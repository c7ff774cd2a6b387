import math

import pytest

from meshmon import signing
from meshmon.codec import MacAddress, decode_datagram, ipv6_to_mac, mac_to_ipv6
from meshmon.sim import (
    FaultSpec,
    RadioEvent,
    Simulation,
    SimNode,
    UnknownSubject,
    build_routes,
    rssi_at,
    sign_payload,
)
from meshmon.sim.engine import KeyStore
from meshmon.sim.model import ROLE_MALICIOUS, ROLE_SERVER


def mac(n: int) -> MacAddress:
    return MacAddress(b"\x00\x12\x4b\x00\x00\x00\x00" + bytes([n]))


def make_node(name, n, pos, role="client", firmware=None, tx_interval=10.0):
    if firmware is None:
        firmware = {"client": "echo-client", "server": "echo-server", "malicious": "echo-client"}[role]
    return SimNode(
        name=name, mac=mac(n), position=pos, role=role, firmware=firmware, tx_interval=tx_interval
    )


def line_nodes():
    # A - B - C - server, adjacent pairs 10 m apart, range 12 m
    return [
        make_node("a", 4, (0.0, 0.0)),
        make_node("b", 3, (10.0, 0.0)),
        make_node("c", 2, (20.0, 0.0)),
        make_node("server", 1, (30.0, 0.0), role="server"),
    ]


class TestBuildRoutes:
    def test_line_topology_chains_to_server(self):
        routes = build_routes(line_nodes(), link_range=12.0)
        assert routes.parent[mac(4)] == mac(3)
        assert routes.parent[mac(3)] == mac(2)
        assert routes.parent[mac(2)] == mac(1)
        assert routes.depth(mac(4)) == 3
        assert not routes.is_partitioned

    def test_star_when_everyone_hears_the_server(self):
        routes = build_routes(line_nodes(), link_range=100.0)
        for m in (mac(2), mac(3), mac(4)):
            assert routes.parent[m] == mac(1)
            assert routes.depth(m) == 1

    def test_cut_vertex_isolates_far_node(self):
        nodes = [n for n in line_nodes() if n.name != "b"]
        routes = build_routes(nodes, link_range=12.0)
        assert routes.isolated == frozenset({mac(4)})
        assert routes.is_partitioned

    def test_tie_break_prefers_lowest_mac_parent(self):
        # two equal-depth candidates for the far node
        nodes = [
            make_node("server", 1, (0.0, 0.0), role="server"),
            make_node("p1", 2, (10.0, 1.0)),
            make_node("p2", 3, (10.0, -1.0)),
            make_node("leaf", 4, (20.0, 0.0)),
        ]
        routes = build_routes(nodes, link_range=11.0)
        assert routes.parent[mac(4)] == mac(2)

    def test_malicious_nodes_do_not_route(self):
        nodes = line_nodes() + [make_node("mal", 9, (15.0, 0.0), role="malicious")]
        routes = build_routes(nodes, link_range=12.0)
        assert mac(9) not in routes.parent
        assert mac(9) not in routes.isolated


class TestStep:
    def test_two_hop_client_until_25s_yields_8_events(self):
        # 2 sends (t=10, 20) x (2 request hops + 2 reply hops)
        nodes = [
            make_node("a", 4, (0.0, 0.0)),
            make_node("b", 3, (10.0, 0.0), firmware="silent"),
            make_node("server", 1, (20.0, 0.0), role="server"),
        ]
        sim = Simulation(nodes, link_range=12.0)
        events = sim.step(25.0)
        assert len(events) == 8
        assert [e.time for e in events] == [10.0] * 4 + [20.0] * 4

    def test_event_times_nondecreasing_and_step_resumes(self):
        nodes = line_nodes()
        sim = Simulation(nodes, link_range=12.0)
        first = sim.step(25.0)
        second = sim.step(40.0)
        times = [e.time for e in first + second]
        assert times == sorted(times)
        assert all(e.time <= 25.0 for e in first)
        assert all(25.0 < e.time <= 40.0 for e in second)

    def test_dead_client_is_silent(self):
        nodes = [
            make_node("a", 4, (0.0, 0.0)),
            make_node("server", 1, (10.0, 0.0), role="server"),
        ]
        sim = Simulation(nodes, link_range=12.0)
        sim.inject_fault(FaultSpec(at=5.0, kind="node_death", subject="a"))
        events = sim.step(60.0)
        assert events == []

    def test_silent_malicious_node_contributes_nothing(self):
        nodes = [
            make_node("a", 4, (0.0, 0.0)),
            make_node("server", 1, (10.0, 0.0), role="server"),
            make_node("mal", 9, (5.0, 5.0), role="malicious", firmware="silent"),
        ]
        sim = Simulation(nodes, link_range=12.0)
        events = sim.step(30.0)
        mal_frames = [e for e in events if e.origin_position == (5.0, 5.0)]
        assert mal_frames == []
        assert len(events) == 3 * 2  # three exchanges, one hop each way

    def test_hop_conservation(self):
        nodes = line_nodes()
        sim = Simulation(nodes, link_range=12.0)
        routes = sim.routes
        events = sim.step(10.0)  # exactly one exchange per client
        expected = sum(2 * routes.depth(n.mac) for n in nodes if n.role == "client")
        assert len(events) == expected

    def test_echo_reply_carries_same_number(self):
        nodes = [
            make_node("a", 4, (0.0, 0.0)),
            make_node("server", 1, (10.0, 0.0), role="server"),
        ]
        sim = Simulation(nodes, link_range=12.0)
        events = sim.step(20.0)
        assert len(events) == 4
        for k, (req, rep) in enumerate([(events[0], events[1]), (events[2], events[3])]):
            d_req = decode_datagram(req.frame.payload, req.frame.src_mac, req.frame.dst_mac)
            d_rep = decode_datagram(rep.frame.payload, rep.frame.src_mac, rep.frame.dst_mac)
            assert d_req.payload == d_rep.payload == str(k + 1).encode()
            assert d_rep.src_ip == d_req.dst_ip and d_rep.dst_ip == d_req.src_ip

    def test_sequence_numbers_increase_per_send(self):
        nodes = [
            make_node("a", 4, (0.0, 0.0)),
            make_node("server", 1, (10.0, 0.0), role="server"),
        ]
        sim = Simulation(nodes, link_range=12.0)
        events = sim.step(30.0)
        requests = [e for e in events if e.frame.src_mac == mac(4)]
        payloads = [
            decode_datagram(e.frame.payload, e.frame.src_mac, e.frame.dst_mac).payload
            for e in requests
        ]
        assert payloads == [b"1", b"2", b"3"]

    def test_determinism_byte_identical_streams(self):
        def run():
            nodes = line_nodes()
            sim = Simulation(nodes, link_range=12.0, seed=7, signed=True)
            return [(e.time, e.data) for e in sim.step(50.0)]

        assert run() == run()

    def test_step_backwards_rejected(self):
        sim = Simulation(line_nodes(), link_range=12.0)
        sim.step(10.0)
        with pytest.raises(ValueError):
            sim.step(5.0)

    def test_isolated_client_stops_sending(self):
        nodes = line_nodes()
        sim = Simulation(nodes, link_range=12.0)
        sim.inject_fault(FaultSpec(at=15.0, kind="node_death", subject="b"))
        events = sim.step(40.0)
        a_origin = [e for e in events if e.time > 15.0 and e.origin_position == (0.0, 0.0)]
        assert a_origin == []


class TestRssi:
    def make_event(self, pos=(0.0, 0.0)):
        nodes = [
            make_node("a", 4, pos),
            make_node("server", 1, (1.0, 0.0), role="server"),
        ]
        sim = Simulation(nodes, link_range=5.0)
        return sim.step(10.0)[0]

    def test_reference_power_at_origin(self):
        event = self.make_event()
        assert rssi_at((0.0, 0.0), event) == pytest.approx(-40.0)

    def test_doubling_distance_drops_by_6dB_with_exponent_2(self):
        event = self.make_event()
        near = rssi_at((0.0, 2.0), event, exponent=2.0)
        far = rssi_at((0.0, 4.0), event, exponent=2.0)
        assert near - far == pytest.approx(20.0 * math.log10(2.0), abs=1e-9)

    def test_nearer_listener_hears_strictly_more(self):
        event = self.make_event()
        assert rssi_at((0.0, 3.0), event) > rssi_at((0.0, 7.0), event)


class TestFaults:
    def test_unknown_subject(self):
        sim = Simulation(line_nodes(), link_range=12.0)
        with pytest.raises(UnknownSubject):
            sim.inject_fault(FaultSpec(at=1.0, kind="node_death", subject="ghost"))

    def test_marker_duplicate_embeds_target_mac(self):
        nodes = line_nodes()
        sim = Simulation(nodes, link_range=12.0)
        sim.inject_fault(FaultSpec(at=1.0, kind="marker_duplicate", subject="b", target="a"))
        sim.step(2.0)
        token, placement = sim.scan_marker("b")
        assert token.embedded_mac == mac(4)
        assert placement == "10,0"

    def test_address_copy_changes_source_mac_on_air(self):
        nodes = [
            make_node("a", 4, (0.0, 0.0)),
            make_node("server", 1, (10.0, 0.0), role="server"),
            make_node("mal", 9, (5.0, 5.0), role="malicious"),
        ]
        sim = Simulation(nodes, link_range=20.0)
        sim.inject_fault(FaultSpec(at=1.0, kind="address_copy", subject="mal", target="a"))
        events = sim.step(10.0)
        mal_frames = [e for e in events if e.origin_position == (5.0, 5.0)]
        assert mal_frames and all(e.frame.src_mac == mac(4) for e in mal_frames)

    def test_marker_forge_sets_coherent_fake_identity(self):
        nodes = [
            make_node("a", 4, (0.0, 0.0)),
            make_node("server", 1, (10.0, 0.0), role="server"),
            make_node("mal", 9, (5.0, 5.0), role="malicious"),
        ]
        sim = Simulation(nodes, link_range=20.0)
        sim.inject_fault(FaultSpec(at=1.0, kind="marker_forge", subject="mal"))
        events = sim.step(10.0)
        token, _ = sim.scan_marker("mal")
        mal_frames = [e for e in events if e.origin_position == (5.0, 5.0)]
        assert mal_frames and all(e.frame.src_mac == token.embedded_mac for e in mal_frames)
        assert token.embedded_mac not in {n.mac for n in nodes}

    def test_server_death_partitions_everyone(self):
        sim = Simulation(line_nodes(), link_range=12.0)
        sim.inject_fault(FaultSpec(at=1.0, kind="node_death", subject="server"))
        sim.step(2.0)
        assert sim.routes.is_partitioned
        assert sim.routes.isolated == {mac(2), mac(3), mac(4)}

    def test_fault_validation(self):
        with pytest.raises(ValueError):
            FaultSpec(at=-1.0, kind="node_death", subject="a")
        with pytest.raises(ValueError):
            FaultSpec(at=0.0, kind="address_copy", subject="a")  # missing target
        with pytest.raises(ValueError):
            FaultSpec(at=0.0, kind="whatever", subject="a")


class TestSigning:
    def make_sim(self, signed=True):
        nodes = [
            make_node("a", 4, (0.0, 0.0)),
            make_node("server", 1, (10.0, 0.0), role="server"),
        ]
        return Simulation(nodes, link_range=12.0, seed=3, signed=signed)

    def test_sign_verify_round_trip(self):
        sim = self.make_sim()
        node = sim.by_name["a"]
        dst = mac_to_ipv6(mac(1))
        sig = sign_payload(node, sim.keys, b"7", dst)
        public = sim.keys.public_for("a")
        assert signing.verify_signature(public, mac_to_ipv6(node.mac), dst, b"7", sig)

    def test_wrong_key_fails(self):
        sim = self.make_sim()
        node = sim.by_name["a"]
        dst = mac_to_ipv6(mac(1))
        sig = sign_payload(node, sim.keys, b"7", dst)
        other = sim.keys.public_for("server")
        assert not signing.verify_signature(other, mac_to_ipv6(node.mac), dst, b"7", sig)

    def test_unsigned_mode_has_no_key_and_no_trailer(self):
        sim = self.make_sim(signed=False)
        with pytest.raises(signing.NoKey):
            sign_payload(sim.by_name["a"], sim.keys, b"7", mac_to_ipv6(mac(1)))
        events = sim.step(10.0)
        for e in events:
            dgram = decode_datagram(e.frame.payload, e.frame.src_mac, e.frame.dst_mac)
            _, sig = signing.split_trailer(dgram.payload)
            assert sig is None

    def test_signed_mode_frames_carry_verifying_trailer(self):
        sim = self.make_sim(signed=True)
        events = sim.step(10.0)
        assert events
        for e in events:
            dgram = decode_datagram(e.frame.payload, e.frame.src_mac, e.frame.dst_mac)
            app, sig = signing.split_trailer(dgram.payload)
            assert sig is not None
            origin = ipv6_to_mac(dgram.src_ip)
            node = sim.by_mac[origin]
            public = sim.keys.public_for(node.name)
            assert signing.verify_signature(public, dgram.src_ip, dgram.dst_ip, app, sig)

    def test_secured_server_ignores_bad_signatures(self):
        nodes = [
            make_node("server", 1, (10.0, 0.0), role="server"),
            make_node("mal", 9, (5.0, 5.0), role="malicious"),
        ]
        sim = Simulation(nodes, link_range=20.0, signed=True)
        sim.inject_fault(FaultSpec(at=0.0, kind="marker_forge", subject="mal"))
        events = sim.step(10.0)
        # the malicious request is on the air but the server never replies
        assert len(events) == 1
        assert events[0].origin_position == (5.0, 5.0)
