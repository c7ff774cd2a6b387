import pytest

from meshmon.codec import MacAddress, mac_to_ipv6
from meshmon.sim import Simulation, SimNode
from meshmon.sniffer import (
    HttpUploader,
    NotDecodable,
    SimListener,
    SnifferUnit,
    Unreachable,
    capture,
    dedup_digest,
    extract_hop,
)


def mac(n):
    return MacAddress(b"\x00\x12\x4b\x00\x00\x00\x00" + bytes([n]))


def one_hop_events(until=10.0):
    nodes = [
        SimNode(name="a", mac=mac(4), position=(0.0, 0.0)),
        SimNode(name="server", mac=mac(1), position=(5.0, 0.0), role="server",
                firmware="echo-server"),
    ]
    return Simulation(nodes, link_range=10.0).step(until)


def forwarded_events():
    nodes = [
        SimNode(name="a", mac=mac(4), position=(0.0, 0.0)),
        SimNode(name="b", mac=mac(3), position=(10.0, 0.0), firmware="silent"),
        SimNode(name="server", mac=mac(1), position=(20.0, 0.0), role="server",
                firmware="echo-server"),
    ]
    return Simulation(nodes, link_range=12.0).step(10.0)


class TestDedupDigest:
    def test_rfc1321_vectors(self):
        assert dedup_digest(b"").hex() == "d41d8cd98f00b204e9800998ecf8427e"
        assert dedup_digest(b"abc").hex() == "900150983cd24fb0d6963f7d28e17f72"

    def test_same_frame_two_sniffers_equal_digest(self):
        event = one_hop_events()[0]
        p1 = capture("s1", event.time, event.data, -50.0, skew_ms=1.0)
        p2 = capture("s2", event.time, event.data, -70.0, skew_ms=-1.0)
        assert p1.digest == p2.digest

    def test_digest_depends_only_on_bytes(self):
        event = one_hop_events()[0]
        a = capture("s1", 1.0, event.data, -50.0)
        b = capture("other", 99.0, event.data, -10.0, skew_ms=42.0)
        assert a.digest == b.digest == dedup_digest(event.data)


class TestCapture:
    def test_skew_applies_to_timestamp(self):
        event = one_hop_events()[0]
        pkt = capture("s1", 1.0, event.data, -50.0, skew_ms=2.0)
        assert pkt.ts == 1_002_000

    def test_skews_split_timestamps_by_their_difference(self):
        event = one_hop_events()[0]
        p1 = capture("s1", event.time, event.data, -50.0, skew_ms=1.0)
        p2 = capture("s2", event.time, event.data, -50.0, skew_ms=-1.0)
        assert p1.ts - p2.ts == 2_000

    def test_corrupt_frame_tagged_with_digest_intact(self):
        event = one_hop_events()[0]
        broken = bytearray(event.data)
        broken[-1] ^= 0x01
        pkt = capture("s1", 1.0, bytes(broken), -50.0)
        assert not pkt.ok
        assert pkt.decode_error.startswith("BadChecksum")
        assert pkt.digest == dedup_digest(bytes(broken))


class TestExtractHop:
    def test_forwarded_frame_keeps_end_to_end_ips(self):
        events = forwarded_events()
        second_hop = events[1]  # b forwards a's request to the server
        pkt = capture("s1", second_hop.time, second_hop.data, -50.0)
        hop = extract_hop(pkt)
        assert hop.src_mac == mac(3)
        assert hop.dst_mac == mac(1)
        assert hop.src_ip == mac_to_ipv6(mac(4))
        assert hop.dst_ip == mac_to_ipv6(mac(1))

    def test_direct_frame_hop_equals_flow(self):
        event = one_hop_events()[0]
        hop = extract_hop(capture("s1", event.time, event.data, -50.0))
        assert hop.src_ip == mac_to_ipv6(hop.src_mac)
        assert hop.dst_ip == mac_to_ipv6(hop.dst_mac)
        assert hop.seq_payload == 1

    def test_not_decodable(self):
        pkt = capture("s1", 1.0, b"\x00" * 10, -50.0)
        with pytest.raises(NotDecodable):
            extract_hop(pkt)

    def test_extraction_is_stateless(self):
        events = forwarded_events()
        pkts = [capture("s1", e.time, e.data, -50.0) for e in events]
        forward = [extract_hop(p) for p in pkts]
        backward = [extract_hop(p) for p in reversed(pkts)]
        assert forward == list(reversed(backward))

    def test_signature_status_starts_unchecked(self):
        event = one_hop_events()[0]
        hop = extract_hop(capture("s1", event.time, event.data, -50.0))
        assert hop.signature_status == "unchecked"


class FakeUploader:
    def __init__(self, fail_times=0):
        self.batches = []
        self.fail_times = fail_times

    def __call__(self, batch):
        if self.fail_times > 0:
            self.fail_times -= 1
            raise Unreachable("backend offline")
        self.batches.append(batch)
        return len(batch["records"]), 0


class TestSnifferUnit:
    def test_batch_flushes_at_size_limit(self):
        uploader = FakeUploader()
        unit = SnifferUnit("s1", uploader=uploader, batch_max=4)
        events = one_hop_events(until=10.0)  # 2 events
        for _ in range(3):
            for e in events:
                unit.observe(e.time, e.data, -50.0)
        assert len(uploader.batches) == 1
        assert len(uploader.batches[0]["records"]) == 4
        assert unit.pending == 2

    def test_batch_flushes_after_capture_age(self):
        uploader = FakeUploader()
        unit = SnifferUnit("s1", uploader=uploader, batch_max=1000)
        events = one_hop_events(until=20.0)  # sends at t=10 and t=20
        for e in events:
            unit.observe(e.time, e.data, -50.0)
        assert len(uploader.batches) == 1  # 10 s of capture time >> 200 ms

    def test_transport_failure_retains_batch(self):
        uploader = FakeUploader(fail_times=1)
        unit = SnifferUnit("s1", uploader=uploader)
        event = one_hop_events()[0]
        unit.observe(event.time, event.data, -50.0)
        with pytest.raises(Unreachable):
            unit.flush()
        assert unit.pending == 1
        admitted, _ = unit.flush()  # retry succeeds
        assert admitted == 1
        assert unit.pending == 0

    def test_corrupt_frames_counted_not_uploaded(self):
        uploader = FakeUploader()
        unit = SnifferUnit("s1", uploader=uploader)
        event = one_hop_events()[0]
        broken = bytearray(event.data)
        broken[5] ^= 0xFF
        unit.observe(event.time, bytes(broken), -50.0)
        unit.observe(event.time, event.data, -50.0)
        unit.flush()
        assert unit.stats.captured == 2
        assert unit.stats.corrupt == 1
        assert sum(len(b["records"]) for b in uploader.batches) == 1


class TestSimListener:
    def test_out_of_range_events_unheard(self):
        unit = SnifferUnit("s1")
        listener = SimListener(unit, position=(1000.0, 0.0), listen_range=5.0)
        listener.hear(one_hop_events())
        assert unit.stats.captured == 0

    def test_in_range_events_heard_with_model_rssi(self):
        unit = SnifferUnit("s1")
        listener = SimListener(unit, position=(0.0, 1.0))
        events = one_hop_events()
        listener.hear(events)
        assert unit.stats.captured == len(events)
