import random

import pytest

from meshmon import signing
from meshmon.codec import mac_to_ipv6
from meshmon.sim import FaultSpec, Simulation
from meshmon.sim.engine import rssi_at
from meshmon.sniffer import HopRecord, capture, extract_hop
from meshmon.verifier import (
    KeyRegistry,
    SpoofCase,
    SpoofEvidence,
    TooFewSamples,
    classify,
    rssi_trend,
    verify_message,
)

from conftest import mac, make_node


def hop_for(src_mac, dst_mac):
    return HopRecord(
        src_mac=src_mac,
        dst_mac=dst_mac,
        src_ip=mac_to_ipv6(src_mac),
        dst_ip=mac_to_ipv6(dst_mac),
        seq_payload=1,
        digest=b"\x00" * 16,
        ts=1_000_000,
        rssi=-50.0,
    )


class TestVerifyMessage:
    def setup_method(self):
        self.key_a, self.pub_a = signing.keypair_from_seed("node-a")
        self.key_m, self.pub_m = signing.keypair_from_seed("node-m")
        self.registry = KeyRegistry({mac(4): self.pub_a})

    def signed_payload(self, key, src, dst, app=b"7"):
        return signing.sign_payload(key, mac_to_ipv6(src), mac_to_ipv6(dst), app)

    def test_legitimate_signed_packet_is_valid(self):
        payload = self.signed_payload(self.key_a, mac(4), mac(1))
        assert verify_message(hop_for(mac(4), mac(1)), payload, self.registry) == "valid"

    def test_copied_address_with_own_key_is_invalid(self):
        payload = self.signed_payload(self.key_m, mac(4), mac(1))
        assert verify_message(hop_for(mac(4), mac(1)), payload, self.registry) == "invalid"

    def test_novel_address_is_unknown_key(self):
        payload = self.signed_payload(self.key_m, mac(9), mac(1))
        assert (
            verify_message(hop_for(mac(9), mac(1)), payload, self.registry)
            == "unknown_key"
        )

    def test_unsigned_passes_through(self):
        assert verify_message(hop_for(mac(4), mac(1)), b"7", self.registry) == "unsigned"

    def test_signature_over_wrong_destination_is_invalid(self):
        payload = self.signed_payload(self.key_a, mac(4), mac(2))
        assert verify_message(hop_for(mac(4), mac(1)), payload, self.registry) == "invalid"

    def test_single_bit_corruption_always_flips_to_invalid(self):
        rng = random.Random(1234)
        app = b"12345"
        payload = self.signed_payload(self.key_a, mac(4), mac(1), app)
        hop = hop_for(mac(4), mac(1))
        # corrupt any bit of the application bytes or the signature, never the
        # 2-byte length field that marks the trailer
        flippable = [
            i for i in range(len(payload) * 8)
            if not (len(app) * 8 <= i < (len(app) + 2) * 8)
        ]
        for _ in range(200):
            bit = rng.choice(flippable)
            corrupted = bytearray(payload)
            corrupted[bit // 8] ^= 1 << (bit % 8)
            assert verify_message(hop, bytes(corrupted), self.registry) == "invalid"


def evidence(**kwargs):
    return SpoofEvidence(mac=mac(4), **kwargs)


class TestClassify:
    def test_duplicate_and_invalid_is_chatty_copy(self):
        case, action = classify(evidence(duplicate_marker=True, marker_seen=True,
                                         key_registered=True, invalid_sig_count=3))
        assert case is SpoofCase.COPIED_ID_CHATTY
        assert "remove" in action

    def test_duplicate_with_clean_traffic_is_silent_copy(self):
        case, action = classify(evidence(duplicate_marker=True, marker_seen=True,
                                         key_registered=True, valid_sig_count=10))
        assert case is SpoofCase.COPIED_ID_SILENT
        assert "RSSI" in action

    def test_duplicate_plus_unmarked_unknown_traffic_is_copied_marker(self):
        case, _ = classify(evidence(duplicate_marker=True, marker_seen=True,
                                    key_registered=True, valid_sig_count=5,
                                    unmarked_unknown_count=4))
        assert case is SpoofCase.COPIED_MARKER_NEW_ADDR

    def test_unique_marker_invalid_on_known_address_is_forged_marker(self):
        case, _ = classify(evidence(marker_seen=True, key_registered=True,
                                    invalid_sig_count=5, valid_sig_count=7))
        assert case is SpoofCase.FORGED_MARKER_COPIED_ADDR

    def test_unprovisioned_marker_with_unknown_traffic_is_forged_both(self):
        case, _ = classify(evidence(marker_seen=True, key_registered=False,
                                    unknown_key_count=6))
        assert case is SpoofCase.FORGED_BOTH

    def test_clean_evidence_is_no_finding(self):
        case, action = classify(evidence(marker_seen=True, key_registered=True,
                                         valid_sig_count=100))
        assert case is SpoofCase.NO_FINDING
        assert action == "no action needed"

    def test_transients_are_damped(self):
        case, _ = classify(evidence(marker_seen=True, key_registered=True,
                                    invalid_sig_count=2))
        assert case is SpoofCase.NO_FINDING

    def test_deterministic(self):
        ev = evidence(duplicate_marker=True, marker_seen=True, invalid_sig_count=9)
        assert classify(ev) == classify(ev)


class TestRssiTrend:
    def test_needs_three_samples(self):
        with pytest.raises(TooFewSamples):
            rssi_trend([-50.0, -49.0])

    def test_increasing(self):
        assert rssi_trend([-60.0, -55.0, -50.0, -45.0]) == "increasing"

    def test_decreasing(self):
        assert rssi_trend([((0, 0), -45.0), ((1, 0), -52.0), ((2, 0), -60.0)]) == "decreasing"

    def test_stationary_is_flat(self):
        assert rssi_trend([-50.0, -50.3, -49.9, -50.1]) == "flat"

    def test_walk_toward_transmitter_in_field(self):
        nodes = [
            make_node("a", 4, (0.0, 0.0)),
            make_node("server", 1, (10.0, 0.0), role="server"),
        ]
        sim = Simulation(nodes, link_range=12.0)
        events = [e for e in sim.step(60.0) if e.origin_position == (0.0, 0.0)]
        assert len(events) >= 5
        toward = [rssi_at((30.0 - 5.0 * i, 2.0), e) for i, e in enumerate(events)]
        away = list(reversed(toward))
        assert rssi_trend(toward) == "increasing"
        assert rssi_trend(away) == "decreasing"
