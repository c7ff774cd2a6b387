import pytest

from meshmon.backend import BackendService, Store
from meshmon.codec import MacAddress
from meshmon.sim import Simulation, SimNode
from meshmon.sim.engine import rssi_at
from meshmon.sniffer import SnifferUnit, extract_hop, wire_record


def mac(n: int) -> MacAddress:
    return MacAddress(b"\x00\x12\x4b\x00\x00\x00\x00" + bytes([n]))


def make_node(name, n, pos, role="client", firmware=None, tx_interval=10.0):
    if firmware is None:
        firmware = {
            "client": "echo-client",
            "server": "echo-server",
            "malicious": "echo-client",
        }[role]
    return SimNode(
        name=name,
        mac=mac(n),
        position=pos,
        role=role,
        firmware=firmware,
        tx_interval=tx_interval,
    )


def records_from_events(events, sniffer_id="s1", skew_ms=0.0, position=(0.0, 0.0)):
    """What one full-coverage sniffer at `position` would upload."""
    unit = SnifferUnit(sniffer_id, uploader=None, skew_ms=skew_ms)
    out = []
    for event in events:
        pkt = unit.capture(event.time, event.data, rssi_at(position, event))
        out.append(wire_record(pkt, extract_hop(pkt)))
    return out


@pytest.fixture
def service():
    return BackendService(Store(":memory:"))
