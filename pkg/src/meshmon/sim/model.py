"""Domain types for the deterministic mesh simulator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..codec import Frame802154, MacAddress

Position = tuple[float, float]

ROLE_CLIENT = "client"
ROLE_SERVER = "server"
ROLE_MALICIOUS = "malicious"

FIRMWARE_ECHO_CLIENT = "echo-client"
FIRMWARE_ECHO_SERVER = "echo-server"
FIRMWARE_SILENT = "silent"

UDP_CLIENT_PORT = 8765
UDP_SERVER_PORT = 5678


@dataclass(frozen=True)
class MarkerToken:
    """Optical identity carrier placed on a node; scanning always yields the
    embedded MAC."""

    embedded_mac: MacAddress

    def scan(self) -> MacAddress:
        return self.embedded_mac


@dataclass
class SimNode:
    name: str
    mac: MacAddress
    position: Position
    role: str = ROLE_CLIENT
    firmware: str = FIRMWARE_ECHO_CLIENT
    tx_interval: float = 10.0
    # dynamic state, mutated by faults
    alive: bool = True
    silenced: bool = False
    transmit_mac: MacAddress | None = None  # identity used on air; defaults to mac
    marker: MarkerToken | None = None  # defaults to a marker embedding mac

    def __post_init__(self) -> None:
        if self.transmit_mac is None:
            self.transmit_mac = self.mac
        if self.marker is None:
            self.marker = MarkerToken(self.mac)

    @property
    def sends_echo_requests(self) -> bool:
        return (
            self.alive
            and not self.silenced
            and self.firmware == FIRMWARE_ECHO_CLIENT
        )


FAULT_NODE_DEATH = "node_death"
FAULT_MARKER_DUPLICATE = "marker_duplicate"
FAULT_MARKER_FORGE = "marker_forge"
FAULT_ADDRESS_COPY = "address_copy"
FAULT_SILENCE = "silence"

FAULT_KINDS = {
    FAULT_NODE_DEATH,
    FAULT_MARKER_DUPLICATE,
    FAULT_MARKER_FORGE,
    FAULT_ADDRESS_COPY,
    FAULT_SILENCE,
}
_KINDS_WITH_TARGET = {FAULT_MARKER_DUPLICATE, FAULT_ADDRESS_COPY}


@dataclass(frozen=True)
class FaultSpec:
    at: float
    kind: str
    subject: str
    target: str | None = None
    forged_mac: MacAddress | None = None

    def __post_init__(self) -> None:
        if self.at < 0:
            raise ValueError("fault time must be >= 0")
        if self.kind not in FAULT_KINDS:
            raise ValueError(f"unknown fault kind {self.kind!r}")
        if self.kind in _KINDS_WITH_TARGET and not self.target:
            raise ValueError(f"{self.kind} needs a target node")


@dataclass(frozen=True)
class RadioEvent:
    """One on-air frame: when, what, and where it physically originated."""

    time: float
    frame: Frame802154
    origin_position: Position
    data: bytes  # encoded frame bytes, exactly as on the air


@dataclass
class RoutingTable:
    """Shortest-hop tree toward the server, plus any nodes it cannot reach."""

    root: MacAddress
    parent: dict[MacAddress, MacAddress]
    isolated: frozenset[MacAddress] = frozenset()

    @property
    def is_partitioned(self) -> bool:
        return bool(self.isolated)

    def path_up(self, mac: MacAddress) -> list[MacAddress]:
        """Node-to-root MAC sequence, inclusive of both ends; empty when the
        node has no route."""
        if mac == self.root:
            return [mac]
        if mac not in self.parent:
            return []
        path = [mac]
        while path[-1] != self.root:
            path.append(self.parent[path[-1]])
        return path

    def hops_up(self, mac: MacAddress) -> list[tuple[MacAddress, MacAddress]]:
        path = self.path_up(mac)
        return list(zip(path, path[1:]))

    def depth(self, mac: MacAddress) -> int:
        return max(len(self.path_up(mac)) - 1, 0)

    def tree_hop_pairs(self) -> set[tuple[MacAddress, MacAddress]]:
        """Every (child, parent) hop in the tree, one per link direction used
        by upward traffic; reverse each pair for downward traffic."""
        return set(self.parent.items())


def distance(a: Position, b: Position) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])
