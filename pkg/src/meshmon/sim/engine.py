"""Discrete-event simulator of a 6LoWPAN mesh running the UDP echo workload.

Every client sends a request carrying an increasing decimal number at fixed
transmit intervals, starting one interval in; the server echoes the same
number back. Requests climb the routing tree hop by hop and replies descend
the reverse path. Forwarding is instantaneous: all hops of one exchange share
the send timestamp, and events at equal times are ordered causally. Routes
are a shortest-hop tree toward the server, rebuilt at the moment a node dies;
real networks would show a reconvergence transient that this model elides.

The stream of RadioEvents is fully deterministic for a given configuration
and seed, including signature bytes (Ed25519 signing is deterministic) and
the optional packet-loss coin flips (seeded PRNG).
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
import random

from ..codec import (
    Datagram6LoWPAN,
    Frame802154,
    MacAddress,
    encode_datagram,
    encode_frame,
    ipv6_to_mac,
    mac_to_ipv6,
)
from .. import signing
from .model import (
    FAULT_ADDRESS_COPY,
    FAULT_MARKER_DUPLICATE,
    FAULT_MARKER_FORGE,
    FAULT_NODE_DEATH,
    FAULT_SILENCE,
    FIRMWARE_ECHO_CLIENT,
    ROLE_MALICIOUS,
    ROLE_SERVER,
    UDP_CLIENT_PORT,
    UDP_SERVER_PORT,
    FaultSpec,
    MarkerToken,
    Position,
    RadioEvent,
    RoutingTable,
    SimNode,
    distance,
)

DEFAULT_INITIAL_HOP_LIMIT = 64

# log-distance path loss defaults: reference power at 1 m, exponent 2.5
RSSI_P0_DBM = -40.0
RSSI_D0_M = 1.0
RSSI_EXPONENT = 2.5


class UnknownSubject(KeyError):
    """Fault or scan refers to a node that does not exist."""


def rssi_at(
    listener_position: Position,
    event: RadioEvent,
    p0: float = RSSI_P0_DBM,
    d0: float = RSSI_D0_M,
    exponent: float = RSSI_EXPONENT,
) -> float:
    """Received power under the log-distance model, strictly decreasing with
    distance from the event origin; distance is clamped below by d0."""
    d = max(distance(listener_position, event.origin_position), d0)
    return p0 - 10.0 * exponent * math.log10(d / d0)


def build_routes(nodes: list[SimNode], link_range: float) -> RoutingTable:
    """Shortest-hop tree toward the server over the unit-disk link graph.

    Only live, non-malicious nodes route. Ties between equal-depth parent
    candidates break toward the lowest MAC. Unreachable nodes come back in
    the table's ``isolated`` set rather than raising, so callers can keep a
    partitioned network running.
    """
    members = [n for n in nodes if n.alive and n.role != ROLE_MALICIOUS]
    servers = [n for n in members if n.role == ROLE_SERVER]
    if not servers:
        macs = frozenset(n.mac for n in members)
        return RoutingTable(root=MacAddress(b"\x00" * 8), parent={}, isolated=macs)
    root = servers[0]
    positions = {n.mac: n.position for n in members}
    parent: dict[MacAddress, MacAddress] = {}
    assigned = {root.mac}
    current = [root.mac]
    while current:
        nxt = []
        for mac in sorted(m for m in positions if m not in assigned):
            reachable = [
                c
                for c in current
                if distance(positions[mac], positions[c]) <= link_range
            ]
            if reachable:
                parent[mac] = min(reachable)
                nxt.append(mac)
        assigned.update(nxt)
        current = nxt
    isolated = frozenset(m for m in positions if m not in assigned)
    return RoutingTable(root=root.mac, parent=parent, isolated=isolated)


def sign_payload(node: SimNode, keys: "KeyStore", app_payload: bytes, dst_ip) -> bytes:
    """Signature bytes a node produces for an application payload headed to
    dst_ip; raises signing.NoKey for nodes configured unsigned."""
    key = keys.private_for(node.name)
    if key is None:
        raise signing.NoKey(f"node {node.name} has no signing key")
    src_ip = mac_to_ipv6(node.transmit_mac)
    return key.sign(signing.signed_message(src_ip, dst_ip, app_payload))


class KeyStore:
    """Per-node deterministic keypairs, derived from the simulation seed."""

    def __init__(self, seed: int, nodes: list[SimNode], signed: bool):
        self._private = {}
        self._public = {}
        if signed:
            for node in nodes:
                private, public = signing.keypair_from_seed(f"{seed}:{node.name}:{node.mac}")
                self._private[node.name] = private
                self._public[node.name] = public

    def private_for(self, name: str):
        return self._private.get(name)

    def public_for(self, name: str):
        return self._public.get(name)


def forged_mac_for(subject: SimNode) -> MacAddress:
    """Deterministic synthetic identity for a forged marker, outside any real
    address block used by the scenario nodes."""
    digest = hashlib.sha256(b"forged:" + subject.mac.eui64).digest()
    return MacAddress(b"\xde\xad" + digest[:6])


class Simulation:
    def __init__(
        self,
        nodes: list[SimNode],
        link_range: float,
        seed: int = 0,
        pan_id: int = 0xABCD,
        signed: bool = False,
        loss: float = 0.0,
    ):
        servers = [n for n in nodes if n.role == ROLE_SERVER]
        if len(servers) != 1:
            raise ValueError(f"exactly one server required, got {len(servers)}")
        for n in nodes:
            if n.firmware == FIRMWARE_ECHO_CLIENT and n.tx_interval <= 0:
                raise ValueError(f"node {n.name}: tx_interval must be > 0")
        names = [n.name for n in nodes]
        if len(set(names)) != len(names):
            raise ValueError("node names must be unique")

        # fresh copies: node state mutates during a run, configs are reusable
        self.nodes = [dataclasses.replace(n) for n in nodes]
        nodes = self.nodes
        self.by_name = {n.name: n for n in nodes}
        self.by_mac = {n.mac: n for n in nodes}
        self.server = next(n for n in nodes if n.role == ROLE_SERVER)
        self.link_range = link_range
        self.pan_id = pan_id
        self.signed = signed
        self.loss = loss
        self.keys = KeyStore(seed, nodes, signed)
        self.time = 0.0
        self.routes = build_routes(self.nodes, link_range)
        self._rng = random.Random(seed)
        self._faults: list[FaultSpec] = []
        self._frame_seq: dict[str, int] = {n.name: 0 for n in nodes}
        self._app_seq: dict[str, int] = {n.name: 0 for n in nodes}
        self._next_send: dict[str, float] = {
            n.name: n.tx_interval for n in nodes if n.firmware == FIRMWARE_ECHO_CLIENT
        }

    # -- configuration surface -------------------------------------------

    def inject_fault(self, spec: FaultSpec) -> None:
        if spec.subject not in self.by_name:
            raise UnknownSubject(spec.subject)
        if spec.target is not None and spec.target not in self.by_name:
            raise UnknownSubject(spec.target)
        self._faults.append(spec)
        self._faults.sort(key=lambda f: f.at)

    def scan_marker(self, name: str) -> tuple[MarkerToken, str]:
        """What an operator standing at the node would read: the marker token
        currently placed on it, plus the declared placement string."""
        node = self.by_name.get(name)
        if node is None:
            raise UnknownSubject(name)
        x, y = node.position
        return node.marker, f"{x:g},{y:g}"

    def legitimate_public_keys(self) -> dict[MacAddress, bytes]:
        """Public keys of non-malicious nodes, what an operator would
        provision from the certificate authority."""
        out = {}
        for node in self.nodes:
            if node.role == ROLE_MALICIOUS:
                continue
            public = self.keys.public_for(node.name)
            if public is not None:
                out[node.mac] = public
        return out

    # -- event generation --------------------------------------------------

    def step(self, until: float) -> list[RadioEvent]:
        """Advance to `until` (inclusive), returning every frame put on the
        air, in time order with causal ordering at equal timestamps."""
        if until < self.time:
            raise ValueError(f"cannot step backwards ({until} < {self.time})")
        events: list[RadioEvent] = []
        while True:
            t_fault = self._faults[0].at if self._faults else math.inf
            t_send, sender = math.inf, None
            for name, t in self._next_send.items():
                node = self.by_name[name]
                key = (t, node.mac)
                if sender is None or key < (t_send, self.by_name[sender].mac):
                    t_send, sender = t, name
            t = min(t_fault, t_send)
            if t > until or t == math.inf:
                break
            self.time = t
            if t_fault <= t_send:
                self._apply_fault(self._faults.pop(0))
            else:
                events.extend(self._emit_exchange(self.by_name[sender], t))
                self._next_send[sender] = t + self.by_name[sender].tx_interval
        self.time = until
        return events

    def _apply_fault(self, spec: FaultSpec) -> None:
        node = self.by_name[spec.subject]
        if spec.kind == FAULT_NODE_DEATH:
            node.alive = False
            self._next_send.pop(node.name, None)
            self.routes = build_routes(self.nodes, self.link_range)
        elif spec.kind == FAULT_SILENCE:
            node.silenced = True
            self._next_send.pop(node.name, None)
        elif spec.kind == FAULT_MARKER_DUPLICATE:
            node.marker = MarkerToken(self.by_name[spec.target].mac)
        elif spec.kind == FAULT_MARKER_FORGE:
            forged = spec.forged_mac or forged_mac_for(node)
            node.marker = MarkerToken(forged)
            node.transmit_mac = forged
        elif spec.kind == FAULT_ADDRESS_COPY:
            node.transmit_mac = self.by_name[spec.target].mac

    def _emit_exchange(self, node: SimNode, t: float) -> list[RadioEvent]:
        if not node.sends_echo_requests:
            return []
        self._app_seq[node.name] += 1
        number = str(self._app_seq[node.name]).encode()
        src_ip = mac_to_ipv6(node.transmit_mac)
        dst_ip = mac_to_ipv6(self.server.mac)

        if node.role == ROLE_MALICIOUS:
            # attackers transmit straight at the server; they are not part of
            # the routing tree
            path = [node.transmit_mac, self.server.mac]
            transmitters = [node]
        else:
            macs = self.routes.path_up(node.mac)
            if not macs or len(macs) < 2:
                return []
            path = [node.transmit_mac] + macs[1:]
            transmitters = [self.by_mac[m] for m in macs[:-1]]

        payload = self._app_payload(node, number, src_ip, dst_ip)
        request = Datagram6LoWPAN(
            src_ip=src_ip,
            dst_ip=dst_ip,
            src_port=UDP_CLIENT_PORT,
            dst_port=UDP_SERVER_PORT,
            payload=payload,
        )
        events, delivered = self._emit_hops(request, path, transmitters, t)
        if not delivered or not self.server.alive:
            return events
        if self.signed and not self._server_accepts(request):
            return events

        reply_payload = self._app_payload(self.server, number, dst_ip, src_ip)
        reply = Datagram6LoWPAN(
            src_ip=dst_ip,
            dst_ip=src_ip,
            src_port=UDP_SERVER_PORT,
            dst_port=UDP_CLIENT_PORT,
            payload=reply_payload,
        )
        try:
            target = ipv6_to_mac(reply.dst_ip)
        except Exception:
            return events
        down = self.routes.path_up(target)
        if not down or len(down) < 2:
            return events
        down_path = list(reversed(down))
        down_transmitters = [self.by_mac[m] for m in down_path[:-1]]
        reply_events, _ = self._emit_hops(reply, down_path, down_transmitters, t)
        events.extend(reply_events)
        return events

    def _app_payload(self, node: SimNode, number: bytes, src_ip, dst_ip) -> bytes:
        key = self.keys.private_for(node.name)
        if self.signed and key is not None:
            return signing.sign_payload(key, src_ip, dst_ip, number)
        return number

    def _server_accepts(self, request: Datagram6LoWPAN) -> bool:
        """The WSN's own end-to-end check: in secured mode the server drops
        requests whose signature does not verify against the key it holds for
        the claimed source."""
        app, sig = signing.split_trailer(request.payload)
        if sig is None:
            return False
        try:
            claimed = ipv6_to_mac(request.src_ip)
        except Exception:
            return False
        owner = self.by_mac.get(claimed)
        if owner is None or owner.role == ROLE_MALICIOUS:
            return False
        public = self.keys.public_for(owner.name)
        if public is None:
            return False
        return signing.verify_signature(public, request.src_ip, request.dst_ip, app, sig)

    def _emit_hops(
        self,
        dgram: Datagram6LoWPAN,
        path: list[MacAddress],
        transmitters: list[SimNode],
        t: float,
    ) -> tuple[list[RadioEvent], bool]:
        events: list[RadioEvent] = []
        for k, ((a, b), tx_node) in enumerate(zip(zip(path, path[1:]), transmitters)):
            if self.loss > 0 and self._rng.random() < self.loss:
                return events, False
            hop_dgram = dataclasses.replace(
                dgram, hop_limit=DEFAULT_INITIAL_HOP_LIMIT - k
            )
            seq = self._frame_seq[tx_node.name]
            self._frame_seq[tx_node.name] = (seq + 1) % 256
            frame = Frame802154(
                seq_no=seq,
                src_mac=a,
                dst_mac=b,
                pan_id=self.pan_id,
                payload=encode_datagram(hop_dgram, src_mac=a, dst_mac=b),
            )
            events.append(
                RadioEvent(
                    time=t,
                    frame=frame,
                    origin_position=tx_node.position,
                    data=encode_frame(frame),
                )
            )
        return events, True
