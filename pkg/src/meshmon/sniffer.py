"""Passive capture pipeline: timestamp frames on the local (skewed) clock,
compute the dedup digest, extract per-hop records, and upload batches.

The dedup digest is MD5 over the exact captured frame bytes, MAC header
through FCS. Because MAC-layer fields change at every hop, each per-hop
transmission hashes differently, and equal digests mean several capture units
overheard the same physical transmission. The digest never depends on the
capture timestamp, the measured RSSI or the capturing unit, so overlapping
units always agree on it.

Corrupt frames are kept, tagged, and counted; their digest is still computed.
Uploads are at-least-once: a batch that fails in transport stays queued for
the next flush, and the receiving side's duplicate admission makes retries
harmless.
"""

from __future__ import annotations

import base64
import hashlib
import math
from dataclasses import dataclass, field

from .codec import (
    CodecError,
    Datagram6LoWPAN,
    Frame802154,
    decode_datagram,
    decode_frame,
    mac_to_ipv6,
)
from . import signing
from .codec import MacAddress
from .sim.engine import rssi_at
from .sim.model import Position, RadioEvent, distance

BATCH_MAX_RECORDS = 64
BATCH_MAX_AGE_US = 200_000  # flush at least every 200 ms of capture time


class UploadError(Exception):
    pass


class Unauthorized(UploadError):
    """Credentials rejected; retrying the same batch will not help."""


class Unreachable(UploadError):
    """Transport failure; the batch is retained and retried later."""


def dedup_digest(frame_bytes: bytes) -> bytes:
    """16-byte MD5 over the whole captured frame."""
    return hashlib.md5(frame_bytes, usedforsecurity=False).digest()


@dataclass
class CapturedPacket:
    sniffer_id: str
    ts: int  # microseconds on this unit's clock
    rssi: float
    raw: bytes
    digest: bytes
    frame: Frame802154 | None = None
    decoded: Datagram6LoWPAN | None = None
    decode_error: str | None = None

    @property
    def ok(self) -> bool:
        return self.decode_error is None


@dataclass
class HopRecord:
    """One MAC-layer transmission carrying an end-to-end datagram."""

    src_mac: MacAddress
    dst_mac: MacAddress
    src_ip: object  # ipaddress.IPv6Address
    dst_ip: object
    seq_payload: int | None
    digest: bytes
    ts: int
    rssi: float
    signature_status: str = "unchecked"


class NotDecodable(ValueError):
    """The capture failed to decode; no hop record can be extracted."""


def capture(
    sniffer_id: str, t_seconds: float, frame_bytes: bytes, rssi: float, skew_ms: float = 0.0
) -> CapturedPacket:
    """Stamp, hash and decode one overheard frame. Decode failures are kept
    with a failure tag, counting toward capture statistics."""
    ts = max(round((t_seconds + skew_ms / 1000.0) * 1_000_000), 1)
    pkt = CapturedPacket(
        sniffer_id=sniffer_id,
        ts=ts,
        rssi=rssi,
        raw=frame_bytes,
        digest=dedup_digest(frame_bytes),
    )
    try:
        pkt.frame = decode_frame(frame_bytes)
        pkt.decoded = decode_datagram(
            pkt.frame.payload, src_mac=pkt.frame.src_mac, dst_mac=pkt.frame.dst_mac
        )
    except CodecError as exc:
        pkt.decode_error = f"{type(exc).__name__}: {exc}"
    return pkt


def extract_hop(pkt: CapturedPacket) -> HopRecord:
    """Per-frame, stateless extraction of hop endpoints and payload metadata.

    MAC endpoints come from the frame header, IP endpoints from the datagram
    (link-local addresses elided on the air are reconstructed from the MAC
    fields). For single-hop protocols the record doubles as the end-to-end
    flow.
    """
    if not pkt.ok or pkt.frame is None or pkt.decoded is None:
        raise NotDecodable(pkt.decode_error or "capture not decoded")
    frame, dgram = pkt.frame, pkt.decoded
    if frame.src_mac == frame.dst_mac:
        raise NotDecodable("hop endpoints must differ")
    app, _sig = signing.split_trailer(dgram.payload)
    seq = int(app) if app.isdigit() else None
    return HopRecord(
        src_mac=frame.src_mac,
        dst_mac=frame.dst_mac,
        src_ip=dgram.src_ip,
        dst_ip=dgram.dst_ip,
        seq_payload=seq,
        digest=pkt.digest,
        ts=pkt.ts,
        rssi=pkt.rssi,
    )


def wire_record(pkt: CapturedPacket, hop: HopRecord) -> dict:
    """JSON-ready ingestion record (see docs/api.md for field semantics)."""
    return {
        "sniffer_id": pkt.sniffer_id,
        "ts_us": hop.ts,
        "rssi_dbm": hop.rssi,
        "digest": hop.digest.hex(),
        "src_mac": str(hop.src_mac),
        "dst_mac": str(hop.dst_mac),
        "src_ip": str(hop.src_ip),
        "dst_ip": str(hop.dst_ip),
        "seq_payload": hop.seq_payload,
        "payload_b64": base64.b64encode(pkt.decoded.payload).decode()
        if pkt.decoded
        else "",
    }


class HttpUploader:
    """Posts ingestion batches to the backend over any httpx-compatible
    client (a real one or an in-process ASGI test client)."""

    def __init__(self, client, username: str, secret: str, path: str = "/api/packets"):
        self.client = client
        self.auth = (username, secret)
        self.path = path

    def __call__(self, batch: dict) -> tuple[int, int]:
        try:
            response = self.client.post(self.path, json=batch, auth=self.auth)
        except Exception as exc:
            raise Unreachable(str(exc)) from exc
        if response.status_code in (401, 403):
            raise Unauthorized(response.text)
        if response.status_code >= 500:
            raise Unreachable(f"backend returned {response.status_code}")
        if response.status_code != 200:
            raise UploadError(f"unexpected status {response.status_code}: {response.text}")
        body = response.json()
        return body.get("admitted", 0), body.get("duplicate", 0)


@dataclass
class SnifferStats:
    captured: int = 0
    corrupt: int = 0
    uploaded: int = 0
    admitted: int = 0
    duplicate: int = 0


class SnifferUnit:
    """One capture unit: local skewed clock, capture-to-upload queue.

    Capture never blocks on the network; records accumulate and go out when
    the batch fills (64 records) or 200 ms of capture time have passed,
    whichever comes first.
    """

    def __init__(
        self,
        sniffer_id: str,
        uploader=None,
        skew_ms: float = 0.0,
        batch_max: int = BATCH_MAX_RECORDS,
        batch_age_us: int = BATCH_MAX_AGE_US,
    ):
        self.sniffer_id = sniffer_id
        self.uploader = uploader
        self.skew_ms = skew_ms
        self.batch_max = batch_max
        self.batch_age_us = batch_age_us
        self.stats = SnifferStats()
        self._pending: list[dict] = []

    def capture(self, t_seconds: float, frame_bytes: bytes, rssi: float) -> CapturedPacket:
        pkt = capture(self.sniffer_id, t_seconds, frame_bytes, rssi, self.skew_ms)
        self.stats.captured += 1
        if not pkt.ok:
            self.stats.corrupt += 1
        return pkt

    def observe(self, t_seconds: float, frame_bytes: bytes, rssi: float) -> None:
        """Capture one frame and queue its hop record for upload."""
        pkt = self.capture(t_seconds, frame_bytes, rssi)
        if not pkt.ok:
            return
        self._pending.append(wire_record(pkt, extract_hop(pkt)))
        if self._batch_ready():
            self.flush()

    def _batch_ready(self) -> bool:
        if len(self._pending) >= self.batch_max:
            return True
        if not self._pending:
            return False
        return self._pending[-1]["ts_us"] - self._pending[0]["ts_us"] >= self.batch_age_us

    @property
    def pending(self) -> int:
        return len(self._pending)

    def flush(self) -> tuple[int, int]:
        """Upload everything queued, in capture order. On transport failure
        the batch is retained and the error propagated; admission-side
        dedup makes the eventual retry safe."""
        if not self._pending or self.uploader is None:
            return (0, 0)
        batch = {"records": self._pending}
        admitted, duplicate = self.uploader(batch)  # Unreachable keeps _pending
        self.stats.uploaded += len(self._pending)
        self.stats.admitted += admitted
        self.stats.duplicate += duplicate
        self._pending = []
        return admitted, duplicate


class SimListener:
    """Couples a sniffer unit to a position in the simulated radio field."""

    def __init__(
        self,
        unit: SnifferUnit,
        position: Position,
        listen_range: float = math.inf,
        rssi_params: dict | None = None,
    ):
        self.unit = unit
        self.position = position
        self.listen_range = listen_range
        self.rssi_params = rssi_params or {}

    def hear(self, events: list[RadioEvent]) -> None:
        for event in events:
            if distance(self.position, event.origin_position) <= self.listen_range:
                self.unit.observe(
                    event.time, event.data, rssi_at(self.position, event, **self.rssi_params)
                )
