"""Security checks over captured traffic: signature verification against a
provisioned key registry, classification of node-spoofing evidence, and
RSSI-trend analysis to tell optically identical nodes apart.

The classifier is a deterministic decision table over per-identity evidence.
An attacker can copy or forge a node's visual identity (its marker) and/or
its network identity (its address), and may or may not transmit; the
combinations leave distinct fingerprints:

  duplicate marker + invalid signatures         copied marker and address,
                                                attacker transmitting
  duplicate marker + only clean traffic         copied marker and address,
                                                attacker silent (walk the
                                                handheld: RSSI points at the
                                                real transmitter)
  duplicate marker + unknown-key traffic from   copied marker, attacker's own
  an unmarked address                           address
  unique marker + invalid signatures on a       forged marker, copied address
  provisioned address
  scanned marker w/o provisioned key + its      both identities forged
  own unknown-key traffic

Signature tallies only count once at least `min_observations` corroborating
messages exist, damping one-off transients; a single failure still raises an
operator warning at ingestion time.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from . import signing
from .codec import MacAddress, NonDerivableAddress, ipv6_to_mac
from .sniffer import HopRecord

VALID = "valid"
INVALID = "invalid"
UNKNOWN_KEY = "unknown_key"
UNSIGNED = "unsigned"


class TooFewSamples(ValueError):
    """RSSI trend needs at least three samples."""


class KeyRegistry:
    """Operator-provisioned public keys by MAC, the stand-in for access to a
    certificate authority. One key per MAC; replacement is an operator act."""

    def __init__(self, entries: dict[MacAddress, bytes] | None = None):
        self._entries: dict[MacAddress, bytes] = dict(entries or {})

    def register(self, mac: MacAddress, public_key: bytes) -> None:
        if len(public_key) != 32:
            raise ValueError("raw Ed25519 public keys are 32 bytes")
        self._entries[mac] = public_key

    def get(self, mac: MacAddress) -> bytes | None:
        return self._entries.get(mac)

    def __contains__(self, mac: MacAddress) -> bool:
        return mac in self._entries

    def __len__(self) -> int:
        return len(self._entries)


def verify_message(hop: HopRecord, payload: bytes, registry: KeyRegistry) -> str:
    """Check a captured payload's signature trailer against the key of the
    identity claimed by the source address.

    Unsigned payloads pass through as "unsigned" and never warn, so insecure
    networks stay monitorable. All outcomes are values, never exceptions.
    """
    app, sig = signing.split_trailer(payload)
    if sig is None:
        return UNSIGNED
    try:
        claimed = ipv6_to_mac(hop.src_ip)
    except NonDerivableAddress:
        return UNKNOWN_KEY
    key = registry.get(claimed)
    if key is None:
        return UNKNOWN_KEY
    if signing.verify_signature(key, hop.src_ip, hop.dst_ip, app, sig):
        return VALID
    return INVALID


class SpoofCase(str, enum.Enum):
    COPIED_ID_CHATTY = "COPIED_ID_CHATTY"
    COPIED_ID_SILENT = "COPIED_ID_SILENT"
    COPIED_MARKER_NEW_ADDR = "COPIED_MARKER_NEW_ADDR"
    FORGED_MARKER_COPIED_ADDR = "FORGED_MARKER_COPIED_ADDR"
    FORGED_BOTH = "FORGED_BOTH"
    NO_FINDING = "NO_FINDING"


@dataclass
class SpoofEvidence:
    """What the stored data says about one MAC/marker identity.

    Tallies are nonnegative and only ever grow as traffic accumulates.
    ``unmarked_unknown_count`` is the one cross-identity ingredient: unknown-key
    traffic from addresses that carry neither a marker nor a provisioned key,
    which is what a copied-marker attacker transmitting under its own address
    leaves behind.
    """

    mac: MacAddress
    valid_sig_count: int = 0
    invalid_sig_count: int = 0
    unknown_key_count: int = 0
    duplicate_marker: bool = False
    marker_seen: bool = False
    key_registered: bool = False
    unmarked_unknown_count: int = 0
    rssi_samples: dict[str, list[tuple[int, float]]] = field(default_factory=dict)


_ACTIONS = {
    SpoofCase.COPIED_ID_CHATTY: (
        "a second placement claims this identity and transmits with the wrong "
        "key: locate the transmitter of the failing traffic and remove it"
    ),
    SpoofCase.COPIED_ID_SILENT: (
        "a second placement claims this identity but stays silent: walk the "
        "handheld between the placements and follow the RSSI trend to the "
        "real transmitter"
    ),
    SpoofCase.COPIED_MARKER_NEW_ADDR: (
        "a second placement claims this marker while unknown-key traffic "
        "appears from an unmarked address: inspect the duplicated placement"
    ),
    SpoofCase.FORGED_MARKER_COPIED_ADDR: (
        "traffic under this provisioned address fails verification: a nearby "
        "node with an unfamiliar marker is likely transmitting as it"
    ),
    SpoofCase.FORGED_BOTH: (
        "this marker and address match no provisioned node and its traffic "
        "cannot be verified: treat the placement as rogue"
    ),
    SpoofCase.NO_FINDING: "no action needed",
}


def classify(
    evidence: SpoofEvidence, min_observations: int = 3
) -> tuple[SpoofCase, str]:
    """Deterministic decision table over the evidence for one identity."""
    case = SpoofCase.NO_FINDING
    if evidence.duplicate_marker:
        if evidence.invalid_sig_count >= min_observations:
            case = SpoofCase.COPIED_ID_CHATTY
        elif evidence.unmarked_unknown_count >= min_observations:
            case = SpoofCase.COPIED_MARKER_NEW_ADDR
        else:
            case = SpoofCase.COPIED_ID_SILENT
    elif evidence.key_registered and evidence.invalid_sig_count >= min_observations:
        case = SpoofCase.FORGED_MARKER_COPIED_ADDR
    elif (
        evidence.marker_seen
        and not evidence.key_registered
        and evidence.unknown_key_count >= min_observations
    ):
        case = SpoofCase.FORGED_BOTH
    return case, _ACTIONS[case]


def rssi_trend(samples, dead_band: float = 0.5) -> str:
    """Sign of the least-squares slope of RSSI against sample index.

    `samples` is a time-ordered sequence of (anything, rssi) pairs or bare
    RSSI values for one MAC. Slopes within +-dead_band dB/sample read as
    "flat".
    """
    values = [s[-1] if isinstance(s, (tuple, list)) else float(s) for s in samples]
    n = len(values)
    if n < 3:
        raise TooFewSamples(f"need at least 3 samples, got {n}")
    mean_i = (n - 1) / 2.0
    mean_y = sum(values) / n
    num = sum((i - mean_i) * (y - mean_y) for i, y in enumerate(values))
    den = sum((i - mean_i) ** 2 for i in range(n))
    slope = num / den
    if slope > dead_band:
        return "increasing"
    if slope < -dead_band:
        return "decreasing"
    return "flat"
