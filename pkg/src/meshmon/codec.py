"""Byte-exact codec for simplified IEEE 802.15.4 frames, the 6LoWPAN datagrams
they carry, and PCAP capture files.

This is the normative wire format for the whole toolkit (see docs/frame-format.md
for the same tables with prose).

Frame layout, multi-byte MAC-layer fields little-endian:

    offset  size  field
    ------  ----  -----------------------------------------------------------
    0       2     frame control, fixed 0xcc41 (data frame, EUI-64 addressing,
                  PAN id compression)
    2       1     sequence number
    3       2     PAN id
    5       8     destination EUI-64, transmitted least-significant byte first
    13      8     source EUI-64, transmitted least-significant byte first
    21      N     payload: one 6LoWPAN datagram, N <= 102
    21+N    2     FCS: CRC-16/CCITT (poly 0x1021, init 0x0000) over bytes
                  0 .. 21+N-1

The 102-byte payload budget keeps every frame inside the 127-byte 802.15.4 MTU.

Datagram layout (inside the frame payload), ports in network byte order:

    offset  size    field
    ------  ------  ---------------------------------------------------------
    0       1       dispatch: bits 7-6 = 0b01, bits 5-4 = source address
                    mode, bits 3-2 = destination address mode, bits 1-0 zero
    1       1       hop limit
    2       0/8/16  source IPv6 address (per mode)
    ..      0/8/16  destination IPv6 address (per mode)
    ..      2       source port (big-endian)
    ..      2       destination port (big-endian)
    ..      rest    UDP payload

Address modes: 0 = full 16-byte address inline; 1 = link-local, 8-byte
interface identifier inline (fe80::/64 prefix implied); 2 = elided, derived
from the carrying frame's MAC header via the modified-EUI-64 rule. The encoder
always picks the smallest applicable mode, so encoding is deterministic; the
source address of a forwarded datagram stops being derivable after the first
hop and travels inline from then on.
"""

from __future__ import annotations

import ipaddress
import struct
from dataclasses import dataclass, field

IPv6 = ipaddress.IPv6Address

FCF_DATA_EUI64 = 0xCC41
HEADER_LEN = 21
FCS_LEN = 2
MIN_FRAME_LEN = HEADER_LEN + FCS_LEN
MAX_PAYLOAD = 102

PCAP_MAGIC = 0xA1B2C3D4
PCAP_SNAPLEN = 65535
LINKTYPE_IEEE802_15_4_WITHFCS = 195
PCAP_GLOBAL_HEADER_LEN = 24
PCAP_RECORD_HEADER_LEN = 16

ADDR_FULL = 0
ADDR_IID = 1
ADDR_ELIDED = 2

_LINK_LOCAL_PREFIX = b"\xfe\x80\x00\x00\x00\x00\x00\x00"


class CodecError(ValueError):
    """Base class for frame/datagram codec failures."""


class TruncatedFrame(CodecError):
    """Input ends before the minimum frame size."""


class BadChecksum(CodecError):
    """FCS does not match the CRC of the preceding bytes."""


class UnsupportedFrame(CodecError):
    """Checksum is fine but the frame control field is not this profile's."""


class PayloadTooLarge(CodecError):
    """Frame payload exceeds the 102-byte MTU budget."""


class MalformedDatagram(CodecError):
    """Payload does not parse as a datagram of this profile."""


class NonDerivableAddress(CodecError):
    """IPv6 address carries no device identity (multicast etc.)."""


class PcapError(ValueError):
    """Base class for capture-file failures."""


class BadMagic(PcapError):
    pass


class UnsupportedLinkType(PcapError):
    pass


class TruncatedCapture(PcapError):
    pass


def _crc16_table() -> list[int]:
    table = []
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021 if crc & 0x8000 else crc << 1) & 0xFFFF
        table.append(crc)
    return table


_CRC16_TABLE = _crc16_table()


def crc16_ccitt(data: bytes) -> int:
    """CRC-16/CCITT, poly 0x1021, init 0x0000, no reflection (XMODEM flavor)."""
    crc = 0x0000
    for b in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC16_TABLE[((crc >> 8) ^ b) & 0xFF]
    return crc


@dataclass(frozen=True, order=True)
class MacAddress:
    """An 802.15.4 extended (EUI-64) address.

    Canonical text form is 16 lowercase hex digits colon-grouped per byte,
    e.g. "00:12:4b:00:aa:bb:cc:dd".
    """

    eui64: bytes

    def __post_init__(self) -> None:
        if not isinstance(self.eui64, bytes):
            raise TypeError("eui64 must be bytes")
        if len(self.eui64) != 8:
            raise ValueError(f"EUI-64 must be exactly 8 bytes, got {len(self.eui64)}")

    @classmethod
    def parse(cls, text: str) -> "MacAddress":
        digits = text.replace(":", "").replace("-", "").strip().lower()
        if len(digits) != 16:
            raise ValueError(f"not a MAC address: {text!r}")
        return cls(bytes.fromhex(digits))

    def __str__(self) -> str:
        return ":".join(f"{b:02x}" for b in self.eui64)


@dataclass
class Frame802154:
    """One simplified 802.15.4 data frame.

    ``fcs`` is informational: it is filled in by the decoder and recomputed by
    the encoder, and never takes part in equality.
    """

    seq_no: int
    src_mac: MacAddress
    dst_mac: MacAddress
    pan_id: int
    payload: bytes = b""
    fcs: int | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not 0 <= self.seq_no <= 0xFF:
            raise ValueError(f"seq_no out of range: {self.seq_no}")
        if not 0 <= self.pan_id <= 0xFFFF:
            raise ValueError(f"pan_id out of range: {self.pan_id}")


@dataclass(frozen=True)
class Datagram6LoWPAN:
    """End-to-end UDP-over-IPv6 datagram as carried in a frame payload."""

    src_ip: IPv6
    dst_ip: IPv6
    src_port: int
    dst_port: int
    payload: bytes = b""
    hop_limit: int = 64

    def __post_init__(self) -> None:
        if self.src_ip == IPv6("::"):
            raise ValueError("source address must not be unspecified")
        for name, port in (("src_port", self.src_port), ("dst_port", self.dst_port)):
            if not 0 < port <= 0xFFFF:
                raise ValueError(f"{name} out of range: {port}")
        if not 0 <= self.hop_limit <= 0xFF:
            raise ValueError(f"hop_limit out of range: {self.hop_limit}")


@dataclass
class PcapCapture:
    """A classic PCAP capture: link type 195 and (timestamp µs, frame bytes)
    records with nondecreasing timestamps.

    Captures written by this tool always contain frames that decode cleanly;
    hand-crafted files may carry corrupt records, which is how corrupt-capture
    counting is exercised from files.
    """

    records: list[tuple[int, bytes]]
    link_type: int = LINKTYPE_IEEE802_15_4_WITHFCS


def mac_to_ipv6(mac: MacAddress) -> IPv6:
    """Link-local address with the modified-EUI-64 interface identifier."""
    iid = bytes([mac.eui64[0] ^ 0x02]) + mac.eui64[1:]
    return IPv6(_LINK_LOCAL_PREFIX + iid)


def ipv6_to_mac(addr: IPv6 | str) -> MacAddress:
    """Recover the EUI-64 behind an address's interface identifier.

    Flips the universal/local bit back. Callers must only pass unicast
    addresses whose interface identifier follows the modified-EUI-64 rule;
    multicast, unspecified and loopback addresses carry no device identity
    and raise ``NonDerivableAddress``.
    """
    addr = IPv6(addr)
    if addr.is_multicast or addr == IPv6("::") or addr == IPv6("::1"):
        raise NonDerivableAddress(f"no device identity behind {addr}")
    iid = addr.packed[8:]
    return MacAddress(bytes([iid[0] ^ 0x02]) + iid[1:])


def encode_frame(frame: Frame802154) -> bytes:
    """Serialize a frame; the FCS is recomputed, never trusted."""
    if len(frame.payload) > MAX_PAYLOAD:
        raise PayloadTooLarge(
            f"payload of {len(frame.payload)} bytes exceeds the {MAX_PAYLOAD}-byte budget"
        )
    body = (
        struct.pack("<HBH", FCF_DATA_EUI64, frame.seq_no, frame.pan_id)
        + frame.dst_mac.eui64[::-1]
        + frame.src_mac.eui64[::-1]
        + frame.payload
    )
    return body + struct.pack("<H", crc16_ccitt(body))


def decode_frame(data: bytes) -> Frame802154:
    """Parse frame bytes.

    Corrupt frames raise ``BadChecksum`` rather than being dropped silently,
    so callers can count them.
    """
    if len(data) < MIN_FRAME_LEN:
        raise TruncatedFrame(
            f"{len(data)} bytes is below the {MIN_FRAME_LEN}-byte minimum"
        )
    (stored_fcs,) = struct.unpack_from("<H", data, len(data) - FCS_LEN)
    computed = crc16_ccitt(data[:-FCS_LEN])
    if stored_fcs != computed:
        raise BadChecksum(f"FCS {stored_fcs:#06x} != computed {computed:#06x}")
    fcf, seq_no, pan_id = struct.unpack_from("<HBH", data, 0)
    if fcf != FCF_DATA_EUI64:
        raise UnsupportedFrame(f"frame control {fcf:#06x} is not this profile")
    dst = MacAddress(bytes(data[5:13][::-1]))
    src = MacAddress(bytes(data[13:21][::-1]))
    return Frame802154(
        seq_no=seq_no,
        src_mac=src,
        dst_mac=dst,
        pan_id=pan_id,
        payload=bytes(data[HEADER_LEN:-FCS_LEN]),
        fcs=stored_fcs,
    )


def _pick_addr_mode(ip: IPv6, frame_mac: MacAddress | None) -> tuple[int, bytes]:
    if frame_mac is not None and ip == mac_to_ipv6(frame_mac):
        return ADDR_ELIDED, b""
    if ip.packed[:8] == _LINK_LOCAL_PREFIX:
        return ADDR_IID, ip.packed[8:]
    return ADDR_FULL, ip.packed


def encode_datagram(
    dgram: Datagram6LoWPAN,
    src_mac: MacAddress | None = None,
    dst_mac: MacAddress | None = None,
) -> bytes:
    """Serialize a datagram for a frame whose MAC header carries the given
    addresses (they decide which IP addresses can be elided)."""
    src_mode, src_bytes = _pick_addr_mode(dgram.src_ip, src_mac)
    dst_mode, dst_bytes = _pick_addr_mode(dgram.dst_ip, dst_mac)
    dispatch = 0x40 | (src_mode << 4) | (dst_mode << 2)
    return (
        bytes([dispatch, dgram.hop_limit])
        + src_bytes
        + dst_bytes
        + struct.pack(">HH", dgram.src_port, dgram.dst_port)
        + dgram.payload
    )


def _read_addr(data: bytes, pos: int, mode: int, frame_mac: MacAddress | None) -> tuple[IPv6, int]:
    if mode == ADDR_ELIDED:
        if frame_mac is None:
            raise MalformedDatagram("elided address but no frame MAC supplied")
        return mac_to_ipv6(frame_mac), pos
    if mode == ADDR_IID:
        if pos + 8 > len(data):
            raise MalformedDatagram("truncated interface identifier")
        return IPv6(_LINK_LOCAL_PREFIX + data[pos : pos + 8]), pos + 8
    if mode == ADDR_FULL:
        if pos + 16 > len(data):
            raise MalformedDatagram("truncated address")
        return IPv6(data[pos : pos + 16]), pos + 16
    raise MalformedDatagram(f"reserved address mode {mode}")


def decode_datagram(
    data: bytes,
    src_mac: MacAddress | None = None,
    dst_mac: MacAddress | None = None,
) -> Datagram6LoWPAN:
    """Parse a frame payload back into a datagram; inverse of encode_datagram
    for the same frame MAC context."""
    if len(data) < 6:
        raise MalformedDatagram("too short for dispatch, hop limit and ports")
    dispatch = data[0]
    if dispatch & 0xC3 != 0x40:
        raise MalformedDatagram(f"dispatch {dispatch:#04x} is not this profile")
    hop_limit = data[1]
    pos = 2
    src_ip, pos = _read_addr(data, pos, (dispatch >> 4) & 0x3, src_mac)
    dst_ip, pos = _read_addr(data, pos, (dispatch >> 2) & 0x3, dst_mac)
    if pos + 4 > len(data):
        raise MalformedDatagram("truncated ports")
    src_port, dst_port = struct.unpack_from(">HH", data, pos)
    try:
        return Datagram6LoWPAN(
            src_ip=src_ip,
            dst_ip=dst_ip,
            src_port=src_port,
            dst_port=dst_port,
            payload=bytes(data[pos + 4 :]),
            hop_limit=hop_limit,
        )
    except ValueError as exc:
        raise MalformedDatagram(str(exc)) from exc


def write_pcap(capture: PcapCapture) -> bytes:
    """Serialize a capture: classic little-endian PCAP, version 2.4."""
    if capture.link_type != LINKTYPE_IEEE802_15_4_WITHFCS:
        raise UnsupportedLinkType(
            f"only link type {LINKTYPE_IEEE802_15_4_WITHFCS}, got {capture.link_type}"
        )
    parts = [
        struct.pack(
            "<IHHiIII", PCAP_MAGIC, 2, 4, 0, 0, PCAP_SNAPLEN, capture.link_type
        )
    ]
    prev_ts = None
    for ts_us, frame_bytes in capture.records:
        if ts_us < 0:
            raise ValueError(f"negative timestamp {ts_us}")
        if prev_ts is not None and ts_us < prev_ts:
            raise ValueError("record timestamps must be nondecreasing")
        prev_ts = ts_us
        sec, usec = divmod(ts_us, 1_000_000)
        parts.append(
            struct.pack("<IIII", sec, usec, len(frame_bytes), len(frame_bytes))
        )
        parts.append(frame_bytes)
    return b"".join(parts)


def read_pcap(data: bytes) -> PcapCapture:
    """Parse a capture file. Record payloads are returned as raw bytes and are
    not decoded here, so corrupt frames survive into replay statistics."""
    if len(data) < 4:
        raise BadMagic("no magic number")
    (magic,) = struct.unpack_from("<I", data, 0)
    if magic != PCAP_MAGIC:
        raise BadMagic(f"magic {magic:#010x} is not little-endian classic PCAP")
    if len(data) < PCAP_GLOBAL_HEADER_LEN:
        raise TruncatedCapture("incomplete global header")
    (link_type,) = struct.unpack_from("<I", data, 20)
    if link_type != LINKTYPE_IEEE802_15_4_WITHFCS:
        raise UnsupportedLinkType(
            f"link type {link_type}, expected {LINKTYPE_IEEE802_15_4_WITHFCS}"
        )
    records: list[tuple[int, bytes]] = []
    pos = PCAP_GLOBAL_HEADER_LEN
    while pos < len(data):
        if pos + PCAP_RECORD_HEADER_LEN > len(data):
            raise TruncatedCapture("incomplete record header")
        sec, usec, incl_len, _orig_len = struct.unpack_from("<IIII", data, pos)
        pos += PCAP_RECORD_HEADER_LEN
        if pos + incl_len > len(data):
            raise TruncatedCapture("record body runs past end of file")
        records.append((sec * 1_000_000 + usec, bytes(data[pos : pos + incl_len])))
        pos += incl_len
    return PcapCapture(records=records, link_type=link_type)
