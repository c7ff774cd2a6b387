"""Passive monitoring toolkit for 6LoWPAN sensor meshes."""

__version__ = "0.1.0"

from .codec import (  # noqa: F401
    Datagram6LoWPAN,
    Frame802154,
    MacAddress,
    PcapCapture,
    decode_frame,
    encode_frame,
    ipv6_to_mac,
    mac_to_ipv6,
    read_pcap,
    write_pcap,
)
