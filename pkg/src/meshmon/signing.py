"""Message signing for node identities: Ed25519 keys, the signed-message byte
string, and the length-prefixed signature trailer appended to UDP payloads.

Trailer format, at the very end of a payload:

    [ application bytes | length u16 LE (always 64) | 64-byte Ed25519 signature ]

Ed25519 signatures are deterministic, which keeps simulated event streams
byte-identical across runs. Unsigned payloads simply carry no trailer; a
payload is taken to be signed when it is long enough and the length field
reads 64. Application payloads in the echo workload are short decimal
strings, so that heuristic cannot misfire there.

The signature covers (source address, destination address, application
payload) - the fields that stay fixed while a datagram travels hop by hop.
"""

from __future__ import annotations

import hashlib
import ipaddress

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

IPv6 = ipaddress.IPv6Address

SIGNATURE_LEN = 64
TRAILER_LEN = 2 + SIGNATURE_LEN


class NoKey(Exception):
    """Raised when signing is requested from an identity without a key."""


def keypair_from_seed(seed: bytes | str) -> tuple[Ed25519PrivateKey, bytes]:
    """Deterministic keypair. Returns (private key, 32-byte raw public key)."""
    if isinstance(seed, str):
        seed = seed.encode()
    private = Ed25519PrivateKey.from_private_bytes(hashlib.sha256(seed).digest())
    return private, public_bytes(private.public_key())


def public_bytes(key: Ed25519PublicKey) -> bytes:
    from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

    return key.public_bytes(Encoding.Raw, PublicFormat.Raw)


def load_public_key(raw: bytes) -> Ed25519PublicKey:
    return Ed25519PublicKey.from_public_bytes(raw)


def signed_message(src_ip: IPv6, dst_ip: IPv6, app_payload: bytes) -> bytes:
    return src_ip.packed + dst_ip.packed + app_payload


def sign_payload(
    key: Ed25519PrivateKey | None, src_ip: IPv6, dst_ip: IPv6, app_payload: bytes
) -> bytes:
    """Application payload with the signature trailer appended."""
    if key is None:
        raise NoKey("identity has no signing key")
    signature = key.sign(signed_message(src_ip, dst_ip, app_payload))
    return app_payload + len(signature).to_bytes(2, "little") + signature


def split_trailer(payload: bytes) -> tuple[bytes, bytes | None]:
    """Split a UDP payload into (application bytes, signature or None)."""
    if len(payload) < TRAILER_LEN:
        return payload, None
    length = int.from_bytes(payload[-TRAILER_LEN:-SIGNATURE_LEN], "little")
    if length != SIGNATURE_LEN:
        return payload, None
    return payload[:-TRAILER_LEN], payload[-SIGNATURE_LEN:]


def verify_signature(
    public_key_raw: bytes, src_ip: IPv6, dst_ip: IPv6, app_payload: bytes, signature: bytes
) -> bool:
    try:
        key = load_public_key(public_key_raw)
        key.verify(signature, signed_message(src_ip, dst_ip, app_payload))
        return True
    except (InvalidSignature, ValueError):
        return False
