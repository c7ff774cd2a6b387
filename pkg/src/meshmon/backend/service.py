"""The information-storage unit: duplicate-free admission of capture data,
the node registry merging visual and digital identities, windowed traffic
views, warnings, credentials, and spoof evidence.

Duplicate admission: a record is a duplicate when some already-stored witness
of an equal-digest transmission lies strictly within epsilon of its
timestamp. Duplicates are not discarded outright: the transmission stays
stored once, and the new (sniffer, timestamp, RSSI) witness is appended,
because per-sniffer signal strength is what later disambiguates optically
identical nodes. A transmission's canonical timestamp is the minimum over
its witnesses, which keeps the final stored state independent of upload
arrival order. Witness chains wider than epsilon (t, t+0.8eps, t+1.6eps) are
inherently ambiguous; the any-witness rule merges them, which can conflate an
extremely fast retransmission of identical bytes.
"""

from __future__ import annotations

import base64
import hashlib
import secrets
from dataclasses import dataclass
from functools import lru_cache

from ..codec import MacAddress, NonDerivableAddress, ipv6_to_mac
from ..sniffer import HopRecord
from .. import verifier
from ..verifier import KeyRegistry, SpoofEvidence, classify
from .store import Store

import ipaddress

DEFAULT_EPSILON_US = 5_000
ROLES = {"operator", "trainee", "sniffer"}

PBKDF2_ITERATIONS = 50_000


class Unauthorized(Exception):
    pass


class UnknownNode(KeyError):
    pass


class UnknownWarning(KeyError):
    pass


class BadWindow(ValueError):
    pass


class LockedByWarning(Exception):
    """Metadata edits are refused while a duplicate-marker warning on the MAC
    is unresolved."""


@dataclass(frozen=True)
class TrafficEdge:
    view: str
    src: str
    dst: str
    count: int
    window: tuple[int, int]

    def to_dict(self) -> dict:
        return {
            "view": self.view,
            "src": self.src,
            "dst": self.dst,
            "count": self.count,
            "t0": self.window[0],
            "t1": self.window[1],
        }


@dataclass
class NodeRecord:
    mac: str
    name: str = ""
    location: str = ""
    public_key: str | None = None  # raw key, hex
    first_seen_visual: int | None = None
    first_seen_digital: int | None = None
    locked: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class Warning:
    id: int
    kind: str
    subject: str
    ts_us: int
    details: str
    resolved: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@lru_cache(maxsize=512)
def _derive_secret(secret: str, salt_hex: str) -> str:
    return hashlib.pbkdf2_hmac(
        "sha256", secret.encode(), bytes.fromhex(salt_hex), PBKDF2_ITERATIONS
    ).hex()


def _claimed_mac(src_ip: str) -> str | None:
    try:
        return str(ipv6_to_mac(ipaddress.IPv6Address(src_ip)))
    except (NonDerivableAddress, ValueError):
        return None


class BackendService:
    def __init__(self, store: Store | None = None, epsilon_us: int = DEFAULT_EPSILON_US):
        self.store = store or Store()
        self.epsilon_us = epsilon_us
        self._registry_cache: KeyRegistry | None = None

    # -- credentials -------------------------------------------------------

    def create_credential(self, username: str, secret: str, role: str) -> None:
        if role not in ROLES:
            raise ValueError(f"role must be one of {sorted(ROLES)}")
        salt = secrets.token_bytes(16).hex()
        with self.store.transaction() as cur:
            cur.execute(
                "INSERT OR REPLACE INTO credentials(username, salt_hex, hash_hex, role, revoked)"
                " VALUES (?, ?, ?, ?, 0)",
                (username, salt, _derive_secret(secret, salt), role),
            )

    def revoke_credential(self, username: str) -> None:
        with self.store.transaction() as cur:
            cur.execute("UPDATE credentials SET revoked = 1 WHERE username = ?", (username,))

    def authenticate(self, username: str, secret: str) -> str:
        row = self.store.one("SELECT * FROM credentials WHERE username = ?", (username,))
        if row is None or row["revoked"]:
            raise Unauthorized("unknown, revoked or mismatching credentials")
        if _derive_secret(secret, row["salt_hex"]) != row["hash_hex"]:
            raise Unauthorized("unknown, revoked or mismatching credentials")
        return row["role"]

    # -- key registry --------------------------------------------------------

    def register_key(self, mac: str, public_key_hex: str, ts_us: int = 0) -> None:
        mac = str(MacAddress.parse(mac))
        raw = bytes.fromhex(public_key_hex)
        if len(raw) != 32:
            raise ValueError("raw Ed25519 public keys are 32 bytes")
        with self.store.transaction() as cur:
            cur.execute(
                "INSERT OR REPLACE INTO keys(mac, public_key_hex, provisioned_ts)"
                " VALUES (?, ?, ?)",
                (mac, raw.hex(), ts_us),
            )
        self._registry_cache = None
        self._refresh_classifications([mac], ts_us)

    def registry(self) -> KeyRegistry:
        if self._registry_cache is None:
            entries = {
                MacAddress.parse(r["mac"]): bytes.fromhex(r["public_key_hex"])
                for r in self.store.query("SELECT mac, public_key_hex FROM keys")
            }
            self._registry_cache = KeyRegistry(entries)
        return self._registry_cache

    # -- packet admission ----------------------------------------------------

    def ingest_batch(self, records: list[dict]) -> dict:
        results = []
        admitted = duplicate = 0
        for record in records:
            status, tid = self.admit_packet(record)
            results.append({"status": status, "transmission_id": tid})
            if status == "admitted":
                admitted += 1
            else:
                duplicate += 1
        return {"results": results, "admitted": admitted, "duplicate": duplicate}

    def admit_packet(self, record: dict, epsilon_us: int | None = None) -> tuple[str, int]:
        """Admission is total: every well-formed record is either a new
        transmission or a witness appended to an existing one."""
        eps = self.epsilon_us if epsilon_us is None else epsilon_us
        digest = record["digest"].lower()
        ts_us = int(record["ts_us"])
        sniffer_id = record.get("sniffer_id", "")
        rssi = float(record.get("rssi_dbm", 0.0))

        with self.store.transaction() as cur:
            matches = cur.execute(
                "SELECT w.ts_us AS wts, w.transmission_id AS tid"
                " FROM witnesses w JOIN transmissions t ON w.transmission_id = t.id"
                " WHERE t.digest = ?",
                (digest,),
            ).fetchall()
            best = None
            for row in matches:
                delta = abs(row["wts"] - ts_us)
                if delta < eps:
                    key = (delta, row["wts"], row["tid"])
                    if best is None or key < best[0]:
                        best = (key, row["tid"])
            if best is not None:
                tid = best[1]
                cur.execute(
                    "INSERT OR IGNORE INTO witnesses(transmission_id, sniffer_id, ts_us, rssi)"
                    " VALUES (?, ?, ?, ?)",
                    (tid, sniffer_id, ts_us, rssi),
                )
                cur.execute(
                    "UPDATE transmissions SET ts_us = MIN(ts_us, ?) WHERE id = ?",
                    (ts_us, tid),
                )
                return ("duplicate", tid)
            tid, status, claimed = self._store_transmission(cur, record, ts_us)
            cur.execute(
                "INSERT OR IGNORE INTO witnesses(transmission_id, sniffer_id, ts_us, rssi)"
                " VALUES (?, ?, ?, ?)",
                (tid, sniffer_id, ts_us, rssi),
            )
        if status in (verifier.INVALID, verifier.UNKNOWN_KEY):
            self._refresh_classifications([claimed] if claimed else [], ts_us)
        return ("admitted", tid)

    def _store_transmission(self, cur, record: dict, ts_us: int) -> tuple[int, str, str | None]:
        src_mac = str(MacAddress.parse(record["src_mac"]))
        dst_mac = str(MacAddress.parse(record["dst_mac"]))
        src_ip = str(ipaddress.IPv6Address(record["src_ip"]))
        dst_ip = str(ipaddress.IPv6Address(record["dst_ip"]))
        payload = base64.b64decode(record.get("payload_b64", "") or "")
        claimed = _claimed_mac(src_ip)

        hop = HopRecord(
            src_mac=MacAddress.parse(src_mac),
            dst_mac=MacAddress.parse(dst_mac),
            src_ip=ipaddress.IPv6Address(src_ip),
            dst_ip=ipaddress.IPv6Address(dst_ip),
            seq_payload=record.get("seq_payload"),
            digest=bytes.fromhex(record["digest"]),
            ts=ts_us,
            rssi=float(record.get("rssi_dbm", 0.0)),
        )
        outcome = verifier.verify_message(hop, payload, self.registry())
        # unsigned traffic stays "unchecked": nothing to check, nothing to warn
        status = "unchecked" if outcome == verifier.UNSIGNED else outcome

        is_first_hop = int(claimed == src_mac)
        cur.execute(
            "INSERT INTO transmissions(digest, ts_us, src_mac, dst_mac, src_ip, dst_ip,"
            " seq_payload, payload_b64, signature_status, claimed_src_mac, is_first_hop)"
            " VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
            (
                record["digest"].lower(),
                ts_us,
                src_mac,
                dst_mac,
                src_ip,
                dst_ip,
                record.get("seq_payload"),
                record.get("payload_b64", "") or "",
                status,
                claimed,
                is_first_hop,
            ),
        )
        tid = cur.lastrowid

        seen: set[str] = {src_mac, dst_mac}
        if claimed:
            seen.add(claimed)
        claimed_dst = _claimed_mac(dst_ip)
        if claimed_dst:
            seen.add(claimed_dst)
        for mac in seen:
            self._touch_node_digital(cur, mac, ts_us)

        if status == verifier.INVALID:
            self._append_warning(
                cur, "failed_signature", claimed or src_mac, ts_us,
                f"signature on traffic from {src_ip} does not verify",
            )
        elif status == verifier.UNKNOWN_KEY:
            self._append_warning(
                cur, "unknown_key", claimed or src_mac, ts_us,
                f"no provisioned key for traffic from {src_ip}",
            )
        return tid, status, claimed

    def _touch_node_digital(self, cur, mac: str, ts_us: int) -> None:
        cur.execute(
            "INSERT INTO nodes(mac, first_seen_digital) VALUES (?, ?)"
            " ON CONFLICT(mac) DO UPDATE SET first_seen_digital ="
            " MIN(COALESCE(first_seen_digital, ?), ?)",
            (mac, ts_us, ts_us, ts_us),
        )

    def _append_warning(self, cur, kind: str, subject: str, ts_us: int, details: str) -> None:
        cur.execute(
            "INSERT INTO warnings(kind, subject, ts_us, details) VALUES (?, ?, ?, ?)",
            (kind, subject, ts_us, details),
        )

    # -- marker scans and node registry ---------------------------------------

    def register_marker_scan(
        self,
        mac: str,
        placement: str,
        scanner: str = "",
        ts_us: int = 0,
        name: str | None = None,
        location: str | None = None,
    ) -> dict:
        mac = str(MacAddress.parse(mac))
        with self.store.transaction() as cur:
            prior = {
                r["placement"]
                for r in cur.execute(
                    "SELECT DISTINCT placement FROM marker_scans WHERE mac = ?", (mac,)
                )
            }
            cur.execute(
                "INSERT INTO marker_scans(mac, placement, scanner, ts_us) VALUES (?, ?, ?, ?)",
                (mac, placement, scanner, ts_us),
            )
            node = cur.execute("SELECT * FROM nodes WHERE mac = ?", (mac,)).fetchone()
            if node is None:
                cur.execute(
                    "INSERT INTO nodes(mac, name, location, first_seen_visual)"
                    " VALUES (?, ?, ?, ?)",
                    (mac, name or "", location or "", ts_us),
                )
            else:
                cur.execute(
                    "UPDATE nodes SET first_seen_visual ="
                    " MIN(COALESCE(first_seen_visual, ?), ?) WHERE mac = ?",
                    (ts_us, ts_us, mac),
                )
            duplicate = bool(prior) and placement not in prior
            if duplicate:
                self._append_warning(
                    cur, "duplicate_marker", mac, ts_us,
                    f"marker for {mac} scanned at {placement!r}, previously at "
                    + ", ".join(repr(p) for p in sorted(prior)),
                )
            elif node is not None and not self._locked(cur, mac):
                if name is not None or location is not None:
                    sets, params = [], []
                    if name is not None:
                        sets.append("name = ?")
                        params.append(name)
                    if location is not None:
                        sets.append("location = ?")
                        params.append(location)
                    cur.execute(
                        f"UPDATE nodes SET {', '.join(sets)} WHERE mac = ?", (*params, mac)
                    )
        self._refresh_classifications([mac], ts_us)
        result = "duplicate_marker" if duplicate else ("known" if node is not None else "created")
        return {"result": result, "node": self.node(mac).to_dict()}

    def _locked(self, cur_or_none, mac: str) -> bool:
        sql = (
            "SELECT COUNT(*) AS n FROM warnings"
            " WHERE kind = 'duplicate_marker' AND subject = ? AND resolved = 0"
        )
        if cur_or_none is None:
            return self.store.one(sql, (mac,))["n"] > 0
        return cur_or_none.execute(sql, (mac,)).fetchone()["n"] > 0

    def update_node(self, mac: str, name: str | None = None, location: str | None = None) -> NodeRecord:
        mac = str(MacAddress.parse(mac))
        with self.store.transaction() as cur:
            node = cur.execute("SELECT mac FROM nodes WHERE mac = ?", (mac,)).fetchone()
            if node is None:
                raise UnknownNode(mac)
            if self._locked(cur, mac):
                raise LockedByWarning(
                    f"{mac} has an unresolved duplicate-marker warning; resolve it first"
                )
            if name is not None:
                cur.execute("UPDATE nodes SET name = ? WHERE mac = ?", (name, mac))
            if location is not None:
                cur.execute("UPDATE nodes SET location = ? WHERE mac = ?", (location, mac))
        return self.node(mac)

    def node(self, mac: str) -> NodeRecord:
        mac = str(MacAddress.parse(mac))
        row = self.store.one("SELECT * FROM nodes WHERE mac = ?", (mac,))
        if row is None:
            raise UnknownNode(mac)
        key = self.store.one("SELECT public_key_hex FROM keys WHERE mac = ?", (mac,))
        return NodeRecord(
            mac=row["mac"],
            name=row["name"],
            location=row["location"],
            public_key=key["public_key_hex"] if key else None,
            first_seen_visual=row["first_seen_visual"],
            first_seen_digital=row["first_seen_digital"],
            locked=self._locked(None, mac),
        )

    def list_nodes(self) -> list[NodeRecord]:
        macs = [r["mac"] for r in self.store.query("SELECT mac FROM nodes ORDER BY mac")]
        return [self.node(m) for m in macs]

    def node_info(self, mac: str, t0: int | None = None, t1: int | None = None) -> dict:
        record = self.node(mac)
        where, params = "", []
        if t0 is not None and t1 is not None:
            if t0 > t1:
                raise BadWindow(f"t0 {t0} > t1 {t1}")
            where = " AND ts_us BETWEEN ? AND ?"
            params = [t0, t1]
        sent = self.store.one(
            f"SELECT COUNT(*) AS n FROM transmissions WHERE src_mac = ?{where}",
            (record.mac, *params),
        )["n"]
        received = self.store.one(
            f"SELECT COUNT(*) AS n FROM transmissions WHERE dst_mac = ?{where}",
            (record.mac, *params),
        )["n"]
        neighbors = sorted(
            {
                r["peer"]
                for r in self.store.query(
                    f"SELECT dst_mac AS peer FROM transmissions WHERE src_mac = ?{where}"
                    f" UNION SELECT src_mac AS peer FROM transmissions WHERE dst_mac = ?{where}",
                    (record.mac, *params, record.mac, *params),
                )
            }
        )
        return {
            "node": record.to_dict(),
            "packets_sent": sent,
            "packets_received": received,
            "neighbors": neighbors,
        }

    # -- traffic views ---------------------------------------------------------

    def edges(self, view: str, t0: int, t1: int) -> list[TrafficEdge]:
        if view not in ("ip", "mac"):
            raise ValueError("view must be 'ip' or 'mac'")
        if t0 > t1:
            raise BadWindow(f"t0 {t0} > t1 {t1}")
        if view == "mac":
            rows = self.store.query(
                "SELECT src_mac AS src, dst_mac AS dst, COUNT(*) AS n FROM transmissions"
                " WHERE ts_us BETWEEN ? AND ? GROUP BY src_mac, dst_mac ORDER BY src, dst",
                (t0, t1),
            )
        else:
            rows = self.store.query(
                "SELECT src_ip AS src, dst_ip AS dst, COUNT(*) AS n FROM transmissions"
                " WHERE is_first_hop = 1 AND ts_us BETWEEN ? AND ?"
                " GROUP BY src_ip, dst_ip ORDER BY src, dst",
                (t0, t1),
            )
        return [
            TrafficEdge(view=view, src=r["src"], dst=r["dst"], count=r["n"], window=(t0, t1))
            for r in rows
        ]

    def timeline(self, step_us: int, view: str = "ip") -> list[dict]:
        """Trailing-window snapshots at every step boundary, recomputable from
        stored data alone."""
        if step_us <= 0:
            raise ValueError("step must be > 0")
        last = self.store.one("SELECT MAX(ts_us) AS last FROM transmissions")["last"]
        if last is None:
            return []
        snapshots = []
        for index in range(last // step_us + 1):
            t0, t1 = index * step_us, (index + 1) * step_us - 1
            snapshots.append(
                {
                    "index": index,
                    "t0": t0,
                    "t1": t1,
                    "edges": [e.to_dict() for e in self.edges(view, t0, t1)],
                }
            )
        return snapshots

    # -- warnings -----------------------------------------------------------

    def warnings(self, t0: int | None = None, t1: int | None = None) -> list[Warning]:
        sql, params = "SELECT * FROM warnings", []
        if t0 is not None and t1 is not None:
            if t0 > t1:
                raise BadWindow(f"t0 {t0} > t1 {t1}")
            sql += " WHERE ts_us BETWEEN ? AND ?"
            params = [t0, t1]
        sql += " ORDER BY ts_us, id"
        return [
            Warning(
                id=r["id"],
                kind=r["kind"],
                subject=r["subject"],
                ts_us=r["ts_us"],
                details=r["details"],
                resolved=bool(r["resolved"]),
            )
            for r in self.store.query(sql, params)
        ]

    def resolve_warning(self, warning_id: int) -> None:
        with self.store.transaction() as cur:
            row = cur.execute(
                "SELECT id FROM warnings WHERE id = ?", (warning_id,)
            ).fetchone()
            if row is None:
                raise UnknownWarning(warning_id)
            cur.execute("UPDATE warnings SET resolved = 1 WHERE id = ?", (warning_id,))

    # -- spoof evidence --------------------------------------------------------

    def evidence_for(self, mac: str) -> SpoofEvidence:
        mac = str(MacAddress.parse(mac))
        tallies = {
            r["signature_status"]: r["n"]
            for r in self.store.query(
                "SELECT signature_status, COUNT(*) AS n FROM transmissions"
                " WHERE claimed_src_mac = ? GROUP BY signature_status",
                (mac,),
            )
        }
        placements = self.store.one(
            "SELECT COUNT(DISTINCT placement) AS n FROM marker_scans WHERE mac = ?", (mac,)
        )["n"]
        unmarked_unknown = self.store.one(
            "SELECT COUNT(*) AS n FROM transmissions"
            " WHERE signature_status = 'unknown_key'"
            " AND claimed_src_mac NOT IN (SELECT mac FROM marker_scans)"
            " AND claimed_src_mac NOT IN (SELECT mac FROM keys)",
        )["n"]
        return SpoofEvidence(
            mac=MacAddress.parse(mac),
            valid_sig_count=tallies.get("valid", 0),
            invalid_sig_count=tallies.get("invalid", 0),
            unknown_key_count=tallies.get("unknown_key", 0),
            duplicate_marker=placements >= 2,
            marker_seen=placements >= 1,
            key_registered=self.store.one("SELECT mac FROM keys WHERE mac = ?", (mac,))
            is not None,
            unmarked_unknown_count=unmarked_unknown,
        )

    def spoof_report(self, mac: str) -> dict:
        evidence = self.evidence_for(mac)
        case, action = classify(evidence)
        return {
            "mac": str(evidence.mac),
            "case": case.value,
            "action": action,
            "evidence": {
                "valid_sig_count": evidence.valid_sig_count,
                "invalid_sig_count": evidence.invalid_sig_count,
                "unknown_key_count": evidence.unknown_key_count,
                "duplicate_marker": evidence.duplicate_marker,
                "marker_seen": evidence.marker_seen,
                "key_registered": evidence.key_registered,
                "unmarked_unknown_count": evidence.unmarked_unknown_count,
            },
        }

    def _refresh_classifications(self, macs: list[str], ts_us: int) -> None:
        """Re-evaluate affected identities; append a warning whenever an
        identity's classification changes to a finding."""
        affected = set(macs)
        affected.update(
            r["mac"]
            for r in self.store.query(
                "SELECT mac FROM marker_scans GROUP BY mac"
                " HAVING COUNT(DISTINCT placement) >= 2"
            )
        )
        for mac in sorted(affected):
            case, _ = classify(self.evidence_for(mac))
            stored = self.store.one(
                "SELECT spoof_case FROM classifications WHERE mac = ?", (mac,)
            )
            previous = stored["spoof_case"] if stored else verifier.SpoofCase.NO_FINDING.value
            if case.value == previous:
                continue
            with self.store.transaction() as cur:
                cur.execute(
                    "INSERT OR REPLACE INTO classifications(mac, spoof_case) VALUES (?, ?)",
                    (mac, case.value),
                )
                if case is not verifier.SpoofCase.NO_FINDING:
                    self._append_warning(
                        cur, "spoof_classified", mac, ts_us, case.value
                    )

    # -- per-sniffer signal samples ---------------------------------------------

    def rssi_samples(
        self, mac: str, sniffer_id: str, include_invalid: bool = False
    ) -> list[dict]:
        """Time-ordered witness RSSI of one sniffer for traffic transmitted
        under the given MAC. Traffic failing verification is excluded by
        default, matching what the overlay would display."""
        mac = str(MacAddress.parse(mac))
        status_clause = (
            "" if include_invalid else " AND t.signature_status IN ('valid', 'unchecked')"
        )
        rows = self.store.query(
            "SELECT w.ts_us AS ts_us, w.rssi AS rssi FROM witnesses w"
            " JOIN transmissions t ON w.transmission_id = t.id"
            f" WHERE t.src_mac = ? AND w.sniffer_id = ?{status_clause}"
            " ORDER BY w.ts_us, w.id",
            (mac, sniffer_id),
        )
        return [{"ts_us": r["ts_us"], "rssi": r["rssi"]} for r in rows]

    # -- handheld passthrough ----------------------------------------------------

    def set_handheld(self, x: float, y: float) -> None:
        with self.store.transaction() as cur:
            cur.execute(
                "INSERT OR REPLACE INTO handheld(id, x, y) VALUES (1, ?, ?)", (x, y)
            )

    def get_handheld(self) -> dict | None:
        row = self.store.one("SELECT x, y FROM handheld WHERE id = 1")
        return {"x": row["x"], "y": row["y"]} if row else None

    # -- misc ---------------------------------------------------------------

    def stored_transmission_count(self) -> int:
        return self.store.one("SELECT COUNT(*) AS n FROM transmissions")["n"]

    def witness_count(self) -> int:
        return self.store.one("SELECT COUNT(*) AS n FROM witnesses")["n"]

    def state_digest(self) -> str:
        """Canonical digest of the dedup-relevant stored state, for
        arrival-order-invariance checks."""
        transmissions = self.store.query(
            "SELECT digest, ts_us, src_mac, dst_mac, src_ip, dst_ip, signature_status"
            " FROM transmissions ORDER BY digest, ts_us"
        )
        witnesses = self.store.query(
            "SELECT t.digest AS digest, w.sniffer_id AS sid, w.ts_us AS ts, w.rssi AS rssi"
            " FROM witnesses w JOIN transmissions t ON w.transmission_id = t.id"
            " ORDER BY t.digest, w.ts_us, w.sniffer_id, w.rssi",
        )
        h = hashlib.sha256()
        for r in transmissions:
            h.update(repr(tuple(r)).encode())
        for r in witnesses:
            h.update(repr(tuple(r)).encode())
        return h.hexdigest()
