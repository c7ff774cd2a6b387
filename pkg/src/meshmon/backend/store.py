"""Embedded storage behind the backend service.

sqlite3 with a single shared connection, all access serialized under one
lock: admissions of packets sharing a digest are trivially serialized and
every query sees a consistent snapshot. The dedup digest is the primary
lookup index for transmissions.
"""

from __future__ import annotations

import sqlite3
import threading
from contextlib import contextmanager

_SCHEMA = """
CREATE TABLE IF NOT EXISTS transmissions (
    id INTEGER PRIMARY KEY,
    digest TEXT NOT NULL,
    ts_us INTEGER NOT NULL,
    src_mac TEXT NOT NULL,
    dst_mac TEXT NOT NULL,
    src_ip TEXT NOT NULL,
    dst_ip TEXT NOT NULL,
    seq_payload INTEGER,
    payload_b64 TEXT NOT NULL DEFAULT '',
    signature_status TEXT NOT NULL DEFAULT 'unchecked',
    claimed_src_mac TEXT,
    is_first_hop INTEGER NOT NULL DEFAULT 0
);
CREATE INDEX IF NOT EXISTS idx_transmissions_digest ON transmissions(digest);
CREATE INDEX IF NOT EXISTS idx_transmissions_ts ON transmissions(ts_us);

CREATE TABLE IF NOT EXISTS witnesses (
    id INTEGER PRIMARY KEY,
    transmission_id INTEGER NOT NULL REFERENCES transmissions(id),
    sniffer_id TEXT NOT NULL,
    ts_us INTEGER NOT NULL,
    rssi REAL NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_witnesses_transmission ON witnesses(transmission_id);
-- a witness identical in every observable is a transport retry, not a new
-- observation: at-least-once upload + this constraint = exactly-once storage
CREATE UNIQUE INDEX IF NOT EXISTS idx_witnesses_identity
    ON witnesses(transmission_id, sniffer_id, ts_us, rssi);

CREATE TABLE IF NOT EXISTS nodes (
    mac TEXT PRIMARY KEY,
    name TEXT NOT NULL DEFAULT '',
    location TEXT NOT NULL DEFAULT '',
    first_seen_visual INTEGER,
    first_seen_digital INTEGER
);

CREATE TABLE IF NOT EXISTS keys (
    mac TEXT PRIMARY KEY,
    public_key_hex TEXT NOT NULL,
    provisioned_ts INTEGER NOT NULL DEFAULT 0
);

CREATE TABLE IF NOT EXISTS marker_scans (
    id INTEGER PRIMARY KEY,
    mac TEXT NOT NULL,
    placement TEXT NOT NULL,
    scanner TEXT NOT NULL DEFAULT '',
    ts_us INTEGER NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_marker_scans_mac ON marker_scans(mac);

CREATE TABLE IF NOT EXISTS warnings (
    id INTEGER PRIMARY KEY,
    kind TEXT NOT NULL,
    subject TEXT NOT NULL,
    ts_us INTEGER NOT NULL,
    details TEXT NOT NULL DEFAULT '',
    resolved INTEGER NOT NULL DEFAULT 0
);

CREATE TABLE IF NOT EXISTS credentials (
    username TEXT PRIMARY KEY,
    salt_hex TEXT NOT NULL,
    hash_hex TEXT NOT NULL,
    role TEXT NOT NULL,
    revoked INTEGER NOT NULL DEFAULT 0
);

CREATE TABLE IF NOT EXISTS classifications (
    mac TEXT PRIMARY KEY,
    spoof_case TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS handheld (
    id INTEGER PRIMARY KEY CHECK (id = 1),
    x REAL NOT NULL,
    y REAL NOT NULL
);
"""


class Store:
    def __init__(self, path: str = ":memory:"):
        self.path = path
        self._conn = sqlite3.connect(path, check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        self._conn.isolation_level = None  # explicit transactions
        self._lock = threading.RLock()
        with self._lock:
            self._conn.executescript(_SCHEMA)  # executescript manages its own commit

    @contextmanager
    def transaction(self):
        """Exclusive access plus a transaction; rolls back on error."""
        with self._lock:
            cur = self._conn.cursor()
            try:
                cur.execute("BEGIN")
                yield cur
                cur.execute("COMMIT")
            except BaseException:
                cur.execute("ROLLBACK")
                raise
            finally:
                cur.close()

    def query(self, sql: str, params=()) -> list[sqlite3.Row]:
        with self._lock:
            return self._conn.execute(sql, params).fetchall()

    def one(self, sql: str, params=()) -> sqlite3.Row | None:
        rows = self.query(sql, params)
        return rows[0] if rows else None

    def close(self) -> None:
        with self._lock:
            self._conn.close()
