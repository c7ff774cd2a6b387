"""Scenario orchestration: boot an ephemeral backend, wire sniffer units to
the simulator through the real ingestion endpoint, script operator actions
(key provisioning, marker scans), and produce a machine-checkable report.

Uploads go through the actual ASGI application (HTTP routing, auth, JSON) via
an in-process client, so a scenario run exercises the same surfaces a
deployed system would, without binding ports. Reports serialize to canonical
JSON with sorted keys; identical configuration and seed give byte-identical
reports.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

from fastapi.testclient import TestClient

from .backend import BackendService, Store, create_app
from .codec import MacAddress, mac_to_ipv6, read_pcap
from .sim import ScenarioConfig, ScanSpec, Simulation
from .sniffer import HttpUploader, SimListener, SnifferUnit

OPERATOR_USER = "operator"
REPLAY_RSSI_DBM = -50.0  # capture files carry no signal strength


class ScenarioFailed(Exception):
    """The scenario ran, but its expectations were not met."""


@dataclass
class ScenarioReport:
    scenario: str
    seed: int
    until_s: float
    epsilon_us: int
    edges_ip: list[dict] = field(default_factory=list)
    edges_mac: list[dict] = field(default_factory=list)
    nodes: list[dict] = field(default_factory=list)
    warnings: list[dict] = field(default_factory=list)
    spoof: dict[str, str] = field(default_factory=dict)
    ingest: dict[str, int] = field(default_factory=dict)
    expectations: list[dict] = field(default_factory=list)
    passed: bool = True

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "until_s": self.until_s,
            "epsilon_us": self.epsilon_us,
            "edges": {"ip": self.edges_ip, "mac": self.edges_mac},
            "nodes": self.nodes,
            "warnings": self.warnings,
            "spoof": self.spoof,
            "ingest": self.ingest,
            "expectations": self.expectations,
            "passed": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


class ScenarioRun:
    """A backend + sniffers + simulator wired together for one scenario."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.service = BackendService(Store(":memory:"), epsilon_us=cfg.epsilon_us)
        self.service.create_credential(OPERATOR_USER, "operator-secret", "operator")
        self.client = TestClient(create_app(self.service))
        self.operator_auth = (OPERATOR_USER, "operator-secret")
        self.units: list[SnifferUnit] = []
        self.listeners: list[SimListener] = []
        for spec in cfg.sniffers:
            secret = f"{spec.sniffer_id}-secret"
            self.service.create_credential(spec.sniffer_id, secret, "sniffer")
            unit = SnifferUnit(
                spec.sniffer_id,
                uploader=HttpUploader(self.client, spec.sniffer_id, secret),
                skew_ms=spec.skew_ms,
            )
            self.units.append(unit)
            self.listeners.append(SimListener(unit, spec.position, spec.listen_range))
        self.sim = (
            Simulation(
                cfg.nodes,
                cfg.link_range,
                seed=cfg.seed,
                pan_id=cfg.pan_id,
                signed=cfg.signed,
                loss=cfg.loss,
            )
            if cfg.nodes
            else None
        )

    def provision_keys(self) -> None:
        if self.sim is None:
            return
        for mac, key in sorted(self.sim.legitimate_public_keys().items()):
            response = self.client.post(
                "/api/keys",
                json={"mac": str(mac), "public_key_hex": key.hex(), "ts_us": 0},
                auth=self.operator_auth,
            )
            response.raise_for_status()

    def _hear(self, events) -> None:
        for listener in self.listeners:
            listener.hear(events)

    def _scan(self, subject: str, at: float) -> None:
        token, placement = self.sim.scan_marker(subject)
        response = self.client.post(
            "/api/nodes",
            json={
                "mac": str(token.embedded_mac),
                "placement": placement,
                "ts_us": round(at * 1_000_000),
                "name": subject,
            },
            auth=self.operator_auth,
        )
        response.raise_for_status()

    def execute(self) -> None:
        if self.sim is None:
            return
        for fault in self.cfg.faults:
            self.sim.inject_fault(fault)
        if self.cfg.signed:
            self.provision_keys()
        scans = list(self.cfg.scans)
        if self.cfg.auto_scan_at is not None:
            scans += [
                ScanSpec(at=self.cfg.auto_scan_at, subject=n.name) for n in self.cfg.nodes
            ]
        scans = sorted(
            (s for s in scans if s.at <= self.cfg.until), key=lambda s: (s.at, s.subject)
        )
        for boundary in sorted({s.at for s in scans}):
            self._hear(self.sim.step(boundary))
            for scan in scans:
                if scan.at == boundary:
                    self._scan(scan.subject, boundary)
        self._hear(self.sim.step(self.cfg.until))
        for unit in self.units:
            unit.flush()

    def build_report(self) -> ScenarioReport:
        cfg = self.cfg
        window_end = round(cfg.until * 1_000_000) + 1_000_000  # covers clock skew
        report = ScenarioReport(
            scenario=cfg.name,
            seed=cfg.seed,
            until_s=cfg.until,
            epsilon_us=cfg.epsilon_us,
        )
        report.edges_ip = [
            {"src": e.src, "dst": e.dst, "count": e.count}
            for e in self.service.edges("ip", 0, window_end)
        ]
        report.edges_mac = [
            {"src": e.src, "dst": e.dst, "count": e.count}
            for e in self.service.edges("mac", 0, window_end)
        ]
        report.nodes = [n.to_dict() for n in self.service.list_nodes()]
        report.warnings = [w.to_dict() for w in self.service.warnings()]
        report.spoof = {
            n.mac: self.service.spoof_report(n.mac)["case"] for n in self.service.list_nodes()
        }
        report.ingest = {
            "captured": sum(u.stats.captured for u in self.units),
            "corrupt": sum(u.stats.corrupt for u in self.units),
            "uploaded": sum(u.stats.uploaded for u in self.units),
            "admitted": sum(u.stats.admitted for u in self.units),
            "duplicate": sum(u.stats.duplicate for u in self.units),
            "stored": self.service.stored_transmission_count(),
            "witnesses": self.service.witness_count(),
        }
        report.expectations = self._check_expectations(report)
        report.passed = all(e["ok"] for e in report.expectations)
        return report

    def _resolve_identity(self, name: str) -> tuple[str, str]:
        """Node name or dash-separated MAC -> (mac text, link-local ip text)."""
        if self.sim is not None and name in self.sim.by_name:
            mac = self.sim.by_name[name].mac
        else:
            mac = MacAddress.parse(name)
        return str(mac), str(mac_to_ipv6(mac))

    def _check_expectations(self, report: ScenarioReport) -> list[dict]:
        results = []
        for key, expected in sorted(self.cfg.expectations.items()):
            actual: object
            if key in ("stored", "witnesses", "corrupt", "captured"):
                actual = report.ingest[key]
                ok = actual == int(expected)
            elif key.startswith(("ip_count.", "mac_count.")):
                view, pair = key.split(".", 1)
                src_name, dst_name = (p.strip() for p in pair.split("->"))
                src_mac, src_ip = self._resolve_identity(src_name)
                dst_mac, dst_ip = self._resolve_identity(dst_name)
                if view == "ip_count":
                    edges = {(e["src"], e["dst"]): e["count"] for e in report.edges_ip}
                    actual = edges.get((src_ip, dst_ip), 0)
                else:
                    edges = {(e["src"], e["dst"]): e["count"] for e in report.edges_mac}
                    actual = edges.get((src_mac, dst_mac), 0)
                ok = actual == int(expected)
            elif key.startswith("spoof."):
                mac_text, _ = self._resolve_identity(key.split(".", 1)[1])
                actual = report.spoof.get(mac_text, "NO_FINDING")
                ok = actual == expected.strip()
            elif key.startswith("warning.") and key.endswith(".min"):
                kind = key[len("warning.") : -len(".min")]
                actual = sum(1 for w in report.warnings if w["kind"] == kind)
                ok = actual >= int(expected)
            elif key.startswith("warning.") and key.endswith(".max"):
                kind = key[len("warning.") : -len(".max")]
                actual = sum(1 for w in report.warnings if w["kind"] == kind)
                ok = actual <= int(expected)
            else:
                actual = None
                ok = False
            results.append({"key": key, "expected": expected, "actual": actual, "ok": ok})
        return results


def run_scenario(cfg: ScenarioConfig) -> ScenarioReport:
    run = ScenarioRun(cfg)
    run.execute()
    return run.build_report()


def replay_capture(
    pcap_bytes: bytes,
    unit: SnifferUnit,
    speed: float = 0.0,
) -> dict:
    """Feed a capture file through one sniffer unit. `speed` > 0 paces the
    replay at that multiple of recorded time; 0 replays as fast as possible.
    Capture timestamps become the capture clock, so a second replay of the
    same file lands inside epsilon and deduplicates fully."""
    capture = read_pcap(pcap_bytes)
    previous_ts = None
    for ts_us, frame_bytes in capture.records:
        if speed > 0 and previous_ts is not None:
            time.sleep((ts_us - previous_ts) / 1_000_000 / speed)
        previous_ts = ts_us
        unit.observe(ts_us / 1_000_000, frame_bytes, REPLAY_RSSI_DBM)
    unit.flush()
    return {
        "captured": unit.stats.captured,
        "corrupt": unit.stats.corrupt,
        "uploaded": unit.stats.uploaded,
        "admitted": unit.stats.admitted,
        "duplicate": unit.stats.duplicate,
    }
