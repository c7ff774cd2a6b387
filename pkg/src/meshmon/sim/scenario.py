"""Human-editable scenario configuration files.

INI syntax (configparser). One [scenario] section with scalar settings, one
[node:NAME] section per node, [sniffer:ID] sections for capture units,
numbered [fault:N] and [scan:N] sections for scripted events, and an optional
[expect] section the scenario runner checks the final state against.

    [scenario]
    name = testbed6
    seed = 42
    link_range = 30
    until = 120
    epsilon_ms = 5
    signed = false
    loss = 0

    [node:server1]
    mac = 00:12:4b:00:00:00:00:01
    position = 0, 0
    role = server
    firmware = echo-server

    [node:tag65]
    mac = 00:12:4b:00:00:00:00:65
    position = 3, 0
    role = client
    firmware = echo-client
    tx_interval = 10

    [sniffer:s1]
    position = 0, 1
    skew_ms = 0
    range = inf

    [fault:1]
    at = 60
    kind = node_death
    subject = tag65

    [scan:1]
    at = 5
    subject = tag65

Expectation keys (all optional): ``stored``, ``witnesses``, ``corrupt``,
``ip_count.SRC->DST`` and ``mac_count.SRC->DST`` (node names),
``spoof.NAME = CASE``, ``warning.KIND.min = N``.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

from ..codec import MacAddress
from .model import (
    FIRMWARE_ECHO_CLIENT,
    FIRMWARE_ECHO_SERVER,
    ROLE_CLIENT,
    ROLE_MALICIOUS,
    ROLE_SERVER,
    FaultSpec,
    Position,
    SimNode,
)


class ConfigError(ValueError):
    """Scenario file is syntactically or semantically invalid."""


@dataclass(frozen=True)
class SnifferSpec:
    sniffer_id: str
    position: Position
    skew_ms: float = 0.0
    listen_range: float = math.inf


@dataclass(frozen=True)
class ScanSpec:
    at: float
    subject: str


@dataclass
class ScenarioConfig:
    name: str
    seed: int = 0
    link_range: float = 30.0
    until: float = 120.0
    epsilon_ms: float = 5.0
    pan_id: int = 0xABCD
    signed: bool = False
    loss: float = 0.0
    auto_scan_at: float | None = None
    nodes: list[SimNode] = field(default_factory=list)
    sniffers: list[SnifferSpec] = field(default_factory=list)
    faults: list[FaultSpec] = field(default_factory=list)
    scans: list[ScanSpec] = field(default_factory=list)
    expectations: dict[str, str] = field(default_factory=dict)

    @property
    def epsilon_us(self) -> int:
        return round(self.epsilon_ms * 1000)


_ROLES = {ROLE_CLIENT, ROLE_SERVER, ROLE_MALICIOUS}
_DEFAULT_FIRMWARE = {
    ROLE_CLIENT: FIRMWARE_ECHO_CLIENT,
    ROLE_SERVER: FIRMWARE_ECHO_SERVER,
    ROLE_MALICIOUS: FIRMWARE_ECHO_CLIENT,
}


def _position(raw: str, where: str) -> Position:
    try:
        x, y = (float(p.strip()) for p in raw.split(","))
        return (x, y)
    except ValueError as exc:
        raise ConfigError(f"{where}: bad position {raw!r}") from exc


def _bool(raw: str) -> bool:
    return raw.strip().lower() in {"1", "true", "yes", "on"}


def parse_scenario(text: str) -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    if "scenario" not in parser:
        raise ConfigError("missing [scenario] section")
    sc = parser["scenario"]
    cfg = ScenarioConfig(
        name=sc.get("name", "unnamed"),
        seed=sc.getint("seed", 0),
        link_range=sc.getfloat("link_range", 30.0),
        until=sc.getfloat("until", 120.0),
        epsilon_ms=sc.getfloat("epsilon_ms", 5.0),
        pan_id=int(sc.get("pan_id", "0xabcd"), 0),
        signed=_bool(sc.get("signed", "false")),
        loss=sc.getfloat("loss", 0.0),
        auto_scan_at=sc.getfloat("auto_scan_at", fallback=None),
    )

    for section in parser.sections():
        if section.startswith("node:"):
            name = section.split(":", 1)[1]
            body = parser[section]
            role = body.get("role", ROLE_CLIENT).strip()
            if role not in _ROLES:
                raise ConfigError(f"{section}: unknown role {role!r}")
            if "mac" not in body:
                raise ConfigError(f"{section}: mac is required")
            try:
                mac = MacAddress.parse(body["mac"])
            except ValueError as exc:
                raise ConfigError(f"{section}: {exc}") from exc
            cfg.nodes.append(
                SimNode(
                    name=name,
                    mac=mac,
                    position=_position(body.get("position", "0,0"), section),
                    role=role,
                    firmware=body.get("firmware", _DEFAULT_FIRMWARE[role]).strip(),
                    tx_interval=body.getfloat("tx_interval", 10.0),
                )
            )
        elif section.startswith("sniffer:"):
            body = parser[section]
            raw_range = body.get("range", "inf").strip()
            cfg.sniffers.append(
                SnifferSpec(
                    sniffer_id=section.split(":", 1)[1],
                    position=_position(body.get("position", "0,0"), section),
                    skew_ms=body.getfloat("skew_ms", 0.0),
                    listen_range=math.inf if raw_range == "inf" else float(raw_range),
                )
            )
        elif section.startswith("fault:"):
            body = parser[section]
            try:
                forged = body.get("forged_mac", fallback=None)
                cfg.faults.append(
                    FaultSpec(
                        at=body.getfloat("at", 0.0),
                        kind=body.get("kind", "").strip(),
                        subject=body.get("subject", "").strip(),
                        target=body.get("target", fallback=None),
                        forged_mac=MacAddress.parse(forged) if forged else None,
                    )
                )
            except ValueError as exc:
                raise ConfigError(f"{section}: {exc}") from exc
        elif section.startswith("scan:"):
            body = parser[section]
            cfg.scans.append(
                ScanSpec(at=body.getfloat("at", 0.0), subject=body.get("subject", "").strip())
            )
        elif section == "expect":
            cfg.expectations = dict(parser[section])
        elif section != "scenario":
            raise ConfigError(f"unknown section [{section}]")

    names = [n.name for n in cfg.nodes]
    if len(set(names)) != len(names):
        raise ConfigError("duplicate node names")
    for fault in cfg.faults:
        if fault.subject not in names:
            raise ConfigError(f"fault subject {fault.subject!r} is not a node")
        if fault.target is not None and fault.target not in names:
            raise ConfigError(f"fault target {fault.target!r} is not a node")
    for scan in cfg.scans:
        if scan.subject not in names:
            raise ConfigError(f"scan subject {scan.subject!r} is not a node")
    cfg.faults.sort(key=lambda f: f.at)
    cfg.scans.sort(key=lambda s: (s.at, s.subject))
    return cfg


def load_scenario(path: str | Path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    return parse_scenario(text)
