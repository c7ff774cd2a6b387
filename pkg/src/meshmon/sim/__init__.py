"""Deterministic 6LoWPAN mesh simulator: the stand-in for deployed hardware."""

from .engine import (  # noqa: F401
    KeyStore,
    Simulation,
    UnknownSubject,
    build_routes,
    forged_mac_for,
    rssi_at,
    sign_payload,
)
from .model import (  # noqa: F401
    FaultSpec,
    MarkerToken,
    RadioEvent,
    RoutingTable,
    SimNode,
    distance,
)
from .scenario import (  # noqa: F401
    ConfigError,
    ScanSpec,
    ScenarioConfig,
    SnifferSpec,
    load_scenario,
    parse_scenario,
)
