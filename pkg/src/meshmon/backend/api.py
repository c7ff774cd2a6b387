"""RESTful HTTP surface over the backend service.

Every request carries HTTP Basic credentials; each (method, route) pair has
an explicit set of allowed roles in ACCESS_MATRIX, so the allow/deny decision
is total. Denied calls never reach the service and mutate nothing.

Wire conventions (see docs/api.md): timestamps are integer microseconds,
MACs canonical colon-grouped lowercase hex, digests 32 lowercase hex chars,
payloads base64.
"""

from __future__ import annotations

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.security import HTTPBasic, HTTPBasicCredentials
from pydantic import BaseModel, Field

from .service import (
    BackendService,
    BadWindow,
    LockedByWarning,
    Unauthorized,
    UnknownNode,
    UnknownWarning,
)

READERS = {"operator", "trainee"}
EVERYONE = {"operator", "trainee", "sniffer"}

ACCESS_MATRIX: dict[tuple[str, str], set[str]] = {
    ("POST", "/api/packets"): {"operator", "sniffer"},
    ("POST", "/api/nodes"): {"operator"},
    ("PATCH", "/api/nodes/{mac}"): {"operator"},
    ("GET", "/api/nodes"): READERS,
    ("GET", "/api/nodes/{mac}"): READERS,
    ("GET", "/api/edges"): READERS,
    ("GET", "/api/warnings"): READERS,
    ("POST", "/api/warnings/{warning_id}/resolve"): {"operator"},
    ("GET", "/api/timeline"): READERS,
    ("GET", "/api/rssi"): READERS,
    ("POST", "/api/keys"): {"operator"},
    ("GET", "/api/spoof/{mac}"): READERS,
    ("POST", "/api/credentials"): {"operator"},
    ("POST", "/api/credentials/{username}/revoke"): {"operator"},
    ("GET", "/api/whoami"): EVERYONE,
    ("POST", "/api/handheld"): {"operator"},
    ("GET", "/api/handheld"): EVERYONE,
}

_basic = HTTPBasic()


class PacketRecord(BaseModel):
    sniffer_id: str
    ts_us: int
    rssi_dbm: float
    digest: str = Field(pattern=r"^[0-9a-f]{32}$")
    src_mac: str
    dst_mac: str
    src_ip: str
    dst_ip: str
    seq_payload: int | None = None
    payload_b64: str = ""


class PacketBatch(BaseModel):
    records: list[PacketRecord]


class MarkerScan(BaseModel):
    mac: str
    placement: str
    ts_us: int = 0
    name: str | None = None
    location: str | None = None


class NodePatch(BaseModel):
    name: str | None = None
    location: str | None = None


class KeyRegistration(BaseModel):
    mac: str
    public_key_hex: str = Field(pattern=r"^[0-9a-f]{64}$")
    ts_us: int = 0


class NewCredential(BaseModel):
    username: str
    secret: str
    role: str


class HandheldPosition(BaseModel):
    x: float
    y: float


def create_app(service: BackendService, console_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="meshmon backend", docs_url=None, redoc_url=None)
    # the console may be served from another origin during development
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["Authorization", "Content-Type"],
    )

    def authorized(
        request: Request, credentials: HTTPBasicCredentials = Depends(_basic)
    ) -> str:
        try:
            role = service.authenticate(credentials.username, credentials.password)
        except Unauthorized as exc:
            raise HTTPException(
                status_code=401, detail=str(exc), headers={"WWW-Authenticate": "Basic"}
            ) from exc
        route = request.scope.get("route")
        allowed = ACCESS_MATRIX.get((request.method, getattr(route, "path", "")), set())
        if role not in allowed:
            raise HTTPException(
                status_code=403, detail=f"role-denied: {role} may not {request.method} this endpoint"
            )
        request.state.username = credentials.username
        return role

    @app.exception_handler(UnknownNode)
    async def _unknown_node(request, exc):
        raise HTTPException(status_code=404, detail=f"unknown node {exc}")

    @app.exception_handler(UnknownWarning)
    async def _unknown_warning(request, exc):
        raise HTTPException(status_code=404, detail=f"unknown warning {exc}")

    @app.exception_handler(LockedByWarning)
    async def _locked(request, exc):
        raise HTTPException(status_code=409, detail=str(exc))

    @app.exception_handler(BadWindow)
    async def _bad_window(request, exc):
        raise HTTPException(status_code=400, detail=str(exc))

    @app.exception_handler(ValueError)
    async def _bad_value(request, exc):
        raise HTTPException(status_code=400, detail=str(exc))

    @app.post("/api/packets")
    def ingest(batch: PacketBatch, role: str = Depends(authorized)):
        return service.ingest_batch([r.model_dump() for r in batch.records])

    @app.post("/api/nodes")
    def scan_marker(
        scan: MarkerScan, request: Request, role: str = Depends(authorized)
    ):
        return service.register_marker_scan(
            mac=scan.mac,
            placement=scan.placement,
            scanner=request.state.username,
            ts_us=scan.ts_us,
            name=scan.name,
            location=scan.location,
        )

    @app.patch("/api/nodes/{mac}")
    def patch_node(mac: str, patch: NodePatch, role: str = Depends(authorized)):
        return service.update_node(mac, name=patch.name, location=patch.location).to_dict()

    @app.get("/api/nodes")
    def nodes(role: str = Depends(authorized)):
        return {"nodes": [n.to_dict() for n in service.list_nodes()]}

    @app.get("/api/nodes/{mac}")
    def node_info(
        mac: str,
        t0: int | None = None,
        t1: int | None = None,
        role: str = Depends(authorized),
    ):
        return service.node_info(mac, t0=t0, t1=t1)

    @app.get("/api/edges")
    def edges(view: str, t0: int, t1: int, role: str = Depends(authorized)):
        return {"edges": [e.to_dict() for e in service.edges(view, t0, t1)]}

    @app.get("/api/warnings")
    def warnings(
        t0: int | None = None, t1: int | None = None, role: str = Depends(authorized)
    ):
        return {"warnings": [w.to_dict() for w in service.warnings(t0, t1)]}

    @app.post("/api/warnings/{warning_id}/resolve")
    def resolve_warning(warning_id: int, role: str = Depends(authorized)):
        service.resolve_warning(warning_id)
        return {"resolved": warning_id}

    @app.get("/api/timeline")
    def timeline(step: int, view: str = "ip", role: str = Depends(authorized)):
        return {"step": step, "view": view, "snapshots": service.timeline(step, view)}

    @app.get("/api/rssi")
    def rssi(
        mac: str,
        sniffer: str,
        include_invalid: bool = False,
        role: str = Depends(authorized),
    ):
        return {
            "mac": mac,
            "sniffer": sniffer,
            "samples": service.rssi_samples(mac, sniffer, include_invalid=include_invalid),
        }

    @app.post("/api/keys")
    def register_key(reg: KeyRegistration, role: str = Depends(authorized)):
        service.register_key(reg.mac, reg.public_key_hex, ts_us=reg.ts_us)
        return {"registered": reg.mac}

    @app.get("/api/spoof/{mac}")
    def spoof_report(mac: str, role: str = Depends(authorized)):
        return service.spoof_report(mac)

    @app.post("/api/credentials")
    def create_credential(cred: NewCredential, role: str = Depends(authorized)):
        service.create_credential(cred.username, cred.secret, cred.role)
        return {"created": cred.username}

    @app.post("/api/credentials/{username}/revoke")
    def revoke_credential(username: str, role: str = Depends(authorized)):
        service.revoke_credential(username)
        return {"revoked": username}

    @app.get("/api/whoami")
    def whoami(request: Request, role: str = Depends(authorized)):
        return {"username": request.state.username, "role": role}

    @app.post("/api/handheld")
    def set_handheld(pos: HandheldPosition, role: str = Depends(authorized)):
        service.set_handheld(pos.x, pos.y)
        return {"x": pos.x, "y": pos.y}

    @app.get("/api/handheld")
    def get_handheld(role: str = Depends(authorized)):
        return service.get_handheld() or {}

    if console_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=console_dir, html=True), name="console")

    return app
