"""Command-line orchestration: serve the backend, run scripted scenarios,
feed sniffers from the simulator or capture files, and emit reports."""

from __future__ import annotations

import json
import sys
import time
from importlib import resources
from pathlib import Path

import click

from .backend import BackendService, Store, create_app
from .codec import PcapCapture, write_pcap
from .runner import ScenarioRun, replay_capture, run_scenario
from .sim import ConfigError, ScenarioConfig, Simulation, load_scenario, parse_scenario
from .sniffer import HttpUploader, SimListener, SnifferUnit, UploadError


def _load_config(name_or_path: str) -> ScenarioConfig:
    path = Path(name_or_path)
    if path.exists():
        return load_scenario(path)
    bundled = resources.files("meshmon") / "scenarios" / f"{name_or_path}.ini"
    if bundled.is_file():
        return parse_scenario(bundled.read_text())
    raise ConfigError(f"no scenario file {name_or_path!r} and no bundled scenario of that name")


def _parse_credentials(text: str) -> tuple[str, str]:
    if ":" not in text:
        raise click.BadParameter("expected USER:SECRET")
    user, secret = text.split(":", 1)
    return user, secret


def _parse_position(text: str) -> tuple[float, float]:
    try:
        x, y = (float(p) for p in text.split(","))
        return x, y
    except ValueError:
        raise click.BadParameter("expected X,Y")


def _local_backend(db: str, epsilon_ms: float):
    """In-process backend + client with ephemeral credentials, for commands
    that work against a database file instead of a running server."""
    from fastapi.testclient import TestClient

    service = BackendService(Store(db), epsilon_us=round(epsilon_ms * 1000))
    try:
        service.create_credential("local-operator", "local-secret", "operator")
        service.create_credential("local-sniffer", "local-secret", "sniffer")
    except Exception:
        pass
    return service, TestClient(create_app(service))


@click.group()
@click.version_option(package_name="meshmon", prog_name="meshmon")
def main():
    """Passive monitoring toolkit for 6LoWPAN sensor meshes."""


@main.command()
@click.option("--db", default=":memory:", show_default=True, help="sqlite database path")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8470, show_default=True)
@click.option("--epsilon-ms", default=5.0, show_default=True,
              help="duplicate window for equal-digest captures")
@click.option("--credential", "credentials", multiple=True, metavar="USER:SECRET:ROLE",
              help="bootstrap credential; repeatable")
@click.option("--console-dir", type=click.Path(exists=True, file_okay=False),
              default=None, help="also serve the web console from this directory")
def serve(db, host, port, epsilon_ms, credentials, console_dir):
    """Run the backend HTTP API."""
    import uvicorn

    service = BackendService(Store(db), epsilon_us=round(epsilon_ms * 1000))
    for cred in credentials:
        try:
            user, secret, role = cred.split(":", 2)
        except ValueError:
            raise click.BadParameter(f"expected USER:SECRET:ROLE, got {cred!r}")
        service.create_credential(user, secret, role)
    uvicorn.run(create_app(service, console_dir=console_dir), host=host, port=port,
                log_level="info")


@main.command()
@click.option("--scenario", "-s", required=True, help="scenario file or bundled name")
@click.option("--until", type=float, default=None, help="override simulated end time")
@click.option("--out", "-o", type=click.Path(dir_okay=False), required=True,
              help="PCAP output path")
@click.option("--site-out", type=click.Path(dir_okay=False), default=None,
              help="also write the physical site layout as JSON (for the console)")
def sim(scenario, until, out, site_out):
    """Run a scenario's simulation and write every on-air frame to PCAP."""
    try:
        cfg = _load_config(scenario)
    except ConfigError as exc:
        raise click.ClickException(str(exc))
    simulation = Simulation(
        cfg.nodes, cfg.link_range, seed=cfg.seed, pan_id=cfg.pan_id,
        signed=cfg.signed, loss=cfg.loss,
    )
    for fault in cfg.faults:
        simulation.inject_fault(fault)
    events = simulation.step(until if until is not None else cfg.until)
    capture = PcapCapture(records=[(round(e.time * 1_000_000), e.data) for e in events])
    Path(out).write_bytes(write_pcap(capture))
    click.echo(f"wrote {len(events)} frames to {out}")
    if site_out:
        site = {
            "scenario": cfg.name,
            "markers": [
                {
                    "name": n.name,
                    "embedded_mac": str(n.marker.embedded_mac),
                    "x": n.position[0],
                    "y": n.position[1],
                    "placement": f"{n.position[0]:g},{n.position[1]:g}",
                }
                for n in simulation.nodes
            ],
        }
        Path(site_out).write_text(json.dumps(site, indent=2, sort_keys=True) + "\n")
        click.echo(f"wrote site layout to {site_out}")


@main.command()
@click.option("--source", type=click.Choice(["sim", "pcap"]), required=True)
@click.option("--scenario", "-s", default=None, help="scenario (sim source)")
@click.option("--pcap", "pcap_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="capture file (pcap source)")
@click.option("--sniffer-id", default="sniffer1", show_default=True)
@click.option("--backend-url", required=True)
@click.option("--credentials", required=True, metavar="USER:SECRET",
              envvar="MESHMON_CREDENTIALS", show_envvar=True)
@click.option("--skew-ms", default=0.0, show_default=True,
              help="local clock skew applied to capture timestamps")
@click.option("--position", default="0,0", show_default=True, metavar="X,Y")
@click.option("--range", "listen_range", default=None, type=float,
              help="listen range in meters (default: unlimited)")
@click.option("--time-scale", default=0.0, show_default=True,
              help="sim seconds per wall second; 0 runs as fast as possible")
@click.option("--until", type=float, default=None, help="override sim end time")
@click.option("--handheld-follow", is_flag=True,
              help="track the backend's handheld position while listening")
def sniff(source, scenario, pcap_path, sniffer_id, backend_url, credentials,
          skew_ms, position, listen_range, time_scale, until, handheld_follow):
    """Capture frames (live simulation or PCAP replay) and upload hop records."""
    import math

    import httpx

    user, secret = _parse_credentials(credentials)
    client = httpx.Client(base_url=backend_url, timeout=10.0)
    unit = SnifferUnit(sniffer_id, uploader=HttpUploader(client, user, secret),
                       skew_ms=skew_ms)

    if source == "pcap":
        if not pcap_path:
            raise click.UsageError("--pcap is required with --source pcap")
        summary = replay_capture(Path(pcap_path).read_bytes(), unit,
                                 speed=time_scale)
        click.echo(json.dumps(summary, sort_keys=True))
        return

    if not scenario:
        raise click.UsageError("--scenario is required with --source sim")
    try:
        cfg = _load_config(scenario)
    except ConfigError as exc:
        raise click.ClickException(str(exc))
    simulation = Simulation(cfg.nodes, cfg.link_range, seed=cfg.seed,
                            pan_id=cfg.pan_id, signed=cfg.signed, loss=cfg.loss)
    for fault in cfg.faults:
        simulation.inject_fault(fault)
    listener = SimListener(
        unit, _parse_position(position),
        listen_range=math.inf if listen_range is None else listen_range,
    )
    end = until if until is not None else cfg.until
    step = 1.0
    t = 0.0
    while t < end:
        t_next = min(t + step, end)
        if handheld_follow:
            try:
                pos = client.get("/api/handheld", auth=(user, secret)).json()
                if pos:
                    listener.position = (pos["x"], pos["y"])
            except Exception:
                pass
        listener.hear(simulation.step(t_next))
        if time_scale > 0:
            time.sleep((t_next - t) / time_scale)
        t = t_next
    try:
        unit.flush()
    except UploadError as exc:
        raise click.ClickException(f"final flush failed: {exc}")
    click.echo(json.dumps({
        "captured": unit.stats.captured,
        "corrupt": unit.stats.corrupt,
        "admitted": unit.stats.admitted,
        "duplicate": unit.stats.duplicate,
    }, sort_keys=True))


@main.command("run-scenario")
@click.option("--scenario", "-s", required=True, help="scenario file or bundled name")
@click.option("--out", "-o", type=click.Path(dir_okay=False), default=None,
              help="write the report here instead of stdout")
@click.option("--check/--no-check", default=True, show_default=True,
              help="exit nonzero when expectations are unmet")
def run_scenario_cmd(scenario, out, check):
    """Boot an ephemeral backend, run the scenario end to end, emit a report."""
    try:
        cfg = _load_config(scenario)
    except ConfigError as exc:
        raise click.ClickException(str(exc))
    report = run_scenario(cfg)
    text = report.to_json()
    if out:
        Path(out).write_text(text)
        click.echo(f"report written to {out} (passed={report.passed})")
    else:
        click.echo(text, nl=False)
    if check and not report.passed:
        unmet = [e["key"] for e in report.expectations if not e["ok"]]
        raise click.ClickException(f"scenario expectations unmet: {', '.join(unmet)}")


@main.command()
@click.option("--pcap", "pcap_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--backend-url", default=None, help="running backend to upload to")
@click.option("--credentials", default=None, metavar="USER:SECRET",
              envvar="MESHMON_CREDENTIALS", show_envvar=True)
@click.option("--db", default=None, help="ingest into a local database instead")
@click.option("--epsilon-ms", default=5.0, show_default=True)
@click.option("--sniffer-id", default="replay", show_default=True)
@click.option("--speed", default=0.0, show_default=True,
              help="replay pacing multiple; 0 is as fast as possible")
def replay(pcap_path, backend_url, credentials, db, epsilon_ms, sniffer_id, speed):
    """Feed a PCAP file through one sniffer instance into a backend."""
    if backend_url:
        import httpx

        if not credentials:
            raise click.UsageError("--credentials is required with --backend-url")
        user, secret = _parse_credentials(credentials)
        client = httpx.Client(base_url=backend_url, timeout=10.0)
        uploader = HttpUploader(client, user, secret)
    elif db:
        _, client = _local_backend(db, epsilon_ms)
        uploader = HttpUploader(client, "local-sniffer", "local-secret")
    else:
        raise click.UsageError("either --backend-url or --db is required")
    unit = SnifferUnit(sniffer_id, uploader=uploader)
    try:
        summary = replay_capture(Path(pcap_path).read_bytes(), unit, speed=speed)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    click.echo(json.dumps(summary, sort_keys=True))


@main.command()
@click.option("--backend-url", default=None)
@click.option("--credentials", default=None, metavar="USER:SECRET",
              envvar="MESHMON_CREDENTIALS", show_envvar=True)
@click.option("--db", default=None, help="read a local database instead")
@click.option("--t0", default=0, show_default=True)
@click.option("--t1", default=None, type=int,
              help="window end in microseconds (default: everything)")
@click.option("--out", "-o", type=click.Path(dir_okay=False), default=None)
def report(backend_url, credentials, db, t0, t1, out):
    """Dump nodes, edges (both views), warnings and spoof findings as JSON."""
    if backend_url:
        import httpx

        if not credentials:
            raise click.UsageError("--credentials is required with --backend-url")
        auth = _parse_credentials(credentials)
        client = httpx.Client(base_url=backend_url, timeout=10.0)
    elif db:
        _, client = _local_backend(db, 5.0)
        auth = ("local-operator", "local-secret")
    else:
        raise click.UsageError("either --backend-url or --db is required")
    t1 = t1 if t1 is not None else 2**62
    def fetch(path, **params):
        response = client.get(path, params=params, auth=auth)
        response.raise_for_status()
        return response.json()

    nodes = fetch("/api/nodes")["nodes"]
    body = {
        "nodes": nodes,
        "edges": {
            "ip": fetch("/api/edges", view="ip", t0=t0, t1=t1)["edges"],
            "mac": fetch("/api/edges", view="mac", t0=t0, t1=t1)["edges"],
        },
        "warnings": fetch("/api/warnings")["warnings"],
        "spoof": {n["mac"]: fetch(f"/api/spoof/{n['mac']}") for n in nodes},
    }
    text = json.dumps(body, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
        click.echo(f"report written to {out}")
    else:
        click.echo(text, nl=False)


if __name__ == "__main__":
    main()
