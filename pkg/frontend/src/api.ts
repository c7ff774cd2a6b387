/** Minimal typed client for the backend HTTP API (Basic auth on every call). */

import type { EdgeDto, NodeDto, TimelineSnapshot, WarningDto } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`${status}: ${detail}`);
  }
}

export class BackendClient {
  private auth: string;

  constructor(
    private baseUrl: string,
    username: string,
    secret: string,
  ) {
    this.auth = "Basic " + btoa(`${username}:${secret}`);
  }

  private async request(method: string, path: string, body?: unknown): Promise<any> {
    const response = await fetch(this.baseUrl + path, {
      method,
      headers: {
        Authorization: this.auth,
        ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
      },
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        detail = (await response.json()).detail ?? detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(response.status, detail);
    }
    return response.json();
  }

  whoami(): Promise<{ username: string; role: string }> {
    return this.request("GET", "/api/whoami");
  }

  nodes(): Promise<{ nodes: NodeDto[] }> {
    return this.request("GET", "/api/nodes");
  }

  nodeInfo(mac: string): Promise<any> {
    return this.request("GET", `/api/nodes/${mac}`);
  }

  edges(view: "ip" | "mac", t0: number, t1: number): Promise<{ edges: EdgeDto[] }> {
    return this.request("GET", `/api/edges?view=${view}&t0=${t0}&t1=${t1}`);
  }

  warnings(): Promise<{ warnings: WarningDto[] }> {
    return this.request("GET", "/api/warnings");
  }

  resolveWarning(id: number): Promise<any> {
    return this.request("POST", `/api/warnings/${id}/resolve`);
  }

  timeline(stepUs: number, view: "ip" | "mac"): Promise<{ snapshots: TimelineSnapshot[] }> {
    return this.request("GET", `/api/timeline?step=${stepUs}&view=${view}`);
  }

  scanMarker(mac: string, placement: string, tsUs: number, name?: string): Promise<any> {
    return this.request("POST", "/api/nodes", {
      mac,
      placement,
      ts_us: tsUs,
      name,
      location: placement,
    });
  }

  patchNode(mac: string, fields: { name?: string; location?: string }): Promise<any> {
    return this.request("PATCH", `/api/nodes/${mac}`, fields);
  }

  spoof(mac: string): Promise<any> {
    return this.request("GET", `/api/spoof/${mac}`);
  }

  rssi(mac: string, sniffer: string): Promise<{ samples: { ts_us: number; rssi: number }[] }> {
    return this.request("GET", `/api/rssi?mac=${mac}&sniffer=${sniffer}`);
  }

  setHandheld(x: number, y: number): Promise<any> {
    return this.request("POST", "/api/handheld", { x, y });
  }
}
