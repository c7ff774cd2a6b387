/** Browser application: login, map viewport, polling loop, node cards,
 * scrubbing, and handheld movement. All drawing goes through the pure scene
 * builder; this file only owns DOM state and the canvas. */

import { BackendClient, ApiError } from "./api.js";
import { buildScene, type SceneInput } from "./scene.js";
import { rssiTrend, type Trend } from "./trend.js";
import type {
  BreadcrumbMemory,
  EdgeDto,
  NodeDto,
  SceneGraph,
  SiteMarker,
  Viewport,
  WarningDto,
} from "./types.js";

const POLL_MS = 1000;
const HANDHELD_STEP_M = 1.0;
const HANDHELD_SNIFFER_ID = "handheld";

interface AppState {
  client: BackendClient | null;
  role: string;
  site: SiteMarker[];
  nodes: NodeDto[];
  edges: EdgeDto[];
  warnings: WarningDto[];
  view: "ip" | "mac";
  live: boolean;
  scrubUs: number;
  horizonUs: number;
  windowUs: number;
  viewport: Viewport;
  memory: BreadcrumbMemory;
  selected: string | null;
  handheld: { x: number; y: number };
  trend: Trend | null;
  requestSeq: number; // stale responses are discarded by this tag
}

const state: AppState = {
  client: null,
  role: "",
  site: [],
  nodes: [],
  edges: [],
  warnings: [],
  view: "ip",
  live: true,
  scrubUs: 0,
  horizonUs: 120_000_000,
  windowUs: 30_000_000,
  viewport: { cx: 5, cy: 0, scale: 24, width: 900, height: 600 },
  memory: {},
  selected: null,
  handheld: { x: 0, y: 0 },
  trend: null,
  requestSeq: 0,
};

const $ = (id: string) => document.getElementById(id)!;
const canvas = () => $("map") as HTMLCanvasElement;

function window_(): [number, number] {
  const end = state.live ? state.horizonUs : state.scrubUs;
  return [Math.max(0, end - state.windowUs), end];
}

async function refresh(): Promise<void> {
  if (!state.client) return;
  const seq = ++state.requestSeq;
  const [t0, t1] = window_();
  try {
    const [nodes, edges, warnings] = await Promise.all([
      state.client.nodes(),
      state.client.edges(state.view, t0, t1),
      state.client.warnings(),
    ]);
    if (seq !== state.requestSeq) return; // a newer request superseded this one
    state.nodes = nodes.nodes;
    state.edges = edges.edges;
    state.warnings = warnings.warnings;
    render();
  } catch (err) {
    reportError(err);
  }
}

async function refreshHorizon(): Promise<void> {
  if (!state.client) return;
  try {
    const timeline = await state.client.timeline(10_000_000, state.view);
    const snapshots = timeline.snapshots;
    if (snapshots.length > 0) {
      state.horizonUs = snapshots[snapshots.length - 1].t1;
      const slider = $("scrub") as HTMLInputElement;
      slider.max = String(state.horizonUs);
      if (state.live) slider.value = slider.max;
    }
  } catch (err) {
    reportError(err);
  }
}

function sceneInput(): SceneInput {
  return {
    site: state.site,
    nodes: state.nodes,
    edges: state.edges,
    warnings: state.warnings,
    view: state.view,
    role: state.role,
  };
}

function render(): void {
  const { scene, memory } = buildScene(sceneInput(), state.viewport, state.memory);
  state.memory = memory;
  drawScene(scene);
  renderBanners(scene);
  renderCard();
  renderStatus();
}

function drawScene(scene: SceneGraph): void {
  const ctx = canvas().getContext("2d")!;
  const { width, height } = state.viewport;
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#10141a";
  ctx.fillRect(0, 0, width, height);

  for (const arrow of scene.arrows) {
    ctx.strokeStyle = "#4fa3ff";
    ctx.fillStyle = "#4fa3ff";
    ctx.lineWidth = arrow.width;
    ctx.setLineDash(arrow.srcAnchored || arrow.dstAnchored ? [6, 4] : []);
    ctx.beginPath();
    ctx.moveTo(arrow.sx, arrow.sy);
    let angle: number;
    if (arrow.curved) {
      // offset control point so opposing directions do not overlap
      const mx = (arrow.sx + arrow.tx) / 2;
      const my = (arrow.sy + arrow.ty) / 2;
      const dx = arrow.tx - arrow.sx;
      const dy = arrow.ty - arrow.sy;
      const norm = Math.hypot(dx, dy) || 1;
      const cx = mx - (dy / norm) * 18;
      const cy = my + (dx / norm) * 18;
      ctx.quadraticCurveTo(cx, cy, arrow.tx, arrow.ty);
      angle = Math.atan2(arrow.ty - cy, arrow.tx - cx);
    } else {
      ctx.lineTo(arrow.tx, arrow.ty);
      angle = Math.atan2(arrow.ty - arrow.sy, arrow.tx - arrow.sx);
    }
    ctx.stroke();
    ctx.setLineDash([]);
    const head = 6 + arrow.width;
    ctx.beginPath();
    ctx.moveTo(arrow.tx, arrow.ty);
    ctx.lineTo(
      arrow.tx - head * Math.cos(angle - 0.4),
      arrow.ty - head * Math.sin(angle - 0.4),
    );
    ctx.lineTo(
      arrow.tx - head * Math.cos(angle + 0.4),
      arrow.ty - head * Math.sin(angle + 0.4),
    );
    ctx.closePath();
    ctx.fill();
  }

  for (const token of scene.tokens) {
    ctx.fillStyle = token.warned ? "#d8412f" : "#aab4c0";
    ctx.fillRect(token.x - 7, token.y - 7, 14, 14);
    ctx.strokeStyle = "#10141a";
    ctx.strokeRect(token.x - 4, token.y - 4, 8, 8);
    ctx.fillStyle = "#e8edf2";
    ctx.font = "11px sans-serif";
    ctx.fillText(token.name, token.x + 10, token.y - 8);
  }

  for (const node of scene.nodes) {
    const colors = { normal: "#2d7d46", warned: "#c77d2a", locked: "#d8412f" };
    ctx.fillStyle = colors[node.highlight];
    ctx.beginPath();
    ctx.arc(node.x, node.y, 9, 0, Math.PI * 2);
    ctx.fill();
    if (node.mac === state.selected) {
      ctx.strokeStyle = "#ffffff";
      ctx.lineWidth = 2;
      ctx.stroke();
    }
    ctx.fillStyle = "#e8edf2";
    ctx.font = "12px sans-serif";
    node.label.slice(0, 2).forEach((line, i) => {
      ctx.fillText(line, node.x + 12, node.y + 4 + 13 * i);
    });
  }

  // handheld position marker
  const hh = state.handheld;
  const sx = width / 2 + (hh.x - state.viewport.cx) * state.viewport.scale;
  const sy = height / 2 + (hh.y - state.viewport.cy) * state.viewport.scale;
  ctx.strokeStyle = "#f5d90a";
  ctx.lineWidth = 2;
  ctx.strokeRect(sx - 6, sy - 10, 12, 20);
  ctx.fillStyle = "#f5d90a";
  ctx.font = "11px sans-serif";
  ctx.fillText("handheld", sx + 10, sy);
}

function renderBanners(scene: SceneGraph): void {
  const host = $("banners");
  host.innerHTML = "";
  for (const banner of scene.banners) {
    const div = document.createElement("div");
    div.className = "banner";
    div.textContent = banner.text;
    if (state.role === "operator") {
      const warning = state.warnings.find(
        (w) => w.kind === banner.kind && w.subject === banner.subject && !w.resolved,
      );
      if (warning) {
        const button = document.createElement("button");
        button.textContent = "resolve";
        button.onclick = async () => {
          await state.client!.resolveWarning(warning.id);
          await refresh();
        };
        div.appendChild(button);
      }
    }
    host.appendChild(div);
  }
}

function renderCard(): void {
  const host = $("card");
  if (!state.selected) {
    host.classList.add("hidden");
    return;
  }
  const node = state.nodes.find((n) => n.mac === state.selected);
  host.classList.remove("hidden");
  const editable = state.role === "operator" && node !== undefined && !node.locked;
  ($("card-mac") as HTMLElement).textContent = state.selected;
  ($("card-name") as HTMLInputElement).value = node?.name ?? "";
  ($("card-location") as HTMLInputElement).value = node?.location ?? "";
  ($("card-name") as HTMLInputElement).disabled = !editable;
  ($("card-location") as HTMLInputElement).disabled = !editable;
  ($("card-save") as HTMLButtonElement).disabled = !editable;
  $("card-lock-note").textContent = node?.locked
    ? "locked by an unresolved duplicate-marker warning"
    : "";
  if (node) {
    state.client!
      .spoof(node.mac)
      .then((report) => {
        $("card-spoof").textContent =
          report.case === "NO_FINDING" ? "" : `${report.case}: ${report.action}`;
      })
      .catch(() => {});
  }
}

function renderStatus(): void {
  const [t0, t1] = window_();
  $("status").textContent =
    `${state.view.toUpperCase()} view | window ${(t0 / 1e6).toFixed(0)}s - ` +
    `${(t1 / 1e6).toFixed(0)}s${state.live ? " (live)" : ""} | role ${state.role}` +
    (state.trend ? ` | RSSI trend: ${state.trend}` : "");
}

function reportError(err: unknown): void {
  $("error").textContent =
    err instanceof ApiError ? err.message : err instanceof Error ? err.message : String(err);
  setTimeout(() => ($("error").textContent = ""), 4000);
}

async function handleMapClick(event: MouseEvent): Promise<void> {
  const rect = canvas().getBoundingClientRect();
  const px = event.clientX - rect.left;
  const py = event.clientY - rect.top;
  const { scene } = buildScene(sceneInput(), state.viewport, state.memory);
  const token = scene.tokens.find((t) => Math.hypot(t.x - px, t.y - py) < 12);
  if (token) {
    const marker = state.site.find((m) => m.name === token.name)!;
    try {
      const result = await state.client!.scanMarker(
        marker.embedded_mac,
        marker.placement,
        Date.now() * 1000,
        marker.name,
      );
      state.selected = marker.embedded_mac;
      if (result.result === "duplicate_marker") reportError(new Error("duplicate marker"));
    } catch (err) {
      reportError(err);
    }
    await refresh();
    return;
  }
  const node = scene.nodes.find((n) => Math.hypot(n.x - px, n.y - py) < 14);
  state.selected = node ? node.mac : null;
  render();
}

async function moveHandheld(dx: number, dy: number): Promise<void> {
  state.handheld.x += dx * HANDHELD_STEP_M;
  state.handheld.y += dy * HANDHELD_STEP_M;
  try {
    await state.client!.setHandheld(state.handheld.x, state.handheld.y);
    if (state.selected) {
      const { samples } = await state.client!.rssi(state.selected, HANDHELD_SNIFFER_ID);
      const values = samples.slice(-12).map((s) => s.rssi);
      state.trend = values.length >= 3 ? rssiTrend(values) : null;
    }
  } catch (err) {
    reportError(err);
  }
  render();
}

function fitAllNodes(): void {
  const anchors = state.site.map((m) => ({ x: m.x, y: m.y }));
  if (anchors.length === 0) return;
  const xs = anchors.map((a) => a.x);
  const ys = anchors.map((a) => a.y);
  const minX = Math.min(...xs) - 2;
  const maxX = Math.max(...xs) + 2;
  const minY = Math.min(...ys) - 2;
  const maxY = Math.max(...ys) + 2;
  const vp = state.viewport;
  vp.cx = (minX + maxX) / 2;
  vp.cy = (minY + maxY) / 2;
  vp.scale = Math.min(vp.width / (maxX - minX), vp.height / (maxY - minY));
  render();
}

async function login(): Promise<void> {
  const url = ($("login-url") as HTMLInputElement).value.replace(/\/$/, "");
  const user = ($("login-user") as HTMLInputElement).value;
  const secret = ($("login-secret") as HTMLInputElement).value;
  const siteUrl = ($("login-site") as HTMLInputElement).value || "./site.json";
  const client = new BackendClient(url, user, secret);
  try {
    const identity = await client.whoami();
    state.client = client;
    state.role = identity.role;
    const response = await fetch(siteUrl);
    const layout = await response.json();
    state.site = layout.markers ?? [];
    $("login").classList.add("hidden");
    $("workspace").classList.remove("hidden");
    if (state.role !== "operator") {
      document.body.classList.add("read-only");
    }
    fitAllNodes();
    await refreshHorizon();
    await refresh();
    setInterval(() => {
      void refresh();
    }, POLL_MS);
    setInterval(() => {
      if (state.live) void refreshHorizon();
    }, 5 * POLL_MS);
  } catch (err) {
    reportError(err);
  }
}

export function start(): void {
  const c = canvas();
  c.width = state.viewport.width;
  c.height = state.viewport.height;

  $("login-go").addEventListener("click", () => void login());
  c.addEventListener("click", (e) => void handleMapClick(e));

  let dragging = false;
  let last = { x: 0, y: 0 };
  c.addEventListener("mousedown", (e) => {
    dragging = true;
    last = { x: e.clientX, y: e.clientY };
  });
  window.addEventListener("mouseup", () => (dragging = false));
  window.addEventListener("mousemove", (e) => {
    if (!dragging) return;
    state.viewport.cx -= (e.clientX - last.x) / state.viewport.scale;
    state.viewport.cy -= (e.clientY - last.y) / state.viewport.scale;
    last = { x: e.clientX, y: e.clientY };
    render();
  });
  c.addEventListener("wheel", (e) => {
    e.preventDefault();
    state.viewport.scale *= e.deltaY < 0 ? 1.15 : 1 / 1.15;
    render();
  });

  $("view-ip").addEventListener("click", () => {
    state.view = "ip";
    void refresh();
  });
  $("view-mac").addEventListener("click", () => {
    state.view = "mac";
    void refresh();
  });
  $("fit").addEventListener("click", fitAllNodes);

  const scrub = $("scrub") as HTMLInputElement;
  scrub.addEventListener("input", () => {
    state.live = false;
    state.scrubUs = Number(scrub.value);
    void refresh();
  });
  $("live").addEventListener("click", () => {
    state.live = true;
    void refreshHorizon().then(refresh);
  });
  ($("window-length") as HTMLSelectElement).addEventListener("change", (e) => {
    state.windowUs = Number((e.target as HTMLSelectElement).value);
    void refresh();
  });

  $("card-save").addEventListener("click", async () => {
    if (!state.selected) return;
    try {
      await state.client!.patchNode(state.selected, {
        name: ($("card-name") as HTMLInputElement).value,
        location: ($("card-location") as HTMLInputElement).value,
      });
      await refresh();
    } catch (err) {
      reportError(err); // 409 while locked: the backend is the authority
    }
  });

  window.addEventListener("keydown", (e) => {
    const moves: Record<string, [number, number]> = {
      ArrowUp: [0, -1],
      ArrowDown: [0, 1],
      ArrowLeft: [-1, 0],
      ArrowRight: [1, 0],
      w: [0, -1],
      s: [0, 1],
      a: [-1, 0],
      d: [1, 0],
    };
    const move = moves[e.key];
    if (move && state.client && !(e.target instanceof HTMLInputElement)) {
      e.preventDefault();
      void moveHandheld(move[0], move[1]);
    }
  });
}

if (typeof document !== "undefined") {
  start();
}
