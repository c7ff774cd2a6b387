/** Pure scene construction: backend responses + viewport state in, drawable
 * scene graph out. Same inputs always produce the same scene, and every
 * arrow corresponds to a traffic edge with count >= 1 in the active window.
 *
 * Node authority is server-side: a node renders as locked exactly when the
 * backend says it is, and edit controls follow the role plus that flag.
 */

import { arrowWidth, boundaryAnchor, onViewport, worldToScreen } from "./geometry.js";
import { ipToMac } from "./net.js";
import type {
  ArrowView,
  Banner,
  BreadcrumbMemory,
  EdgeDto,
  NodeDto,
  NodeView,
  SceneGraph,
  SiteMarker,
  TokenView,
  Viewport,
  WarningDto,
} from "./types.js";

export interface SceneInput {
  site: SiteMarker[];
  nodes: NodeDto[];
  edges: EdgeDto[];
  warnings: WarningDto[];
  view: "ip" | "mac";
  role: string;
}

export interface SceneResult {
  scene: SceneGraph;
  memory: BreadcrumbMemory;
}

/** World anchor of a MAC: the first site marker embedding it, else the
 * node's own location field when it parses as "x,y". */
export function nodeAnchor(
  mac: string,
  site: SiteMarker[],
  nodes: NodeDto[],
): { x: number; y: number } | null {
  const markers = site.filter((m) => m.embedded_mac === mac);
  if (markers.length > 0) {
    const first = [...markers].sort((a, b) => a.name.localeCompare(b.name))[0];
    return { x: first.x, y: first.y };
  }
  const node = nodes.find((n) => n.mac === mac);
  if (node && /^-?[\d.]+,-?[\d.]+$/.test(node.location)) {
    const [x, y] = node.location.split(",").map(Number);
    return { x, y };
  }
  return null;
}

export function buildScene(
  input: SceneInput,
  viewport: Viewport,
  memory: BreadcrumbMemory,
): SceneResult {
  const unresolvedDup = input.warnings.filter(
    (w) => w.kind === "duplicate_marker" && !w.resolved,
  );
  const warnedMacs = new Set(unresolvedDup.map((w) => w.subject));

  const nextMemory: BreadcrumbMemory = { ...memory };
  const anchors = new Map<string, { x: number; y: number }>();
  const allMacs = new Set<string>([
    ...input.nodes.map((n) => n.mac),
    ...input.site.map((m) => m.embedded_mac),
  ]);
  for (const mac of allMacs) {
    const anchor = nodeAnchor(mac, input.site, input.nodes);
    if (anchor) {
      anchors.set(mac, anchor);
      const screen = worldToScreen(viewport, anchor.x, anchor.y);
      if (onViewport(viewport, screen.x, screen.y)) {
        nextMemory[mac] = anchor; // remembered for when it pans off-screen
      }
    }
  }

  const tokens: TokenView[] = input.site.map((marker) => {
    const screen = worldToScreen(viewport, marker.x, marker.y);
    return {
      name: marker.name,
      mac: marker.embedded_mac,
      x: screen.x,
      y: screen.y,
      warned: warnedMacs.has(marker.embedded_mac),
    };
  });

  const nodes: NodeView[] = input.nodes
    .map((node) => {
      const anchor = anchors.get(node.mac);
      if (!anchor) return null;
      const screen = worldToScreen(viewport, anchor.x, anchor.y);
      if (!onViewport(viewport, screen.x, screen.y)) return null;
      const highlight = node.locked
        ? "locked"
        : warnedMacs.has(node.mac)
          ? "warned"
          : "normal";
      return {
        mac: node.mac,
        x: screen.x,
        y: screen.y,
        label: [node.name || node.mac, node.mac, node.location].filter(Boolean),
        highlight,
        editable: input.role === "operator" && !node.locked,
      } as NodeView;
    })
    .filter((n): n is NodeView => n !== null);

  const directed = new Set(input.edges.map((e) => `${e.src}>${e.dst}`));
  const arrows: ArrowView[] = [];
  for (const edge of input.edges) {
    if (edge.count < 1) continue;
    const endpoints = [edge.src, edge.dst].map((identity) => {
      const mac = input.view === "mac" ? identity : ipToMac(identity);
      if (!mac) return null;
      const anchor = anchors.get(mac) ?? null;
      if (anchor) {
        const screen = worldToScreen(viewport, anchor.x, anchor.y);
        if (onViewport(viewport, screen.x, screen.y)) {
          return { ...screen, anchored: false };
        }
      }
      const last = anchor ?? nextMemory[mac] ?? null;
      if (!last) return null; // never seen: no anchor, no arrow
      const brk = boundaryAnchor(viewport, last.x, last.y);
      return { ...brk, anchored: true };
    });
    const [from, to] = endpoints;
    if (!from || !to) continue;
    arrows.push({
      src: edge.src,
      dst: edge.dst,
      sx: from.x,
      sy: from.y,
      tx: to.x,
      ty: to.y,
      width: arrowWidth(edge.count),
      count: edge.count,
      curved: directed.has(`${edge.dst}>${edge.src}`),
      srcAnchored: from.anchored,
      dstAnchored: to.anchored,
    });
  }

  const banners: Banner[] = unresolvedDup.map((w) => ({
    kind: w.kind,
    subject: w.subject,
    text: `Duplicate marker for ${w.subject}: editing is locked until resolved`,
  }));

  return { scene: { tokens, nodes, arrows, banners }, memory: nextMemory };
}
