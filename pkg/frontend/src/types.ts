/** Wire DTOs (as served by the backend API) and the console's scene types. */

export interface NodeDto {
  mac: string;
  name: string;
  location: string;
  public_key: string | null;
  first_seen_visual: number | null;
  first_seen_digital: number | null;
  locked: boolean;
}

export interface EdgeDto {
  view: "ip" | "mac";
  src: string;
  dst: string;
  count: number;
  t0: number;
  t1: number;
}

export interface WarningDto {
  id: number;
  kind: string;
  subject: string;
  ts_us: number;
  details: string;
  resolved: boolean;
}

export interface TimelineSnapshot {
  index: number;
  t0: number;
  t1: number;
  edges: EdgeDto[];
}

/** A physical marker token placed in the site: what the operator's eyes see. */
export interface SiteMarker {
  name: string;
  embedded_mac: string;
  x: number;
  y: number;
  placement: string;
}

export interface Viewport {
  cx: number; // world coords at the viewport center
  cy: number;
  scale: number; // pixels per meter
  width: number; // pixels
  height: number;
}

export type Highlight = "normal" | "warned" | "locked";

export interface NodeView {
  mac: string;
  x: number; // screen px
  y: number;
  label: string[];
  highlight: Highlight;
  editable: boolean;
}

export interface TokenView {
  name: string;
  mac: string;
  x: number;
  y: number;
  warned: boolean;
}

export interface ArrowView {
  src: string; // identity in the active view
  dst: string;
  sx: number;
  sy: number;
  tx: number;
  ty: number;
  width: number;
  count: number;
  curved: boolean; // bezier when the reverse direction also carries traffic
  srcAnchored: boolean; // endpoint is a viewport-boundary breadcrumb anchor
  dstAnchored: boolean;
}

export interface Banner {
  kind: string;
  subject: string;
  text: string;
}

export interface SceneGraph {
  tokens: TokenView[];
  nodes: NodeView[];
  arrows: ArrowView[];
  banners: Banner[];
}

/** Last known world position per MAC, kept across renders for breadcrumbs. */
export type BreadcrumbMemory = Record<string, { x: number; y: number }>;
