/** Pure geometry: arrow sizing, world/screen transforms, boundary anchors. */

import type { Viewport } from "./types.js";

export const ARROW_BASE_PX = 2;
export const ARROW_GAIN_PX = 2;
export const MIN_STROKE_PX = 1;

/** Stroke width grows logarithmically with the traffic count. */
export function arrowWidth(count: number): number {
  if (count < 1) throw new RangeError(`count must be >= 1, got ${count}`);
  return Math.max(ARROW_BASE_PX + ARROW_GAIN_PX * Math.log(1 + count), MIN_STROKE_PX);
}

export function worldToScreen(
  vp: Viewport,
  x: number,
  y: number,
): { x: number; y: number } {
  return {
    x: vp.width / 2 + (x - vp.cx) * vp.scale,
    y: vp.height / 2 + (y - vp.cy) * vp.scale,
  };
}

export function onViewport(vp: Viewport, sx: number, sy: number): boolean {
  return sx >= 0 && sx <= vp.width && sy >= 0 && sy <= vp.height;
}

/**
 * Screen point on the viewport boundary in the direction of a world
 * position, as seen from the viewport center. This is where arrows to an
 * off-screen neighbor terminate, so hop traces can be followed off the edge
 * of the display.
 */
export function boundaryAnchor(
  vp: Viewport,
  worldX: number,
  worldY: number,
): { x: number; y: number } {
  const dx = (worldX - vp.cx) * vp.scale;
  const dy = (worldY - vp.cy) * vp.scale;
  const halfW = vp.width / 2;
  const halfH = vp.height / 2;
  if (dx === 0 && dy === 0) return { x: halfW, y: halfH };
  const tx = dx !== 0 ? halfW / Math.abs(dx) : Infinity;
  const ty = dy !== 0 ? halfH / Math.abs(dy) : Infinity;
  const t = Math.min(tx, ty);
  // clamp away float drift so the anchor sits exactly on the rectangle
  return {
    x: Math.min(Math.max(halfW + dx * t, 0), vp.width),
    y: Math.min(Math.max(halfH + dy * t, 0), vp.height),
  };
}
