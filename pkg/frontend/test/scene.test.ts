import assert from "node:assert/strict";
import { readFileSync } from "node:fs";
import { test } from "node:test";
import { fileURLToPath } from "node:url";

import { buildScene, type SceneInput } from "../src/scene.js";
import { macToIp } from "../src/net.js";
import type { BreadcrumbMemory, Viewport } from "../src/types.js";

function fixture(name: string): any {
  const path = fileURLToPath(new URL(`../../test/fixtures/${name}.json`, import.meta.url));
  return JSON.parse(readFileSync(path, "utf-8"));
}

const WIDE: Viewport = { cx: 0.5, cy: 0.5, scale: 100, width: 900, height: 600 };

function testbedInput(view: "ip" | "mac" = "ip"): SceneInput {
  const data = fixture("testbed");
  return {
    site: data.site,
    nodes: data.nodes,
    edges: view === "ip" ? data.edges_ip : data.edges_mac,
    warnings: data.warnings,
    view,
    role: "operator",
  };
}

test("arrow widths match the log law against backend counts within 0.01 px", () => {
  const { scene } = buildScene(testbedInput("ip"), WIDE, {});
  assert.ok(scene.arrows.length >= 10); // 5 clients x 2 directions
  for (const arrow of scene.arrows) {
    const expected = 2 + 2 * Math.log(1 + arrow.count);
    assert.ok(
      Math.abs(arrow.width - expected) < 0.01,
      `count ${arrow.count}: width ${arrow.width} vs ${expected}`,
    );
  }
});

test("every arrow corresponds to an edge with count >= 1 (no phantoms)", () => {
  const input = testbedInput("ip");
  const { scene } = buildScene(input, WIDE, {});
  const edgeKeys = new Set(input.edges.map((e) => `${e.src}>${e.dst}`));
  for (const arrow of scene.arrows) {
    assert.ok(arrow.count >= 1);
    assert.ok(edgeKeys.has(`${arrow.src}>${arrow.dst}`));
  }
});

test("bidirectional pairs draw as bezier curves", () => {
  const { scene } = buildScene(testbedInput("ip"), WIDE, {});
  assert.ok(scene.arrows.every((a) => a.curved)); // the echo workload is bidirectional
});

test("rendering is a pure function of data and viewport", () => {
  const input = testbedInput("mac");
  const memory: BreadcrumbMemory = {};
  const first = buildScene(input, WIDE, memory);
  const second = buildScene(input, WIDE, memory);
  assert.deepEqual(first.scene, second.scene);
  assert.deepEqual(first.memory, second.memory);
});

test("duplicate-marker banner appears and edit controls disable", () => {
  const data = fixture("dupmarker");
  const input: SceneInput = {
    site: data.site,
    nodes: data.nodes,
    edges: data.edges_ip,
    warnings: data.warnings,
    view: "ip",
    role: "operator",
  };
  const vp: Viewport = { cx: 5, cy: 0, scale: 30, width: 900, height: 600 };
  const { scene } = buildScene(input, vp, {});

  const victim = "00:12:4b:00:00:00:00:0a";
  assert.ok(scene.banners.some((b) => b.kind === "duplicate_marker" && b.subject === victim));
  // both physical tokens embedding the duplicated MAC are highlighted
  const warnedTokens = scene.tokens.filter((t) => t.warned);
  assert.equal(warnedTokens.length, 2);
  assert.ok(warnedTokens.every((t) => t.mac === victim));
  // the node card for the victim is locked and not editable, even for operators
  const node = scene.nodes.find((n) => n.mac === victim)!;
  assert.equal(node.highlight, "locked");
  assert.equal(node.editable, false);
  // other nodes stay editable for the operator
  const server = scene.nodes.find((n) => n.mac === "00:12:4b:00:00:00:00:01")!;
  assert.equal(server.editable, true);
});

test("trainees get no edit controls anywhere", () => {
  const input = { ...testbedInput("ip"), role: "trainee" };
  const { scene } = buildScene(input, WIDE, {});
  assert.ok(scene.nodes.length > 0);
  assert.ok(scene.nodes.every((n) => !n.editable));
});

test("breadcrumb anchors persist for off-viewport neighbors", () => {
  const input = testbedInput("ip");
  // first render with everything on screen: memory learns world positions
  const wide = buildScene(input, WIDE, {});
  assert.ok(Object.keys(wide.memory).length >= 6);

  // pan so the server (0.5, 0.5) leaves through the left edge
  const panned: Viewport = { cx: 30, cy: 0.5, scale: 100, width: 900, height: 600 };
  const serverIp = macToIp("00:12:4b:00:00:00:00:04");
  const first = buildScene(input, panned, wide.memory);
  const toServer = first.scene.arrows.filter((a) => a.dst === serverIp);
  assert.ok(toServer.length > 0, "arrows to the off-screen server still draw");
  for (const arrow of toServer) {
    assert.equal(arrow.dstAnchored, true);
    assert.equal(arrow.tx, 0, "anchor sits on the left boundary");
    assert.ok(arrow.ty >= 0 && arrow.ty <= 600);
  }
  // the anchor persists across further renders while the node stays off-screen
  const second = buildScene(input, panned, first.memory);
  assert.deepEqual(
    second.scene.arrows.filter((a) => a.dst === serverIp),
    toServer,
  );
  // panning back restores normal endpoints
  const restored = buildScene(input, WIDE, second.memory);
  assert.ok(restored.scene.arrows.every((a) => !a.dstAnchored && !a.srcAnchored));
});

test("nodes never seen have no anchor and draw no arrows", () => {
  const input = testbedInput("ip");
  const narrow: Viewport = { cx: 30, cy: 0.5, scale: 100, width: 900, height: 600 };
  // no prior memory: every node is off-screen and unknown
  const { scene } = buildScene({ ...input, site: [], nodes: [] }, narrow, {});
  assert.equal(scene.arrows.length, 0);
});

test("scrubbing across the death fault removes the node's arrows", () => {
  const data = fixture("nodedeath");
  const dead = "00:12:4b:00:00:00:00:02"; // relay-b, dies at t=60 s
  const deadIp = macToIp(dead);
  const vp: Viewport = { cx: 8, cy: 0, scale: 25, width: 900, height: 600 };
  const snapshots = data.timeline_mac.snapshots;
  assert.ok(snapshots.length >= 12);

  const touchesDead = (snapshot: any): boolean => {
    const input: SceneInput = {
      site: data.site,
      nodes: data.nodes,
      edges: snapshot.edges,
      warnings: data.warnings,
      view: "mac",
      role: "operator",
    };
    const { scene } = buildScene(input, vp, {});
    return scene.arrows.some(
      (a) => a.src === dead || a.dst === dead || a.src === deadIp || a.dst === deadIp,
    );
  };

  for (const snapshot of snapshots) {
    if (snapshot.t1 < 60_000_000 && snapshot.edges.length > 0) {
      assert.ok(touchesDead(snapshot), `snapshot ${snapshot.index} before the fault`);
    }
    if (snapshot.t0 >= 60_000_000) {
      assert.ok(!touchesDead(snapshot), `snapshot ${snapshot.index} after the fault`);
    }
  }
  // traffic still flows after the fault, via the replacement relay
  const after = snapshots.find((s: any) => s.t0 >= 70_000_000 && s.edges.length > 0);
  assert.ok(after, "re-routed traffic present after the death");
});
