import assert from "node:assert/strict";
import { test } from "node:test";

import { rssiTrend } from "../src/trend.js";

test("walking toward the transmitter reads increasing", () => {
  assert.equal(rssiTrend([-60, -55, -50, -45]), "increasing");
});

test("walking away reads decreasing", () => {
  assert.equal(rssiTrend([-45, -52, -60]), "decreasing");
});

test("a stationary handheld reads flat", () => {
  assert.equal(rssiTrend([-50, -50.3, -49.9, -50.1]), "flat");
});

test("fewer than three samples is an error", () => {
  assert.throws(() => rssiTrend([-50, -49]), RangeError);
});
