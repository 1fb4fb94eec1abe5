import assert from "node:assert/strict";
import { test } from "node:test";

import { clamp01, formatBand, formatPercent, outcomeParts } from "../src/format.js";

test("clamp01 bounds values into [0, 1]", () => {
  assert.equal(clamp01(-0.2), 0);
  assert.equal(clamp01(0.37), 0.37);
  assert.equal(clamp01(1.8), 1);
  assert.equal(clamp01(Number.NaN), 0);
});

test("outcomeParts splits canonical keys", () => {
  assert.deepEqual(outcomeParts("X1=l2|X2=l1"), [
    ["X1", "l2"],
    ["X2", "l1"],
  ]);
  assert.deepEqual(outcomeParts(""), []);
});

test("formatting is presentation only", () => {
  assert.equal(formatBand(0.5, 0.25), "0.500 ± 0.250");
  assert.equal(formatPercent(0.3333), "33.3%");
});
