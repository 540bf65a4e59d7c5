import { describe, expect, it } from "vitest";

import { forceLayout, mulberry32 } from "../src/layout.js";

const NODES = ["root", "a", "b", "c", "q1", "q2"];
const EDGES: [string, string][] = [
  ["root", "a"],
  ["root", "b"],
  ["a", "c"],
  ["b", "c"],
  ["c", "q1"],
  ["c", "q2"],
];
const OPTS = { width: 640, height: 480, seed: 7 };

describe("mulberry32", () => {
  it("is deterministic per seed", () => {
    const a = mulberry32(123);
    const b = mulberry32(123);
    for (let i = 0; i < 100; i++) expect(a()).toBe(b());
  });

  it("stays in [0, 1)", () => {
    const r = mulberry32(99);
    for (let i = 0; i < 1000; i++) {
      const v = r();
      expect(v).toBeGreaterThanOrEqual(0);
      expect(v).toBeLessThan(1);
    }
  });
});

describe("forceLayout", () => {
  it("produces identical coordinates for the same seed", () => {
    const first = forceLayout(NODES, EDGES, OPTS);
    const second = forceLayout(NODES, EDGES, OPTS);
    for (const id of NODES) {
      expect(second.get(id)).toEqual(first.get(id));
    }
  });

  it("changes with the seed", () => {
    const first = forceLayout(NODES, EDGES, OPTS);
    const other = forceLayout(NODES, EDGES, { ...OPTS, seed: 8 });
    const moved = NODES.some(
      (id) =>
        first.get(id)!.x !== other.get(id)!.x || first.get(id)!.y !== other.get(id)!.y,
    );
    expect(moved).toBe(true);
  });

  it("places every node inside the viewport with finite coordinates", () => {
    const layout = forceLayout(NODES, EDGES, OPTS);
    expect(layout.size).toBe(NODES.length);
    for (const { x, y } of layout.values()) {
      expect(Number.isFinite(x)).toBe(true);
      expect(Number.isFinite(y)).toBe(true);
      expect(x).toBeGreaterThanOrEqual(0);
      expect(x).toBeLessThanOrEqual(OPTS.width);
      expect(y).toBeGreaterThanOrEqual(0);
      expect(y).toBeLessThanOrEqual(OPTS.height);
    }
  });

  it("separates coincident-prone small graphs", () => {
    const layout = forceLayout(["a", "b"], [["a", "b"]], OPTS);
    const a = layout.get("a")!;
    const b = layout.get("b")!;
    const dist = Math.hypot(a.x - b.x, a.y - b.y);
    expect(dist).toBeGreaterThan(1);
  });

  it("handles an empty graph", () => {
    expect(forceLayout([], [], OPTS).size).toBe(0);
  });

  it("ignores edges to unknown nodes", () => {
    const layout = forceLayout(["a"], [["a", "ghost"]], OPTS);
    expect(layout.size).toBe(1);
  });
});
