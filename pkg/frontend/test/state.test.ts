import { describe, expect, it } from "vitest";

import type { Trace } from "../src/api.js";
import {
  addTrace,
  applyError,
  applyReply,
  attachSession,
  beginSend,
  canSend,
  highlightEdges,
  highlightNodes,
  initialChat,
  initialGraphView,
  selectTurn,
  selectedTrace,
} from "../src/state.js";

function fakeTrace(turn: number, ids: string[], stayLast = false): Trace {
  return {
    format: "trace/1",
    turn,
    nodes: ids.map((id) => ({ id, kind: "feature", feature_kind: "k", is_key: true })),
    edges: ids.slice(1).map((_, i) => ({
      relation: "has",
      is_stay: stayLast && i === ids.length - 2,
    })),
    steps: ids.slice(1).map(() => ({ top_actions: [] })),
    terminal_kind: "key",
    chosen: true,
    score: -1.0,
    response: "ok",
  };
}

describe("chat state", () => {
  it("starts empty, not pending, with no session", () => {
    const s = initialChat();
    expect(s.messages).toHaveLength(0);
    expect(s.pending).toBe(false);
    expect(canSend(s, "hello")).toBe(false);
  });

  it("requires a session, nonempty text, and no pending request", () => {
    let s = attachSession(initialChat(), "s1");
    expect(canSend(s, "  ")).toBe(false);
    expect(canSend(s, "hello")).toBe(true);
    s = beginSend(s, "hello", 1);
    expect(canSend(s, "again")).toBe(false);
  });

  it("keeps messages strictly ordered user/system", () => {
    let s = attachSession(initialChat(), "s1");
    s = beginSend(s, "my gold card", 10);
    s = applyReply(s, { response: "which issue?", trace: null, phase: "collecting" }, 11);
    s = beginSend(s, "billing waiver", 12);
    s = applyReply(s, { response: "confirm?", trace: null, phase: "awaiting_confirmation" }, 13);
    expect(s.messages.map((m) => m.role)).toEqual(["user", "system", "user", "system"]);
    expect(s.messages.map((m) => m.at)).toEqual([10, 11, 12, 13]);
    expect(s.phase).toBe("awaiting_confirmation");
    expect(s.pending).toBe(false);
  });

  it("blocks sending after handoff or close", () => {
    let s = attachSession(initialChat(), "s1");
    s = beginSend(s, "hi", 1);
    s = applyReply(s, { response: "routed", trace: null, phase: "handed_off" }, 2);
    expect(canSend(s, "more")).toBe(false);
  });

  it("surfaces errors without dropping the transcript", () => {
    let s = attachSession(initialChat(), "s1");
    s = beginSend(s, "hello", 1);
    s = applyError(s, "error 409: turn already in flight");
    expect(s.messages).toHaveLength(1);
    expect(s.pending).toBe(false);
    expect(s.error).toContain("409");
    expect(canSend(s, "retry")).toBe(true);
  });

  it("rejects beginSend when disallowed", () => {
    expect(() => beginSend(initialChat(), "hello", 1)).toThrow();
  });
});

describe("graph view state", () => {
  it("selects the newest turn as traces arrive", () => {
    let v = initialGraphView();
    expect(selectedTrace(v)).toBeNull();
    v = addTrace(v, fakeTrace(1, ["root", "a"]));
    expect(v.selectedTurn).toBe(1);
    v = addTrace(v, fakeTrace(2, ["root", "a", "q"]));
    expect(v.selectedTurn).toBe(2);
    expect(selectedTrace(v)!.turn).toBe(2);
  });

  it("clamps turn selection into [1, turns]", () => {
    let v = addTrace(addTrace(initialGraphView(), fakeTrace(1, ["root", "a"])), fakeTrace(2, ["root", "b"]));
    expect(selectTurn(v, 0).selectedTurn).toBe(1);
    expect(selectTurn(v, 99).selectedTurn).toBe(2);
    expect(selectTurn(v, 1).selectedTurn).toBe(1);
    expect(selectTurn(initialGraphView(), 3).selectedTurn).toBe(0);
  });

  it("derives highlight nodes from the trace only", () => {
    const t = fakeTrace(1, ["root", "a", "b"]);
    expect(highlightNodes(t)).toEqual(new Set(["root", "a", "b"]));
    expect(highlightNodes(null).size).toBe(0);
  });

  it("derives consecutive-pair edges and marks stay loops", () => {
    const t = fakeTrace(1, ["root", "a", "a"], true);
    const edges = highlightEdges(t);
    expect(edges).toEqual([
      { source: "root", target: "a", isStay: false },
      { source: "a", target: "a", isStay: true },
    ]);
  });
});
