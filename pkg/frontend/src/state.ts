/** Pure view-state transitions for the chat window and the graph monitor.
 * No DOM, no network — everything here is unit-testable. */

import type { MessageReply, Trace } from "./api.js";

export interface ChatMessage {
  role: "user" | "system";
  text: string;
  at: number;
}

export interface ChatViewState {
  sessionId: string | null;
  messages: ChatMessage[];
  phase: string;
  pending: boolean;
  error: string | null;
}

export interface GraphViewState {
  traces: Trace[];
  /** 1-based turn whose trace is highlighted; 0 when no trace exists yet. */
  selectedTurn: number;
}

export interface HighlightEdge {
  source: string;
  target: string;
  isStay: boolean;
}

export function initialChat(): ChatViewState {
  return { sessionId: null, messages: [], phase: "collecting", pending: false, error: null };
}

export function initialGraphView(): GraphViewState {
  return { traces: [], selectedTurn: 0 };
}

export function attachSession(state: ChatViewState, sessionId: string): ChatViewState {
  return { ...state, sessionId };
}

export function canSend(state: ChatViewState, text: string): boolean {
  return (
    state.sessionId !== null &&
    !state.pending &&
    text.trim().length > 0 &&
    state.phase !== "handed_off" &&
    state.phase !== "closed"
  );
}

/** Append the user's utterance and mark the request in flight. */
export function beginSend(state: ChatViewState, text: string, at: number): ChatViewState {
  if (!canSend(state, text)) {
    throw new Error("send not allowed in the current state");
  }
  return {
    ...state,
    messages: [...state.messages, { role: "user", text: text.trim(), at }],
    pending: true,
    error: null,
  };
}

/** Append the system reply and clear the in-flight flag. */
export function applyReply(state: ChatViewState, reply: MessageReply, at: number): ChatViewState {
  return {
    ...state,
    messages: [...state.messages, { role: "system", text: reply.response, at }],
    phase: reply.phase,
    pending: false,
  };
}

/** Surface a transport or gateway error inline; the transcript is kept. */
export function applyError(state: ChatViewState, message: string): ChatViewState {
  return { ...state, pending: false, error: message };
}

export function addTrace(view: GraphViewState, trace: Trace): GraphViewState {
  const traces = [...view.traces, trace];
  return { traces, selectedTurn: traces.length };
}

/** Clamp into [1, turns]; a view with no traces stays at 0. */
export function selectTurn(view: GraphViewState, turn: number): GraphViewState {
  if (view.traces.length === 0) {
    return { ...view, selectedTurn: 0 };
  }
  const clamped = Math.min(Math.max(1, Math.floor(turn)), view.traces.length);
  return { ...view, selectedTurn: clamped };
}

export function selectedTrace(view: GraphViewState): Trace | null {
  return view.selectedTurn >= 1 ? view.traces[view.selectedTurn - 1] : null;
}

/** Node ids along the selected trace, for node highlighting. */
export function highlightNodes(trace: Trace | null): Set<string> {
  return new Set(trace === null ? [] : trace.nodes.map((n) => n.id));
}

/** Consecutive node pairs of the trace; stay steps become self-loops. */
export function highlightEdges(trace: Trace | null): HighlightEdge[] {
  if (trace === null) return [];
  const out: HighlightEdge[] = [];
  for (let i = 0; i < trace.edges.length; i++) {
    out.push({
      source: trace.nodes[i].id,
      target: trace.nodes[i + 1].id,
      isStay: trace.edges[i].is_stay,
    });
  }
  return out;
}
