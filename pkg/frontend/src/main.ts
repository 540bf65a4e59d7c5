/** Wires the chat window and the graph monitor to the gateway API. */

import { Gateway, GatewayError, type GraphData } from "./api.js";
import { forceLayout, type Point } from "./layout.js";
import { drawGraph } from "./render.js";
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
  type ChatViewState,
  type GraphViewState,
} from "./state.js";

const LAYOUT_SEED = 42;

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function start(): Promise<void> {
  const gateway = new Gateway("");
  const log = byId<HTMLDivElement>("chat-log");
  const input = byId<HTMLInputElement>("chat-input");
  const sendBtn = byId<HTMLButtonElement>("chat-send");
  const phaseBadge = byId<HTMLSpanElement>("phase-badge");
  const errorBox = byId<HTMLDivElement>("chat-error");
  const turnSelect = byId<HTMLSelectElement>("turn-select");
  const tooltip = byId<HTMLDivElement>("tooltip");
  const svg = byId<HTMLElement>("graph-svg") as unknown as SVGSVGElement;

  let chat: ChatViewState = initialChat();
  let view: GraphViewState = initialGraphView();
  let graph: GraphData | null = null;
  let layout: Map<string, Point> = new Map();

  function renderChat(): void {
    log.replaceChildren();
    for (const msg of chat.messages) {
      const row = document.createElement("div");
      row.className = `msg msg-${msg.role}`;
      row.textContent = msg.text;
      log.appendChild(row);
    }
    log.scrollTop = log.scrollHeight;
    phaseBadge.textContent = chat.phase;
    phaseBadge.dataset.phase = chat.phase;
    errorBox.textContent = chat.error ?? "";
    errorBox.hidden = chat.error === null;
    const blocked = chat.pending || chat.phase === "handed_off" || chat.phase === "closed";
    input.disabled = blocked;
    sendBtn.disabled = blocked || !canSend(chat, input.value);
  }

  function renderTurns(): void {
    turnSelect.replaceChildren();
    for (let i = 1; i <= view.traces.length; i++) {
      const option = document.createElement("option");
      option.value = String(i);
      option.textContent = `turn ${i}`;
      turnSelect.appendChild(option);
    }
    turnSelect.value = String(view.selectedTurn);
    turnSelect.disabled = view.traces.length === 0;
  }

  function renderGraphView(): void {
    if (!graph) return;
    const trace = selectedTrace(view);
    drawGraph(svg, graph, layout, {
      highlightNodes: highlightNodes(trace),
      highlightEdges: highlightEdges(trace),
      steps: trace?.steps ?? [],
      onStepHover: (text, x, y) => {
        if (text === null) {
          tooltip.hidden = true;
        } else {
          tooltip.textContent = text;
          tooltip.style.left = `${x + 16}px`;
          tooltip.style.top = `${y}px`;
          tooltip.hidden = false;
        }
      },
    });
  }

  function renderAll(): void {
    renderChat();
    renderTurns();
    renderGraphView();
  }

  async function send(): Promise<void> {
    const text = input.value;
    if (!canSend(chat, text)) return;
    chat = beginSend(chat, text, Date.now());
    input.value = "";
    renderAll();
    try {
      const reply = await gateway.sendMessage(chat.sessionId!, text);
      chat = applyReply(chat, reply, Date.now());
      if (reply.trace) view = addTrace(view, reply.trace);
    } catch (err) {
      const msg =
        err instanceof GatewayError ? `error ${err.status}: ${err.message}` : String(err);
      chat = applyError(chat, msg);
    }
    renderAll();
    input.focus();
  }

  sendBtn.addEventListener("click", () => void send());
  input.addEventListener("keydown", (e) => {
    if (e.key === "Enter") void send();
  });
  input.addEventListener("input", renderChat);
  turnSelect.addEventListener("change", () => {
    view = selectTurn(view, Number(turnSelect.value));
    renderAll();
  });

  try {
    graph = await gateway.graph();
    const ids = graph.nodes.map((n) => n.id);
    const pairs = graph.edges.map((e): [string, string] => [e.source, e.target]);
    const box = svg.getBoundingClientRect();
    layout = forceLayout(ids, pairs, {
      width: box.width || 640,
      height: box.height || 480,
      seed: LAYOUT_SEED,
    });
    chat = attachSession(chat, await gateway.createSession());
  } catch (err) {
    chat = applyError(chat, `failed to reach the gateway: ${String(err)}`);
  }
  renderAll();
}

void start();
