/** Typed client for the gateway's JSON API. All reasoning happens
 * server-side; this module only shuttles data. */

export interface GraphNode {
  id: string;
  kind: "root" | "feature" | "query";
  feature_kind: string | null;
  is_key: boolean;
}

export interface GraphEdge {
  source: string;
  relation: string;
  target: string;
}

export interface GraphData {
  format: string;
  root: string;
  start_kind: string;
  nodes: GraphNode[];
  edges: GraphEdge[];
}

export interface TraceAction {
  relation: string;
  target: string;
  is_stay: boolean;
  prob: number;
}

export interface TraceStep {
  top_actions: TraceAction[];
}

export interface Trace {
  format: string;
  turn: number;
  nodes: GraphNode[];
  edges: { relation: string; is_stay: boolean }[];
  steps: TraceStep[];
  terminal_kind: string;
  chosen: boolean;
  score: number;
  response: string;
}

export interface MessageReply {
  response: string;
  trace: Trace | null;
  phase: string;
}

export class GatewayError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "GatewayError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class Gateway {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path, init);
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const body = await res.json();
        detail = body.detail ?? body.error ?? detail;
      } catch {
        /* non-JSON error body; keep the status text */
      }
      throw new GatewayError(res.status, detail);
    }
    return (await res.json()) as T;
  }

  async health(): Promise<{ version: string; config_digest: string }> {
    return this.request("/api/health");
  }

  async graph(): Promise<GraphData> {
    return this.request("/api/graph");
  }

  async createSession(): Promise<string> {
    const body = await this.request<{ session_id: string }>("/api/session", {
      method: "POST",
    });
    return body.session_id;
  }

  async sendMessage(sessionId: string, text: string): Promise<MessageReply> {
    return this.request(`/api/session/${sessionId}/message`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text }),
    });
  }

  async traces(sessionId: string): Promise<Trace[]> {
    const body = await this.request<{ traces: Trace[] }>(
      `/api/session/${sessionId}/traces`,
    );
    return body.traces;
  }
}
