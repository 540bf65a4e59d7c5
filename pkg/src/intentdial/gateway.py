"""HTTP service and snapshot plumbing: session endpoints for the chat UI,
graph and per-turn reasoning-trace export for the monitoring view."""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field

import numpy as np

from . import dialogue as D
from . import encoder as E
from . import reasoner as R
from . import tensor as T
from . import graph as G

TRACE_FORMAT = "trace/1"
TOP_K = 5


class IncompatibleCheckpoint(ValueError):
    pass


def build_trace(g: G.IntentGraph, traj: R.Trajectory, turn_index: int, response: str, chosen: bool = True) -> dict:
    """Exported per-turn reasoning path: nodes, edges, and per-step top-k
    action probabilities."""
    nodes = []
    for e in traj.entities:
        n = g.nodes[e]
        nodes.append({"id": e, "kind": n.kind, "feature_kind": n.feature_kind, "is_key": n.is_key})
    edges = []
    steps = []
    for step in traj.steps:
        edges.append({"relation": step.action.relation, "is_stay": step.action.is_stay})
        order = np.argsort(-step.probs)[:TOP_K]
        steps.append(
            {
                "top_actions": [
                    {
                        "relation": step.actions[i].relation,
                        "target": step.actions[i].target,
                        "is_stay": step.actions[i].is_stay,
                        "prob": float(step.probs[i]),
                    }
                    for i in order
                ]
            }
        )
    terminal = g.nodes[traj.terminal]
    terminal_kind = "key" if terminal.kind == "feature" and terminal.is_key else terminal.kind
    return {
        "format": TRACE_FORMAT,
        "turn": turn_index,
        "nodes": nodes,
        "edges": edges,
        "steps": steps,
        "terminal_kind": terminal_kind,
        "chosen": chosen,
        "score": traj.score,
        "response": response,
    }


def graph_export(g: G.IntentGraph) -> dict:
    nodes = []
    for e in sorted(g.nodes):
        n = g.nodes[e]
        nodes.append({"id": e, "kind": n.kind, "feature_kind": n.feature_kind, "is_key": n.is_key})
    edges = [{"source": s, "relation": r, "target": o} for s, r, o in sorted(g.triples)]
    return {"format": "intent-graph/1", "root": g.root, "start_kind": g.start_kind, "nodes": nodes, "edges": edges}


@dataclass
class EngineSnapshot:
    graph: G.IntentGraph
    store: T.ParamStore  # frozen
    vocab: E.Vocabulary
    templates: dict[str, D.ResponseTemplate]
    enc_cfg: E.EncoderConfig
    pol_cfg: R.PolicyConfig
    k_rollouts: int
    digest: str


def _digest_files(paths: list[str]) -> str:
    h = hashlib.sha256()
    for p in paths:
        with open(p, "rb") as f:
            h.update(hashlib.sha256(f.read()).digest())
    return h.hexdigest()


def load_snapshot(
    graph_path: str,
    checkpoint_path: str,
    vocab_path: str,
    templates_path: str | None = None,
) -> EngineSnapshot:
    """Load and cross-check the full serving bundle. Embedding table sizes
    must match the graph; the template set must cover every response kind."""
    g = G.load(graph_path)
    store, _seed, hyper = T.load_checkpoint(checkpoint_path)
    vocab = E.Vocabulary.load(vocab_path)
    templates = (
        D.load_templates(templates_path)
        if templates_path
        else D.validate_templates(D.DEFAULT_TEMPLATES)
    )
    n_e = store["pol/entity_emb"].data.shape[0]
    n_r = store["pol/relation_emb"].data.shape[0]
    if n_e != len(g.entity_index):
        raise IncompatibleCheckpoint(
            f"checkpoint has {n_e} entity embeddings, graph has {len(g.entity_index)} entities"
        )
    if n_r != len(g.relation_index) + 1:
        raise IncompatibleCheckpoint(
            f"checkpoint has {n_r} relation embeddings, graph needs {len(g.relation_index) + 1}"
        )
    if store["enc/token_emb"].data.shape[0] != len(vocab):
        raise IncompatibleCheckpoint("checkpoint token table does not match the vocabulary")
    enc_cfg = E.EncoderConfig(
        d_token=int(hyper.get("d_token", 32)), d_gru=int(hyper.get("d_gru", 16))
    )
    pol_cfg = R.PolicyConfig(
        d_entity=int(hyper.get("d_entity", 32)),
        d_relation=int(hyper.get("d_relation", 32)),
        d_history=int(hyper.get("d_history", 64)),
        d_mlp=int(hyper.get("d_mlp", 64)),
        d_ctx=2 * int(hyper.get("d_gru", 16)),
        horizon=int(hyper.get("horizon", 5)),
    )
    paths = [graph_path, checkpoint_path, vocab_path]
    if templates_path:
        paths.append(templates_path)
    return EngineSnapshot(
        graph=g,
        store=store.snapshot(),
        vocab=vocab,
        templates=templates,
        enc_cfg=enc_cfg,
        pol_cfg=pol_cfg,
        k_rollouts=int(hyper.get("eval_rollouts", 20)),
        digest=_digest_files(paths),
    )


def session_rng(global_seed: int, session_id: str) -> np.random.Generator:
    material = f"{global_seed}:{session_id}".encode("utf-8")
    seed = int.from_bytes(hashlib.sha256(material).digest()[:8], "little")
    return np.random.default_rng(seed)


@dataclass
class _SessionSlot:
    session: D.Session
    lock: threading.Lock = field(default_factory=threading.Lock)


def create_app(snapshot: EngineSnapshot, global_seed: int = 0, static_dir: str | None = None, version: str = "0.1.0"):
    from fastapi import FastAPI, Request
    from fastapi.exceptions import RequestValidationError
    from fastapi.responses import JSONResponse

    app = FastAPI(title="intentdial", version=version)
    manager = D.DialogueManager(
        snapshot.graph,
        snapshot.store,
        snapshot.vocab,
        snapshot.enc_cfg,
        snapshot.pol_cfg,
        snapshot.templates,
        k_rollouts=snapshot.k_rollouts,
    )
    sessions: dict[str, _SessionSlot] = {}
    counter = {"n": 0}
    registry_lock = threading.Lock()

    @app.exception_handler(RequestValidationError)
    async def bad_request(_req: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": "bad request"})

    @app.get("/api/health")
    def health():
        return {"version": version, "config_digest": snapshot.digest}

    @app.get("/api/graph")
    def graph():
        return graph_export(snapshot.graph)

    @app.post("/api/session", status_code=200)
    def new_session():
        with registry_lock:
            counter["n"] += 1
            sid = f"s{counter['n']}"
            sessions[sid] = _SessionSlot(
                D.Session(session_id=sid, rng=session_rng(global_seed, sid))
            )
        return {"session_id": sid}

    def _slot(sid: str) -> _SessionSlot:
        slot = sessions.get(sid)
        if slot is None:
            from fastapi import HTTPException

            raise HTTPException(status_code=404, detail="unknown session")
        return slot

    @app.post("/api/session/{sid}/message")
    def message(sid: str, body: dict):
        from fastapi import HTTPException

        slot = _slot(sid)
        text = body.get("text") if isinstance(body, dict) else None
        if not isinstance(text, str) or not E.split_text(text):
            raise HTTPException(status_code=400, detail="empty text")
        if not slot.lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="turn already in flight")
        try:
            outcome = manager.handle(slot.session, text)
        except D.SessionClosed:
            raise HTTPException(status_code=409, detail="session closed")
        finally:
            slot.lock.release()
        trace = None
        if outcome.trajectory is not None:
            trace = build_trace(
                snapshot.graph,
                outcome.trajectory,
                turn_index=len(slot.session.traces) + 1,
                response=outcome.response,
            )
            slot.session.traces.append(trace)
        return {"response": outcome.response, "trace": trace, "phase": outcome.phase}

    @app.get("/api/session/{sid}/traces")
    def traces(sid: str):
        return {"traces": _slot(sid).session.traces}

    if static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
