"""HTTP service: endpoint contracts (status codes, payload shapes), trace
export, snapshot loading/cross-checks, and seeded per-session reproducibility."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from intentdial import encoder as E
from intentdial import gateway as GW
from intentdial import graph as G
from intentdial import reasoner as R
from intentdial import tensor as T
from intentdial import training as TR
from intentdial.graph import GeneratorSpec, synthesize_graph


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    g = synthesize_graph(
        GeneratorSpec(kinds=["card", "issue"], features_per_kind=2, n_queries=3), seed=3
    )
    cfg = TR.TrainConfig(d_token=8, d_gru=4, d_entity=8, d_relation=8, d_history=8, d_mlp=8)
    samples = TR.synthesize_dialogues(g, 10, (1, 2), seed=5)
    vocab = TR.build_vocabulary(samples)
    store = TR.init_params(g, vocab, cfg, np.random.default_rng(0))
    root = tmp_path_factory.mktemp("bundle")
    graph_path = str(root / "graph.json")
    ckpt_path = str(root / "model.ckpt")
    vocab_path = str(root / "vocab.json")
    G.save(g, graph_path)
    T.save_checkpoint(store, ckpt_path, seed=0, hyper=cfg.hyper_dict())
    vocab.save(vocab_path)
    return graph_path, ckpt_path, vocab_path


@pytest.fixture(scope="module")
def snapshot(bundle):
    return GW.load_snapshot(*bundle)


def make_client(snapshot, seed=0):
    return TestClient(GW.create_app(snapshot, global_seed=seed))


# -- snapshot loading ----------------------------------------------------------


def test_load_snapshot_restores_configs(snapshot):
    assert snapshot.enc_cfg.d_gru == 4
    assert snapshot.pol_cfg.d_history == 8
    assert len(snapshot.digest) == 64


def test_load_snapshot_rejects_mismatched_graph(bundle, tmp_path):
    graph_path, ckpt_path, vocab_path = bundle
    other = synthesize_graph(
        GeneratorSpec(kinds=["card", "issue"], features_per_kind=3, n_queries=4), seed=9
    )
    other_path = str(tmp_path / "other.json")
    G.save(other, other_path)
    with pytest.raises(GW.IncompatibleCheckpoint):
        GW.load_snapshot(other_path, ckpt_path, vocab_path)


# -- endpoint contracts --------------------------------------------------------


def test_health_reports_digest(snapshot):
    client = make_client(snapshot)
    body = client.get("/api/health").json()
    assert body["config_digest"] == snapshot.digest


def test_graph_export_shape(snapshot):
    client = make_client(snapshot)
    body = client.get("/api/graph").json()
    assert body["format"] == "intent-graph/1"
    ids = {n["id"] for n in body["nodes"]}
    assert body["root"] in ids
    for e in body["edges"]:
        assert e["source"] in ids and e["target"] in ids


def test_session_ids_are_sequential(snapshot):
    client = make_client(snapshot)
    sids = [client.post("/api/session").json()["session_id"] for _ in range(3)]
    assert sids == ["s1", "s2", "s3"]


def test_unknown_session_404(snapshot):
    client = make_client(snapshot)
    assert client.post("/api/session/nope/message", json={"text": "hi"}).status_code == 404
    assert client.get("/api/session/nope/traces").status_code == 404


def test_empty_or_missing_text_400(snapshot):
    client = make_client(snapshot)
    sid = client.post("/api/session").json()["session_id"]
    assert client.post(f"/api/session/{sid}/message", json={"text": "!!!"}).status_code == 400
    assert client.post(f"/api/session/{sid}/message", json={}).status_code == 400
    assert client.post(f"/api/session/{sid}/message", json={"text": 3}).status_code == 400


def test_message_returns_trace_and_traces_accumulate(snapshot):
    client = make_client(snapshot)
    sid = client.post("/api/session").json()["session_id"]
    body = client.post(f"/api/session/{sid}/message", json={"text": "hello about card 0"}).json()
    assert body["phase"] in ("collecting", "awaiting_confirmation")
    trace = body["trace"]
    assert trace["format"] == GW.TRACE_FORMAT
    assert trace["turn"] == 1
    for step in trace["steps"]:
        probs = [a["prob"] for a in step["top_actions"]]
        assert probs == sorted(probs, reverse=True)
        assert len(probs) <= GW.TOP_K
    stored = client.get(f"/api/session/{sid}/traces").json()["traces"]
    assert stored == [trace]


def test_confirmation_turn_produces_no_trace(snapshot):
    client = make_client(snapshot)
    # drive some session into awaiting_confirmation by brute force over seeds
    for seed in range(50):
        c = make_client(snapshot, seed=seed)
        sid = c.post("/api/session").json()["session_id"]
        body = c.post(f"/api/session/{sid}/message", json={"text": "hello about card 0"}).json()
        if body["phase"] == "awaiting_confirmation":
            done = c.post(f"/api/session/{sid}/message", json={"text": "yes"}).json()
            assert done["phase"] == "handed_off"
            assert done["trace"] is None
            assert len(c.get(f"/api/session/{sid}/traces").json()["traces"]) == 1
            # a handed-off session refuses further turns
            assert (
                c.post(f"/api/session/{sid}/message", json={"text": "hello"}).status_code == 409
            )
            return
    pytest.skip("no seed reached confirmation with the untrained policy")


def test_identical_request_sequences_replay_identically(snapshot):
    script = ["hello about card 0", "card 1 issue 0", "more about issue 1"]

    def run():
        client = make_client(snapshot, seed=42)
        sid = client.post("/api/session").json()["session_id"]
        out = []
        for text in script:
            r = client.post(f"/api/session/{sid}/message", json={"text": text})
            if r.status_code != 200:
                out.append(("status", r.status_code))
            else:
                out.append(r.json())
        out.append(client.get(f"/api/session/{sid}/traces").json())
        return out

    assert run() == run()


def test_sessions_are_independent_streams(snapshot):
    client = make_client(snapshot)
    s1 = client.post("/api/session").json()["session_id"]
    s2 = client.post("/api/session").json()["session_id"]
    r1 = client.post(f"/api/session/{s1}/message", json={"text": "hello about card 0"}).json()
    r2 = client.post(f"/api/session/{s2}/message", json={"text": "hello about card 0"}).json()
    # same snapshot, same text, but distinct per-session seeds; responses are
    # well-formed either way
    assert r1["response"] and r2["response"]


# -- helpers -------------------------------------------------------------------


def test_session_rng_is_deterministic_per_session():
    a = GW.session_rng(7, "s1").integers(0, 1 << 30, 8)
    b = GW.session_rng(7, "s1").integers(0, 1 << 30, 8)
    c = GW.session_rng(7, "s2").integers(0, 1 << 30, 8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_build_trace_marks_key_terminals(snapshot):
    g = snapshot.graph
    key = next(
        e for e, n in g.nodes.items() if n.kind == "feature" and n.is_key
    )
    traj = R.Trajectory(entities=[g.root, key], steps=[])
    trace = GW.build_trace(g, traj, 1, "resp")
    assert trace["terminal_kind"] == "key"
