"""Build the shipped demo snapshot in data/demo/: a small credit-card
customer-service intent graph with single-word node ids (so user text
tokenizes onto the training vocabulary), a trained checkpoint, the
vocabulary, and response templates. Verifies the two scripted flows the
service contract requires before writing anything:

  Case 1: the full intent in one turn  -> confirm_query
  Case 2: partial intent, then the rest -> elicit_key, confirm_query
"""

import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

import numpy as np

from intentdial import dialogue as D
from intentdial import gateway as GW
from intentdial import graph as G
from intentdial import tensor as T
from intentdial import training as TR

OUT_DIR = os.path.join(os.path.dirname(__file__), "..", "data", "demo")

PRODUCTS = ["gold", "platinum", "student"]
ASPECTS = ["billing", "limit", "points"]
DEMANDS = ["waiver", "increase", "explain"]

# (product, aspect, demand, query id, confirm wording)
QUERIES = [
    ("gold", "billing", "waiver", "q_gold_fee_waiver", "how to waive the gold card annual fee"),
    ("gold", "limit", "increase", "q_gold_limit_up", "how to raise the gold card credit limit"),
    ("gold", "points", "explain", "q_gold_points", "how gold card reward points work"),
    ("platinum", "billing", "explain", "q_plat_billing", "how platinum card billing cycles work"),
    ("platinum", "limit", "increase", "q_plat_limit_up", "how to raise the platinum card credit limit"),
    ("platinum", "points", "waiver", "q_plat_points_fee", "how to waive platinum reward redemption fees"),
    ("student", "billing", "waiver", "q_stud_fee_waiver", "how to waive the student card annual fee"),
    ("student", "limit", "explain", "q_stud_limit", "how the student card credit limit is set"),
]

FILLERS = ["i", "need", "help", "with", "my", "the", "please", "about", "card", "question"]

CASE_1 = ["please help with my gold card billing waiver"]
CASE_2 = ["i have a gold card question", "about billing waiver please"]


def build_graph() -> G.IntentGraph:
    nodes = {"root": G.Node(kind="root")}
    for p in PRODUCTS:
        nodes[p] = G.Node(kind="feature", feature_kind="product", is_key=True)
    for a in ASPECTS:
        nodes[a] = G.Node(kind="feature", feature_kind="aspect", is_key=True)
    for d in DEMANDS:
        nodes[d] = G.Node(kind="feature", feature_kind="demand", is_key=True)
    triples = set()
    meta = {}
    for p, a, d, qid, text in QUERIES:
        nodes[qid] = G.Node(kind="query")
        triples |= {
            ("root", "has_product", p),
            (p, "has_aspect", a),
            (a, "has_demand", d),
            (d, "asks", qid),
        }
        meta[qid] = G.QueryMeta(query_text=text, key_nodes=frozenset({p, a, d}))
    return G.build(nodes, triples, "root", "product", meta)


def scripted_kinds(snapshot, script, seed=0):
    manager = D.DialogueManager(
        snapshot.graph, snapshot.store, snapshot.vocab, snapshot.enc_cfg,
        snapshot.pol_cfg, snapshot.templates, k_rollouts=snapshot.k_rollouts,
    )
    session = D.Session(session_id="check", rng=GW.session_rng(seed, "check"))
    return [manager.handle(session, text).terminal_kind for text in script]


def main():
    t0 = time.time()
    g = build_graph()
    samples = TR.synthesize_dialogues(g, 1200, (1, 3), seed=7, fillers=FILLERS)
    val = TR.synthesize_dialogues(g, 150, (1, 3), seed=8, fillers=FILLERS)
    cfg = TR.TrainConfig(
        epochs=20, seed=0, target_accuracy=0.95, target_intermediate=0.85
    )
    store, vocab, report = TR.train(
        samples, g, cfg, val_samples=val,
        log=lambda m: print(f"[{time.time()-t0:5.0f}s] {m}", flush=True),
    )
    print(f"trained: final {report.final_accuracy:.3f} mid {report.intermediate_accuracy:.3f}")

    os.makedirs(OUT_DIR, exist_ok=True)
    graph_path = os.path.join(OUT_DIR, "graph.json")
    ckpt_path = os.path.join(OUT_DIR, "model.ckpt")
    vocab_path = os.path.join(OUT_DIR, "vocab.json")
    templates_path = os.path.join(OUT_DIR, "templates.json")
    G.save(g, graph_path)
    T.save_checkpoint(store, ckpt_path, seed=cfg.seed, hyper=cfg.hyper_dict())
    vocab.save(vocab_path)
    D.save_templates(D.DEFAULT_TEMPLATES, templates_path)

    snapshot = GW.load_snapshot(graph_path, ckpt_path, vocab_path, templates_path)
    case1 = scripted_kinds(snapshot, CASE_1)
    case2 = scripted_kinds(snapshot, CASE_2)
    print(f"case 1 terminal kinds: {case1}")
    print(f"case 2 terminal kinds: {case2}")
    ok = case1 == ["query"] and case2 == ["key", "query"]
    if not ok:
        print("scripted flows FAILED; not shipping this snapshot")
        return 1
    print(f"demo snapshot written to {OUT_DIR} ({time.time()-t0:.0f}s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
