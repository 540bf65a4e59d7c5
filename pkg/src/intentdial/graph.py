"""Typed directed intent graph: root, feature (optionally key), and query
nodes. Queries are absorbing (out-degree 0); the root points only at key
nodes of the configured start kind. Immutable after build."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class GraphError(ValueError):
    pass


class QueryOutEdge(GraphError):
    pass


class BadRootEdge(GraphError):
    pass


class RootInEdge(GraphError):
    pass


class DanglingEndpoint(GraphError):
    pass


class DuplicateRoot(GraphError):
    pass


class MissingQueryMeta(GraphError):
    pass


class UnknownEntity(KeyError):
    pass


class NotAQuery(GraphError):
    pass


class ParseError(GraphError):
    pass


class InvalidSpec(GraphError):
    pass


@dataclass(frozen=True)
class Node:
    kind: str  # "root" | "feature" | "query"
    feature_kind: str | None = None
    is_key: bool = False


@dataclass(frozen=True)
class QueryMeta:
    query_text: str
    key_nodes: frozenset[str]
    template_id: str = "confirm_query"


@dataclass
class IntentGraph:
    nodes: dict[str, Node]
    triples: frozenset[tuple[str, str, str]]
    root: str
    start_kind: str
    query_meta: dict[str, QueryMeta]
    out_adj: dict[str, list[tuple[str, str]]] = field(default_factory=dict)
    entity_index: dict[str, int] = field(default_factory=dict)
    relation_index: dict[str, int] = field(default_factory=dict)

    @property
    def n_queries(self) -> int:
        return sum(1 for n in self.nodes.values() if n.kind == "query")

    @property
    def n_features(self) -> int:
        return sum(1 for n in self.nodes.values() if n.kind == "feature")

    def node(self, e: str) -> Node:
        if e not in self.nodes:
            raise UnknownEntity(e)
        return self.nodes[e]

    def out_edges(self, e: str) -> list[tuple[str, str]]:
        if e not in self.nodes:
            raise UnknownEntity(e)
        return self.out_adj.get(e, [])

    def key_nodes_of(self, q: str) -> frozenset[str]:
        if q not in self.nodes:
            raise UnknownEntity(q)
        if self.nodes[q].kind != "query":
            raise NotAQuery(q)
        return self.query_meta[q].key_nodes

    def key_kind_order(self) -> list[str]:
        """Start kind first, remaining feature kinds sorted."""
        kinds = sorted({n.feature_kind for n in self.nodes.values() if n.kind == "feature"})
        rest = [k for k in kinds if k != self.start_kind]
        return [self.start_kind] + rest

    def queries(self) -> list[str]:
        return sorted(e for e, n in self.nodes.items() if n.kind == "query")


def build(
    nodes: dict[str, Node],
    triples: set[tuple[str, str, str]],
    root: str,
    start_kind: str,
    query_meta: dict[str, QueryMeta],
) -> IntentGraph:
    roots = [e for e, n in nodes.items() if n.kind == "root"]
    if len(roots) != 1 or roots[0] != root:
        raise DuplicateRoot(f"expected exactly one root node {root!r}, found {roots}")
    for s, r, o in triples:
        if s not in nodes or o not in nodes:
            raise DanglingEndpoint(f"({s}, {r}, {o})")
        sk = nodes[s]
        if sk.kind == "query":
            raise QueryOutEdge(f"query node {s!r} has out-edge {r!r}")
        if o == root:
            raise RootInEdge(f"({s}, {r}, {o})")
        if s == root:
            tgt = nodes[o]
            if tgt.kind != "feature" or not tgt.is_key or tgt.feature_kind != start_kind:
                raise BadRootEdge(f"root edge to {o!r} (kind {tgt.kind})")
    for e, n in nodes.items():
        if n.kind == "query":
            meta = query_meta.get(e)
            if meta is None:
                raise MissingQueryMeta(e)
            if not meta.key_nodes:
                raise MissingQueryMeta(f"{e}: empty key node set")
            for k in meta.key_nodes:
                kn = nodes.get(k)
                if kn is None or kn.kind != "feature" or not kn.is_key:
                    raise MissingQueryMeta(f"{e}: {k!r} is not a key feature node")

    out_adj: dict[str, list[tuple[str, str]]] = {}
    for s, r, o in triples:
        out_adj.setdefault(s, []).append((r, o))
    for e in out_adj:
        out_adj[e].sort()

    entity_index = {e: i for i, e in enumerate(sorted(nodes))}
    relation_index = {r: i for i, r in enumerate(sorted({t[1] for t in triples}))}
    return IntentGraph(
        nodes=dict(nodes),
        triples=frozenset(triples),
        root=root,
        start_kind=start_kind,
        query_meta=dict(query_meta),
        out_adj=out_adj,
        entity_index=entity_index,
        relation_index=relation_index,
    )


# ---------------------------------------------------------------------------
# serialization ("intent-graph/1")


def to_dict(g: IntentGraph) -> dict:
    nodes = []
    for e in sorted(g.nodes):
        n = g.nodes[e]
        entry: dict = {"id": e, "kind": n.kind}
        if n.kind == "feature":
            entry["feature_kind"] = n.feature_kind
            entry["is_key"] = n.is_key
        nodes.append(entry)
    queries = [
        {
            "id": q,
            "text": g.query_meta[q].query_text,
            "key_nodes": sorted(g.query_meta[q].key_nodes),
            "template_id": g.query_meta[q].template_id,
        }
        for q in sorted(g.query_meta)
    ]
    return {
        "format": "intent-graph/1",
        "start_kind": g.start_kind,
        "root": g.root,
        "nodes": nodes,
        "triples": sorted([list(t) for t in g.triples]),
        "queries": queries,
    }


def from_dict(d: dict) -> IntentGraph:
    try:
        if d["format"] != "intent-graph/1":
            raise ParseError(f"unknown format {d.get('format')!r}")
        start_kind = d["start_kind"]
        root = d["root"]
        nodes = {}
        for entry in d["nodes"]:
            kind = entry["kind"]
            if kind not in ("root", "feature", "query"):
                raise ParseError(f"bad node kind {kind!r}")
            nodes[entry["id"]] = Node(
                kind=kind,
                feature_kind=entry.get("feature_kind"),
                is_key=bool(entry.get("is_key", False)),
            )
        triples = {tuple(t) for t in d["triples"]}
        if any(len(t) != 3 for t in triples):
            raise ParseError("triples must be [s, r, o]")
        query_meta = {
            q["id"]: QueryMeta(
                query_text=q["text"],
                key_nodes=frozenset(q["key_nodes"]),
                template_id=q.get("template_id", "confirm_query"),
            )
            for q in d["queries"]
        }
    except (KeyError, TypeError) as e:
        raise ParseError(str(e)) from e
    return build(nodes, triples, root, start_kind, query_meta)


def save(g: IntentGraph, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(to_dict(g), f, sort_keys=True, indent=2, ensure_ascii=False)
        f.write("\n")


def load(path: str) -> IntentGraph:
    with open(path, "r", encoding="utf-8") as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as e:
            raise ParseError(str(e)) from e
    return from_dict(d)


# ---------------------------------------------------------------------------
# synthetic generation


@dataclass
class GeneratorSpec:
    kinds: list[str]  # first entry is the start kind
    features_per_kind: int
    n_queries: int
    distractors_per_kind: int = 0

    def validate(self) -> None:
        if not self.kinds:
            raise InvalidSpec("need at least one kind")
        if len(set(self.kinds)) != len(self.kinds):
            raise InvalidSpec("duplicate kinds")
        if self.features_per_kind < 1 or self.n_queries < 0 or self.distractors_per_kind < 0:
            raise InvalidSpec("counts must be nonnegative (features_per_kind >= 1)")
        if self.n_queries > self.features_per_kind ** len(self.kinds):
            raise InvalidSpec("not enough distinct feature combinations for the queries")


def synthesize_graph(spec: GeneratorSpec, seed: int) -> IntentGraph:
    """One chain root -> key(kind_1) -> ... -> key(kind_m) -> query per
    query, with distinct key combinations, plus distractor branches."""
    spec.validate()
    rng = np.random.default_rng(seed)
    root = "root"
    nodes: dict[str, Node] = {root: Node(kind="root")}
    features: dict[str, list[str]] = {}
    for kind in spec.kinds:
        features[kind] = [f"{kind}_{i}" for i in range(spec.features_per_kind)]
        for fid in features[kind]:
            nodes[fid] = Node(kind="feature", feature_kind=kind, is_key=True)
        for j in range(spec.distractors_per_kind):
            did = f"{kind}_x{j}"
            nodes[did] = Node(kind="feature", feature_kind=kind, is_key=True)

    combos: set[tuple[int, ...]] = set()
    while len(combos) < spec.n_queries:
        combos.add(tuple(int(rng.integers(spec.features_per_kind)) for _ in spec.kinds))
    triples: set[tuple[str, str, str]] = set()
    query_meta: dict[str, QueryMeta] = {}
    for qi, combo in enumerate(sorted(combos)):
        qid = f"q_{qi}"
        chain = [features[kind][c] for kind, c in zip(spec.kinds, combo)]
        nodes[qid] = Node(kind="query")
        prev = root
        for kind, fid in zip(spec.kinds, chain):
            triples.add((prev, f"has_{kind}", fid))
            prev = fid
        triples.add((prev, "asks", qid))
        query_meta[qid] = QueryMeta(
            query_text="about " + " ".join(chain),
            key_nodes=frozenset(chain),
        )

    # distractor branches mirror the chain structure but never reach a query
    for ki, kind in enumerate(spec.kinds):
        for j in range(spec.distractors_per_kind):
            did = f"{kind}_x{j}"
            if ki == 0:
                triples.add((root, f"has_{kind}", did))
            else:
                prev_kind = spec.kinds[ki - 1]
                prev_pool = features[prev_kind] + [f"{prev_kind}_x{j}"]
                src = prev_pool[int(rng.integers(len(prev_pool)))]
                triples.add((src, f"has_{kind}", did))

    return build(nodes, triples, root, spec.kinds[0], query_meta)
