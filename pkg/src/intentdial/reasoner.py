"""Graph-walk environment and policy network.

An episode walks the intent graph from the root, one hop per step, with the
action distribution conditioned on the recurrent path history, the current
entity's embedding, and the turn's context vector. Query nodes are
absorbing; a virtual STAY self-loop lets fixed-horizon walks settle on key
nodes without adding graph edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .graph import IntentGraph, UnknownEntity

STAY_RELATION = "__stay__"


class TerminalState(ValueError):
    pass


class TooLarge(RuntimeError):
    pass


@dataclass(frozen=True)
class Action:
    relation: str
    target: str
    is_stay: bool = False


@dataclass
class ActionSpace:
    actions: list[Action]
    emb: T.Tensor  # one row per action: [relation embedding ; target entity embedding]

    def __len__(self):
        return len(self.actions)


@dataclass
class Step:
    action: Action
    log_prob: T.Tensor
    probs: np.ndarray  # full distribution at this step (untracked copy)
    actions: list[Action]  # the action space the distribution ranges over
    node: object | None = None  # decision-tree node, for shared entropy terms


@dataclass
class Trajectory:
    entities: list[str]  # e_r, e_1, ..., e_T
    steps: list[Step]
    rewards: list[float] = field(default_factory=list)
    ret: float = 0.0

    @property
    def terminal(self) -> str:
        return self.entities[-1]

    @property
    def score(self) -> float:
        return float(sum(s.log_prob.data for s in self.steps))

    @property
    def actions(self) -> list[Action]:
        return [s.action for s in self.steps]


@dataclass
class PolicyConfig:
    d_entity: int = 32
    d_relation: int = 32
    d_history: int = 64
    d_mlp: int = 64
    d_ctx: int = 32
    horizon: int = 5
    n_rollouts: int = 20

    @property
    def d_action(self) -> int:
        return self.d_relation + self.d_entity


def init_policy_params(store: T.ParamStore, g: IntentGraph, cfg: PolicyConfig, rng: np.random.Generator) -> None:
    n_e = len(g.entity_index)
    n_r = len(g.relation_index) + 1  # trailing slot is the STAY relation
    store.add("pol/entity_emb", T.init_embedding(rng, n_e, cfg.d_entity))
    store.add("pol/relation_emb", T.init_embedding(rng, n_r, cfg.d_relation))
    store.add("pol/start_emb", T.init_embedding(rng, 1, cfg.d_action)[0])
    T.init_lstm_params(store, "pol/hist_lstm", cfg.d_action, cfg.d_history, rng)
    d_in = cfg.d_history + cfg.d_entity + cfg.d_ctx
    store.add("pol/w1", T.init_weight(rng, cfg.d_mlp, d_in))
    store.add("pol/w2", T.init_weight(rng, cfg.d_action, cfg.d_mlp))


def relation_id(g: IntentGraph, relation: str) -> int:
    if relation == STAY_RELATION:
        return len(g.relation_index)
    return g.relation_index[relation]


class SpaceCache:
    """Per-entity action spaces and embedding rows, valid only while the
    embedding tables are frozen (one optimizer step or one inference call).
    Sharing them lets every turn of a batch reuse the same tape nodes."""

    __slots__ = ("spaces", "ent_rows")

    def __init__(self):
        self.spaces: dict[str, ActionSpace] = {}
        self.ent_rows: dict[str, T.Tensor] = {}


def action_space(g: IntentGraph, e: str, store: T.ParamStore, cache: SpaceCache | None = None) -> ActionSpace:
    """Graph out-edges of ``e`` plus STAY when ``e`` is not a query node.
    Empty exactly at query nodes (episode terminates)."""
    if cache is not None:
        hit = cache.spaces.get(e)
        if hit is not None:
            return hit
    node = g.node(e)
    actions = [Action(r, o) for r, o in g.out_edges(e)]
    if node.kind != "query":
        actions.append(Action(STAY_RELATION, e, is_stay=True))
    if not actions:
        space = ActionSpace(actions=[], emb=T.Tensor(np.zeros((0, 1))))
    else:
        rel_ids = [relation_id(g, a.relation) for a in actions]
        ent_ids = [g.entity_index[a.target] for a in actions]
        emb = T.concat_cols(
            T.take_rows(store["pol/relation_emb"], rel_ids),
            T.take_rows(store["pol/entity_emb"], ent_ids),
        )
        space = ActionSpace(actions=actions, emb=emb)
    if cache is not None:
        cache.spaces[e] = space
    return space


def action_embedding(g: IntentGraph, a: Action, store: T.ParamStore) -> T.Tensor:
    return T.concat(
        [
            T.narrow_row(T.take_rows(store["pol/relation_emb"], [relation_id(g, a.relation)])),
            T.narrow_row(T.take_rows(store["pol/entity_emb"], [g.entity_index[a.target]])),
        ]
    )


def initial_history(store: T.ParamStore, cfg: PolicyConfig) -> tuple[T.Tensor, T.Tensor, T.Tensor]:
    """(h_0, c_0, a_0): zero LSTM state and the learned START action input."""
    zeros = T.Tensor(np.zeros(cfg.d_history))
    return zeros, T.Tensor(np.zeros(cfg.d_history)), store["pol/start_emb"]


def encode_history(a_prev_emb: T.Tensor, state: tuple[T.Tensor, T.Tensor], store: T.ParamStore) -> tuple[T.Tensor, T.Tensor]:
    return T.lstm_cell(a_prev_emb, state, T.cell_params(store, "pol/hist_lstm"))


def policy_distribution(
    h_t: T.Tensor,
    e_t: str,
    c_i: T.Tensor,
    space: ActionSpace,
    g: IntentGraph,
    store: T.ParamStore,
    cache: SpaceCache | None = None,
) -> T.Tensor:
    if len(space) == 0:
        raise TerminalState(e_t)
    ent = cache.ent_rows.get(e_t) if cache is not None else None
    if ent is None:
        ent = T.narrow_row(T.take_rows(store["pol/entity_emb"], [g.entity_index[e_t]]))
        if cache is not None:
            cache.ent_rows[e_t] = ent
    x = T.concat([h_t, ent, c_i])
    hid = T.relu(T.matmul(store["pol/w1"], x))
    proj = T.matmul(store["pol/w2"], hid)
    logits = T.matmul(space.emb, proj)
    return T.masked_softmax(logits, np.ones(len(space), dtype=bool))


class _PrefixNode:
    """Policy state at one decision-tree prefix of a turn. Distributions at
    a given prefix are identical across rollouts of the same turn, so they
    are computed once and shared (the tape handles fan-out gradients)."""

    __slots__ = ("entity", "h", "c", "space", "dist", "children", "log_probs", "action_embs", "entropy")

    def __init__(self, entity, h, c, space, dist):
        self.entity = entity
        self.h = h
        self.c = c
        self.space = space
        self.dist = dist
        self.children: dict[int, _PrefixNode | None] = {}
        self.log_probs: dict[int, T.Tensor] = {}
        self.action_embs: dict[int, T.Tensor] = {}
        self.entropy: T.Tensor | None = None


class RolloutCache:
    """Shared decision tree for all rollouts of one (c_i, params) pair."""

    def __init__(self):
        self.root: _PrefixNode | None = None


def _expand(
    g: IntentGraph, e: str, h_prev, c_prev, a_emb, c_i, store: T.ParamStore, spaces: SpaceCache | None = None
) -> _PrefixNode:
    h, c = encode_history(a_emb, (h_prev, c_prev), store)
    space = action_space(g, e, store, spaces)
    dist = policy_distribution(h, e, c_i, space, g, store, spaces) if len(space) else None
    return _PrefixNode(e, h, c, space, dist)


def rollout(
    g: IntentGraph,
    c_i: T.Tensor,
    store: T.ParamStore,
    cfg: PolicyConfig,
    rng: np.random.Generator | None,
    greedy: bool = False,
    cache: RolloutCache | None = None,
    spaces: SpaceCache | None = None,
) -> Trajectory:
    """Sample (or greedily decode) one episode of at most ``cfg.horizon``
    steps starting at the root; stops early at a query node. A cache may be
    shared by rollouts over the same context and frozen parameters."""
    cache = cache or RolloutCache()
    if cache.root is None:
        h0 = T.Tensor(np.zeros(cfg.d_history))
        c0 = T.Tensor(np.zeros(cfg.d_history))
        cache.root = _expand(g, g.root, h0, c0, store["pol/start_emb"], c_i, store, spaces)
    node = cache.root
    entities = [g.root]
    steps: list[Step] = []
    for depth in range(cfg.horizon):
        if len(node.space) == 0:
            break
        probs = node.dist.data
        if greedy:
            idx = int(np.argmax(probs))
        else:
            idx = int(rng.choice(len(probs), p=probs / probs.sum()))
        action = node.space.actions[idx]
        logp = node.log_probs.get(idx)
        if logp is None:
            logp = T.log(T.take(node.dist, idx))
            node.log_probs[idx] = logp
        steps.append(Step(action=action, log_prob=logp, probs=probs, actions=node.space.actions, node=node))
        entities.append(action.target)
        if depth == cfg.horizon - 1:
            break
        child = node.children.get(idx)
        if child is None:
            a_emb = node.action_embs.get(idx)
            if a_emb is None:
                a_emb = T.narrow_row(T.take_rows(node.space.emb, [idx]))
                node.action_embs[idx] = a_emb
            child = _expand(g, action.target, node.h, node.c, a_emb, c_i, store, spaces)
            node.children[idx] = child
        node = child
    return Trajectory(entities=entities, steps=steps)


def step_entropy(step: Step) -> T.Tensor:
    """Entropy of the step's action distribution, shared across rollouts
    that pass through the same decision-tree node."""
    node: _PrefixNode = step.node
    if node.entropy is None:
        node.entropy = T.entropy(node.dist)
    return node.entropy


def _terminal_rank(g: IntentGraph, e: str) -> int:
    node = g.nodes[e]
    if node.kind == "query":
        return 0
    if node.kind == "feature" and node.is_key:
        return 1
    return 2


def _rank_key(g: IntentGraph, t: Trajectory) -> tuple:
    return (_terminal_rank(g, t.terminal), -t.score, t.terminal)


def infer_path(
    g: IntentGraph,
    c_i: T.Tensor,
    store: T.ParamStore,
    cfg: PolicyConfig,
    k: int,
    rng: np.random.Generator,
) -> tuple[Trajectory, list[Trajectory]]:
    """K sampled rollouts plus one greedy decode; the chosen trajectory
    prefers query-terminal candidates, then key-terminal, then score, with
    lexicographic terminal-id tie-break."""
    cache = RolloutCache()
    spaces = SpaceCache()
    candidates = [rollout(g, c_i, store, cfg, rng, cache=cache, spaces=spaces) for _ in range(k)]
    candidates.append(rollout(g, c_i, store, cfg, None, greedy=True, cache=cache, spaces=spaces))
    chosen = min(candidates, key=lambda t: _rank_key(g, t))
    return chosen, candidates


def exhaustive_best_path(
    g: IntentGraph,
    c_i: T.Tensor,
    store: T.ParamStore,
    cfg: PolicyConfig,
    max_paths: int = 100_000,
    max_score_out: list[float] | None = None,
) -> Trajectory:
    """Enumerate every legal episode (terminating at a query node or after
    exactly ``cfg.horizon`` steps), score by summed log-probabilities under
    the frozen policy, and select with the same preference order as
    ``infer_path``. Test oracle; exponential in the horizon.

    If ``max_score_out`` is given, the maximum raw log-probability score over
    the full enumeration (ignoring the terminal-kind preference) is appended
    to it — any single decode, greedy included, is one candidate of the
    enumeration and therefore cannot exceed this bound."""
    best: Trajectory | None = None
    best_key: tuple | None = None
    max_score = -np.inf
    count = 0

    def visit(e: str, h: T.Tensor, c: T.Tensor, a_emb: T.Tensor, entities: list[str], steps: list[Step], depth: int):
        nonlocal best, best_key, count
        h, c = encode_history(a_emb, (h, c), store)
        space = action_space(g, e, store)
        terminal = len(space) == 0 or depth == cfg.horizon - 1
        if len(space) == 0:
            _finish(entities, steps)
            return
        dist = policy_distribution(h, e, c_i, space, g, store)
        for idx, action in enumerate(space.actions):
            step = Step(
                action=action,
                log_prob=T.log(T.take(dist, idx)),
                probs=dist.data.copy(),
                actions=space.actions,
            )
            nxt = action.target
            if depth == cfg.horizon - 1:
                _finish(entities + [nxt], steps + [step])
            else:
                visit(nxt, h, c, T.narrow_row(T.take_rows(space.emb, [idx])), entities + [nxt], steps + [step], depth + 1)

    def _finish(entities: list[str], steps: list[Step]):
        nonlocal best, best_key, max_score, count
        count += 1
        if count > max_paths:
            raise TooLarge(f"more than {max_paths} paths")
        t = Trajectory(entities=entities, steps=steps)
        max_score = max(max_score, t.score)
        key = _rank_key(g, t)
        if best_key is None or key < best_key:
            best, best_key = t, key

    h0, c0, a0 = initial_history(store, cfg)
    visit(g.root, h0, c0, a0, [g.root], [], 0)
    assert best is not None
    if max_score_out is not None:
        max_score_out.append(max_score)
    return best
