"""REINFORCE training over per-turn graph-walk episodes, with terminal and
key-node-shaped rewards, synthetic dialogue generation, and evaluation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensor as T
from . import encoder as E
from . import reasoner as R
from .graph import IntentGraph, UnknownEntity


class EmptyDataset(ValueError):
    pass


class NoQueries(ValueError):
    pass


@dataclass
class DialogueSample:
    turns: list[list[str]]  # token strings per turn
    turn_targets: list[str]  # entity id per turn; last one is the query
    query: str

    def to_json(self) -> str:
        return json.dumps(
            {"turns": self.turns, "turn_targets": self.turn_targets, "query": self.query},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "DialogueSample":
        d = json.loads(line)
        return cls(turns=d["turns"], turn_targets=d["turn_targets"], query=d["query"])


def save_dataset(samples: list[DialogueSample], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in samples:
            f.write(s.to_json() + "\n")


def load_dataset(path: str) -> list[DialogueSample]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(DialogueSample.from_json(line))
    return out


@dataclass
class RewardConfig:
    terminal_reward: float = 1.0
    miss_reward: float = 0.0
    key_bonus: float = 0.2

    def __post_init__(self):
        if self.terminal_reward <= self.miss_reward:
            raise ValueError("terminal_reward must exceed miss_reward")
        if self.key_bonus < 0:
            raise ValueError("key_bonus must be nonnegative")


def target_key_set(g: IntentGraph, target: str) -> frozenset[str]:
    """Key nodes that earn the shaping bonus for this target: the target
    query's key nodes, or (for a key-node target) the union over all
    queries whose key set contains it."""
    node = g.node(target)
    if node.kind == "query":
        return g.key_nodes_of(target)
    keys: set[str] = set()
    for q, meta in g.query_meta.items():
        if target in meta.key_nodes:
            keys |= meta.key_nodes
    return frozenset(keys)


def compute_rewards(traj: R.Trajectory, target: str, g: IntentGraph, cfg: RewardConfig) -> list[float]:
    """Per-step rewards: terminal hit/miss at the last step, plus a one-time
    key bonus at the first visit of each target key node. Mutates the
    trajectory's reward fields."""
    if target not in g.nodes:
        raise UnknownEntity(target)
    keys = target_key_set(g, target)
    n = len(traj.steps)
    rewards = [0.0] * n
    seen: set[str] = set()
    for t in range(n):
        arrived = traj.entities[t + 1]
        if arrived in keys and arrived not in seen:
            seen.add(arrived)
            rewards[t] += cfg.key_bonus
    if n > 0:
        rewards[-1] += cfg.terminal_reward if traj.terminal == target else cfg.miss_reward
    traj.rewards = rewards
    traj.ret = float(sum(rewards))
    return rewards


def returns_to_go(rewards: list[float]) -> list[float]:
    out = [0.0] * len(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc += rewards[t]
        out[t] = acc
    return out


@dataclass
class TrainConfig:
    learning_rate: float = 4e-3
    epochs: int = 10
    batch_size: int = 16
    n_rollouts: int = 20
    horizon: int = 5
    seed: int = 0
    d_entity: int = 32
    d_relation: int = 32
    d_token: int = 32
    d_gru: int = 32
    d_history: int = 64
    d_mlp: int = 64
    eval_every: int = 1
    eval_rollouts: int = 5
    baseline: str = "turn-mean"  # "turn-mean" | "moving" | "none"
    baseline_decay: float = 0.9
    entropy_weight: float = 0.1  # initial exploration bonus; collapses otherwise
    entropy_decay: float = 0.75  # per-epoch multiplier on the entropy bonus
    entropy_floor: float = 0.0001  # never anneal exploration below this
    clip_norm: float | None = 5.0  # global gradient-norm cap; None disables
    lr_decay: float = 0.85  # per-epoch multiplier; damps late-phase oscillation
    lr_floor: float = 5e-4
    mid_turn_weight: float = 1.0  # advantage multiplier for key-node-target turns; 1.0 recovers the plain surrogate
    target_accuracy: float | None = None  # stop early once reached on the val split
    target_intermediate: float | None = None  # optional extra early-stop bar for mid turns

    def __post_init__(self):
        for name in ("learning_rate", "batch_size", "n_rollouts", "horizon",
                     "d_entity", "d_relation", "d_token", "d_gru", "d_history", "d_mlp"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def encoder_config(self) -> E.EncoderConfig:
        return E.EncoderConfig(d_token=self.d_token, d_gru=self.d_gru)

    def policy_config(self) -> R.PolicyConfig:
        return R.PolicyConfig(
            d_entity=self.d_entity,
            d_relation=self.d_relation,
            d_history=self.d_history,
            d_mlp=self.d_mlp,
            d_ctx=2 * self.d_gru,
            horizon=self.horizon,
            n_rollouts=self.n_rollouts,
        )

    def hyper_dict(self) -> dict:
        return asdict(self)


@dataclass
class EvalReport:
    final_accuracy: float = 0.0
    intermediate_accuracy: float = 0.0
    mean_return: float = 0.0
    loss_trace: list[float] = field(default_factory=list)
    epochs_run: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def init_params(g: IntentGraph, vocab: E.Vocabulary, cfg: TrainConfig, rng: np.random.Generator) -> T.ParamStore:
    store = T.ParamStore()
    E.init_encoder_params(store, len(vocab), cfg.encoder_config(), rng)
    R.init_policy_params(store, g, cfg.policy_config(), rng)
    return store


def build_vocabulary(samples: list[DialogueSample]) -> E.Vocabulary:
    return E.Vocabulary.from_tokens(tok for s in samples for turn in s.turns for tok in turn)


def _turn_ids(sample: DialogueSample, vocab: E.Vocabulary) -> list[list[int]]:
    return [[vocab.id(tok) for tok in turn] or [vocab.unk_id] for turn in sample.turns]


def reinforce_step(
    batch: list[DialogueSample],
    store: T.ParamStore,
    vocab: E.Vocabulary,
    g: IntentGraph,
    cfg: TrainConfig,
    reward_cfg: RewardConfig,
    optimizer: T.Optimizer,
    rng: np.random.Generator,
    baseline: list[float] | None = None,
    entropy_weight: float | None = None,
    depth_ema: dict[tuple[str, int], float] | None = None,
) -> float:
    """One surrogate-loss gradient step on a batch. The loss is minus the
    mean over all collected steps of (advantage x log-prob), where the
    advantage is the return-to-go minus a variance-reducing baseline."""
    if depth_ema is None:
        depth_ema = {}
    enc_cfg = cfg.encoder_config()
    pol_cfg = cfg.policy_config()
    ent_w = cfg.entropy_weight if entropy_weight is None else entropy_weight
    terms: list[T.Tensor] = []
    coeffs: list[float] = []
    with T.Tape() as tape:
        spaces = R.SpaceCache()  # parameters are frozen for the whole batch
        for sample in batch:
            contexts = E.encode_context(_turn_ids(sample, vocab), store, enc_cfg)
            for c_i, target in zip(contexts, sample.turn_targets):
                # key-node-target turns (partial information) are outnumbered
                # by query-target turns; upweighting them teaches the policy
                # restraint on incomplete contexts
                turn_w = cfg.mid_turn_weight if g.nodes[target].kind != "query" else 1.0
                cache = R.RolloutCache()
                trajs = [
                    R.rollout(g, c_i, store, pol_cfg, rng, cache=cache, spaces=spaces)
                    for _ in range(cfg.n_rollouts)
                ]
                togos = []
                for traj in trajs:
                    compute_rewards(traj, target, g, reward_cfg)
                    togos.append(returns_to_go(traj.rewards))
                if cfg.baseline == "turn-mean":
                    # Per-depth mean of the return-to-go across this turn's
                    # rollouts; a whole-return mean would over-correct the
                    # later steps, whose remaining return is smaller. When a
                    # saturated policy makes every rollout identical, that mean
                    # zeroes the advantage and the turn can never be unlearned,
                    # so degenerate depths fall back to a cross-turn EMA of the
                    # return-to-go at the same depth. The fallback only ever
                    # lowers the advantage (a deterministic habit that beats
                    # the EMA keeps advantage zero rather than being sharpened
                    # further). The EMA is tracked per (target, depth) because
                    # achievable returns differ across targets.
                    depth = max(len(gt) for gt in togos)
                    base = [0.0] * depth
                    for t in range(depth):
                        vals = [gt[t] for gt in togos if len(gt) > t]
                        mean_v = float(np.mean(vals))
                        ema = depth_ema.get((target, t))
                        if len(set(vals)) == 1 and ema is not None:
                            base[t] = max(mean_v, ema)
                        else:
                            base[t] = mean_v
                        depth_ema[(target, t)] = (
                            mean_v if ema is None
                            else cfg.baseline_decay * ema + (1 - cfg.baseline_decay) * mean_v
                        )
                    adv = [[gt[t] - base[t] for t in range(len(gt))] for gt in togos]
                elif cfg.baseline == "moving":
                    b = baseline[0]
                    mean_ret = float(np.mean([t.ret for t in trajs]))
                    baseline[0] = cfg.baseline_decay * b + (1 - cfg.baseline_decay) * mean_ret
                    adv = [[g_t - b for g_t in gt] for gt in togos]
                else:
                    adv = togos
                for traj, a_t in zip(trajs, adv):
                    for step, a in zip(traj.steps, a_t):
                        terms.append(step.log_prob)
                        coeffs.append(a * turn_w)
                        if ent_w > 0.0:
                            terms.append(R.step_entropy(step))
                            coeffs.append(ent_w)
        if not terms:
            return 0.0
        weighted = [T.scale(lp, -c / len(terms)) for lp, c in zip(terms, coeffs)]
        loss = T.sum_list(weighted)
        T.backward(tape, loss)
    optimizer.step(store)
    return float(loss.data)


def evaluate(
    samples: list[DialogueSample],
    store: T.ParamStore,
    vocab: E.Vocabulary,
    g: IntentGraph,
    cfg: TrainConfig,
    k: int | None = None,
    seed: int = 1234,
) -> EvalReport:
    """Accuracy of inferred terminal entities: last turn against the target
    query, intermediate turns against any key node of the target query."""
    enc_cfg = cfg.encoder_config()
    pol_cfg = cfg.policy_config()
    frozen = store.snapshot()
    k = k if k is not None else cfg.eval_rollouts
    rng = np.random.default_rng(seed)
    final_hits = final_total = 0
    mid_hits = mid_total = 0
    returns = []
    reward_cfg = RewardConfig()
    for sample in samples:
        contexts = E.encode_context(_turn_ids(sample, vocab), frozen, enc_cfg)
        keys = g.key_nodes_of(sample.query)
        for i, (c_i, target) in enumerate(zip(contexts, sample.turn_targets)):
            last = i == len(contexts) - 1
            chosen, _ = R.infer_path(g, c_i, frozen, pol_cfg, k, rng)
            if last:
                final_total += 1
                final_hits += int(chosen.terminal == sample.query)
                compute_rewards(chosen, target, g, reward_cfg)
                returns.append(chosen.ret)
            else:
                mid_total += 1
                mid_hits += int(chosen.terminal in keys)
    return EvalReport(
        final_accuracy=final_hits / final_total if final_total else 0.0,
        intermediate_accuracy=mid_hits / mid_total if mid_total else 1.0,
        mean_return=float(np.mean(returns)) if returns else 0.0,
    )


def train(
    samples: list[DialogueSample],
    g: IntentGraph,
    cfg: TrainConfig,
    reward_cfg: RewardConfig | None = None,
    val_samples: list[DialogueSample] | None = None,
    log=None,
) -> tuple[T.ParamStore, E.Vocabulary, EvalReport]:
    """Epoch loop with seeded shuffling and best-checkpoint retention on the
    validation split (the training split doubles as validation when no
    split is given)."""
    if not samples:
        raise EmptyDataset("no training samples")
    reward_cfg = reward_cfg or RewardConfig()
    vocab = build_vocabulary(samples)
    rng = np.random.default_rng(cfg.seed)
    store = init_params(g, vocab, cfg, rng)
    optimizer = T.Optimizer(T.OptimizerConfig(lr=cfg.learning_rate, clip_norm=cfg.clip_norm))
    baseline = [0.0] if cfg.baseline == "moving" else None
    depth_ema: dict[tuple[str, int], float] = {}
    val = val_samples if val_samples is not None else samples
    report = EvalReport()
    best_params: T.ParamStore | None = None
    best_acc = -1.0
    order = np.arange(len(samples))
    for epoch in range(cfg.epochs):
        rng.shuffle(order)
        ent_w = max(cfg.entropy_weight * cfg.entropy_decay**epoch, cfg.entropy_floor)
        optimizer.cfg.lr = max(cfg.learning_rate * cfg.lr_decay**epoch, cfg.lr_floor)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(samples), cfg.batch_size):
            batch = [samples[i] for i in order[start : start + cfg.batch_size]]
            epoch_loss += reinforce_step(batch, store, vocab, g, cfg, reward_cfg, optimizer, rng, baseline, ent_w, depth_ema)
            n_batches += 1
        report.loss_trace.append(epoch_loss / max(n_batches, 1))
        report.epochs_run = epoch + 1
        if (epoch + 1) % cfg.eval_every == 0 or epoch + 1 == cfg.epochs:
            ev = evaluate(val, store, vocab, g, cfg, seed=cfg.seed + 10_000 + epoch)
            if log:
                log(f"epoch {epoch + 1}: loss {report.loss_trace[-1]:.4f} "
                    f"final_acc {ev.final_accuracy:.3f} mid_acc {ev.intermediate_accuracy:.3f}")
            score = ev.final_accuracy + ev.intermediate_accuracy
            if score > best_acc:
                best_acc = score
                best_params = store.clone()
                report.final_accuracy = ev.final_accuracy
                report.intermediate_accuracy = ev.intermediate_accuracy
                report.mean_return = ev.mean_return
            if (
                cfg.target_accuracy is not None
                and ev.final_accuracy >= cfg.target_accuracy
                and (cfg.target_intermediate is None or ev.intermediate_accuracy >= cfg.target_intermediate)
            ):
                break
    if best_params is not None:
        store = best_params
    return store, vocab, report


# ---------------------------------------------------------------------------
# synthetic dialogues

_FILLERS = ["i", "need", "help", "with", "my", "the", "please", "about", "question"]


def synthesize_dialogues(
    g: IntentGraph,
    count: int,
    turns_range: tuple[int, int],
    seed: int,
    fillers: list[str] | None = None,
) -> list[DialogueSample]:
    """Per sample: pick a target query, shuffle its key kinds, and reveal the
    key-node names of a growing prefix across the turns, padded with filler
    tokens. Intermediate turns target the deepest revealed key node."""
    queries = g.queries()
    if not queries:
        raise NoQueries("graph has no query nodes")
    fillers = fillers if fillers is not None else _FILLERS
    rng = np.random.default_rng(seed)
    depth_order = g.key_kind_order()
    samples = []
    for _ in range(count):
        q = queries[int(rng.integers(len(queries)))]
        keys = sorted(g.key_nodes_of(q))
        kind_of = {k: g.nodes[k].feature_kind for k in keys}
        reveal_order = list(keys)
        rng.shuffle(reveal_order)
        lo, hi = turns_range
        n_turns = min(int(rng.integers(lo, hi + 1)), len(keys))
        # growing prefix: cut points splitting the reveal order across turns
        cuts = sorted(rng.choice(np.arange(1, len(keys)), size=n_turns - 1, replace=False)) if n_turns > 1 else []
        bounds = [0] + [int(c) for c in cuts] + [len(keys)]
        turns = []
        targets = []
        revealed: list[str] = []
        for ti in range(n_turns):
            newly = reveal_order[bounds[ti] : bounds[ti + 1]]
            revealed.extend(newly)
            tokens = list(newly)
            n_fill = int(rng.integers(1, 4))
            for _ in range(n_fill):
                tokens.insert(int(rng.integers(len(tokens) + 1)), fillers[int(rng.integers(len(fillers)))])
            turns.append(tokens)
            if ti == n_turns - 1:
                targets.append(q)
            else:
                deepest = max(revealed, key=lambda k: depth_order.index(kind_of[k]))
                targets.append(deepest)
        samples.append(DialogueSample(turns=turns, turn_targets=targets, query=q))
    return samples
