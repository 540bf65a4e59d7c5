"""Central finite-difference verification of every differentiable path.

Each check builds a scalar loss from tracked parameters, backpropagates it,
and compares the analytic gradient against (f(x+eps) - f(x-eps)) / 2eps
entry by entry. Used by the command-line `grad-check` and the acceptance
suite.
"""

from __future__ import annotations

import numpy as np

from . import encoder as E
from . import graph as G
from . import reasoner as R
from . import tensor as T
from . import training as TR

EPS = 1e-5


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    # floor the denominator at 1e-6: below that, central differences with
    # eps=1e-5 are dominated by roundoff and the comparison is meaningless
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-6)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_grads(make_loss, store: T.ParamStore, eps: float = EPS) -> float:
    """Max relative error over every entry of every parameter.

    ``make_loss`` must be a pure function of the store's current values.
    """
    store.zero_grads()
    with T.Tape() as tape:
        loss = make_loss(store)
        T.backward(tape, loss)
    worst = 0.0
    for name, p in store.items():
        analytic = p.grad.copy()
        numeric = np.zeros_like(analytic)
        flat = p.data.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(make_loss(store).data)
            flat[i] = orig - eps
            lo = float(make_loss(store).data)
            flat[i] = orig
            nflat[i] = (hi - lo) / (2 * eps)
        worst = max(worst, relative_error(analytic, numeric))
    store.zero_grads()
    return worst


def _simple_store(rng, entries: dict[str, tuple]) -> T.ParamStore:
    store = T.ParamStore()
    for name, shape in entries.items():
        store.add(name, rng.normal(0.0, 0.5, size=shape))
    return store


def run_grad_suite(seed: int = 0) -> dict[str, float]:
    """Finite-difference every primitive, both recurrent cells, attention,
    the dialogue encoder, the policy distribution, a random deep
    composition, and the policy surrogate on frozen trajectories."""
    rng = np.random.default_rng(seed)
    results: dict[str, float] = {}

    s = _simple_store(rng, {"a": (3, 4), "b": (4, 2)})
    results["matmul"] = check_grads(lambda st: T.tsum(T.matmul(st["a"], st["b"])), s)

    s = _simple_store(rng, {"x": (5,), "y": (5,)})
    results["add"] = check_grads(lambda st: T.tsum(T.add(st["x"], st["y"])), s)
    results["hadamard"] = check_grads(lambda st: T.tsum(T.hadamard(st["x"], st["y"])), s)
    results["tanh"] = check_grads(lambda st: T.tsum(T.tanh(st["x"])), s)
    results["sigmoid"] = check_grads(lambda st: T.tsum(T.sigmoid(st["x"])), s)
    # relu checked away from the kink
    s_relu = T.ParamStore()
    s_relu.add("x", np.array([0.5, -0.7, 1.2, -0.1, 2.0]))
    results["relu"] = check_grads(lambda st: T.tsum(T.relu(st["x"])), s_relu)

    s = _simple_store(rng, {"logits": (6,)})
    mask = np.array([True, False, True, True, False, True])
    results["masked_softmax"] = check_grads(
        lambda st: T.tsum(T.hadamard(T.masked_softmax(st["logits"], mask), T.Tensor(np.arange(6.0)))), s
    )
    results["entropy"] = check_grads(
        lambda st: T.entropy(T.masked_softmax(st["logits"], mask)), s
    )

    s = _simple_store(rng, {"x": (7,), "t": (4, 3)})
    results["concat_narrow_take"] = check_grads(
        lambda st: T.add(
            T.tsum(T.concat([T.narrow(st["x"], 1, 3), T.narrow(st["x"], 0, 2)])),
            T.add(T.take(st["x"], 5), T.tsum(T.take_rows(st["t"], [0, 2, 2]))),
        ),
        s,
    )

    d_in, d_h = 3, 4
    s = T.ParamStore()
    cell_rng = np.random.default_rng(seed + 1)
    T.init_gru_params(s, "gru", d_in, d_h, cell_rng)
    s.add("x", cell_rng.normal(0, 0.5, d_in))
    s.add("h", cell_rng.uniform(-0.9, 0.9, d_h))
    results["gru_cell"] = check_grads(
        lambda st: T.tsum(T.gru_cell(st["x"], st["h"], T.cell_params(st, "gru"))), s
    )

    s = T.ParamStore()
    T.init_lstm_params(s, "lstm", d_in, d_h, cell_rng)
    s.add("x", cell_rng.normal(0, 0.5, d_in))
    s.add("h", cell_rng.uniform(-0.9, 0.9, d_h))
    s.add("c", cell_rng.normal(0, 0.5, d_h))
    results["lstm_cell"] = check_grads(
        lambda st: T.tsum(
            T.lstm_cell(st["x"], (st["h"], st["c"]), T.cell_params(st, "lstm"))[0]
        ),
        s,
    )

    s = _simple_store(rng, {"q": (2, 3), "k": (4, 3), "v": (4, 3)})
    amask = np.array([[True, True, False, True], [True, False, True, True]])
    results["attention"] = check_grads(
        lambda st: T.tsum(T.attention(st["q"], st["k"], st["v"], amask)), s
    )

    # random composition of depth 6
    s = _simple_store(rng, {"p": (4, 4), "q": (4,)})
    results["composition"] = check_grads(
        lambda st: T.tsum(
            T.tanh(
                T.matmul(
                    st["p"],
                    T.relu(T.add(T.matmul(st["p"], T.sigmoid(st["q"])), st["q"])),
                )
            )
        ),
        s,
    )

    results["encoder_context"] = _check_encoder(seed)
    results["policy_distribution"] = _check_policy(seed)
    results["surrogate"] = _check_surrogate(seed)
    return results


def _toy_graph() -> G.IntentGraph:
    spec = G.GeneratorSpec(kinds=["k1", "k2"], features_per_kind=2, n_queries=2)
    return G.synthesize_graph(spec, seed=3)


def _check_encoder(seed: int) -> float:
    rng = np.random.default_rng(seed + 2)
    cfg = E.EncoderConfig(d_token=3, d_gru=2)
    store = T.ParamStore()
    E.init_encoder_params(store, 6, cfg, rng)
    turns = [[2, 3], [4], [5, 2, 3]]
    w = rng.normal(0, 0.5, cfg.d_ctx)

    def loss(st):
        ctx = E.encode_context(turns, st, cfg)
        return T.sum_list([T.matmul(c, T.Tensor(w)) for c in ctx])

    return check_grads(loss, store)


def _check_policy(seed: int) -> float:
    rng = np.random.default_rng(seed + 3)
    g = _toy_graph()
    cfg = R.PolicyConfig(d_entity=3, d_relation=3, d_history=4, d_mlp=4, d_ctx=2, horizon=3)
    store = T.ParamStore()
    R.init_policy_params(store, g, cfg, rng)
    c_val = rng.normal(0, 0.5, cfg.d_ctx)

    def loss(st):
        c_i = T.Tensor(c_val)
        h, c = T.Tensor(np.zeros(cfg.d_history)), T.Tensor(np.zeros(cfg.d_history))
        h, c = R.encode_history(st["pol/start_emb"], (h, c), st)
        space = R.action_space(g, g.root, st)
        dist = R.policy_distribution(h, g.root, c_i, space, g, st)
        return T.log(T.take(dist, 0))

    return check_grads(loss, store)


def _check_surrogate(seed: int) -> float:
    """Gradient of the REINFORCE surrogate with the trajectories frozen:
    fixed action sequences, log-probs recomputed from current parameters."""
    rng = np.random.default_rng(seed + 4)
    g = _toy_graph()
    cfg = R.PolicyConfig(d_entity=3, d_relation=3, d_history=4, d_mlp=4, d_ctx=2, horizon=3)
    store = T.ParamStore()
    R.init_policy_params(store, g, cfg, rng)
    c_val = rng.normal(0, 0.5, cfg.d_ctx)
    reward_cfg = TR.RewardConfig()
    target = g.queries()[0]

    # freeze a small set of trajectories sampled once
    frozen: list[list[R.Action]] = []
    sample_rng = np.random.default_rng(seed + 5)
    for _ in range(3):
        traj = R.rollout(g, T.Tensor(c_val), store.snapshot(), cfg, sample_rng)
        frozen.append(traj.actions)

    def loss(st):
        c_i = T.Tensor(c_val)
        terms = []
        for actions in frozen:
            h, c = T.Tensor(np.zeros(cfg.d_history)), T.Tensor(np.zeros(cfg.d_history))
            a_emb = st["pol/start_emb"]
            e = g.root
            entities = [e]
            steps = []
            dists = []
            for action in actions:
                h, c = R.encode_history(a_emb, (h, c), st)
                space = R.action_space(g, e, st)
                idx = space.actions.index(action)
                dist = R.policy_distribution(h, e, c_i, space, g, st)
                steps.append(
                    R.Step(action=action, log_prob=T.log(T.take(dist, idx)),
                           probs=dist.data.copy(), actions=space.actions)
                )
                dists.append(dist)
                a_emb = T.narrow_row(T.take_rows(space.emb, [idx]))
                e = action.target
                entities.append(e)
            traj = R.Trajectory(entities=entities, steps=steps)
            TR.compute_rewards(traj, target, g, reward_cfg)
            g_togo = TR.returns_to_go(traj.rewards)
            for (step, dist), g_t in zip(zip(traj.steps, dists), g_togo):
                terms.append(T.scale(step.log_prob, -g_t))
                # entropy bonus, exactly as the training loss applies it
                terms.append(T.scale(T.entropy(dist), -0.05))
        return T.scale(T.sum_list(terms), 1.0 / len(terms))

    return check_grads(loss, store)
