"""Scikit-learn style front door: fit on dialogues labelled with their
target query, predict the query for new dialogues.

X is a list of dialogues; each dialogue is a list of turns; each turn is
either a string or a list of token strings. y is the target query id per
dialogue. The richer per-turn supervision of
:class:`intentdial.training.DialogueSample` is available through
``fit_samples``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from . import encoder as E
from . import reasoner as R
from . import training as TR
from .graph import IntentGraph


def _as_token_turns(dialogue) -> list[list[str]]:
    turns = []
    for turn in dialogue:
        if isinstance(turn, str):
            tokens = E.split_text(turn)
        else:
            tokens = [str(t).lower() for t in turn]
        if not tokens:
            raise ValueError("empty turn")
        turns.append(tokens)
    if not turns:
        raise ValueError("empty dialogue")
    return turns


class IntentPathEstimator(BaseEstimator):
    """Learns a graph-walk policy mapping a dialogue to its target query."""

    def __init__(
        self,
        graph: IntentGraph | None = None,
        epochs: int = 10,
        learning_rate: float = 4e-3,
        batch_size: int = 16,
        n_rollouts: int = 20,
        horizon: int = 5,
        key_bonus: float = 0.2,
        eval_rollouts: int = 5,
        seed: int = 0,
    ):
        self.graph = graph
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.n_rollouts = n_rollouts
        self.horizon = horizon
        self.key_bonus = key_bonus
        self.eval_rollouts = eval_rollouts
        self.seed = seed

    def _train_config(self) -> TR.TrainConfig:
        return TR.TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            n_rollouts=self.n_rollouts,
            horizon=self.horizon,
            seed=self.seed,
            eval_rollouts=self.eval_rollouts,
        )

    def _validate_graph(self) -> IntentGraph:
        if self.graph is None:
            raise ValueError("graph must be set before fitting")
        return self.graph

    def fit(self, X, y):
        g = self._validate_graph()
        if len(X) != len(y):
            raise ValueError(f"X has {len(X)} dialogues, y has {len(y)} labels")
        queries = set(g.queries())
        samples = []
        for dialogue, target in zip(X, y):
            if target not in queries:
                raise ValueError(f"unknown query label {target!r}")
            turns = _as_token_turns(dialogue)
            # without per-turn labels, every turn trains toward the query
            samples.append(
                TR.DialogueSample(turns=turns, turn_targets=[target] * len(turns), query=target)
            )
        return self.fit_samples(samples)

    def fit_samples(self, samples: list[TR.DialogueSample], val_samples=None):
        g = self._validate_graph()
        cfg = self._train_config()
        reward_cfg = TR.RewardConfig(key_bonus=self.key_bonus)
        self.store_, self.vocab_, self.report_ = TR.train(
            samples, g, cfg, reward_cfg=reward_cfg, val_samples=val_samples
        )
        return self

    def _check_fitted(self):
        if not hasattr(self, "store_"):
            raise RuntimeError("estimator is not fitted")

    def predict(self, X) -> list[str]:
        """Terminal entity of the chosen path for each dialogue's last turn."""
        self._check_fitted()
        g = self._validate_graph()
        cfg = self._train_config()
        frozen = self.store_.snapshot()
        rng = np.random.default_rng(self.seed + 99)
        out = []
        for dialogue in X:
            turns = _as_token_turns(dialogue)
            ids = [[self.vocab_.id(t) for t in turn] for turn in turns]
            ctx = E.encode_context(ids, frozen, cfg.encoder_config())
            chosen, _ = R.infer_path(g, ctx[-1], frozen, cfg.policy_config(), self.eval_rollouts, rng)
            out.append(chosen.terminal)
        return out

    def score(self, X, y) -> float:
        preds = self.predict(X)
        return float(np.mean([p == t for p, t in zip(preds, y)]))
