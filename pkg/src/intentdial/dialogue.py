"""Turn-level orchestration: encode the dialogue so far, infer a reasoning
path, and answer from a response template chosen by the terminal node kind.
Sessions move through collecting -> awaiting_confirmation -> handed_off."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import encoder as E
from . import reasoner as R
from . import tensor as T
from .encoder import EmptyUtterance
from .graph import IntentGraph


class SessionClosed(RuntimeError):
    pass


class MissingSlot(KeyError):
    pass


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class ResponseTemplate:
    template_id: str
    kind: str  # confirm_query | elicit_key | handoff | fallback
    pattern: str


_REQUIRED_SLOTS = {"confirm_query": {"query_text"}, "elicit_key": {"key_kind"}}

DEFAULT_TEMPLATES = [
    ResponseTemplate("confirm_query", "confirm_query", "Do you want to ask: {query_text}?"),
    ResponseTemplate("elicit_key", "elicit_key", "Could you tell me more about the {key_kind}?"),
    ResponseTemplate("handoff", "handoff", "Thanks for confirming. Transferring you to customer service now."),
    ResponseTemplate("fallback", "fallback", "Sorry, I could not match your question. Could you rephrase it?"),
]

AFFIRMATIONS = {"yes", "yeah", "yep", "correct", "right", "sure", "ok", "okay"}
NEGATIONS = {"no", "nope", "wrong", "not"}


def fill_template(t: ResponseTemplate, slots: dict[str, str]) -> str:
    required = _REQUIRED_SLOTS.get(t.kind, set())
    missing = required - slots.keys()
    if missing:
        raise MissingSlot(sorted(missing)[0])
    try:
        return t.pattern.format(**slots)
    except (KeyError, IndexError) as e:
        raise MissingSlot(str(e)) from e


def load_templates(path: str) -> dict[str, ResponseTemplate]:
    with open(path, "r", encoding="utf-8") as f:
        entries = json.load(f)
    return validate_templates(
        [ResponseTemplate(e["id"], e["kind"], e["pattern"]) for e in entries]
    )


def save_templates(templates: list[ResponseTemplate], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(
            [{"id": t.template_id, "kind": t.kind, "pattern": t.pattern} for t in templates],
            f, indent=2, sort_keys=True,
        )
        f.write("\n")


def validate_templates(templates: list[ResponseTemplate]) -> dict[str, ResponseTemplate]:
    by_kind = {t.kind: t for t in templates}
    for kind in ("confirm_query", "elicit_key", "handoff", "fallback"):
        if kind not in by_kind:
            raise TemplateError(f"missing template kind {kind!r}")
    for kind, slots in _REQUIRED_SLOTS.items():
        for slot in slots:
            if "{" + slot + "}" not in by_kind[kind].pattern:
                raise TemplateError(f"{kind} template lacks slot {{{slot}}}")
    return by_kind


@dataclass
class TurnOutcome:
    response: str
    trajectory: R.Trajectory | None
    terminal_kind: str | None
    phase: str


@dataclass
class Session:
    session_id: str
    rng: np.random.Generator
    history: list[tuple[str, str]] = field(default_factory=list)  # (role, text)
    traces: list = field(default_factory=list)  # gateway PathTrace dicts
    phase: str = "collecting"
    rejections: int = 0
    pending_query: str | None = None
    _turn_tokens: list[list[int]] = field(default_factory=list)


class DialogueManager:
    """Stateless over sessions; all mutable state lives in the Session."""

    def __init__(
        self,
        g: IntentGraph,
        store: T.ParamStore,
        vocab: E.Vocabulary,
        enc_cfg: E.EncoderConfig,
        pol_cfg: R.PolicyConfig,
        templates: dict[str, ResponseTemplate] | None = None,
        k_rollouts: int = 20,
        max_rejections: int = 3,
    ):
        self.graph = g
        self.store = store
        self.vocab = vocab
        self.enc_cfg = enc_cfg
        self.pol_cfg = pol_cfg
        self.templates = templates or validate_templates(DEFAULT_TEMPLATES)
        self.k_rollouts = k_rollouts
        self.max_rejections = max_rejections

    # -- turn handling ------------------------------------------------------

    def handle(self, session: Session, user_text: str) -> TurnOutcome:
        if session.phase in ("handed_off", "closed"):
            raise SessionClosed(session.session_id)
        if session.phase == "awaiting_confirmation":
            return self.confirm(session, user_text)
        return self.respond(session, user_text)

    def respond(self, session: Session, user_text: str) -> TurnOutcome:
        if session.phase != "collecting":
            raise SessionClosed(f"{session.session_id} is {session.phase}")
        token_ids = E.tokenize(user_text, self.vocab)
        session._turn_tokens.append(token_ids)
        session.history.append(("user", user_text))
        contexts = E.encode_context(session._turn_tokens, self.store, self.enc_cfg)
        chosen, _ = R.infer_path(
            self.graph, contexts[-1], self.store, self.pol_cfg, self.k_rollouts, session.rng
        )
        terminal = self.graph.nodes[chosen.terminal]
        if terminal.kind == "query":
            text = fill_template(
                self.templates["confirm_query"],
                {"query_text": self.graph.query_meta[chosen.terminal].query_text},
            )
            session.phase = "awaiting_confirmation"
            session.pending_query = chosen.terminal
            kind = "query"
        elif terminal.kind == "feature" and terminal.is_key:
            missing = self._missing_kind(chosen)
            if missing is None:
                text = self.templates["fallback"].pattern
                kind = "feature"
            else:
                text = fill_template(self.templates["elicit_key"], {"key_kind": missing})
                kind = "key"
        else:
            text = self.templates["fallback"].pattern
            kind = terminal.kind
        session.history.append(("system", text))
        return TurnOutcome(response=text, trajectory=chosen, terminal_kind=kind, phase=session.phase)

    def confirm(self, session: Session, user_text: str) -> TurnOutcome:
        if session.phase != "awaiting_confirmation":
            raise SessionClosed(f"{session.session_id} is {session.phase}")
        words = set(E.split_text(user_text))
        if words & AFFIRMATIONS:
            session.history.append(("user", user_text))
            text = self.templates["handoff"].pattern
            session.phase = "handed_off"
            session.history.append(("system", text))
            return TurnOutcome(response=text, trajectory=None, terminal_kind=None, phase=session.phase)
        if words & NEGATIONS:
            session.history.append(("user", user_text))
            session.rejections += 1
            session.pending_query = None
            if session.rejections >= self.max_rejections:
                text = self.templates["fallback"].pattern
                session.phase = "closed"
            else:
                text = "I see. Could you describe your question in more detail?"
                session.phase = "collecting"
            session.history.append(("system", text))
            return TurnOutcome(response=text, trajectory=None, terminal_kind=None, phase=session.phase)
        # neither yes nor no: treat as a fresh collecting turn
        session.phase = "collecting"
        session.pending_query = None
        return self.respond(session, user_text)

    # -- helpers ------------------------------------------------------------

    def _missing_kind(self, traj: R.Trajectory) -> str | None:
        """First key kind (start-kind-first order) missing from the path,
        among kinds required by queries consistent with the visited keys."""
        visited = {
            e for e in traj.entities
            if self.graph.nodes[e].kind == "feature" and self.graph.nodes[e].is_key
        }
        consistent = [
            meta for meta in self.graph.query_meta.values() if visited <= meta.key_nodes
        ]
        if not consistent:
            return None
        required_kinds = {
            self.graph.nodes[k].feature_kind for meta in consistent for k in meta.key_nodes
        }
        visited_kinds = {self.graph.nodes[e].feature_kind for e in visited}
        for kind in self.graph.key_kind_order():
            if kind in required_kinds and kind not in visited_kinds:
                return kind
        return None
