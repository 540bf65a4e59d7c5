"""Multi-turn dialogue encoder: token embedding, Bi-GRU sentence encoding,
and causally masked self-attention over turn embeddings producing one
context vector per turn."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

import numpy as np

from . import tensor as T

PAD = "<pad>"
UNK = "<unk>"

_TOKEN_RE = re.compile(r"[a-z0-9']+")


class EmptyUtterance(ValueError):
    pass


class Vocabulary:
    """Token string <-> dense integer id, with PAD=0 and UNK=1 reserved."""

    def __init__(self, tokens: list[str]):
        if tokens[:2] != [PAD, UNK]:
            raise ValueError("first two tokens must be the reserved PAD/UNK entries")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens")
        self._tokens = list(tokens)
        self._ids = {t: i for i, t in enumerate(tokens)}

    @classmethod
    def from_tokens(cls, tokens) -> "Vocabulary":
        seen = sorted({t for t in tokens if t not in (PAD, UNK)})
        return cls([PAD, UNK] + seen)

    def __len__(self):
        return len(self._tokens)

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def unk_id(self) -> int:
        return 1

    def id(self, token: str) -> int:
        return self._ids.get(token, self.unk_id)

    def token(self, i: int) -> str:
        return self._tokens[i]

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self._tokens, f, ensure_ascii=False, indent=2)
            f.write("\n")

    @classmethod
    def load(cls, path: str) -> "Vocabulary":
        with open(path, "r", encoding="utf-8") as f:
            return cls(json.load(f))


def split_text(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def tokenize(text: str, vocab: Vocabulary) -> list[int]:
    """Lowercased word split; out-of-vocabulary tokens map to UNK."""
    words = split_text(text)
    if not words:
        raise EmptyUtterance(text)
    return [vocab.id(w) for w in words]


@dataclass
class EncoderConfig:
    d_token: int = 32
    d_gru: int = 16

    @property
    def d_ctx(self) -> int:
        # attention model width is tied to the sentence embedding width
        return 2 * self.d_gru


def init_encoder_params(store: T.ParamStore, vocab_size: int, cfg: EncoderConfig, rng: np.random.Generator) -> None:
    store.add("enc/token_emb", T.init_embedding(rng, vocab_size, cfg.d_token))
    T.init_gru_params(store, "enc/gru_fwd", cfg.d_token, cfg.d_gru, rng)
    T.init_gru_params(store, "enc/gru_bwd", cfg.d_token, cfg.d_gru, rng)
    d = cfg.d_ctx
    store.add("enc/w_q", T.init_weight(rng, d, d))
    store.add("enc/w_k", T.init_weight(rng, d, d))
    store.add("enc/w_v", T.init_weight(rng, d, d))


def encode_sentence(token_ids: list[int], store: T.ParamStore, cfg: EncoderConfig) -> T.Tensor:
    """[final forward GRU state ; final backward GRU state], length 2*d_gru."""
    if not token_ids:
        raise EmptyUtterance("no tokens")
    emb = T.take_rows(store["enc/token_emb"], token_ids)
    fwd_p = T.cell_params(store, "enc/gru_fwd")
    bwd_p = T.cell_params(store, "enc/gru_bwd")
    n = len(token_ids)
    h_f = T.Tensor(np.zeros(cfg.d_gru))
    for i in range(n):
        h_f = T.gru_cell(_row(emb, i), h_f, fwd_p)
    h_b = T.Tensor(np.zeros(cfg.d_gru))
    for i in range(n - 1, -1, -1):
        h_b = T.gru_cell(_row(emb, i), h_b, bwd_p)
    return T.concat([h_f, h_b])


def _row(mat: T.Tensor, i: int) -> T.Tensor:
    return T.narrow_row(T.take_rows(mat, [i]))


def encode_context(turn_token_ids: list[list[int]], store: T.ParamStore, cfg: EncoderConfig) -> list[T.Tensor]:
    """Context vectors c_1..c_I; turn i attends over turns 1..i only."""
    if not turn_token_ids:
        raise EmptyUtterance("dialogue has no turns")
    sent = T.stack([encode_sentence(ids, store, cfg) for ids in turn_token_ids])
    q = T.matmul(sent, _transposed(store["enc/w_q"]))
    k = T.matmul(sent, _transposed(store["enc/w_k"]))
    v = T.matmul(sent, _transposed(store["enc/w_v"]))
    n = len(turn_token_ids)
    mask = np.tril(np.ones((n, n), dtype=bool))
    ctx = T.attention(q, k, v, mask)
    return [T.narrow_row(T.take_rows(ctx, [i])) for i in range(n)]


def _transposed(w: T.Tensor) -> T.Tensor:
    def bw(g):
        T._accum(w, g.T)

    return T._make(w.data.T, (w,), bw)
