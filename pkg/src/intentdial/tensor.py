"""Dense float64 tensors with reverse-mode autodiff on an explicit tape.

Small, CPU-only, and deliberately restricted: the only broadcasting allowed
is exact shape match or scalar-vs-anything. All model math in the rest of
the package (recurrent cells, attention, the policy network) is built from
the primitives here so a single finite-difference harness can certify every
gradient path.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np


class ShapeMismatch(ValueError):
    pass


class AllMasked(ValueError):
    pass


class NotScalar(ValueError):
    pass


class TapeConsumed(RuntimeError):
    pass


_TAPE_STACK: list["Tape"] = []


class Tape:
    """Ordered record of tracked operations; one backward pass per tape."""

    def __init__(self):
        self._nodes: list[Tensor] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        _TAPE_STACK.pop()
        return False

    def _record(self, t: "Tensor"):
        self._nodes.append(t)

    def __len__(self):
        return len(self._nodes)


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tensor:
    """Immutable-by-convention array value; leaves with requires_grad
    accumulate gradients across backward passes until explicitly zeroed."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._tape = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, tracked={self._backward is not None})"


def _tracked(t: Tensor) -> bool:
    return t.requires_grad or t._backward is not None


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    # hot path: bypass Tensor.__init__ (no asarray, no zeros_like)
    out = Tensor.__new__(Tensor)
    out.data = data if type(data) is np.ndarray else np.asarray(data, dtype=np.float64)
    out.requires_grad = False
    out.grad = None
    out._parents = ()
    out._backward = None
    out._tape = None
    tape = _TAPE_STACK[-1] if _TAPE_STACK else None
    if tape is not None:
        for p in parents:
            if p.requires_grad or p._backward is not None:
                out._parents = parents
                out._backward = backward_fn
                out._tape = tape
                tape._nodes.append(out)
                break
    return out


def _accum(t: Tensor, g: np.ndarray):
    if t.grad is None:
        if getattr(g, "shape", None) == t.data.shape:
            t.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            t.grad = np.zeros_like(t.data)
            t.grad += g
    else:
        t.grad += g


def backward(tape: Tape, loss: Tensor) -> None:
    """Populate gradient accumulators of every tracked leaf reachable from
    ``loss``. The tape is single-use."""
    if tape._consumed:
        raise TapeConsumed("tape already backpropagated")
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise NotScalar(f"loss has shape {loss.data.shape}")
    if loss._tape is not tape and loss._backward is not None:
        raise ValueError("loss was not produced on this tape")
    tape._consumed = True
    if loss._backward is None:
        return  # constant loss: nothing participated, gradients stay zero
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape._nodes):
        if node.grad is None or node._backward is None:
            continue
        node._backward(node.grad)
        # intermediate grads are dead after their node is processed
        if not node.requires_grad:
            node.grad = None


# ---------------------------------------------------------------------------
# primitives


def _check_binop_shapes(a: Tensor, b: Tensor):
    if a.data.shape == b.data.shape:
        return
    if a.data.size == 1 or b.data.size == 1:
        return
    raise ShapeMismatch(f"{a.data.shape} vs {b.data.shape}")


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == tuple(shape):
        return g
    return np.sum(g).reshape(shape) if np.prod(shape, dtype=int) == 1 else g.reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_binop_shapes(a, b)

    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make(a.data + b.data, (a, b), bw)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _check_binop_shapes(a, b)

    def bw(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(a.data * b.data, (a, b), bw)


def scale(a: Tensor, k: float) -> Tensor:
    def bw(g):
        _accum(a, g * k)

    return _make(a.data * k, (a,), bw)


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, neg(b))


def relu(a: Tensor) -> Tensor:
    def bw(g):
        _accum(a, g * (a.data > 0.0))

    return _make(np.maximum(a.data, 0.0), (a,), bw)


def sigmoid(a: Tensor) -> Tensor:
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def bw(g):
        _accum(a, g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), bw)


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def bw(g):
        _accum(a, g * (1.0 - out_data * out_data))

    return _make(out_data, (a,), bw)


def log(a: Tensor) -> Tensor:
    def bw(g):
        _accum(a, g / a.data)

    return _make(np.log(a.data), (a,), bw)


def entropy(p: Tensor) -> Tensor:
    """Shannon entropy -sum(p*log p) under the 0*log(0) = 0 convention.

    Probabilities from a saturated softmax can underflow to exactly zero;
    plain hadamard(p, log(p)) then produces 0 * -inf = NaN. Zero entries
    contribute nothing to the value, and their gradient is defined as 0
    (their contribution through the softmax Jacobian vanishes anyway)."""
    pos = p.data > 0.0
    logp = np.log(p.data, out=np.zeros_like(p.data), where=pos)

    def bw(g):
        _accum(p, g * np.where(pos, -(logp + 1.0), 0.0))

    return _make(np.asarray(-np.sum(p.data * logp)), (p,), bw)


def elementwise(op: str, *args: Tensor) -> Tensor:
    """Dispatch by name; the pointwise subset of the op set."""
    table = {"add": add, "relu": relu, "sigmoid": sigmoid, "tanh": tanh, "hadamard": hadamard}
    if op not in table:
        raise ValueError(f"unknown elementwise op {op!r}")
    return table[op](*args)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    if ad.ndim == 0 or bd.ndim == 0:
        raise ShapeMismatch("matmul requires 1-D or 2-D operands")
    if ad.shape[-1] != bd.shape[0]:
        raise ShapeMismatch(f"inner dimensions {ad.shape} x {bd.shape}")

    def bw(g):
        if ad.ndim == 1 and bd.ndim == 1:  # dot -> scalar
            _accum(a, g * bd)
            _accum(b, g * ad)
        elif ad.ndim == 2 and bd.ndim == 1:  # (m,n)@(n,) -> (m,)
            _accum(a, g[:, None] * bd[None, :])
            _accum(b, ad.T @ g)
        elif ad.ndim == 1 and bd.ndim == 2:  # (n,)@(n,k) -> (k,)
            _accum(a, bd @ g)
            _accum(b, ad[:, None] * g[None, :])
        else:  # (m,n)@(n,k)
            _accum(a, g @ bd.T)
            _accum(b, ad.T @ g)

    return _make(ad @ bd, (a, b), bw)


def concat(parts: list[Tensor]) -> Tensor:
    """Concatenate 1-D tensors."""
    sizes = [p.data.shape[0] for p in parts]

    def bw(g):
        off = 0
        for p, n in zip(parts, sizes):
            _accum(p, g[off : off + n])
            off += n

    return _make(np.concatenate([p.data for p in parts]), tuple(parts), bw)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate two 2-D tensors along columns."""
    if a.data.shape[0] != b.data.shape[0]:
        raise ShapeMismatch(f"{a.data.shape} vs {b.data.shape}")
    na = a.data.shape[1]

    def bw(g):
        _accum(a, g[:, :na])
        _accum(b, g[:, na:])

    return _make(np.concatenate([a.data, b.data], axis=1), (a, b), bw)


def stack(rows: list[Tensor]) -> Tensor:
    """Stack 1-D tensors into a matrix, one per row."""

    def bw(g):
        for i, r in enumerate(rows):
            _accum(r, g[i])

    return _make(np.stack([r.data for r in rows]), tuple(rows), bw)


def narrow(a: Tensor, start: int, length: int) -> Tensor:
    """Contiguous slice of a 1-D tensor."""

    def bw(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[start : start + length] += g

    return _make(a.data[start : start + length].copy(), (a,), bw)


def take(a: Tensor, i: int) -> Tensor:
    """Scalar element of a 1-D tensor."""

    def bw(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[i] += g

    return _make(a.data[i], (a,), bw)


def take_rows(table: Tensor, indices) -> Tensor:
    idx = np.asarray(indices, dtype=np.intp)

    def bw(g):
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, idx, g)

    return _make(table.data[idx], (table,), bw)


def tsum(a: Tensor) -> Tensor:
    def bw(g):
        _accum(a, np.full_like(a.data, float(g)))

    return _make(np.sum(a.data), (a,), bw)


def mean(a: Tensor) -> Tensor:
    return scale(tsum(a), 1.0 / a.data.size)


def sum_list(parts: list[Tensor]) -> Tensor:
    """Sum of scalar tensors."""

    def bw(g):
        for p in parts:
            _accum(p, np.asarray(float(g)))

    return _make(np.asarray(sum(float(p.data) for p in parts)), tuple(parts), bw)


def masked_softmax(logits: Tensor, mask) -> Tensor:
    """Softmax over the kept positions; masked positions are exactly zero.

    Max-subtraction keeps the exponentials bounded.
    """
    m = np.asarray(mask, dtype=bool)
    if m.shape != logits.data.shape:
        raise ShapeMismatch(f"mask {m.shape} vs logits {logits.data.shape}")
    if not m.any():
        raise AllMasked("every position masked out")
    z = logits.data[m]
    e = np.exp(z - z.max())
    out_data = np.zeros_like(logits.data)
    out_data[m] = e / e.sum()

    def bw(g):
        y = out_data[m]
        gk = g[m]
        gl = np.zeros_like(logits.data)
        gl[m] = y * (gk - float(np.dot(gk, y)))
        _accum(logits, gl)

    return _make(out_data, (logits,), bw)


# ---------------------------------------------------------------------------
# recurrent cells and attention

# GRU parameter convention: zr gates stacked (W_zr: (2h, d), U_zr: (2h, h),
# b_zr: (2h,)) with z first, then the candidate's W_h/U_h/b_h.


def gru_cell(x: Tensor, h_prev: Tensor, p: dict[str, Tensor]) -> Tensor:
    """Single fused tape node; the hand-derived backward below replaces the
    ~15 primitive nodes the composite formulation would record per step."""
    d_h = h_prev.data.shape[0]
    w_zr, u_zr, b_zr = p["w_zr"], p["u_zr"], p["b_zr"]
    w_h, u_h, b_h = p["w_h"], p["u_h"], p["b_h"]
    a_zr = w_zr.data @ x.data + u_zr.data @ h_prev.data + b_zr.data
    zr = 1.0 / (1.0 + np.exp(-a_zr))
    z, r = zr[:d_h], zr[d_h:]
    hr = r * h_prev.data
    n = np.tanh(w_h.data @ x.data + u_h.data @ hr + b_h.data)
    h_data = (1.0 - z) * h_prev.data + z * n

    def bw(gh):
        dn = gh * z
        dz = gh * (n - h_prev.data)
        gh_prev = gh * (1.0 - z)
        da_h = dn * (1.0 - n * n)
        _accum(w_h, da_h[:, None] * x.data[None, :])
        _accum(u_h, da_h[:, None] * hr[None, :])
        _accum(b_h, da_h)
        dhr = u_h.data.T @ da_h
        dr = dhr * h_prev.data
        gh_prev = gh_prev + dhr * r
        da_zr = np.concatenate([dz * z * (1.0 - z), dr * r * (1.0 - r)])
        _accum(w_zr, da_zr[:, None] * x.data[None, :])
        _accum(u_zr, da_zr[:, None] * h_prev.data[None, :])
        _accum(b_zr, da_zr)
        _accum(x, w_h.data.T @ da_h + w_zr.data.T @ da_zr)
        _accum(h_prev, gh_prev + u_zr.data.T @ da_zr)

    return _make(h_data, (x, h_prev, w_zr, u_zr, b_zr, w_h, u_h, b_h), bw)


# LSTM parameter convention: all four gates stacked in i, f, o, g order
# (w_x: (4h, d), w_h: (4h, h), b: (4h,)).


def lstm_cell(x: Tensor, state: tuple[Tensor, Tensor], p: dict[str, Tensor]) -> tuple[Tensor, Tensor]:
    """Fused like gru_cell, but with two outputs. The cell-state node is
    recorded before the hidden node, so the reversed tape walk runs the
    hidden node's backward first; it pushes its cell-state contribution into
    the cell node's accumulator before that node back-propagates."""
    h_prev, c_prev = state
    d_h = h_prev.data.shape[0]
    w_x, w_h, b = p["w_x"], p["w_h"], p["b"]
    a = w_x.data @ x.data + w_h.data @ h_prev.data + b.data
    i = 1.0 / (1.0 + np.exp(-a[:d_h]))
    f = 1.0 / (1.0 + np.exp(-a[d_h : 2 * d_h]))
    o = 1.0 / (1.0 + np.exp(-a[2 * d_h : 3 * d_h]))
    g = np.tanh(a[3 * d_h :])
    c_data = f * c_prev.data + i * g
    tc = np.tanh(c_data)
    h_data = o * tc

    def bw_c(dc):
        da = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * c_prev.data * f * (1.0 - f),
            np.zeros(d_h),
            dc * i * (1.0 - g * g),
        ])
        _accum(w_x, da[:, None] * x.data[None, :])
        _accum(w_h, da[:, None] * h_prev.data[None, :])
        _accum(b, da)
        _accum(x, w_x.data.T @ da)
        _accum(h_prev, w_h.data.T @ da)
        _accum(c_prev, dc * f)

    c_out = _make(c_data, (x, h_prev, c_prev, w_x, w_h, b), bw_c)

    def bw_h(gh):
        do = gh * tc
        da_o = do * o * (1.0 - o)
        lo, hi = 2 * d_h, 3 * d_h
        for t, contrib in ((w_x, da_o[:, None] * x.data[None, :]), (w_h, da_o[:, None] * h_prev.data[None, :]), (b, da_o)):
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
            t.grad[lo:hi] += contrib
        _accum(x, w_x.data[lo:hi].T @ da_o)
        _accum(h_prev, w_h.data[lo:hi].T @ da_o)
        # remaining effect of gh flows through the cell state
        _accum(c_out, gh * o * (1.0 - tc * tc))

    h_out = _make(h_data, (x, h_prev, c_prev, w_x, w_h, b), bw_h)
    return h_out, c_out


def attention(queries: Tensor, keys: Tensor, values: Tensor, mask) -> Tensor:
    """Scaled dot-product attention with a boolean keep-mask per query row."""
    m = np.asarray(mask, dtype=bool)
    nq = queries.data.shape[0]
    nk = keys.data.shape[0]
    if keys.data.shape[0] != values.data.shape[0]:
        raise ShapeMismatch("key/value counts differ")
    if m.shape != (nq, nk):
        raise ShapeMismatch(f"mask shape {m.shape}, expected {(nq, nk)}")
    scl = 1.0 / np.sqrt(queries.data.shape[1])
    rows = []
    for qi in range(nq):
        q = take_rows(queries, [qi])
        logits = scale(matmul(keys, narrow_row(q)), scl)
        w = masked_softmax(logits, m[qi])
        rows.append(matmul(w, values))
    return stack(rows)


def narrow_row(a: Tensor) -> Tensor:
    """View a (1, n) tensor as (n,)."""

    def bw(g):
        _accum(a, g[None, :])

    return _make(a.data[0], (a,), bw)


# ---------------------------------------------------------------------------
# parameter store, initialization, optimizers


class ParamStore:
    """Named trainable leaves with gradient accumulators."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._group_cache: dict[str, dict[str, Tensor]] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        self._group_cache.clear()
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self):
        return [(n, self._params[n]) for n in self.names()]

    def zero_grads(self):
        for t in self._params.values():
            t.grad[...] = 0.0

    def snapshot(self) -> "ParamStore":
        """Read-only copy for inference: shares values, never tracked."""
        s = ParamStore.__new__(ParamStore)
        s._params = {n: Tensor(t.data) for n, t in self._params.items()}
        s._group_cache = {}
        return s

    def clone(self) -> "ParamStore":
        s = ParamStore()
        for n, t in self._params.items():
            s.add(n, t.data.copy())
        return s


def init_weight(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(cols)
    return rng.uniform(-bound, bound, size=(rows, cols))


def init_embedding(rng: np.random.Generator, rows: int, dim: int) -> np.ndarray:
    return rng.normal(0.0, 0.1, size=(rows, dim))


def init_gru_params(store: ParamStore, prefix: str, d_in: int, d_h: int, rng: np.random.Generator) -> None:
    store.add(f"{prefix}/w_zr", init_weight(rng, 2 * d_h, d_in))
    store.add(f"{prefix}/u_zr", init_weight(rng, 2 * d_h, d_h))
    store.add(f"{prefix}/b_zr", np.zeros(2 * d_h))
    store.add(f"{prefix}/w_h", init_weight(rng, d_h, d_in))
    store.add(f"{prefix}/u_h", init_weight(rng, d_h, d_h))
    store.add(f"{prefix}/b_h", np.zeros(d_h))


def init_lstm_params(store: ParamStore, prefix: str, d_in: int, d_h: int, rng: np.random.Generator) -> None:
    store.add(f"{prefix}/w_x", init_weight(rng, 4 * d_h, d_in))
    store.add(f"{prefix}/w_h", init_weight(rng, 4 * d_h, d_h))
    b = np.zeros(4 * d_h)
    b[d_h : 2 * d_h] = 1.0  # forget gate opens at init
    store.add(f"{prefix}/b", b)


def cell_params(store: ParamStore, prefix: str) -> dict[str, Tensor]:
    cached = store._group_cache.get(prefix)
    if cached is None:
        keys = [n[len(prefix) + 1 :] for n in store.names() if n.startswith(prefix + "/")]
        cached = {k: store[f"{prefix}/{k}"] for k in keys}
        store._group_cache[prefix] = cached
    return cached


@dataclass
class OptimizerConfig:
    algorithm: str = "adam"  # "adam" | "sgd"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = None  # global-norm gradient clipping; None disables


class Optimizer:
    """Gradient-descent update on the stored loss gradients; zeroes grads."""

    def __init__(self, cfg: OptimizerConfig):
        self.cfg = cfg
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._t = 0

    def step(self, store: ParamStore) -> None:
        cfg = self.cfg
        if cfg.clip_norm is not None:
            total = np.sqrt(sum(float(np.sum(p.grad * p.grad)) for _, p in store.items()))
            if total > cfg.clip_norm:
                factor = cfg.clip_norm / total
                for _, p in store.items():
                    p.grad *= factor
        if cfg.algorithm == "sgd":
            for name, p in store.items():
                p.data -= cfg.lr * p.grad
        elif cfg.algorithm == "adam":
            self._t += 1
            b1c = 1.0 - cfg.beta1**self._t
            b2c = 1.0 - cfg.beta2**self._t
            for name, p in store.items():
                m = self._m.setdefault(name, np.zeros_like(p.data))
                v = self._v.setdefault(name, np.zeros_like(p.data))
                m *= cfg.beta1
                m += (1.0 - cfg.beta1) * p.grad
                v *= cfg.beta2
                v += (1.0 - cfg.beta2) * p.grad * p.grad
                p.data -= cfg.lr * (m / b1c) / (np.sqrt(v / b2c) + cfg.eps)
        else:
            raise ValueError(f"unknown optimizer {cfg.algorithm!r}")
        store.zero_grads()


# ---------------------------------------------------------------------------
# checkpoint format
#
# Binary layout: magic "IDCP", u32 version, i64 creation seed, u32 manifest
# length, manifest JSON [{"name", "shape"}...], then each parameter's raw
# little-endian float64 values in manifest order. Hyperparameters ride in a
# JSON sidecar at <path>.json.

_MAGIC = b"IDCP"
_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(store: ParamStore, path: str, seed: int, hyper: dict | None = None) -> None:
    manifest = [{"name": n, "shape": list(t.data.shape)} for n, t in store.items()]
    mbytes = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<Iq", _VERSION, seed))
        f.write(struct.pack("<I", len(mbytes)))
        f.write(mbytes)
        for _, t in store.items():
            f.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    with open(path + ".json", "w", encoding="utf-8") as f:
        json.dump(hyper or {}, f, sort_keys=True, indent=2)
        f.write("\n")


def load_checkpoint(path: str) -> tuple[ParamStore, int, dict]:
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise CheckpointError("bad magic")
        version, seed = struct.unpack("<Iq", f.read(12))
        if version != _VERSION:
            raise CheckpointError(f"unsupported version {version}")
        (mlen,) = struct.unpack("<I", f.read(4))
        manifest = json.loads(f.read(mlen).decode("utf-8"))
        store = ParamStore()
        for entry in manifest:
            shape = tuple(entry["shape"])
            n = int(np.prod(shape)) if shape else 1
            raw = f.read(8 * n)
            if len(raw) != 8 * n:
                raise CheckpointError(f"truncated data for {entry['name']!r}")
            store.add(entry["name"], np.frombuffer(raw, dtype="<f8").reshape(shape).copy())
        if f.read(1):
            raise CheckpointError("trailing bytes")
    try:
        with open(path + ".json", "r", encoding="utf-8") as f:
            hyper = json.load(f)
    except FileNotFoundError:
        hyper = {}
    return store, seed, hyper
