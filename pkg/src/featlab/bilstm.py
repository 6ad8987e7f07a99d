"""Bidirectional LSTM feature extractor with the same masked head as the CNN.

Each direction runs a standard LSTM (sigmoid gates, tanh cell/output) over the
real tokens only; padding never enters the recurrence. The feature vector is
the element-wise max of hidden states over time: units 0..H-1 come from the
forward pass, units H..2H-1 from the backward pass. Features may be negative.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import Dataset, Document, EmbeddingTable, PAD_INDEX, Vocabulary, encode
from .cnn import _sealed, compute_features, disable_features, finetune_head, predict  # noqa: F401
from .evaluation import macro_f1
from .head import head_probs
from .optim import TrainConfig, cross_entropy_from_logits, fit, softmax


@dataclass(frozen=True)
class BilstmConfig:
    class_count: int
    units: int = 15  # hidden units per direction
    max_len: int = 150
    embed_dim: int = 300
    seed: int = 0

    def __post_init__(self):
        if self.class_count < 2 or self.units < 1:
            raise ValueError("need at least two classes and one hidden unit")

    @property
    def feature_count(self) -> int:
        return 2 * self.units

    def to_json(self) -> dict:
        return {
            "class_count": self.class_count,
            "units": self.units,
            "max_len": self.max_len,
            "embed_dim": self.embed_dim,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, data: dict) -> "BilstmConfig":
        return cls(**data)


@dataclass
class LstmParams:
    """One direction's weights; gate columns are ordered input, forget, cell, output."""

    w_input: np.ndarray  # (embed_dim, 4H)
    w_hidden: np.ndarray  # (H, 4H)
    bias: np.ndarray  # (4H,)

    def seal(self) -> "LstmParams":
        return LstmParams(_sealed(self.w_input), _sealed(self.w_hidden), _sealed(self.bias))

    def copy(self) -> "LstmParams":
        return LstmParams(self.w_input.copy(), self.w_hidden.copy(), self.bias.copy())


@dataclass
class BilstmModel:
    config: BilstmConfig
    vocab: Vocabulary
    embeddings: np.ndarray
    embedding_ref: str
    forward_params: LstmParams
    backward_params: LstmParams
    dense_w: np.ndarray  # (class_count, 2H)
    dense_b: np.ndarray
    mask: np.ndarray
    arch: str = field(default="bilstm", init=False)

    def __post_init__(self):
        self.embeddings = _sealed(self.embeddings)
        self.forward_params = self.forward_params.seal()
        self.backward_params = self.backward_params.seal()
        self.dense_w = _sealed(self.dense_w)
        self.dense_b = _sealed(self.dense_b)
        self.mask = _sealed(self.mask)

    @property
    def feature_count(self) -> int:
        return self.config.feature_count

    def direction(self, name: str) -> LstmParams:
        return self.forward_params if name == "fw" else self.backward_params

    def encode_doc(self, doc: Document) -> np.ndarray:
        return encode(doc, self.vocab, self.config.max_len)

    def encode_docs(self, docs) -> np.ndarray:
        return np.stack([self.encode_doc(d) for d in docs])

    def forward(self, ids: np.ndarray) -> "BilstmTrace":
        return forward(self, ids)

    def disabled_features(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.mask[0] == 0.0)]


@dataclass
class DirectionStates:
    """Cached recurrence of one direction over the real tokens, in processing order."""

    h: np.ndarray  # (n, H)
    c: np.ndarray  # (n, H)
    gate_i: np.ndarray
    gate_f: np.ndarray
    gate_g: np.ndarray  # cell candidate, tanh
    gate_o: np.ndarray
    pre_g: np.ndarray  # pre-activation feeding the cell candidate
    pool_argmax: np.ndarray  # (H,) winning step per unit


@dataclass
class BilstmTrace:
    features: np.ndarray  # (2H,), may be negative
    probs: np.ndarray
    pool_argmax: np.ndarray  # (2H,) winning ORIGINAL token position per unit
    length: int  # number of real (non-pad) tokens
    states: dict  # direction name -> DirectionStates


def init_model(config: BilstmConfig, table: EmbeddingTable) -> BilstmModel:
    """Uniform fan-in scaled weights, zero biases except forget gates at 1."""
    if table.dimension != config.embed_dim:
        raise ValueError("embedding dimension does not match config")
    rng = np.random.default_rng(config.seed)
    H = config.units

    def direction() -> LstmParams:
        bound_x = 1.0 / np.sqrt(config.embed_dim)
        bound_h = 1.0 / np.sqrt(H)
        bias = np.zeros(4 * H)
        bias[H : 2 * H] = 1.0
        return LstmParams(
            w_input=rng.uniform(-bound_x, bound_x, size=(config.embed_dim, 4 * H)),
            w_hidden=rng.uniform(-bound_h, bound_h, size=(H, 4 * H)),
            bias=bias,
        )

    fw, bw = direction(), direction()
    bound = 1.0 / np.sqrt(config.feature_count)
    return BilstmModel(
        config=config,
        vocab=table.vocab,
        embeddings=table.matrix,
        embedding_ref=table.fingerprint(),
        forward_params=fw,
        backward_params=bw,
        dense_w=rng.uniform(-bound, bound, size=(config.class_count, config.feature_count)),
        dense_b=np.zeros(config.class_count),
        mask=np.ones((config.class_count, config.feature_count)),
    )


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _run_direction(params: LstmParams, E_seq: np.ndarray) -> DirectionStates:
    n, _ = E_seq.shape
    H = params.w_hidden.shape[0]
    h = np.zeros((n, H))
    c = np.zeros((n, H))
    gates = {name: np.zeros((n, H)) for name in "ifgo"}
    pre_g = np.zeros((n, H))
    h_prev = np.zeros(H)
    c_prev = np.zeros(H)
    for t in range(n):
        a = E_seq[t] @ params.w_input + h_prev @ params.w_hidden + params.bias
        ai, af, ag, ao = a[:H], a[H : 2 * H], a[2 * H : 3 * H], a[3 * H :]
        gi, gf = _sigmoid(ai), _sigmoid(af)
        gg, go = np.tanh(ag), _sigmoid(ao)
        c_t = gf * c_prev + gi * gg
        h_t = go * np.tanh(c_t)
        gates["i"][t], gates["f"][t], gates["g"][t], gates["o"][t] = gi, gf, gg, go
        pre_g[t] = ag
        h[t], c[t] = h_t, c_t
        h_prev, c_prev = h_t, c_t
    return DirectionStates(
        h=h,
        c=c,
        gate_i=gates["i"],
        gate_f=gates["f"],
        gate_g=gates["g"],
        gate_o=gates["o"],
        pre_g=pre_g,
        pool_argmax=h.argmax(axis=0),
    )


def forward(model: BilstmModel, ids: np.ndarray) -> BilstmTrace:
    """Run one encoded document; the max pooling skips padded positions."""
    if ids.shape != (model.config.max_len,):
        raise ValueError(f"encoded document must have length {model.config.max_len}")
    n = int((ids != PAD_INDEX).sum())
    if n == 0:
        raise ValueError("cannot run an all-padding document")
    E = model.embeddings[ids[:n]]
    fw = _run_direction(model.forward_params, E)
    bw = _run_direction(model.backward_params, E[::-1])
    features = np.concatenate([fw.h.max(axis=0), bw.h.max(axis=0)])
    probs = head_probs(model.dense_w, model.dense_b, model.mask, features)
    positions = np.concatenate([fw.pool_argmax, (n - 1) - bw.pool_argmax])
    return BilstmTrace(
        features=features,
        probs=probs,
        pool_argmax=positions,
        length=n,
        states={"fw": fw, "bw": bw},
    )


def _direction_grads(params: LstmParams, E_seq: np.ndarray, states: DirectionStates, dfeat: np.ndarray):
    """Backpropagation through time for one direction, given the gradient on
    this direction's pooled feature vector."""
    n = len(E_seq)
    H = params.w_hidden.shape[0]
    g_wx = np.zeros_like(params.w_input)
    g_wh = np.zeros_like(params.w_hidden)
    g_b = np.zeros_like(params.bias)

    dh_pool = np.zeros((n, H))
    dh_pool[states.pool_argmax, np.arange(H)] = dfeat

    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t in range(n - 1, -1, -1):
        dh = dh_pool[t] + dh_next
        tanh_c = np.tanh(states.c[t])
        go, gi, gf, gg = states.gate_o[t], states.gate_i[t], states.gate_f[t], states.gate_g[t]
        dc = dc_next + dh * go * (1.0 - tanh_c**2)
        c_prev = states.c[t - 1] if t > 0 else np.zeros(H)
        h_prev = states.h[t - 1] if t > 0 else np.zeros(H)
        da = np.concatenate(
            [
                dc * gg * gi * (1.0 - gi),  # input gate
                dc * c_prev * gf * (1.0 - gf),  # forget gate
                dc * gi * (1.0 - gg**2),  # cell candidate
                dh * tanh_c * go * (1.0 - go),  # output gate
            ]
        )
        g_wx += np.outer(E_seq[t], da)
        g_wh += np.outer(h_prev, da)
        g_b += da
        dh_next = da @ params.w_hidden.T
        dc_next = dc * gf
    return g_wx, g_wh, g_b


def _batch_loss_grads(config, embeddings, mask, params, X, y):
    """Loss and grads over a batch; param order is fw(Wx,Wh,b), bw(Wx,Wh,b), dense W, b."""
    fw = LstmParams(params[0], params[1], params[2])
    bw = LstmParams(params[3], params[4], params[5])
    dense_w, dense_b = params[6], params[7]
    B = len(X)
    H = config.units

    runs = []
    F = np.empty((B, 2 * H))
    for row, ids in enumerate(X):
        n = int((ids != PAD_INDEX).sum())
        E = embeddings[ids[:n]]
        sf = _run_direction(fw, E)
        sb = _run_direction(bw, E[::-1])
        runs.append((E, sf, sb))
        F[row] = np.concatenate([sf.h.max(axis=0), sb.h.max(axis=0)])

    wm = dense_w * mask
    logits = F @ wm.T + dense_b
    loss = cross_entropy_from_logits(logits, y)
    dlogits = softmax(logits)
    dlogits[np.arange(B), y] -= 1.0
    dlogits /= B
    g_dense_w = (dlogits.T @ F) * mask
    g_dense_b = dlogits.sum(axis=0)
    dF = dlogits @ wm

    g_fw = [np.zeros_like(p) for p in (fw.w_input, fw.w_hidden, fw.bias)]
    g_bw = [np.zeros_like(p) for p in (bw.w_input, bw.w_hidden, bw.bias)]
    for row, (E, sf, sb) in enumerate(runs):
        for grads, prm, states, seq, dfeat in (
            (g_fw, fw, sf, E, dF[row, :H]),
            (g_bw, bw, sb, E[::-1], dF[row, H:]),
        ):
            gx, gh, gb = _direction_grads(prm, seq, states, dfeat)
            grads[0] += gx
            grads[1] += gh
            grads[2] += gb
    return loss, [*g_fw, *g_bw, g_dense_w, g_dense_b]


def loss_on_batch(model: BilstmModel, X: np.ndarray, y: np.ndarray) -> float:
    loss, _ = _batch_loss_grads(model.config, model.embeddings, model.mask, _param_list(model), X, y)
    return loss


def loss_and_grads(model: BilstmModel, X: np.ndarray, y: np.ndarray):
    return _batch_loss_grads(model.config, model.embeddings, model.mask, _param_list(model), X, y)


def _param_list(model: BilstmModel) -> list[np.ndarray]:
    fw, bw = model.forward_params, model.backward_params
    return [fw.w_input, fw.w_hidden, fw.bias, bw.w_input, bw.w_hidden, bw.bias, model.dense_w, model.dense_b]


def train(model: BilstmModel, dataset: Dataset, cfg: TrainConfig) -> tuple[BilstmModel, list[dict]]:
    """Same contract as the CNN trainer: best-dev snapshot, frozen embeddings."""
    train_docs, dev_docs = dataset.split("train"), dataset.split("dev")
    if not train_docs or not dev_docs:
        raise ValueError("training requires non-empty train and dev splits")
    X, y = model.encode_docs(train_docs), np.asarray([d.label for d in train_docs])
    Xd, yd = model.encode_docs(dev_docs), np.asarray([d.label for d in dev_docs])
    params = [p.copy() for p in _param_list(model)]
    config = model.config

    def rebuild(plist) -> BilstmModel:
        return replace(
            model,
            forward_params=LstmParams(plist[0], plist[1], plist[2]),
            backward_params=LstmParams(plist[3], plist[4], plist[5]),
            dense_w=plist[6],
            dense_b=plist[7],
        )

    def grad_fn(batch):
        return _batch_loss_grads(config, model.embeddings, model.mask, params, X[batch], y[batch])

    def dev_eval():
        probe = rebuild([p.copy() for p in params])
        feats, _ = compute_features(probe, Xd)
        preds = head_probs(probe.dense_w, probe.dense_b, probe.mask, feats).argmax(axis=1)
        return macro_f1(preds, yd, config.class_count)

    best, log = fit(params, len(train_docs), grad_fn, dev_eval, cfg)
    return rebuild(best), log
