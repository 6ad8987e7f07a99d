"""1-D convolutional text classifier with a masked output layer.

Feature extraction is a bank of word-window filters with ReLU and global max
pooling; the classification head is a dense layer whose weights are gated by a
{0,1} mask so individual features can be switched off. Everything runs in
float64 numpy, with hand-written gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import Dataset, Document, EmbeddingTable, Vocabulary, encode
from .evaluation import macro_f1
from .head import head_probs, zeroed_mask
from .optim import TrainConfig, cross_entropy_from_logits, fit, softmax


@dataclass(frozen=True)
class CnnConfig:
    class_count: int
    filter_sizes: tuple[int, ...] = (2, 3, 4)
    filters_per_size: int = 10
    max_len: int = 150
    embed_dim: int = 300
    seed: int = 0

    def __post_init__(self):
        if self.class_count < 2:
            raise ValueError("need at least two classes")
        if not self.filter_sizes or min(self.filter_sizes) < 1 or self.filters_per_size < 1:
            raise ValueError("filter sizes and counts must be positive")
        if max(self.filter_sizes) > self.max_len:
            raise ValueError("filter size exceeds max_len")

    @property
    def feature_count(self) -> int:
        return len(self.filter_sizes) * self.filters_per_size

    def to_json(self) -> dict:
        return {
            "class_count": self.class_count,
            "filter_sizes": list(self.filter_sizes),
            "filters_per_size": self.filters_per_size,
            "max_len": self.max_len,
            "embed_dim": self.embed_dim,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, data: dict) -> "CnnConfig":
        data = dict(data)
        data["filter_sizes"] = tuple(data["filter_sizes"])
        return cls(**data)


@dataclass(frozen=True)
class ForwardTrace:
    """Result of one forward pass: pooled features, class probabilities and,
    for every feature, the window start position that won the max pooling."""

    features: np.ndarray  # (d,) nonnegative
    probs: np.ndarray  # (class_count,)
    pool_argmax: np.ndarray  # (d,) ints in [0, max_len - size]


def _sealed(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass
class ModelSnapshot:
    """Immutable bundle of everything needed to run and explain the classifier."""

    config: CnnConfig
    vocab: Vocabulary
    embeddings: np.ndarray  # (vocab.size, embed_dim); frozen, row 0 all zeros
    embedding_ref: str
    conv_w: list[np.ndarray]  # per filter size: (filters_per_size, size, embed_dim)
    conv_b: list[np.ndarray]  # per filter size: (filters_per_size,)
    dense_w: np.ndarray  # (class_count, d)
    dense_b: np.ndarray  # (class_count,)
    mask: np.ndarray  # (class_count, d) of {0.0, 1.0}
    arch: str = field(default="cnn", init=False)

    def __post_init__(self):
        self.embeddings = _sealed(self.embeddings)
        self.conv_w = [_sealed(w) for w in self.conv_w]
        self.conv_b = [_sealed(b) for b in self.conv_b]
        self.dense_w = _sealed(self.dense_w)
        self.dense_b = _sealed(self.dense_b)
        self.mask = _sealed(self.mask)
        if self.dense_w.shape != (self.config.class_count, self.config.feature_count):
            raise ValueError(f"dense weight shape {self.dense_w.shape} does not match config")
        columns_ok = np.all((self.mask == self.mask[0:1]) & np.isin(self.mask, (0.0, 1.0)))
        if not columns_ok:
            raise ValueError("mask columns must be uniformly zero or one")

    @property
    def feature_count(self) -> int:
        return self.config.feature_count

    def encode_doc(self, doc: Document) -> np.ndarray:
        return encode(doc, self.vocab, self.config.max_len)

    def encode_docs(self, docs) -> np.ndarray:
        return np.stack([self.encode_doc(d) for d in docs])

    def forward(self, ids: np.ndarray) -> ForwardTrace:
        return forward(self, ids)

    def disabled_features(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.mask[0] == 0.0)]


def feature_location(config: CnnConfig, feature_id: int) -> tuple[int, int]:
    """Map a feature id to (filter-size index, filter index within that size)."""
    if not 0 <= feature_id < config.feature_count:
        raise ValueError(f"feature id {feature_id} out of range [0, {config.feature_count})")
    return divmod(feature_id, config.filters_per_size)


def init_model(config: CnnConfig, table: EmbeddingTable) -> ModelSnapshot:
    """Fresh snapshot: uniform fan-in scaled weights, zero biases, all-ones mask."""
    if table.dimension != config.embed_dim:
        raise ValueError(
            f"embedding dimension {table.dimension} does not match config ({config.embed_dim})"
        )
    rng = np.random.default_rng(config.seed)
    conv_w, conv_b = [], []
    for size in config.filter_sizes:
        bound = 1.0 / np.sqrt(size * config.embed_dim)
        conv_w.append(rng.uniform(-bound, bound, size=(config.filters_per_size, size, config.embed_dim)))
        conv_b.append(np.zeros(config.filters_per_size))
    bound = 1.0 / np.sqrt(config.feature_count)
    dense_w = rng.uniform(-bound, bound, size=(config.class_count, config.feature_count))
    dense_b = np.zeros(config.class_count)
    mask = np.ones((config.class_count, config.feature_count))
    return ModelSnapshot(
        config=config,
        vocab=table.vocab,
        embeddings=table.matrix,
        embedding_ref=table.fingerprint(),
        conv_w=conv_w,
        conv_b=conv_b,
        dense_w=dense_w,
        dense_b=dense_b,
        mask=mask,
    )


def _doc_conv(config: CnnConfig, embeddings, conv_w, conv_b, ids: np.ndarray):
    """Per-size pre-activations for one encoded document."""
    E = embeddings[ids]  # (L, D)
    L = config.max_len
    pres = []
    for k, size in enumerate(config.filter_sizes):
        T = L - size + 1
        pre = np.zeros((T, conv_w[k].shape[0]))
        for offset in range(size):
            pre += E[offset : offset + T] @ conv_w[k][:, offset, :].T
        pre += conv_b[k]
        pres.append(pre)
    return pres


def forward(model: ModelSnapshot, ids: np.ndarray) -> ForwardTrace:
    """Run one encoded document of length max_len through the full network."""
    if ids.shape != (model.config.max_len,):
        raise ValueError(f"encoded document must have length {model.config.max_len}")
    feats, args = [], []
    for pre in _doc_conv(model.config, model.embeddings, model.conv_w, model.conv_b, ids):
        act = np.maximum(pre, 0.0)
        feats.append(act.max(axis=0))
        args.append(act.argmax(axis=0))  # ties resolve to the smallest window index
    features = np.concatenate(feats)
    probs = head_probs(model.dense_w, model.dense_b, model.mask, features)
    return ForwardTrace(features=features, probs=probs, pool_argmax=np.concatenate(args))


def compute_features(model, ids_matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pooled feature vectors and winning pool positions for many documents.

    Works for any snapshot type exposing ``forward``.
    """
    feats = np.empty((len(ids_matrix), model.feature_count))
    args = np.empty((len(ids_matrix), model.feature_count), dtype=np.int64)
    for row, ids in enumerate(ids_matrix):
        trace = model.forward(ids)
        feats[row] = trace.features
        args[row] = trace.pool_argmax
    return feats, args


def predict(model, docs) -> tuple[np.ndarray, np.ndarray]:
    """Labels and probabilities for a document list; batching is a plain loop."""
    ids_matrix = model.encode_docs(docs)
    probs = np.stack([model.forward(ids).probs for ids in ids_matrix])
    return probs.argmax(axis=1), probs


def _unpack_params(config: CnnConfig, params: list[np.ndarray]):
    n = len(config.filter_sizes)
    return params[:n], params[n : 2 * n], params[2 * n], params[2 * n + 1]


def _batch_loss_grads(config, embeddings, mask, params, X, y):
    """Loss and gradients for a batch; gradients match the param list order."""
    conv_w, conv_b, dense_w, dense_b = _unpack_params(config, params)
    B, L = X.shape
    E = embeddings[X]  # (B, L, D)

    pres, args, feats = [], [], []
    for k, size in enumerate(config.filter_sizes):
        T = L - size + 1
        pre = np.zeros((B, T, conv_w[k].shape[0]))
        for offset in range(size):
            pre += E[:, offset : offset + T, :] @ conv_w[k][:, offset, :].T
        pre += conv_b[k]
        act = np.maximum(pre, 0.0)
        pres.append(pre)
        args.append(act.argmax(axis=1))  # (B, nf)
        feats.append(act.max(axis=1))
    f = np.concatenate(feats, axis=1)  # (B, d)

    wm = dense_w * mask
    logits = f @ wm.T + dense_b
    loss = cross_entropy_from_logits(logits, y)

    p = softmax(logits)
    dlogits = p
    dlogits[np.arange(B), y] -= 1.0
    dlogits /= B
    g_dense_w = (dlogits.T @ f) * mask
    g_dense_b = dlogits.sum(axis=0)
    dF = dlogits @ wm  # (B, d)

    g_conv_w, g_conv_b = [], []
    offset_feat = 0
    for k, size in enumerate(config.filter_sizes):
        nf = conv_w[k].shape[0]
        T = L - size + 1
        dFk = dF[:, offset_feat : offset_feat + nf]
        offset_feat += nf
        dact = np.zeros((B, T, nf))
        np.put_along_axis(dact, args[k][:, None, :], dFk[:, None, :], axis=1)
        dpre = dact * (pres[k] > 0.0)
        g_b = dpre.sum(axis=(0, 1))
        g_w = np.empty_like(conv_w[k])
        for o in range(size):
            g_w[:, o, :] = np.einsum("btn,btd->nd", dpre, E[:, o : o + T, :])
        g_conv_w.append(g_w)
        g_conv_b.append(g_b)

    return loss, [*g_conv_w, *g_conv_b, g_dense_w, g_dense_b]


def loss_on_batch(model: ModelSnapshot, X: np.ndarray, y: np.ndarray) -> float:
    """Cross-entropy of the snapshot on an encoded batch (used for gradient checks)."""
    params = [*model.conv_w, *model.conv_b, model.dense_w, model.dense_b]
    loss, _ = _batch_loss_grads(model.config, model.embeddings, model.mask, params, X, y)
    return loss


def loss_and_grads(model: ModelSnapshot, X: np.ndarray, y: np.ndarray):
    params = [*model.conv_w, *model.conv_b, model.dense_w, model.dense_b]
    return _batch_loss_grads(model.config, model.embeddings, model.mask, params, X, y)


def _labels(docs) -> np.ndarray:
    return np.asarray([d.label for d in docs], dtype=np.int64)


def train(model: ModelSnapshot, dataset: Dataset, cfg: TrainConfig) -> tuple[ModelSnapshot, list[dict]]:
    """Train all layers except the frozen embeddings; keep the best-dev snapshot.

    Returns the snapshot with the highest dev macro F1 seen (the initial model
    when ``max_epochs=0``) and the per-epoch log.
    """
    train_docs, dev_docs = dataset.split("train"), dataset.split("dev")
    if not train_docs or not dev_docs:
        raise ValueError("training requires non-empty train and dev splits")
    X, y = model.encode_docs(train_docs), _labels(train_docs)
    Xd, yd = model.encode_docs(dev_docs), _labels(dev_docs)

    config = model.config
    params = [
        *[w.copy() for w in model.conv_w],
        *[b.copy() for b in model.conv_b],
        model.dense_w.copy(),
        model.dense_b.copy(),
    ]

    def grad_fn(batch):
        return _batch_loss_grads(config, model.embeddings, model.mask, params, X[batch], y[batch])

    def dev_eval():
        # copies: snapshot construction seals its arrays, params must stay writable
        conv_w, conv_b, dense_w, dense_b = _unpack_params(config, [p.copy() for p in params])
        probe = replace(model, conv_w=list(conv_w), conv_b=list(conv_b), dense_w=dense_w, dense_b=dense_b)
        feats, _ = compute_features(probe, Xd)
        preds = head_probs(dense_w, dense_b, model.mask, feats).argmax(axis=1)
        return macro_f1(preds, yd, config.class_count)

    best, log = fit(params, len(train_docs), grad_fn, dev_eval, cfg)
    conv_w, conv_b, dense_w, dense_b = _unpack_params(config, best)
    return replace(model, conv_w=list(conv_w), conv_b=list(conv_b), dense_w=dense_w, dense_b=dense_b), log


def finetune_head(model, dataset: Dataset, cfg: TrainConfig):
    """Retrain only the dense layer (warm start); extractor, embeddings and mask stay put.

    Architecture-independent: works for any snapshot exposing ``forward``.

    Feature vectors are constant while the extractor is frozen, so they are
    computed once up front. Masked weight columns receive zero gradient and the
    mask itself is untouched, so disabled features stay disabled.
    """
    train_docs, dev_docs = dataset.split("train"), dataset.split("dev")
    if not train_docs or not dev_docs:
        raise ValueError("fine-tuning requires non-empty train and dev splits")
    F, _ = compute_features(model, model.encode_docs(train_docs))
    Fd, _ = compute_features(model, model.encode_docs(dev_docs))
    y, yd = _labels(train_docs), _labels(dev_docs)

    mask = model.mask
    params = [model.dense_w.copy(), model.dense_b.copy()]

    def grad_fn(batch):
        fb, yb = F[batch], y[batch]
        wm = params[0] * mask
        logits = fb @ wm.T + params[1]
        loss = cross_entropy_from_logits(logits, yb)
        dlogits = softmax(logits)
        dlogits[np.arange(len(yb)), yb] -= 1.0
        dlogits /= len(yb)
        return loss, [(dlogits.T @ fb) * mask, dlogits.sum(axis=0)]

    def dev_eval():
        preds = head_probs(params[0], params[1], mask, Fd).argmax(axis=1)
        return macro_f1(preds, yd, model.config.class_count)

    best, log = fit(params, len(train_docs), grad_fn, dev_eval, cfg)
    return replace(model, dense_w=best[0], dense_b=best[1]), log


def disable_features(model, feature_ids):
    """New snapshot with the given feature columns masked off everywhere.

    All other parameters are carried over untouched; disabling twice is a no-op.
    """
    return replace(model, mask=zeroed_mask(model.mask, feature_ids))
