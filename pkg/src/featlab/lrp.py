"""Relevance propagation: decompose a hidden feature's value into per-word scores.

The propagation rule redistributes a neuron's relevance over its inputs in
proportion to each input's contribution z_jk = x_j * w_jk + b_k / n (the bias
is split evenly across the n contributing inputs), with a small epsilon
stabilizing the denominator. A word's score is the sum of the relevances its
embedding dimensions receive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bilstm import BilstmModel, BilstmTrace
from .cnn import ForwardTrace, ModelSnapshot, feature_location
from .corpus import Document


@dataclass(frozen=True)
class LrpConfig:
    epsilon: float = 1e-7
    # "signed": epsilon carries the sign of the denominator, so shares never
    # flip direction. "literal": plain +epsilon.
    stabilizer: str = "signed"

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.stabilizer not in ("signed", "literal"):
            raise ValueError("stabilizer must be 'signed' or 'literal'")


DEFAULT_CONFIG = LrpConfig()


@dataclass(frozen=True)
class RelevanceVector:
    """Per-word relevance scores for one (document, feature) pair."""

    doc_id: str
    feature_id: int
    scores: np.ndarray  # (max_len,), aligned with token positions


def _stabilize(denom: np.ndarray | float, config: LrpConfig):
    if config.stabilizer == "signed":
        sign = np.where(np.asarray(denom) >= 0, 1.0, -1.0)
        return denom + config.epsilon * sign
    return denom + config.epsilon


def lrp_linear_backward(
    relevance: np.ndarray,
    inputs: np.ndarray,
    weights: np.ndarray,
    bias: np.ndarray,
    config: LrpConfig = DEFAULT_CONFIG,
) -> np.ndarray:
    """Redistribute upper-layer relevance (m,) over inputs (n,) through weights (n, m).

    Each input's share of output k is z_jk / (stabilized sum_j z_jk); the
    lower relevance of input j sums its shares over all k.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    relevance = np.atleast_1d(np.asarray(relevance, dtype=np.float64))
    bias = np.atleast_1d(np.asarray(bias, dtype=np.float64))
    n = inputs.shape[0]
    z = inputs[:, None] * weights + bias[None, :] / n
    denom = _stabilize(z.sum(axis=0), config)
    return (z / denom * relevance[None, :]).sum(axis=1)


def _winning_window(model: ModelSnapshot, trace: ForwardTrace, feature_id: int):
    size_idx, filter_idx = feature_location(model.config, feature_id)
    size = model.config.filter_sizes[size_idx]
    start = int(trace.pool_argmax[feature_id])
    return size_idx, filter_idx, size, start


def feature_relevance_cnn(
    model: ModelSnapshot,
    doc: Document,
    feature_id: int,
    config: LrpConfig = DEFAULT_CONFIG,
    trace: ForwardTrace | None = None,
) -> RelevanceVector:
    """Fast path: crop the winning window and share the feature value by z.

    Relevance is zero everywhere when the feature never activated; otherwise it
    is confined to the window that won the max pooling.
    """
    if trace is None:
        trace = model.forward(model.encode_doc(doc))
    value = float(trace.features[feature_id])
    scores = np.zeros(model.config.max_len)
    if value <= 0.0:
        return RelevanceVector(doc.id, feature_id, scores)

    size_idx, filter_idx, size, start = _winning_window(model, trace, feature_id)
    ids = model.encode_doc(doc)
    window = model.embeddings[ids[start : start + size]]  # (size, D)
    weights = model.conv_w[size_idx][filter_idx]  # (size, D)
    bias = float(model.conv_b[size_idx][filter_idx])

    n = window.size
    z = window * weights + bias / n  # contributions; their sum is the pre-activation
    denom = _stabilize(z.sum(), config)
    shares = z / denom * value
    scores[start : start + size] = shares.sum(axis=1)
    return RelevanceVector(doc.id, feature_id, scores)


def feature_relevance_cnn_full(
    model: ModelSnapshot,
    doc: Document,
    feature_id: int,
    config: LrpConfig = DEFAULT_CONFIG,
    trace: ForwardTrace | None = None,
) -> RelevanceVector:
    """Oracle path: run the generic rule layer by layer over the whole input.

    Max pooling passes all relevance to the winning window; the convolution is
    then treated as one linear layer onto the full embedding canvas. Agrees
    with the fast path to floating-point accuracy.
    """
    if trace is None:
        trace = model.forward(model.encode_doc(doc))
    value = float(trace.features[feature_id])
    L = model.config.max_len
    if value <= 0.0:
        return RelevanceVector(doc.id, feature_id, np.zeros(L))

    size_idx, filter_idx, size, start = _winning_window(model, trace, feature_id)
    ids = model.encode_doc(doc)
    D = model.config.embed_dim

    # relevance canvas over every conv window position; only the winner is nonzero
    window_relevance = np.zeros(L - size + 1)
    window_relevance[start] = value

    canvas = np.zeros((L, D))
    weights = model.conv_w[size_idx][filter_idx]
    bias = np.asarray([model.conv_b[size_idx][filter_idx]])
    for position in np.flatnonzero(window_relevance):
        inputs = model.embeddings[ids[position : position + size]].reshape(-1)
        lower = lrp_linear_backward(
            np.asarray([window_relevance[position]]),
            inputs,
            weights.reshape(-1, 1),
            bias,
            config,
        )
        canvas[position : position + size] += lower.reshape(size, D)
    return RelevanceVector(doc.id, feature_id, canvas.sum(axis=1))


def feature_relevance_bilstm(
    model: BilstmModel,
    doc: Document,
    feature_id: int,
    config: LrpConfig = DEFAULT_CONFIG,
    trace: BilstmTrace | None = None,
) -> RelevanceVector:
    """Signed word relevances for one recurrent feature.

    Propagation starts at the time step that won the element-wise max and walks
    the recurrence backwards. Multiplicative gate connections give all
    relevance to the signal path (cell candidate and previous cell state);
    the gates themselves receive none.
    """
    if trace is None:
        trace = model.forward(model.encode_doc(doc))
    H = model.config.units
    direction = "fw" if feature_id < H else "bw"
    unit = feature_id % H
    states = trace.states[direction]
    n = trace.length
    value = float(trace.features[feature_id])
    ids = model.encode_doc(doc)
    order = np.arange(n) if direction == "fw" else np.arange(n - 1, -1, -1)
    E_seq = model.embeddings[ids[:n]][::1 if direction == "fw" else -1]
    params = model.direction(direction)
    D = model.config.embed_dim

    w_g_input = params.w_input[:, 2 * H : 3 * H]  # (D, H) cell-candidate columns
    w_g_hidden = params.w_hidden[:, 2 * H : 3 * H]  # (H, H)
    bias_g = params.bias[2 * H : 3 * H]

    start = int(states.pool_argmax[unit])
    r_h = np.zeros((n, H))
    r_c = np.zeros((n, H))
    r_h[start, unit] = value
    word_scores = np.zeros(n)  # indexed by processing step

    for t in range(start, -1, -1):
        r_c[t] += r_h[t]  # output gate takes nothing
        share = r_c[t] / _stabilize(states.c[t], config)
        if t > 0:
            r_c[t - 1] += states.gate_f[t] * states.c[t - 1] * share
        r_g = states.gate_i[t] * states.gate_g[t] * share

        # cell candidate is a linear layer over [x_t; h_{t-1}]
        h_prev = states.h[t - 1] if t > 0 else np.zeros(H)
        contributions = bias_g / (D + H)
        z_x = E_seq[t][:, None] * w_g_input + contributions  # (D, H)
        z_h = h_prev[:, None] * w_g_hidden + contributions  # (H, H)
        denom = _stabilize(states.pre_g[t], config)
        word_scores[t] += (z_x / denom * r_g).sum()
        if t > 0:
            r_h[t - 1] += (z_h / denom * r_g).sum(axis=1)

    scores = np.zeros(model.config.max_len)
    scores[order] = word_scores
    return RelevanceVector(doc.id, feature_id, scores)


def relevance_record(tokens, vector: RelevanceVector) -> dict:
    """JSON-ready dump entry: token array plus aligned scores (real tokens only)."""
    count = min(len(tokens), len(vector.scores))
    return {
        "doc_id": vector.doc_id,
        "feature_id": vector.feature_id,
        "tokens": list(tokens[:count]),
        "scores": [float(s) for s in vector.scores[:count]],
    }
