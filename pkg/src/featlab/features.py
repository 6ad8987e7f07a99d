"""Aggregate per-feature evidence into word-cloud data, score and rank features."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .cnn import ModelSnapshot, feature_location
from .corpus import Document
from .lrp import LrpConfig, DEFAULT_CONFIG, feature_relevance_bilstm


@dataclass(frozen=True)
class ProfileEntry:
    doc_id: str
    ngram: str
    activation: float
    position: int


@dataclass
class FeatureProfile:
    """Winning n-gram of one feature on every training document.

    Entries with zero activation are kept (one entry per document) but never
    rendered in a cloud.
    """

    feature_id: int
    filter_size: int
    entries: list[ProfileEntry] = field(default_factory=list)


def profile_features(model: ModelSnapshot, docs: Sequence[Document]) -> list[FeatureProfile]:
    """One profile per feature, one entry per document.

    N-grams are rendered from the original tokens; window positions that fall
    into padding are dropped from the text.
    """
    config = model.config
    profiles = []
    for feature_id in range(config.feature_count):
        size_idx, _ = feature_location(config, feature_id)
        profiles.append(FeatureProfile(feature_id=feature_id, filter_size=config.filter_sizes[size_idx]))

    for doc in docs:
        trace = model.forward(model.encode_doc(doc))
        for feature_id in range(config.feature_count):
            start = int(trace.pool_argmax[feature_id])
            size = profiles[feature_id].filter_size
            ngram = " ".join(doc.tokens[start : start + size])
            profiles[feature_id].entries.append(
                ProfileEntry(
                    doc_id=doc.id,
                    ngram=ngram,
                    activation=float(trace.features[feature_id]),
                    position=start,
                )
            )
    return profiles


@dataclass
class WordCloudData:
    feature_id: int
    polarity: str  # activation | positive-relevance | negative-relevance
    items: list[tuple[str, float]]  # (text, weight >= 0), sorted by weight desc
    top_n: int
    dead: bool = False
    suggested_class: int | None = None

    def to_json(self) -> dict:
        return {
            "feature_id": self.feature_id,
            "polarity": self.polarity,
            "suggested_class": self.suggested_class,
            "dead": self.dead,
            "items": [{"text": t, "weight": w} for t, w in self.items],
        }


def _dedup(pairs: Iterable[tuple[str, float]], mode: str) -> dict[str, float]:
    merged: dict[str, float] = {}
    for text, weight in pairs:
        if mode == "max":
            merged[text] = max(weight, merged.get(text, -np.inf))
        else:
            merged[text] = weight + merged.get(text, 0.0)
    return merged


def cloud_data(profile: FeatureProfile, top_n: int = 40, dedup: str = "max") -> WordCloudData:
    """Collapse a profile into ranked cloud items.

    Duplicate n-grams merge keeping the maximum activation (weights stay actual
    observed feature values, never invented); zero-activation entries and
    all-padding windows are excluded. A feature that never activated yields an
    empty cloud flagged dead.
    """
    if dedup not in ("max", "sum"):
        raise ValueError("dedup must be 'max' or 'sum'")
    live = ((e.ngram, e.activation) for e in profile.entries if e.activation > 0.0 and e.ngram)
    merged = _dedup(live, dedup)
    items = sorted(merged.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]
    return WordCloudData(
        feature_id=profile.feature_id,
        polarity="activation",
        items=[(t, float(w)) for t, w in items],
        top_n=top_n,
        dead=not items,
    )


def bilstm_cloud_pair(
    entries: Iterable[tuple[str, Sequence[str], np.ndarray]],
    feature_id: int,
    per_doc_top: int = 3,
    top_n: int = 40,
) -> tuple[WordCloudData, WordCloudData]:
    """Positive and negative clouds from signed relevance entries.

    For each document (doc_id, tokens, scores), the `per_doc_top` words with
    the highest positive relevance feed the positive cloud and the most
    negative ones feed the negative cloud; weights are absolute relevances,
    deduplicated by max.
    """
    positive: list[tuple[str, float]] = []
    negative: list[tuple[str, float]] = []
    for _, tokens, scores in entries:
        scores = np.asarray(scores)[: len(tokens)]
        order = np.argsort(scores, kind="stable")
        top_pos = [i for i in order[::-1][:per_doc_top] if scores[i] > 0.0]
        top_neg = [i for i in order[:per_doc_top] if scores[i] < 0.0]
        positive.extend((tokens[i], float(scores[i])) for i in top_pos)
        negative.extend((tokens[i], float(-scores[i])) for i in top_neg)

    def build(pairs, polarity):
        merged = _dedup(pairs, "max")
        items = sorted(merged.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]
        return WordCloudData(
            feature_id=feature_id,
            polarity=polarity,
            items=[(t, float(w)) for t, w in items],
            top_n=top_n,
            dead=not items,
        )

    return build(positive, "positive-relevance"), build(negative, "negative-relevance")


def bilstm_feature_clouds(
    model,
    docs: Sequence[Document],
    per_doc_top: int = 3,
    top_n: int = 40,
    config: LrpConfig = DEFAULT_CONFIG,
) -> list[tuple[WordCloudData, WordCloudData]]:
    """Cloud pairs for every recurrent feature, from scratch relevance runs."""
    traces = [(doc, model.forward(model.encode_doc(doc))) for doc in docs]
    pairs = []
    for feature_id in range(model.feature_count):
        entries = []
        for doc, trace in traces:
            vector = feature_relevance_bilstm(model, doc, feature_id, config, trace=trace)
            entries.append((doc.id, doc.tokens, vector.scores))
        pairs.append(bilstm_cloud_pair(entries, feature_id, per_doc_top, top_n))
    return pairs


def suggested_class(model, feature_id: int) -> int:
    """The class this feature supports most: argmax over the feature's weight
    column, ties to the lowest class index."""
    return int(np.argmax(model.dense_w[:, feature_id]))


def build_clouds(model: ModelSnapshot, docs: Sequence[Document], top_n: int = 40) -> list[WordCloudData]:
    """Profile + cloud + suggested class for every feature of a CNN snapshot."""
    clouds = []
    for profile in profile_features(model, docs):
        cloud = cloud_data(profile, top_n=top_n)
        cloud.suggested_class = suggested_class(model, profile.feature_id)
        clouds.append(cloud)
    return clouds


BINARY_DEGREES = ("mostly", "partly")


def binary_options(classes: Sequence[str]) -> list[str]:
    """The five graded options for a two-class task, most-first-class first."""
    if len(classes) != 2:
        raise ValueError("binary options need exactly two classes")
    c0, c1 = classes
    return [f"mostly {c0}", f"partly {c0}", "none", f"partly {c1}", f"mostly {c1}"]


def score_binary_answer(choice: str, suggested: int, classes: Sequence[str]) -> int:
    """Map a graded answer onto {-2..2} relative to the model-suggested class.

    Full/partial agreement with the suggested class scores +2/+1, "none"
    scores 0, partial/full opposition scores -1/-2.
    """
    if choice == "none":
        return 0
    for degree, magnitude in zip(BINARY_DEGREES, (2, 1)):
        prefix = degree + " "
        if choice.startswith(prefix):
            name = choice[len(prefix) :]
            if name not in classes:
                break
            return magnitude if classes.index(name) == suggested else -magnitude
    raise ValueError(f"invalid graded answer {choice!r}; options are {binary_options(classes)}")


def score_multiclass_answer(answer: int | None, column: np.ndarray) -> float:
    """Min-max normalize the feature's weight column and return the chosen
    class's normalized weight; no class chosen scores 0. A constant column is
    degenerate: every class normalizes to 0."""
    if answer is None:
        return 0.0
    column = np.asarray(column, dtype=np.float64)
    lo, hi = column.min(), column.max()
    if hi == lo:
        return 0.0
    return float((column[int(answer)] - lo) / (hi - lo))


RANK_NAMES = ("A", "B", "C")


def rank_features(mean_scores: Sequence[float]) -> dict[str, list[int]]:
    """Partition features into thirds by descending mean score (ties: lower id
    first). When the count is not divisible by three, earlier ranks take the
    remainder."""
    scores = list(mean_scores)
    d = len(scores)
    if d < len(RANK_NAMES):
        raise ValueError("need at least three features to rank")
    order = sorted(range(d), key=lambda i: (-scores[i], i))
    base, remainder = divmod(d, 3)
    sizes = [base + (1 if r < remainder else 0) for r in range(3)]
    ranks: dict[str, list[int]] = {}
    offset = 0
    for name, size in zip(RANK_NAMES, sizes):
        ranks[name] = sorted(order[offset : offset + size])
        offset += size
    return ranks


@dataclass(frozen=True)
class FeatureScore:
    feature_id: int
    responses: tuple[float, ...]
    mean: float
    rank: str | None = None
