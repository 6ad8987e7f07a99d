"""Predictive metrics, group-fairness rates, and significance testing."""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .corpus import Document


def confusion_counts(preds, labels, class_count: int) -> np.ndarray:
    """Confusion matrix with rows = true class, columns = predicted class."""
    matrix = np.zeros((class_count, class_count), dtype=np.int64)
    for t, p in zip(labels, preds):
        matrix[int(t), int(p)] += 1
    return matrix


def metrics_from_predictions(preds, labels, class_count: int) -> dict:
    """Accuracy, per-class precision/recall/F1 and macro F1.

    Undefined ratios (empty denominators) score 0 and the class is flagged.
    """
    matrix = confusion_counts(preds, labels, class_count)
    total = matrix.sum()
    per_class = []
    flags = []
    for c in range(class_count):
        tp = matrix[c, c]
        pred_c = matrix[:, c].sum()
        true_c = matrix[c, :].sum()
        precision = tp / pred_c if pred_c else 0.0
        recall = tp / true_c if true_c else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        if pred_c == 0 or true_c == 0 or precision + recall == 0:
            flags.append(c)
        per_class.append(
            {
                "precision": float(precision),
                "recall": float(recall),
                "f1": float(f1),
                "support": int(true_c),
            }
        )
    return {
        "accuracy": float(np.trace(matrix) / total) if total else 0.0,
        "per_class": per_class,
        "macro_f1": float(np.mean([m["f1"] for m in per_class])),
        "zero_division_classes": flags,
    }


def macro_f1(preds, labels, class_count: int) -> float:
    return metrics_from_predictions(preds, labels, class_count)["macro_f1"]


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    per_class: tuple[dict, ...]
    macro_f1: float
    dataset: str = ""
    model_ref: str = ""
    seed: int | None = None
    zero_division_classes: tuple[int, ...] = ()

    def to_json(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class": list(self.per_class),
            "macro_f1": self.macro_f1,
            "dataset": self.dataset,
            "model_ref": self.model_ref,
            "seed": self.seed,
            "zero_division_classes": list(self.zero_division_classes),
        }


def model_predictions(model, docs: Sequence[Document]) -> np.ndarray:
    ids = model.encode_docs(docs)
    return np.asarray([int(np.argmax(model.forward(row).probs)) for row in ids])


def evaluate(model, docs: Sequence[Document], dataset: str = "", model_ref: str = "", seed: int | None = None) -> MetricsReport:
    """Score a snapshot on a document list."""
    if not docs:
        raise ValueError("cannot evaluate on an empty split")
    preds = model_predictions(model, docs)
    labels = np.asarray([d.label for d in docs])
    stats = metrics_from_predictions(preds, labels, model.config.class_count)
    return MetricsReport(
        accuracy=stats["accuracy"],
        per_class=tuple(stats["per_class"]),
        macro_f1=stats["macro_f1"],
        dataset=dataset,
        model_ref=model_ref,
        seed=seed,
        zero_division_classes=tuple(stats["zero_division_classes"]),
    )


@dataclass(frozen=True)
class SubpopulationSpec:
    """A named group identified by exact (case-insensitive) token matches."""

    name: str
    terms: tuple[str, ...]

    def __post_init__(self):
        if not self.terms:
            raise ValueError(f"subpopulation {self.name!r} has no terms")
        object.__setattr__(self, "terms", tuple(t.lower() for t in self.terms))


def subpop_membership(doc: Document, spec: SubpopulationSpec) -> bool:
    """True iff any document token equals any spec term. Membership is non-exclusive."""
    terms = set(spec.terms)
    return any(token in terms for token in doc.tokens)


@dataclass(frozen=True)
class BiasReport:
    fped: float
    fned: float
    overall_fpr: float | None
    overall_fnr: float | None
    subpops: tuple[dict, ...]
    skipped: tuple[dict, ...] = ()
    positive_class: int = 1

    def to_json(self) -> dict:
        return {
            "fped": self.fped,
            "fned": self.fned,
            "overall_fpr": self.overall_fpr,
            "overall_fnr": self.overall_fnr,
            "subpops": list(self.subpops),
            "skipped": list(self.skipped),
            "positive_class": self.positive_class,
        }


def _rates(preds, labels, positive_class):
    """(fpr, fnr); either is None when its denominator is empty."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    pos = labels == positive_class
    neg = ~pos
    fpr = float((preds[neg] == positive_class).mean()) if neg.any() else None
    fnr = float((preds[pos] != positive_class).mean()) if pos.any() else None
    return fpr, fnr


def bias_metrics(
    preds,
    labels,
    docs: Sequence[Document],
    specs: Sequence[SubpopulationSpec],
    positive_class: int = 1,
) -> BiasReport:
    """Equality differences: sum over groups of |overall rate - group rate|.

    Groups whose rate is undefined (no negatives for FPR, no positives for
    FNR) are skipped for that sum and reported in ``skipped``.
    """
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if not (len(preds) == len(labels) == len(docs)):
        raise ValueError("predictions, labels and documents must be aligned")
    overall_fpr, overall_fnr = _rates(preds, labels, positive_class)

    fped = 0.0
    fned = 0.0
    rows = []
    skipped = []
    for spec in specs:
        member = np.asarray([subpop_membership(d, spec) for d in docs])
        if not member.any():
            skipped.append({"name": spec.name, "reason": "no member documents"})
            continue
        fpr_t, fnr_t = _rates(preds[member], labels[member], positive_class)
        rows.append({"name": spec.name, "size": int(member.sum()), "fpr": fpr_t, "fnr": fnr_t})
        if fpr_t is None or overall_fpr is None:
            skipped.append({"name": spec.name, "reason": "false positive rate undefined"})
        else:
            fped += abs(overall_fpr - fpr_t)
        if fnr_t is None or overall_fnr is None:
            skipped.append({"name": spec.name, "reason": "false negative rate undefined"})
        else:
            fned += abs(overall_fnr - fnr_t)

    return BiasReport(
        fped=fped,
        fned=fned,
        overall_fpr=overall_fpr,
        overall_fnr=overall_fnr,
        subpops=tuple(rows),
        skipped=tuple(skipped),
        positive_class=positive_class,
    )


@dataclass(frozen=True)
class RandomizationResult:
    p_value: float
    significant: bool
    observed_delta: float
    iterations: int
    alpha: float

    def to_json(self) -> dict:
        return {
            "p_value": self.p_value,
            "significant": self.significant,
            "observed_delta": self.observed_delta,
            "iterations": self.iterations,
            "alpha": self.alpha,
        }


def approx_randomization_test(
    preds_a,
    preds_b,
    labels,
    metric: Callable[[np.ndarray, np.ndarray], float] | None = None,
    iterations: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
) -> RandomizationResult:
    """Paired randomization test: swap the two systems' outputs per example
    with probability 0.5 and compare the shuffled metric gap to the observed
    one. The p-value uses add-one smoothing: (hits + 1) / (iterations + 1).
    """
    preds_a = np.asarray(preds_a)
    preds_b = np.asarray(preds_b)
    labels = np.asarray(labels)
    if not (preds_a.shape == preds_b.shape == labels.shape):
        raise ValueError("prediction and label arrays must be aligned")
    if metric is None:
        class_count = int(max(preds_a.max(), preds_b.max(), labels.max())) + 1
        metric = lambda p, y: macro_f1(p, y, class_count)

    observed = metric(preds_a, labels) - metric(preds_b, labels)
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(iterations):
        swap = rng.random(len(labels)) < 0.5
        shuffled_a = np.where(swap, preds_b, preds_a)
        shuffled_b = np.where(swap, preds_a, preds_b)
        delta = metric(shuffled_a, labels) - metric(shuffled_b, labels)
        if abs(delta) >= abs(observed):
            hits += 1
    p = (hits + 1) / (iterations + 1)
    return RandomizationResult(
        p_value=p,
        significant=p < alpha,
        observed_delta=float(observed),
        iterations=iterations,
        alpha=alpha,
    )


def load_lexicon(path: str | Path) -> tuple[str, ...]:
    """One lowercase term per line; blank lines and ``#`` comments ignored."""
    terms = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip().lower()
        if line and not line.startswith("#"):
            terms.append(line)
    return tuple(terms)


def _bundled_terms(filename: str) -> tuple[str, ...]:
    text = importlib.resources.files("featlab.data").joinpath(filename).read_text(encoding="utf-8")
    return tuple(line.strip() for line in text.splitlines() if line.strip())


def male_terms() -> tuple[str, ...]:
    return _bundled_terms("male_terms.txt")


def female_terms() -> tuple[str, ...]:
    return _bundled_terms("female_terms.txt")


def gender_subpopulations() -> list[SubpopulationSpec]:
    return [
        SubpopulationSpec("male", male_terms()),
        SubpopulationSpec("female", female_terms()),
    ]


def metrics_table(rows: Sequence[tuple[str, MetricsReport]], classes: Sequence[str]) -> str:
    """Plain-text results table: one row per model, F1 per class, accuracy, macro F1."""
    header = ["Model"] + [f"{c} F1" for c in classes] + ["Accuracy", "Macro F1"]
    lines = [" | ".join(header)]
    lines.append("-+-".join("-" * len(h) for h in header))
    for name, report in rows:
        cells = [name]
        cells += [f"{m['f1']:.3f}" for m in report.per_class]
        cells += [f"{report.accuracy:.3f}", f"{report.macro_f1:.3f}"]
        lines.append(" | ".join(cells))
    return "\n".join(lines)
