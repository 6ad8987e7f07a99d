"""Reusable experiment pipelines shared by the command line and the test suite."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cnn import CnnConfig, disable_features, finetune_head, init_model, train
from .corpus import Dataset, EmbeddingTable, Vocabulary, load_dataset, load_embeddings
from .evaluation import evaluate, female_terms, male_terms, metrics_table
from .features import WordCloudData, build_clouds, rank_features
from .feedback import (
    POLICY_LEXICON,
    POLICY_MAJORITY,
    POLICY_SCORE_RANK,
    TASK_BINARY,
    FeedbackSession,
    create_session,
    decide_disable_lexicon,
    decide_disable_majority,
    decide_disable_score_rank,
    mean_feature_scores,
    simulate_session_answers,
)
from .optim import TrainConfig
from .snapshot import model_id

ABLATIONS = ("A", "B", "C", "AB", "AC", "BC")


def decide_disabled(session: FeedbackSession, model) -> list[int]:
    """Disabled feature set for a session under its policy.

    The lexicon policy scans the clouds embedded in the session's own
    questions (exactly what a reviewer saw), so decisions replay bit-for-bit.
    """
    if session.policy == POLICY_MAJORITY:
        return decide_disable_majority(session, model)
    if session.policy == POLICY_SCORE_RANK:
        ranks = tuple(session.policy_params.get("ranks", ("C",)))
        return decide_disable_score_rank(session, model, ranks)
    if session.policy == POLICY_LEXICON:
        lexicon = session.policy_params.get("lexicon")
        if not lexicon:
            lexicon = list(male_terms()) + list(female_terms())
        top_k = int(session.policy_params.get("top_k", 20))
        clouds = []
        for question in session.questions:
            for polarity, items in question.clouds.items():
                clouds.append(
                    WordCloudData(
                        feature_id=question.feature_id,
                        polarity=polarity,
                        items=list(items),
                        top_n=len(items),
                    )
                )
        return sorted(set(decide_disable_lexicon(clouds, lexicon, top_k=top_k)))
    raise ValueError(f"unknown policy {session.policy!r}")


def apply_feedback(
    model,
    dataset: Dataset,
    session: FeedbackSession,
    finetune_cfg: TrainConfig | None = None,
    finetune_always: bool = False,
):
    """Decide, disable and fine-tune. Returns (model, disabled ids, finetuned?).

    With nothing to disable the input model comes back untouched unless
    `finetune_always` forces a head pass.
    """
    disabled = decide_disabled(session, model)
    if not disabled and not finetune_always:
        return model, disabled, False
    variant = disable_features(model, disabled)
    variant, _ = finetune_head(variant, dataset, finetune_cfg or TrainConfig())
    return variant, disabled, True


def load_corpus_dir(data_dir: str | Path, embeddings_path: str | Path | None = None):
    """Dataset + embedding table from a dataset directory (embeddings.txt inside
    unless overridden)."""
    data_dir = Path(data_dir)
    dataset = load_dataset(data_dir)
    vocab = Vocabulary.build(dataset)
    table = load_embeddings(embeddings_path or data_dir / "embeddings.txt", vocab)
    return dataset, table


def train_run(
    dataset: Dataset,
    table: EmbeddingTable,
    seed: int = 0,
    cnn_config: CnnConfig | None = None,
    train_config: TrainConfig | None = None,
):
    """Init + train with a single seed knob covering both init and batching."""
    config = cnn_config or CnnConfig(
        class_count=dataset.class_count, embed_dim=table.dimension, seed=seed
    )
    if config.seed != seed:
        config = CnnConfig(**{**config.to_json(), "seed": seed})
    cfg = train_config or TrainConfig(seed=seed)
    if cfg.seed != seed:
        cfg = TrainConfig(**{**cfg.__dict__, "seed": seed})
    model, log = train(init_model(config, table), dataset, cfg)
    return model, log


@dataclass
class AblationRun:
    seed: int
    original_f1: float
    ablated_f1: dict[str, float]
    ranks: dict[str, list[int]]
    mean_scores: list[float]


@dataclass
class AblationReport:
    """Macro F1 of the original model and of each rank-disabled variant."""

    runs: list[AblationRun] = field(default_factory=list)

    def mean_f1(self, key: str) -> float:
        if key == "original":
            return float(np.mean([r.original_f1 for r in self.runs]))
        return float(np.mean([r.ablated_f1[key] for r in self.runs]))

    def ordering(self) -> list[str]:
        """All variants sorted by mean macro F1, best first."""
        keys = ["original", *ABLATIONS]
        return sorted(keys, key=lambda k: -self.mean_f1(k))

    def to_json(self) -> dict:
        return {
            "runs": [
                {
                    "seed": r.seed,
                    "original_f1": r.original_f1,
                    "ablated_f1": r.ablated_f1,
                    "ranks": r.ranks,
                    "mean_scores": r.mean_scores,
                }
                for r in self.runs
            ],
            "mean_f1": {k: self.mean_f1(k) for k in ("original", *ABLATIONS)},
            "ordering_best_first": self.ordering(),
        }


def rank_ablation_experiment(
    dataset: Dataset,
    table: EmbeddingTable,
    oracle: dict[str, str],
    seeds=(0, 1, 2),
    noise_rate: float = 0.1,
    annotators: int = 10,
    cnn_config: CnnConfig | None = None,
    train_config: TrainConfig | None = None,
    eval_split: str = "test",
) -> AblationReport:
    """Train per seed, score features with simulated annotators on the feature
    clouds, partition into A/B/C, then disable each rank combination and
    fine-tune the head before evaluating.
    """
    report = AblationReport()
    test_docs = dataset.split(eval_split)
    for seed in seeds:
        model, _ = train_run(dataset, table, seed, cnn_config, train_config)
        clouds = build_clouds(model, dataset.split("train"))
        session = create_session(
            model_id(model),
            dataset.classes,
            clouds,
            task=TASK_BINARY,
            policy=POLICY_SCORE_RANK,
            session_id=f"ablation-{seed}",
        )
        for answer in simulate_session_answers(
            session, oracle, noise_rate=noise_rate, annotators=annotators, seed=seed
        ):
            session.add_answer(answer)
        scores = mean_feature_scores(session, model)
        ranks = rank_features(scores)

        original_f1 = evaluate(model, test_docs).macro_f1
        ablated = {}
        finetune_cfg = train_config or TrainConfig(seed=seed)
        for combo in ABLATIONS:
            feature_ids = sorted(set(sum((ranks[r] for r in combo), [])))
            variant = disable_features(model, feature_ids)
            variant, _ = finetune_head(variant, dataset, finetune_cfg)
            ablated[combo] = evaluate(variant, test_docs).macro_f1
        report.runs.append(
            AblationRun(
                seed=seed,
                original_f1=original_f1,
                ablated_f1=ablated,
                ranks=ranks,
                mean_scores=[float(s) for s in scores],
            )
        )
    return report


def ablation_table(report: AblationReport) -> str:
    keys = ["original", *ABLATIONS]
    lines = ["Variant    | Macro F1 (mean over seeds)"]
    lines.append("-----------+---------------------------")
    for key in keys:
        label = "Original" if key == "original" else f"Disabling {key}"
        lines.append(f"{label:<11}| {report.mean_f1(key):.3f}")
    lines.append("")
    lines.append("Best-to-worst: " + " > ".join(report.ordering()))
    return "\n".join(lines)
