"""Feedback sessions: questions, answers, aggregation and disabling policies."""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .features import (
    FeatureProfile,
    WordCloudData,
    binary_options,
    cloud_data,
    rank_features,
    score_binary_answer,
    score_multiclass_answer,
    suggested_class,
)

EITHER = "could be either"

TASK_BINARY = "binary-graded"
TASK_CLASS_CHOICE = "class-choice"

POLICY_MAJORITY = "majority-vote"
POLICY_SCORE_RANK = "score-rank"
POLICY_LEXICON = "gender-lexicon"

POLICIES = (POLICY_MAJORITY, POLICY_SCORE_RANK, POLICY_LEXICON)


class SessionStateError(RuntimeError):
    """A session was used out of order (e.g. applied twice)."""


@dataclass
class Question:
    id: str
    feature_id: int
    task: str
    options: list[str]
    classes: list[str]
    # polarity -> ranked (text, weight) items shown to the annotator
    clouds: dict[str, list[tuple[str, float]]]

    @property
    def cloud_keys(self) -> list[str]:
        return list(self.clouds.keys())

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "feature_id": self.feature_id,
            "task": self.task,
            "options": self.options,
            "classes": self.classes,
            "clouds": {k: [{"text": t, "weight": w} for t, w in v] for k, v in self.clouds.items()},
        }

    @classmethod
    def from_json(cls, data: dict) -> "Question":
        return cls(
            id=data["id"],
            feature_id=data["feature_id"],
            task=data["task"],
            options=list(data["options"]),
            classes=list(data["classes"]),
            clouds={
                k: [(item["text"], float(item["weight"])) for item in v]
                for k, v in data["clouds"].items()
            },
        )


@dataclass
class Answer:
    question_id: str
    respondent_id: str
    choice: str
    timestamp: float = 0.0
    cloud: str = "activation"

    def to_json(self) -> dict:
        return {
            "question_id": self.question_id,
            "respondent_id": self.respondent_id,
            "choice": self.choice,
            "timestamp": self.timestamp,
            "cloud": self.cloud,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Answer":
        return cls(
            question_id=data["question_id"],
            respondent_id=data["respondent_id"],
            choice=data["choice"],
            timestamp=float(data.get("timestamp", 0.0)),
            cloud=data.get("cloud", "activation"),
        )


STATUS_ORDER = ("collecting", "aggregated", "applied")


@dataclass
class FeedbackSession:
    session_id: str
    model_id: str
    task: str
    policy: str
    classes: list[str]
    questions: list[Question]
    policy_params: dict = field(default_factory=dict)
    answers: list[Answer] = field(default_factory=list)
    status: str = "collecting"

    def question(self, question_id: str) -> Question:
        for q in self.questions:
            if q.id == question_id:
                return q
        raise KeyError(f"unknown question {question_id!r}")

    def add_answer(self, answer: Answer) -> None:
        if self.status != "collecting":
            raise SessionStateError(f"session is {self.status}; answers are closed")
        question = self.question(answer.question_id)
        if answer.choice not in question.options:
            raise ValueError(
                f"choice {answer.choice!r} is not allowed; options are {question.options}"
            )
        if answer.cloud not in question.clouds:
            raise ValueError(
                f"cloud {answer.cloud!r} is not part of question {question.id}; "
                f"expected one of {question.cloud_keys}"
            )
        self.answers.append(answer)

    def answers_for(self, question_id: str, cloud: str | None = None) -> list[Answer]:
        return [
            a
            for a in self.answers
            if a.question_id == question_id and (cloud is None or a.cloud == cloud)
        ]

    def advance(self, status: str) -> None:
        """Move the state machine forward; moving backwards or re-applying is rejected."""
        if STATUS_ORDER.index(status) <= STATUS_ORDER.index(self.status):
            raise SessionStateError(f"cannot move session from {self.status!r} to {status!r}")
        self.status = status

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "model_id": self.model_id,
            "task": self.task,
            "policy": self.policy,
            "policy_params": self.policy_params,
            "classes": self.classes,
            "status": self.status,
            "questions": [q.to_json() for q in self.questions],
            "answers": [a.to_json() for a in self.answers],
        }

    @classmethod
    def from_json(cls, data: dict) -> "FeedbackSession":
        return cls(
            session_id=data["session_id"],
            model_id=data["model_id"],
            task=data["task"],
            policy=data["policy"],
            policy_params=dict(data.get("policy_params", {})),
            classes=list(data["classes"]),
            questions=[Question.from_json(q) for q in data["questions"]],
            answers=[Answer.from_json(a) for a in data.get("answers", [])],
            status=data.get("status", "collecting"),
        )


def class_choice_options(classes: Sequence[str]) -> list[str]:
    return [*classes, EITHER]


def build_questions(
    classes: Sequence[str],
    task: str,
    clouds,
) -> list[Question]:
    """One question per feature. `clouds` is a list of WordCloudData (one cloud
    per feature) or of (positive, negative) pairs; paired clouds are answered
    independently per cloud."""
    if task == TASK_BINARY:
        options = binary_options(classes)
    elif task == TASK_CLASS_CHOICE:
        options = class_choice_options(classes)
    else:
        raise ValueError(f"unknown task type {task!r}")

    questions = []
    for entry in clouds:
        if isinstance(entry, WordCloudData):
            feature_id = entry.feature_id
            cloud_map = {"activation": list(entry.items)}
        else:
            positive, negative = entry
            feature_id = positive.feature_id
            cloud_map = {"positive": list(positive.items), "negative": list(negative.items)}
        questions.append(
            Question(
                id=f"f{feature_id}",
                feature_id=feature_id,
                task=task,
                options=list(options),
                classes=list(classes),
                clouds=cloud_map,
            )
        )
    return questions


def create_session(
    model_id: str,
    classes: Sequence[str],
    clouds,
    task: str,
    policy: str,
    policy_params: dict | None = None,
    session_id: str | None = None,
) -> FeedbackSession:
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    if policy == POLICY_MAJORITY and task != TASK_CLASS_CHOICE:
        raise ValueError("majority-vote disabling needs class-choice questions")
    if task == TASK_BINARY and len(classes) != 2:
        raise ValueError("binary-graded questions need exactly two classes")
    return FeedbackSession(
        session_id=session_id or f"s-{uuid.uuid4().hex[:12]}",
        model_id=model_id,
        task=task,
        policy=policy,
        policy_params=dict(policy_params or {}),
        classes=list(classes),
        questions=build_questions(classes, task, clouds),
    )


def aggregate_majority(answers: Sequence[Answer], options: Sequence[str]) -> str:
    """Modal choice. Ties go to "could be either" when it is among the tied
    choices, otherwise to the earliest option in presentation order."""
    if not answers:
        raise ValueError("no answers to aggregate")
    counts: dict[str, int] = {}
    for a in answers:
        counts[a.choice] = counts.get(a.choice, 0) + 1
    top = max(counts.values())
    tied = [option for option in options if counts.get(option, 0) == top]
    if EITHER in tied:
        return EITHER
    return tied[0]


def decide_disable_majority(session: FeedbackSession, model) -> list[int]:
    """Disable every feature whose majority answer is not the class the weight
    matrix says the feature supports ("could be either" never selects it)."""
    disabled = []
    for question in session.questions:
        answers = session.answers_for(question.id)
        if not answers:
            raise ValueError(f"no answers to aggregate for question {question.id}")
        winner = aggregate_majority(answers, question.options)
        expected = session.classes[suggested_class(model, question.feature_id)]
        if winner != expected:
            disabled.append(question.feature_id)
    return sorted(disabled)


def mean_feature_scores(session: FeedbackSession, model) -> np.ndarray:
    """Average numeric score per feature from the collected answers.

    Graded two-class answers score in {-2..2} against the suggested class; for
    paired clouds the negative cloud's expectation is the opposite class and
    the feature takes the sum of the two means. Class-choice answers on
    multiclass tasks score the min-max-normalized weight of the chosen class.
    """
    scores = np.zeros(len(session.questions))
    for idx, question in enumerate(session.questions):
        fid = question.feature_id
        suggested = suggested_class(model, fid)
        total = 0.0
        for cloud_key in question.cloud_keys:
            answers = session.answers_for(question.id, cloud=cloud_key)
            if not answers:
                continue
            expected = suggested
            if cloud_key == "negative" and len(session.classes) == 2:
                expected = 1 - suggested
            if question.task == TASK_BINARY:
                values = [score_binary_answer(a.choice, expected, session.classes) for a in answers]
            else:
                column = model.dense_w[:, fid]
                values = [
                    score_multiclass_answer(
                        session.classes.index(a.choice) if a.choice in session.classes else None,
                        column,
                    )
                    for a in answers
                ]
            total += float(np.mean(values))
        scores[idx] = total
    return scores


def decide_disable_score_rank(
    session: FeedbackSession, model, ranks_to_disable: Sequence[str] = ("C",)
) -> list[int]:
    """Rank features by mean score and disable the requested rank groups."""
    if not session.answers:
        raise ValueError("no answers to aggregate")
    ranks = rank_features(mean_feature_scores(session, model))
    disabled: list[int] = []
    for rank in ranks_to_disable:
        if rank not in ranks:
            raise ValueError(f"unknown rank {rank!r}")
        disabled.extend(ranks[rank])
    return sorted(disabled)


def decide_disable_lexicon(
    profiles: Sequence[FeatureProfile] | Sequence[WordCloudData],
    lexicon: Iterable[str],
    top_k: int = 20,
) -> list[int]:
    """Disable every feature whose top-k cloud items contain any lexicon term.

    Matching is case-insensitive at the token level; enlarging the lexicon can
    only grow the disabled set.
    """
    terms = {t.lower() for t in lexicon}
    if not terms:
        return []
    disabled = []
    for entry in profiles:
        if isinstance(entry, FeatureProfile):
            cloud = cloud_data(entry, top_n=top_k)
        else:
            cloud = entry
        items = cloud.items[:top_k]
        hit = any(token in terms for text, _ in items for token in text.split())
        if hit:
            disabled.append(cloud.feature_id)
    return sorted(disabled)


def _oracle_votes(
    items: Sequence[tuple[str, float]], oracle: dict[str, str], classes: Sequence[str]
) -> dict[str, float]:
    votes: dict[str, float] = {}
    for text, weight in items:
        for token in text.split():
            cls = oracle.get(token)
            if cls is not None and cls in classes:
                votes[cls] = votes.get(cls, 0.0) + max(float(weight), 0.0)
    return votes


def simulate_annotator(
    question: Question,
    oracle: dict[str, str],
    noise_rate: float = 0.0,
    seed=0,
    respondent_id: str = "sim",
    cloud: str = "activation",
    coverage_floor: float = 0.15,
    mostly_threshold: float = 0.5,
    dominance_threshold: float = 0.75,
) -> Answer:
    """Deterministic stand-in for a crowd worker.

    Votes for the class whose oracle keywords dominate the shown cloud items
    (weighted by item weight). A cloud whose mass is mostly keyword-free reads
    as unrelated to any class: below `coverage_floor` the answer is "none" /
    "could be either"; a graded answer is "mostly" only when keywords both
    dominate one class and cover at least `mostly_threshold` of the cloud.
    With probability `noise_rate` the answer flips to a uniformly random
    different option.
    """
    items = question.clouds[cloud]
    votes = _oracle_votes(items, {k.lower(): v for k, v in oracle.items()}, question.classes)
    total_weight = sum(max(float(w), 0.0) for _, w in items)
    keyword_weight = sum(votes.values())
    coverage = keyword_weight / total_weight if total_weight > 0 else 0.0
    ranked = sorted(votes.items(), key=lambda kv: (-kv[1], question.classes.index(kv[0])))
    tie = len(ranked) > 1 and ranked[0][1] == ranked[1][1]
    unreadable = not ranked or tie or coverage < coverage_floor
    if question.task == TASK_CLASS_CHOICE:
        choice = EITHER if unreadable else ranked[0][0]
    elif unreadable:
        choice = "none"
    else:
        name, weight = ranked[0]
        dominance = weight / keyword_weight
        mostly = dominance >= dominance_threshold and coverage >= mostly_threshold
        choice = f"mostly {name}" if mostly else f"partly {name}"

    rng = np.random.default_rng(seed)
    if noise_rate > 0.0 and rng.random() < noise_rate:
        others = [o for o in question.options if o != choice]
        choice = others[int(rng.integers(len(others)))]
    return Answer(question_id=question.id, respondent_id=respondent_id, choice=choice, cloud=cloud)


def simulate_session_answers(
    session: FeedbackSession,
    oracle: dict[str, str],
    noise_rate: float = 0.0,
    annotators: int = 10,
    seed: int = 0,
) -> list[Answer]:
    """Ten-ish simulated respondents per question (and per cloud for pairs)."""
    answers = []
    for q_idx, question in enumerate(session.questions):
        for c_idx, cloud_key in enumerate(question.cloud_keys):
            for r in range(annotators):
                answers.append(
                    simulate_annotator(
                        question,
                        oracle,
                        noise_rate=noise_rate,
                        seed=(seed, q_idx, c_idx, r),
                        respondent_id=f"sim-{r}",
                        cloud=cloud_key,
                    )
                )
    return answers
