"""Persistent workspace: datasets, content-addressed snapshots, sessions, reports.

All durable state lives in an append-only JSONL event log plus snapshot files;
replaying the log reconstructs the workspace exactly. Snapshots are immutable:
applying feedback always produces a new snapshot file.
"""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path

from . import bilstm as bilstm_mod
from . import cnn as cnn_mod
from .cnn import CnnConfig
from .bilstm import BilstmConfig
from .corpus import Dataset, load_dataset, load_embeddings, Vocabulary
from .evaluation import (
    SubpopulationSpec,
    approx_randomization_test,
    bias_metrics,
    evaluate,
    gender_subpopulations,
    model_predictions,
)
from .experiments import apply_feedback
from .features import bilstm_feature_clouds, build_clouds
from .feedback import Answer, FeedbackSession, SessionStateError, create_session
from .optim import TrainConfig
from .snapshot import load_snapshot, save_snapshot
from .lrp import DEFAULT_CONFIG  # noqa: F401  (re-exported for service defaults)


class NotFound(KeyError):
    """Unknown dataset, model, session or question id."""


class Conflict(RuntimeError):
    """A mutating job clashed with session state or a busy model lineage."""


def _labels_arg(value):
    return value if isinstance(value, list) else None


class Workspace:
    """Single coordinator that owns the event log and all shared state.

    Reads and state mutations happen under one lock; long computations
    (training, fine-tuning) run outside it on immutable inputs.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.snapshots_dir = self.root / "snapshots"
        self.logs_dir = self.root / "logs"
        self.datasets_dir = self.root / "datasets"
        self.events_path = self.root / "events.jsonl"
        for directory in (self.snapshots_dir, self.logs_dir, self.datasets_dir):
            directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._models: dict[str, dict] = {}
        self._sessions: dict[str, FeedbackSession] = {}
        self._applied: dict[str, dict] = {}
        self._snapshot_cache: dict[str, object] = {}
        self._dataset_cache: dict[str, tuple[Dataset, object]] = {}
        self._cloud_cache: dict[str, list] = {}
        self._busy: set[str] = set()
        self._replay()

    # ------------------------------------------------------------------ events

    def _append_event(self, event: dict) -> None:
        event = {"ts": time.time(), **event}
        with open(self.events_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
            fh.flush()

    def _replay(self) -> None:
        if not self.events_path.exists():
            return
        raw_lines = self.events_path.read_text(encoding="utf-8").splitlines()
        for lineno, line in enumerate(raw_lines):
            if not line.strip():
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError:
                if lineno == len(raw_lines) - 1:
                    break  # torn tail write from a crash; everything before it holds
                raise
            self._apply_event(event)

    def _apply_event(self, event: dict) -> None:
        kind = event.get("event")
        if kind == "model-trained":
            self._models[event["model_id"]] = {
                "model_id": event["model_id"],
                "dataset": event["dataset"],
                "seed": event["seed"],
                "arch": event["arch"],
                "config": event["config"],
                "parent": event.get("parent"),
                "disabled": event.get("disabled", []),
            }
        elif kind == "session-created":
            session = FeedbackSession.from_json(event["session"])
            self._sessions[session.session_id] = session
        elif kind == "answer":
            session = self._sessions[event["session_id"]]
            session.answers.append(Answer.from_json(event["answer"]))
        elif kind == "session-aggregated":
            self._sessions[event["session_id"]].advance("aggregated")
        elif kind == "session-applied":
            session = self._sessions[event["session_id"]]
            session.advance("applied")
            self._models[event["model_id"]] = event["model_entry"]
            self._applied[event["session_id"]] = {
                "model_id": event["model_id"],
                "disabled": event["disabled"],
                "report": event["report"],
            }

    # ---------------------------------------------------------------- datasets

    def list_datasets(self) -> list[str]:
        return sorted(p.name for p in self.datasets_dir.iterdir() if p.is_dir())

    def corpus(self, name: str):
        with self._lock:
            if name in self._dataset_cache:
                return self._dataset_cache[name]
        path = self.datasets_dir / name
        if not path.is_dir():
            raise NotFound(f"unknown dataset {name!r}")
        dataset = load_dataset(path, name=name)
        vocab = Vocabulary.build(dataset)
        table = load_embeddings(path / "embeddings.txt", vocab)
        with self._lock:
            self._dataset_cache[name] = (dataset, table)
        return dataset, table

    # ------------------------------------------------------------------ models

    def list_models(self) -> list[dict]:
        with self._lock:
            return [dict(entry) for entry in self._models.values()]

    def model_entry(self, model_id: str) -> dict:
        with self._lock:
            if model_id not in self._models:
                raise NotFound(f"unknown model {model_id!r}")
            return dict(self._models[model_id])

    def snapshot(self, model_id: str):
        with self._lock:
            cached = self._snapshot_cache.get(model_id)
        if cached is not None:
            return cached
        entry = self.model_entry(model_id)
        model = load_snapshot(self.snapshots_dir / f"{model_id}.snap")
        with self._lock:
            self._snapshot_cache[model_id] = model
        del entry
        return model

    def train_model(self, dataset_name: str, seed: int = 0, config: dict | None = None) -> dict:
        """Synchronous training; the service wraps this in a job."""
        dataset, table = self.corpus(dataset_name)
        overrides = dict(config or {})
        arch = overrides.pop("arch", "cnn")
        train_keys = {"lr", "batch_size", "max_epochs", "patience"}
        train_overrides = {k: overrides.pop(k) for k in list(overrides) if k in train_keys}
        train_cfg = TrainConfig(seed=seed, **train_overrides)

        if arch == "cnn":
            model_cfg = CnnConfig(
                class_count=dataset.class_count,
                embed_dim=table.dimension,
                seed=seed,
                **{k: tuple(v) if k == "filter_sizes" else v for k, v in overrides.items()},
            )
            model, log = cnn_mod.train(cnn_mod.init_model(model_cfg, table), dataset, train_cfg)
        elif arch == "bilstm":
            model_cfg = BilstmConfig(
                class_count=dataset.class_count,
                embed_dim=table.dimension,
                seed=seed,
                **overrides,
            )
            model, log = bilstm_mod.train(bilstm_mod.init_model(model_cfg, table), dataset, train_cfg)
        else:
            raise ValueError(f"unknown architecture {arch!r}")

        model_id = save_snapshot(model, self.snapshots_dir / "pending.snap")
        (self.snapshots_dir / "pending.snap").replace(self.snapshots_dir / f"{model_id}.snap")
        log_path = self.logs_dir / f"{model_id}.jsonl"
        with open(log_path, "w", encoding="utf-8") as fh:
            for entry in log:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")

        entry = {
            "model_id": model_id,
            "dataset": dataset_name,
            "seed": seed,
            "arch": arch,
            "config": model_cfg.to_json(),
            "parent": None,
            "disabled": [],
        }
        with self._lock:
            self._append_event({"event": "model-trained", **entry})
            self._models[model_id] = entry
            self._snapshot_cache[model_id] = model
        return {"model_id": model_id, "log": str(log_path), "epochs": len(log)}

    # ---------------------------------------------------------------- features

    def clouds(self, model_id: str):
        with self._lock:
            if model_id in self._cloud_cache:
                return self._cloud_cache[model_id]
        entry = self.model_entry(model_id)
        model = self.snapshot(model_id)
        dataset, _ = self.corpus(entry["dataset"])
        train_docs = dataset.split("train")
        if entry["arch"] == "cnn":
            clouds = build_clouds(model, train_docs)
        else:
            clouds = bilstm_feature_clouds(model, train_docs)
        with self._lock:
            self._cloud_cache[model_id] = clouds
        return clouds

    def features_summary(self, model_id: str) -> list[dict]:
        clouds = self.clouds(model_id)
        model = self.snapshot(model_id)
        disabled = set(model.disabled_features())
        rows = []
        for item in clouds:
            if isinstance(item, tuple):
                positive, negative = item
                fid = positive.feature_id
                dead = positive.dead and negative.dead
                suggested = positive.suggested_class
            else:
                fid = item.feature_id
                dead = item.dead
                suggested = item.suggested_class
            if suggested is None:
                from .features import suggested_class as _sc

                suggested = _sc(model, fid)
            rows.append(
                {
                    "feature_id": fid,
                    "suggested_class": int(suggested),
                    "dead": bool(dead),
                    "disabled": fid in disabled,
                }
            )
        return rows

    def cloud_json(self, model_id: str, feature_id: int):
        clouds = self.clouds(model_id)
        if not 0 <= feature_id < len(clouds):
            raise NotFound(f"unknown feature {feature_id} for model {model_id}")
        item = clouds[feature_id]
        if isinstance(item, tuple):
            positive, negative = item
            return {"positive": positive.to_json(), "negative": negative.to_json()}
        return item.to_json()

    # ---------------------------------------------------------------- sessions

    def create_session(self, model_id: str, task: str, policy: str, policy_params: dict | None = None) -> FeedbackSession:
        entry = self.model_entry(model_id)
        model = self.snapshot(model_id)
        dataset, _ = self.corpus(entry["dataset"])
        session = create_session(
            model_id,
            dataset.classes,
            self.clouds(model_id),
            task=task,
            policy=policy,
            policy_params=policy_params,
        )
        with self._lock:
            self._append_event({"event": "session-created", "session": session.to_json()})
            self._sessions[session.session_id] = session
        del model
        return session

    def session(self, session_id: str) -> FeedbackSession:
        with self._lock:
            if session_id not in self._sessions:
                raise NotFound(f"unknown session {session_id!r}")
            return self._sessions[session_id]

    def add_answer(self, session_id: str, question_id: str, respondent_id: str, choice: str, cloud: str = "activation") -> int:
        with self._lock:
            session = self.session(session_id)
            answer = Answer(
                question_id=question_id,
                respondent_id=respondent_id,
                choice=choice,
                timestamp=time.time(),
                cloud=cloud,
            )
            session.add_answer(answer)  # validates; raises before anything is logged
            session.answers.pop()
            self._append_event({"event": "answer", "session_id": session_id, "answer": answer.to_json()})
            session.answers.append(answer)
            return len(session.answers_for(question_id, cloud=cloud))

    def session_progress(self, session_id: str) -> dict:
        from .feedback import POLICY_MAJORITY, aggregate_majority
        from .features import suggested_class as _sc

        session = self.session(session_id)
        model = self.snapshot(session.model_id)
        rows = []
        preview = []
        for question in session.questions:
            answers = session.answers_for(question.id)
            counts: dict[str, int] = {}
            for a in answers:
                counts[a.choice] = counts.get(a.choice, 0) + 1
            majority = aggregate_majority(answers, question.options) if answers else None
            suggested = session.classes[_sc(model, question.feature_id)]
            would_disable = (
                session.policy == POLICY_MAJORITY and majority is not None and majority != suggested
            )
            if would_disable:
                preview.append(question.feature_id)
            rows.append(
                {
                    "question_id": question.id,
                    "feature_id": question.feature_id,
                    "counts": counts,
                    "answers": len(answers),
                    "majority": majority,
                    "suggested": suggested,
                    "would_disable": would_disable,
                }
            )
        return {
            "session_id": session_id,
            "status": session.status,
            "policy": session.policy,
            "questions": rows,
            "provisional_disabled": preview,
        }

    def apply_session(self, session_id: str, seed: int | None = None, finetune_always: bool = False) -> dict:
        with self._lock:
            session = self.session(session_id)
            if session.status == "applied":
                raise Conflict(f"session {session_id} was already applied")
            if session.model_id in self._busy:
                raise Conflict(f"model {session.model_id} has a mutating job in flight")
            self._busy.add(session.model_id)
        try:
            entry = self.model_entry(session.model_id)
            model = self.snapshot(session.model_id)
            dataset, _ = self.corpus(entry["dataset"])
            finetune_seed = entry["seed"] if seed is None else seed
            new_model, disabled, finetuned = apply_feedback(
                model,
                dataset,
                session,
                finetune_cfg=TrainConfig(seed=finetune_seed),
                finetune_always=finetune_always,
            )
            before = evaluate(model, dataset.split("test"), dataset=entry["dataset"], model_ref=session.model_id)
            new_id = save_snapshot(new_model, self.snapshots_dir / f"applying-{session_id}.snap")
            (self.snapshots_dir / f"applying-{session_id}.snap").replace(self.snapshots_dir / f"{new_id}.snap")
            after = evaluate(new_model, dataset.split("test"), dataset=entry["dataset"], model_ref=new_id)
            report = {
                "disabled": disabled,
                "finetuned": finetuned,
                "before": before.to_json(),
                "after": after.to_json(),
            }
            model_entry = {
                "model_id": new_id,
                "dataset": entry["dataset"],
                "seed": finetune_seed,
                "arch": entry["arch"],
                "config": entry["config"],
                "parent": session.model_id,
                "disabled": disabled,
            }
            with self._lock:
                # snapshot file is durable before any event mentions it
                self._append_event({"event": "session-aggregated", "session_id": session_id})
                session.advance("aggregated")
                self._append_event(
                    {
                        "event": "session-applied",
                        "session_id": session_id,
                        "model_id": new_id,
                        "model_entry": model_entry,
                        "disabled": disabled,
                        "report": report,
                    }
                )
                session.advance("applied")
                self._models[new_id] = model_entry
                self._snapshot_cache[new_id] = new_model
                self._applied[session_id] = {"model_id": new_id, "disabled": disabled, "report": report}
            return {"model_id": new_id, **report}
        finally:
            with self._lock:
                self._busy.discard(session.model_id)

    # ----------------------------------------------------------------- metrics

    def metrics(self, model_id: str, dataset_name: str, split: str = "test", bias: list[str] | None = None) -> dict:
        model = self.snapshot(model_id)
        dataset, _ = self.corpus(dataset_name)
        docs = dataset.split(split)
        if not docs:
            raise NotFound(f"dataset {dataset_name!r} has no {split!r} split")
        report = evaluate(model, docs, dataset=dataset_name, model_ref=model_id).to_json()
        if bias:
            specs = [s for s in gender_subpopulations() if s.name in bias]
            missing = set(bias) - {s.name for s in specs}
            if missing:
                raise NotFound(f"unknown subpopulations {sorted(missing)}; bundled: male, female")
            preds = model_predictions(model, docs)
            labels = [d.label for d in docs]
            report["bias"] = bias_metrics(preds, labels, docs, specs, positive_class=1).to_json()
        return report

    def compare(self, model_a: str, model_b: str, dataset_name: str, split: str = "test", seed: int = 0) -> dict:
        snap_a = self.snapshot(model_a)
        snap_b = self.snapshot(model_b)
        dataset, _ = self.corpus(dataset_name)
        docs = dataset.split(split)
        if not docs:
            raise NotFound(f"dataset {dataset_name!r} has no {split!r} split")
        report_a = evaluate(snap_a, docs, dataset=dataset_name, model_ref=model_a)
        report_b = evaluate(snap_b, docs, dataset=dataset_name, model_ref=model_b)
        labels = [d.label for d in docs]
        test = approx_randomization_test(
            model_predictions(snap_a, docs),
            model_predictions(snap_b, docs),
            labels,
            seed=seed,
        )
        return {
            "a": report_a.to_json(),
            "b": report_b.to_json(),
            "delta": {
                "accuracy": report_a.accuracy - report_b.accuracy,
                "macro_f1": report_a.macro_f1 - report_b.macro_f1,
            },
            "randomization": test.to_json(),
        }

    # ------------------------------------------------------------------- state

    def describe(self) -> dict:
        """Canonical view of durable state, for equality checks after replay."""
        with self._lock:
            return {
                "models": {k: dict(v) for k, v in sorted(self._models.items())},
                "sessions": {k: s.to_json() for k, s in sorted(self._sessions.items())},
                "applied": {k: dict(v) for k, v in sorted(self._applied.items())},
            }
