"""HTTP facade over the workspace: publish models and clouds, collect answers,
apply feedback, expose metrics. Long-running train/apply calls return a job id
to poll. State changes go through the workspace's event log, so a restarted
service recovers by replay."""

from __future__ import annotations

import os
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel, Field

from .corpus import CorpusError
from .feedback import SessionStateError
from .optim import TrainingDiverged
from .snapshot import SnapshotError
from .workspace import Conflict, NotFound, Workspace


class TrainRequest(BaseModel):
    dataset: str
    seed: int = 0
    config: dict = Field(default_factory=dict)


class SessionRequest(BaseModel):
    model_id: str
    task: str = "class-choice"
    policy: str = "majority-vote"
    policy_params: dict = Field(default_factory=dict)


class AnswerRequest(BaseModel):
    question_id: str
    respondent_id: str
    choice: str
    cloud: str = "activation"


class ApplyRequest(BaseModel):
    seed: int | None = None
    finetune_always: bool = False


class JobRegistry:
    """Bounded worker pool; workers=0 runs jobs inline (useful for tests)."""

    def __init__(self, workers: int):
        self.inline = workers <= 0
        self.pool = None if self.inline else ThreadPoolExecutor(max_workers=workers)
        self.jobs: dict[str, dict] = {}
        self.lock = threading.Lock()

    def submit(self, kind: str, fn) -> str:
        job_id = f"job-{uuid.uuid4().hex[:10]}"
        with self.lock:
            self.jobs[job_id] = {"id": job_id, "kind": kind, "status": "queued", "result": None, "error": None}

        def run():
            with self.lock:
                self.jobs[job_id]["status"] = "running"
            try:
                result = fn()
            except (Conflict, SessionStateError) as exc:
                with self.lock:
                    self.jobs[job_id].update(status="failed", error=str(exc), conflict=True)
            except Exception as exc:  # noqa: BLE001
                with self.lock:
                    self.jobs[job_id].update(status="failed", error=str(exc))
            else:
                with self.lock:
                    self.jobs[job_id].update(status="done", result=result)

        if self.inline:
            run()
        else:
            self.pool.submit(run)
        return job_id

    def get(self, job_id: str) -> dict:
        with self.lock:
            if job_id not in self.jobs:
                raise NotFound(f"unknown job {job_id!r}")
            return dict(self.jobs[job_id])


def create_app(data_dir: str | Path, workers: int = 2) -> FastAPI:
    workspace = Workspace(data_dir)
    jobs = JobRegistry(workers)
    app = FastAPI(title="featlab", version="0.1.0")
    app.state.workspace = workspace
    app.state.jobs = jobs

    def http_error(exc: Exception) -> HTTPException:
        if isinstance(exc, NotFound):
            return HTTPException(status_code=404, detail=str(exc))
        if isinstance(exc, (Conflict, SessionStateError)):
            return HTTPException(status_code=409, detail=str(exc))
        if isinstance(exc, (ValueError, CorpusError, SnapshotError, TrainingDiverged)):
            return HTTPException(status_code=422, detail=str(exc))
        raise exc

    @app.get("/datasets")
    def list_datasets():
        return {"datasets": workspace.list_datasets()}

    @app.get("/models")
    def list_models():
        return {"models": workspace.list_models()}

    @app.post("/models/train")
    def train_model(body: TrainRequest):
        try:
            workspace.corpus(body.dataset)  # validate before queueing
        except (NotFound, CorpusError) as exc:
            raise http_error(exc) from exc
        job_id = jobs.submit(
            "train", lambda: workspace.train_model(body.dataset, seed=body.seed, config=body.config)
        )
        return {"job_id": job_id}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        try:
            job = jobs.get(job_id)
        except NotFound as exc:
            raise http_error(exc) from exc
        if job.get("conflict"):
            raise HTTPException(status_code=409, detail=job["error"])
        return job

    @app.get("/models/{model_id}/features")
    def model_features(model_id: str):
        try:
            return {"model_id": model_id, "features": workspace.features_summary(model_id)}
        except (NotFound, SnapshotError) as exc:
            raise http_error(exc) from exc

    @app.get("/models/{model_id}/features/{feature_id}/cloud")
    def feature_cloud(model_id: str, feature_id: int):
        try:
            return workspace.cloud_json(model_id, feature_id)
        except (NotFound, SnapshotError) as exc:
            raise http_error(exc) from exc

    @app.post("/sessions")
    def post_session(body: SessionRequest):
        try:
            session = workspace.create_session(
                body.model_id, task=body.task, policy=body.policy, policy_params=body.policy_params
            )
        except (NotFound, ValueError) as exc:
            raise http_error(exc) from exc
        return {"session_id": session.session_id, "questions": [q.to_json() for q in session.questions]}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        try:
            return workspace.session(session_id).to_json()
        except NotFound as exc:
            raise http_error(exc) from exc

    @app.get("/sessions/{session_id}/progress")
    def get_progress(session_id: str):
        try:
            return workspace.session_progress(session_id)
        except NotFound as exc:
            raise http_error(exc) from exc

    @app.post("/sessions/{session_id}/answers")
    def post_answer(session_id: str, body: AnswerRequest):
        try:
            count = workspace.add_answer(
                session_id, body.question_id, body.respondent_id, body.choice, cloud=body.cloud
            )
        except (NotFound, ValueError, SessionStateError, KeyError) as exc:
            raise http_error(NotFound(str(exc)) if isinstance(exc, KeyError) and not isinstance(exc, NotFound) else exc) from exc
        return {"accepted": True, "answers_for_question": count}

    @app.post("/sessions/{session_id}/apply")
    def post_apply(session_id: str, body: ApplyRequest | None = None):
        body = body or ApplyRequest()
        try:
            session = workspace.session(session_id)
            if session.status == "applied":
                raise Conflict(f"session {session_id} was already applied")
        except (NotFound, Conflict) as exc:
            raise http_error(exc) from exc
        job_id = jobs.submit(
            "apply",
            lambda: workspace.apply_session(
                session_id, seed=body.seed, finetune_always=body.finetune_always
            ),
        )
        return {"job_id": job_id}

    @app.get("/models/{model_id}/metrics")
    def model_metrics(model_id: str, dataset: str, split: str = "test", bias: str | None = None):
        names = [n.strip() for n in bias.split(",")] if bias else None
        try:
            return workspace.metrics(model_id, dataset, split=split, bias=names)
        except (NotFound, SnapshotError, CorpusError) as exc:
            raise http_error(exc) from exc

    @app.get("/models/compare")
    def compare(a: str = Query(...), b: str = Query(...), dataset: str = Query(...), split: str = "test", seed: int = 0):
        try:
            return workspace.compare(a, b, dataset, split=split, seed=seed)
        except (NotFound, SnapshotError, CorpusError) as exc:
            raise http_error(exc) from exc

    return app


def load_service_config(path: str | None = None) -> dict:
    """Config file keys data_dir/host/port/workers with environment overrides
    FEATLAB_DATA_DIR / FEATLAB_HOST / FEATLAB_PORT / FEATLAB_WORKERS."""
    from .cli import read_config_file

    values = read_config_file(path)
    settings = {
        "data_dir": values.get("data_dir", "."),
        "host": values.get("host", "127.0.0.1"),
        "port": int(values.get("port", 8765)),
        "workers": int(values.get("workers", 2)),
    }
    if os.environ.get("FEATLAB_DATA_DIR"):
        settings["data_dir"] = os.environ["FEATLAB_DATA_DIR"]
    if os.environ.get("FEATLAB_HOST"):
        settings["host"] = os.environ["FEATLAB_HOST"]
    if os.environ.get("FEATLAB_PORT"):
        settings["port"] = int(os.environ["FEATLAB_PORT"])
    if os.environ.get("FEATLAB_WORKERS"):
        settings["workers"] = int(os.environ["FEATLAB_WORKERS"])
    return settings
