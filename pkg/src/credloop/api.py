"""HTTP review service: flags, tasks, revisions, retraining, audit.

Thin shell over the loop module; every payload is a module serialization
schema, and state only changes through import_revisions / run_iteration.
Retraining runs in a background thread: POST /iterations answers 202 with the
iteration id, progress is polled via GET /iterations/{n}.  While a retrain is
live, revision posts get 503 and a second retrain post gets 409.
"""

from __future__ import annotations

import threading
from typing import Any

from fastapi import Body, FastAPI, Header, HTTPException
from fastapi.middleware.cors import CORSMiddleware

from .corpus import ValidationError
from .loop import (
    PipelineState,
    RevisionSubmission,
    StaleIterationError,
    audit_credential,
    import_revisions,
    run_iteration,
)

SCHEMA_VERSION = 1


class _Retrainer:
    """At most one background iteration; remembers how the last one ended."""

    def __init__(self, state: PipelineState):
        self.state = state
        self._thread: threading.Thread | None = None
        self._iteration: int | None = None
        self._error: str | None = None
        self._start_lock = threading.Lock()

    def running(self) -> bool:
        return self._thread is not None and self._thread.is_alive()

    @property
    def iteration(self) -> int | None:
        return self._iteration

    @property
    def error(self) -> str | None:
        return self._error

    def start(self) -> int:
        with self._start_lock:
            if self.running():
                raise HTTPException(status_code=409, detail="an iteration is already running")
            iteration = self.state.current_iteration() + 1
            self._iteration = iteration
            self._error = None
            self._thread = threading.Thread(target=self._run, daemon=True)
            self._thread.start()
            return iteration

    def _run(self) -> None:
        try:
            run_iteration(self.state)
        except Exception as exc:  # noqa: BLE001 -- surfaced via the status endpoint
            self._error = str(exc)


def create_app(state_root: str) -> FastAPI:
    state = PipelineState(state_root)
    retrainer = _Retrainer(state)
    app = FastAPI(title="credential review service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def _manifest() -> dict[str, Any]:
        try:
            return state.manifest()
        except ValidationError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None

    @app.get("/health")
    def health() -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "status": "ok",
            "state": state.exists(),
            "retraining": retrainer.running(),
        }

    @app.get("/iterations")
    def iterations() -> dict[str, Any]:
        manifest = _manifest()
        records = state.records()
        return {
            "schema_version": SCHEMA_VERSION,
            "current_iteration": int(manifest["current_iteration"]),
            "dataset_hash": manifest["dataset_hash"],
            "retraining": retrainer.running(),
            "iterations": [
                {
                    "iteration": r.iteration,
                    "dataset_hash": r.dataset_hash,
                    "record_hash": r.record_hash,
                    "created_at": r.created_at,
                    "flags": len(r.flags.flags),
                    "followups": [f.to_dict() for f in r.followups],
                }
                for r in records
            ],
        }

    @app.get("/iterations/current/flags")
    def current_flags() -> dict[str, Any]:
        manifest = _manifest()
        current = int(manifest["current_iteration"])
        if current < 1:
            raise HTTPException(status_code=404, detail="no sealed iterations yet")
        record = state.record(current)
        doc = record.flags.to_dict()
        doc["dataset_hash"] = manifest["dataset_hash"]
        doc["record_hash"] = record.record_hash
        return doc

    @app.get("/iterations/{iteration}")
    def iteration_status(iteration: int) -> dict[str, Any]:
        manifest = _manifest()
        if iteration <= int(manifest["current_iteration"]):
            record = state.record(iteration)
            doc = record.to_dict()
            doc["status"] = "sealed"
            return doc
        if retrainer.iteration == iteration and retrainer.running():
            return {"schema_version": SCHEMA_VERSION, "iteration": iteration, "status": "running"}
        if retrainer.iteration == iteration and retrainer.error is not None:
            return {
                "schema_version": SCHEMA_VERSION,
                "iteration": iteration,
                "status": "failed",
                "error": retrainer.error,
            }
        raise HTTPException(status_code=404, detail=f"no iteration {iteration}")

    @app.post("/iterations", status_code=202)
    def start_iteration() -> dict[str, Any]:
        _manifest()  # 404 before 202 when the state directory is missing
        iteration = retrainer.start()
        return {"schema_version": SCHEMA_VERSION, "iteration": iteration, "status": "running"}

    @app.get("/flags/{credential}/tasks")
    def credential_tasks(credential: str, group: str | None = None) -> dict[str, Any]:
        manifest = _manifest()
        if int(manifest["current_iteration"]) < 1:
            raise HTTPException(status_code=404, detail="no sealed iterations yet")
        bundle = state.bundle()
        tasks = [t for t in bundle.tasks if t.credential == credential]
        if not tasks:
            raise HTTPException(
                status_code=404, detail=f"credential {credential!r} has no open review tasks"
            )
        if group is not None:
            tasks = [t for t in tasks if t.group == group]
            if not tasks:
                raise HTTPException(
                    status_code=404,
                    detail=f"no review task for group {group!r} under {credential!r}",
                )
        return {
            "schema_version": SCHEMA_VERSION,
            "iteration": bundle.iteration,
            "dataset_hash": manifest["dataset_hash"],
            "bundle_dataset_hash": bundle.dataset_hash,
            "credential": credential,
            "credential_name": tasks[0].credential_name,
            "score_threshold": bundle.score_threshold,
            "flags": [f.to_dict() for f in bundle.flags if f.credential == credential],
            "tasks": [t.to_dict() for t in tasks],
        }

    @app.post("/revisions")
    def post_revisions(
        payload: dict[str, Any] = Body(...),
        x_annotator_id: str | None = Header(default=None),
    ) -> dict[str, Any]:
        if retrainer.running():
            raise HTTPException(
                status_code=503, detail="an iteration is running; retry when it seals"
            )
        data = dict(payload)
        if x_annotator_id:
            data["annotator"] = x_annotator_id
        if not str(data.get("annotator", "")).strip():
            raise HTTPException(
                status_code=400, detail="annotator id required (X-Annotator-Id header)"
            )
        try:
            submission = RevisionSubmission.from_dict(data)
            result = import_revisions(state, submission)
        except StaleIterationError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        except (ValidationError, KeyError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        doc = result.to_dict()
        doc["schema_version"] = SCHEMA_VERSION
        return doc

    @app.get("/audit/{credential}")
    def audit(credential: str) -> dict[str, Any]:
        _manifest()
        try:
            state.dataset().taxonomy.level_of(credential)
        except ValidationError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        try:
            return audit_credential(state, credential)
        except ValidationError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None

    return app


def serve(state_root: str, host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn

    uvicorn.run(create_app(state_root), host=host, port=port)
