"""Iteration pipeline: train, audit, flag, route to reviewers, retrain.

All state lives in one directory::

    state/
      corpus.jsonl        current experiences, revision history embedded
      taxonomy.json
      state.json          manifest: current iteration, dataset hash, defaults
      models/iter_N.json
      bundles/iter_N.json review tasks for the credentials flagged at N
      audit/iter_N.json   sealed iteration record
      audit/trail.jsonl   append-only event log

The trail is only ever appended to; each sealed file is written once.  A file
lock serialises writers so concurrent CLI and API processes cannot interleave
an import with a retrain.

Iteration records carry a content hash over the decision-relevant fields
(dataset hash, config, audit results, flags, follow-ups).  Timestamps and
wall-clock timings are excluded so the hash is reproducible run to run.
"""

from __future__ import annotations

import json
import hashlib
import os
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping, Sequence

from filelock import FileLock

import numpy as np

from . import kernels
from .classify import (
    CvReport,
    LearnerConfig,
    MultiOutputModel,
    cross_validate,
    load_model,
    predict_batch,
    save_model,
    train_model,
)
from .corpus import (
    Dataset,
    Experience,
    RevisionEvent,
    Taxonomy,
    ValidationError,
    dataset_hash,
    ingest,
    read_taxonomy,
    write_corpus,
    write_taxonomy,
)
from .fairness import (
    CspReport,
    Flag,
    FlagSet,
    compute_csp,
    csp_diff,
    flag as compute_flags,
)


class StaleIterationError(ValidationError):
    """The submission targets an iteration or corpus version that has moved on."""


class RevisionError(ValidationError):
    """A revision action is invalid against the current annotations."""


@dataclass(frozen=True)
class PipelineSettings:
    attribute: str = "race"
    level: int = 2
    threshold: float = 0.05
    min_submissions: int = 5
    max_features: int = 5000
    score_threshold: float = 0.5
    include_undisclosed: bool = False
    samples_per_group: int = 20
    run_cv: bool = False
    cv_folds: int = 10

    def __post_init__(self) -> None:
        if self.level not in (1, 2, 3):
            raise ValidationError("audit level must be 1, 2 or 3")
        if self.samples_per_group < 1:
            raise ValidationError("samples_per_group must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return {
            "attribute": self.attribute,
            "level": self.level,
            "threshold": self.threshold,
            "min_submissions": self.min_submissions,
            "max_features": self.max_features,
            "score_threshold": self.score_threshold,
            "include_undisclosed": self.include_undisclosed,
            "samples_per_group": self.samples_per_group,
            "run_cv": self.run_cv,
            "cv_folds": self.cv_folds,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PipelineSettings":
        return cls(
            attribute=str(d.get("attribute", "race")),
            level=int(d.get("level", 2)),
            threshold=float(d.get("threshold", 0.05)),
            min_submissions=int(d.get("min_submissions", 5)),
            max_features=int(d.get("max_features", 5000)),
            score_threshold=float(d.get("score_threshold", 0.5)),
            include_undisclosed=bool(d.get("include_undisclosed", False)),
            samples_per_group=int(d.get("samples_per_group", 20)),
            run_cv=bool(d.get("run_cv", False)),
            cv_folds=int(d.get("cv_folds", 10)),
        )


@dataclass(frozen=True)
class FlagFollowup:
    """Where a previous iteration's flag ended up after the retrain."""

    credential: str
    group_low: str
    group_high: str
    gap_before: float
    gap_after: float | None
    status: str  # "resolved" | "shrunk" | "carried"

    def to_dict(self) -> dict[str, Any]:
        return {
            "credential": self.credential,
            "group_low": self.group_low,
            "group_high": self.group_high,
            "gap_before": self.gap_before,
            "gap_after": self.gap_after,
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "FlagFollowup":
        return cls(
            credential=str(d["credential"]),
            group_low=str(d["group_low"]),
            group_high=str(d["group_high"]),
            gap_before=float(d["gap_before"]),
            gap_after=None if d.get("gap_after") is None else float(d["gap_after"]),
            status=str(d["status"]),
        )


@dataclass(frozen=True)
class ReviewSample:
    experience_id: str
    user_id: str
    group: str
    text: str
    score: float
    predicted: bool
    annotated_leaves: tuple[str, ...]
    top_leaf: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "experience_id": self.experience_id,
            "user_id": self.user_id,
            "group": self.group,
            "text": self.text,
            "score": self.score,
            "predicted": self.predicted,
            "annotated_leaves": list(self.annotated_leaves),
            "top_leaf": self.top_leaf,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ReviewSample":
        return cls(
            experience_id=str(d["experience_id"]),
            user_id=str(d["user_id"]),
            group=str(d["group"]),
            text=str(d["text"]),
            score=float(d["score"]),
            predicted=bool(d["predicted"]),
            annotated_leaves=tuple(d["annotated_leaves"]),
            top_leaf=str(d["top_leaf"]),
        )


@dataclass(frozen=True)
class ReviewTask:
    credential: str
    credential_name: str
    group: str
    rate: float
    samples: tuple[ReviewSample, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "credential": self.credential,
            "credential_name": self.credential_name,
            "group": self.group,
            "rate": self.rate,
            "samples": [s.to_dict() for s in self.samples],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ReviewTask":
        return cls(
            credential=str(d["credential"]),
            credential_name=str(d["credential_name"]),
            group=str(d["group"]),
            rate=float(d["rate"]),
            samples=tuple(ReviewSample.from_dict(s) for s in d["samples"]),
        )


@dataclass(frozen=True)
class ReviewBundle:
    """Everything an annotator needs to work one iteration's flags."""

    iteration: int
    attribute: str
    level: int
    threshold: float
    score_threshold: float
    dataset_hash: str
    flags: tuple[Flag, ...]
    tasks: tuple[ReviewTask, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": 1,
            "iteration": self.iteration,
            "attribute": self.attribute,
            "level": self.level,
            "threshold": self.threshold,
            "score_threshold": self.score_threshold,
            "dataset_hash": self.dataset_hash,
            "flags": [f.to_dict() for f in self.flags],
            "tasks": [t.to_dict() for t in self.tasks],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ReviewBundle":
        return cls(
            iteration=int(d["iteration"]),
            attribute=str(d["attribute"]),
            level=int(d["level"]),
            threshold=float(d["threshold"]),
            score_threshold=float(d["score_threshold"]),
            dataset_hash=str(d["dataset_hash"]),
            flags=tuple(Flag.from_dict(f) for f in d["flags"]),
            tasks=tuple(ReviewTask.from_dict(t) for t in d["tasks"]),
        )


@dataclass(frozen=True)
class RevisionAction:
    experience_id: str
    code: str
    action: str  # "added" | "removed"
    rationale: str

    def __post_init__(self) -> None:
        if self.action not in ("added", "removed"):
            raise RevisionError(f"unknown revision action {self.action!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "experience_id": self.experience_id,
            "code": self.code,
            "action": self.action,
            "rationale": self.rationale,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RevisionAction":
        return cls(
            experience_id=str(d["experience_id"]),
            code=str(d["code"]),
            action=str(d["action"]),
            rationale=str(d.get("rationale", "")),
        )


@dataclass(frozen=True)
class RevisionSubmission:
    iteration: int
    annotator: str
    actions: tuple[RevisionAction, ...]
    base_version: str | None = None  # dataset hash the reviewer worked from

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": 1,
            "iteration": self.iteration,
            "annotator": self.annotator,
            "base_version": self.base_version,
            "actions": [a.to_dict() for a in self.actions],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RevisionSubmission":
        return cls(
            iteration=int(d["iteration"]),
            annotator=str(d["annotator"]),
            base_version=d.get("base_version"),
            actions=tuple(RevisionAction.from_dict(a) for a in d.get("actions", ())),
        )


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    dataset_hash: str
    backend: str
    config: LearnerConfig
    settings: PipelineSettings
    csp_level2: CspReport
    csp_level3: CspReport
    flags: FlagSet
    followups: tuple[FlagFollowup, ...]
    timings: Mapping[str, float] = field(default_factory=dict)
    cv: CvReport | None = None
    created_at: str = ""

    def hash_payload(self) -> dict[str, Any]:
        # Only decision-relevant content: no clocks, no timings, no backend
        # tag, so the hash is identical across runs and kernel backends.
        return {
            "iteration": self.iteration,
            "dataset_hash": self.dataset_hash,
            "config": self.config.to_dict(),
            "settings": self.settings.to_dict(),
            "csp_level2": self.csp_level2.to_dict(),
            "csp_level3": self.csp_level3.to_dict(),
            "flags": self.flags.to_dict(),
            "followups": [f.to_dict() for f in self.followups],
        }

    @property
    def record_hash(self) -> str:
        blob = json.dumps(self.hash_payload(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def to_dict(self) -> dict[str, Any]:
        d = self.hash_payload()
        d["schema_version"] = 1
        d["backend"] = self.backend
        d["timings"] = dict(self.timings)
        d["created_at"] = self.created_at
        d["record_hash"] = self.record_hash
        if self.cv is not None:
            d["cv"] = self.cv.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "IterationRecord":
        return cls(
            iteration=int(d["iteration"]),
            dataset_hash=str(d["dataset_hash"]),
            backend=str(d.get("backend", "")),
            config=LearnerConfig.from_dict(d["config"]),
            settings=PipelineSettings.from_dict(d["settings"]),
            csp_level2=CspReport.from_dict(d["csp_level2"]),
            csp_level3=CspReport.from_dict(d["csp_level3"]),
            flags=FlagSet.from_dict(d["flags"]),
            followups=tuple(FlagFollowup.from_dict(f) for f in d["followups"]),
            timings=dict(d.get("timings", {})),
            created_at=str(d.get("created_at", "")),
        )


# ---------------------------------------------------------------------------
# State directory


class PipelineState:
    """Handle on a state directory; all mutation goes through the lock."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    # paths
    @property
    def corpus_path(self) -> Path:
        return self.root / "corpus.jsonl"

    @property
    def taxonomy_path(self) -> Path:
        return self.root / "taxonomy.json"

    @property
    def manifest_path(self) -> Path:
        return self.root / "state.json"

    @property
    def trail_path(self) -> Path:
        return self.root / "audit" / "trail.jsonl"

    def model_path(self, iteration: int) -> Path:
        return self.root / "models" / f"iter_{iteration:04d}.json"

    def record_path(self, iteration: int) -> Path:
        return self.root / "audit" / f"iter_{iteration:04d}.json"

    def bundle_path(self, iteration: int) -> Path:
        return self.root / "bundles" / f"iter_{iteration:04d}.json"

    def lock(self) -> FileLock:
        self.root.mkdir(parents=True, exist_ok=True)
        return FileLock(str(self.root / "state.lock"))

    def exists(self) -> bool:
        return self.manifest_path.exists()

    # manifest
    def manifest(self) -> dict[str, Any]:
        if not self.exists():
            raise ValidationError(f"no pipeline state at {self.root}")
        return json.loads(self.manifest_path.read_text(encoding="utf-8"))

    def _write_manifest(self, manifest: Mapping[str, Any]) -> None:
        _atomic_write(self.manifest_path, json.dumps(manifest, sort_keys=True, indent=1))

    def current_iteration(self) -> int:
        return int(self.manifest()["current_iteration"])

    def config(self) -> LearnerConfig:
        return LearnerConfig.from_dict(self.manifest()["config"])

    def settings(self) -> PipelineSettings:
        return PipelineSettings.from_dict(self.manifest()["settings"])

    # content
    def dataset(self) -> Dataset:
        if not self.exists():
            raise ValidationError(f"no pipeline state at {self.root}")
        taxonomy = read_taxonomy(self.taxonomy_path)
        return ingest(self.corpus_path, fmt="jsonl", taxonomy=taxonomy)

    def model(self, iteration: int | None = None) -> MultiOutputModel:
        n = self.current_iteration() if iteration is None else iteration
        path = self.model_path(n)
        if not path.exists():
            raise ValidationError(f"no model for iteration {n}")
        return load_model(path)

    def record(self, iteration: int) -> IterationRecord:
        path = self.record_path(iteration)
        if not path.exists():
            raise ValidationError(f"no sealed record for iteration {iteration}")
        return IterationRecord.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def records(self) -> list[IterationRecord]:
        return [self.record(n) for n in range(1, self.current_iteration() + 1)]

    def bundle(self, iteration: int | None = None) -> ReviewBundle:
        n = self.current_iteration() if iteration is None else iteration
        path = self.bundle_path(n)
        if not path.exists():
            raise ValidationError(f"no review bundle for iteration {n}")
        return ReviewBundle.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def trail(self) -> list[dict[str, Any]]:
        if not self.trail_path.exists():
            return []
        lines = self.trail_path.read_text(encoding="utf-8").splitlines()
        return [json.loads(line) for line in lines if line.strip()]

    def append_trail(self, event: str, **payload: Any) -> None:
        self.trail_path.parent.mkdir(parents=True, exist_ok=True)
        entry = {"ts": _now(), "event": event, **payload}
        with self.trail_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def init_state(
    root: str | Path,
    dataset: Dataset,
    config: LearnerConfig | None = None,
    settings: PipelineSettings | None = None,
) -> PipelineState:
    """Create a fresh state directory around a validated dataset."""
    state = PipelineState(root)
    if state.exists():
        raise ValidationError(f"pipeline state already exists at {state.root}")
    config = config or LearnerConfig()
    settings = settings or PipelineSettings()
    with state.lock():
        state.root.mkdir(parents=True, exist_ok=True)
        write_corpus(dataset, state.corpus_path)
        write_taxonomy(dataset.taxonomy, state.taxonomy_path)
        state._write_manifest(
            {
                "schema_version": 1,
                "current_iteration": 0,
                "dataset_hash": dataset_hash(dataset),
                "config": config.to_dict(),
                "settings": settings.to_dict(),
            }
        )
        state.append_trail(
            "state_initialized",
            experiences=len(dataset),
            dataset_hash=dataset_hash(dataset),
        )
    return state


def _leaf_descendants(taxonomy: Taxonomy, code: str) -> tuple[str, ...]:
    level = taxonomy.level_of(code)
    if level == 3:
        return (code,)
    if level == 2:
        return taxonomy.children(code)
    return tuple(leaf for mid in taxonomy.children(code) for leaf in taxonomy.children(mid))


def _followups(
    previous: FlagSet | None, report: CspReport, threshold: float
) -> tuple[FlagFollowup, ...]:
    if previous is None:
        return ()
    out = []
    for f in previous.flags:
        gap_after: float | None
        try:
            rates = report.by_credential(f.credential)
            gap_after = abs(rates[f.group_high].rate - rates[f.group_low].rate)
        except (ValidationError, KeyError):
            gap_after = None
        if gap_after is None or gap_after < threshold:
            status = "resolved"
        elif gap_after < f.gap - 1e-12:
            status = "shrunk"
        else:
            status = "carried"
        out.append(
            FlagFollowup(
                credential=f.credential,
                group_low=f.group_low,
                group_high=f.group_high,
                gap_before=f.gap,
                gap_after=gap_after,
                status=status,
            )
        )
    return tuple(out)


def _build_bundle(
    dataset: Dataset,
    flags: FlagSet,
    report: CspReport,
    scores: np.ndarray,
    labels: Sequence[str],
    settings: PipelineSettings,
    version: str,
    iteration: int,
) -> ReviewBundle:
    """Review tasks for each (flagged credential, involved group).

    Samples are the group's eligible experiences closest to the decision
    boundary, where a level-1/2 credential's score is the max over its leaf
    descendants.
    """
    taxonomy = dataset.taxonomy
    counts = dataset.user_submission_counts()
    col = {c: j for j, c in enumerate(labels)}
    row = {e.id: i for i, e in enumerate(dataset.experiences)}

    pairs: list[tuple[str, str, float]] = []
    seen: set[tuple[str, str]] = set()
    for f in flags.flags:
        rates = report.by_credential(f.credential)
        for group in (f.group_low, f.group_high):
            if (f.credential, group) not in seen:
                seen.add((f.credential, group))
                pairs.append((f.credential, group, rates[group].rate))

    tasks = []
    for credential, group, rate in pairs:
        leaves = _leaf_descendants(taxonomy, credential)
        leaf_cols = [col[c] for c in leaves]
        members = [
            e
            for e in dataset.experiences
            if counts[e.user_id] >= settings.min_submissions
            and e.group(settings.attribute) == group
        ]
        scored = []
        for e in members:
            leaf_scores = scores[row[e.id], leaf_cols]
            best = int(np.argmax(leaf_scores))
            scored.append((e, float(leaf_scores[best]), leaves[best]))
        scored.sort(key=lambda t: (abs(t[1] - settings.score_threshold), t[0].id))
        samples = tuple(
            ReviewSample(
                experience_id=e.id,
                user_id=e.user_id,
                group=group,
                text=e.text,
                score=score,
                predicted=score >= settings.score_threshold,
                annotated_leaves=tuple(sorted(e.annotations & set(leaves))),
                top_leaf=top_leaf,
            )
            for e, score, top_leaf in scored[: settings.samples_per_group]
        )
        tasks.append(
            ReviewTask(
                credential=credential,
                credential_name=taxonomy.name(credential),
                group=group,
                rate=rate,
                samples=samples,
            )
        )
    return ReviewBundle(
        iteration=iteration,
        attribute=settings.attribute,
        level=settings.level,
        threshold=settings.threshold,
        score_threshold=settings.score_threshold,
        dataset_hash=version,
        flags=flags.flags,
        tasks=tuple(tasks),
    )


def run_iteration(
    state: PipelineState,
    config: LearnerConfig | None = None,
    settings: PipelineSettings | None = None,
) -> IterationRecord:
    """Train on current annotations, audit predictions, flag, seal.

    Passing config or settings updates the manifest defaults for later
    iterations.
    """
    with state.lock():
        manifest = state.manifest()
        config = config or LearnerConfig.from_dict(manifest["config"])
        settings = settings or PipelineSettings.from_dict(manifest["settings"])
        dataset = state.dataset()
        version = dataset_hash(dataset)
        iteration = int(manifest["current_iteration"]) + 1
        state.append_trail("iteration_started", iteration=iteration, dataset_hash=version)

        t0 = time.perf_counter()
        model = train_model(
            dataset,
            config,
            max_features=settings.max_features,
            threshold=settings.score_threshold,
        )
        train_seconds = time.perf_counter() - t0

        t0 = time.perf_counter()
        awarded, scores = predict_batch(model, [e.text for e in dataset.experiences])
        predict_seconds = time.perf_counter() - t0
        outcomes = {e.id: awarded[i] for i, e in enumerate(dataset.experiences)}

        csp2 = compute_csp(
            dataset, outcomes, settings.attribute, level=2,
            min_submissions=settings.min_submissions, source="predictions",
            iteration=iteration,
        )
        csp3 = compute_csp(
            dataset, outcomes, settings.attribute, level=3,
            min_submissions=settings.min_submissions, source="predictions",
            iteration=iteration,
        )
        audited = csp2 if settings.level == 2 else csp3 if settings.level == 3 else compute_csp(
            dataset, outcomes, settings.attribute, level=1,
            min_submissions=settings.min_submissions, source="predictions",
            iteration=iteration,
        )
        flags = compute_flags(
            audited, threshold=settings.threshold,
            include_undisclosed=settings.include_undisclosed,
        )
        previous = state.record(iteration - 1).flags if iteration > 1 else None
        followups = _followups(previous, audited, settings.threshold)

        cv = None
        if settings.run_cv:
            cv = cross_validate(
                dataset, config, k=settings.cv_folds, max_features=settings.max_features
            )

        record = IterationRecord(
            iteration=iteration,
            dataset_hash=version,
            backend=kernels.backend_name(),
            config=config,
            settings=settings,
            csp_level2=csp2,
            csp_level3=csp3,
            flags=flags,
            followups=followups,
            timings={"train_seconds": train_seconds, "predict_seconds": predict_seconds},
            cv=cv,
            created_at=_now(),
        )
        bundle = _build_bundle(
            dataset, flags, audited, scores, model.labels, settings, version, iteration
        )

        save_model(model, state.model_path(iteration))
        _atomic_write(state.record_path(iteration), json.dumps(record.to_dict(), sort_keys=True))
        _atomic_write(state.bundle_path(iteration), json.dumps(bundle.to_dict(), sort_keys=True))
        manifest["current_iteration"] = iteration
        manifest["config"] = config.to_dict()
        manifest["settings"] = settings.to_dict()
        manifest["dataset_hash"] = version
        state._write_manifest(manifest)
        state.append_trail(
            "iteration_sealed",
            iteration=iteration,
            record_hash=record.record_hash,
            dataset_hash=version,
            flags=len(flags.flags),
        )
        return record


@dataclass(frozen=True)
class ImportResult:
    applied: int
    dataset_hash: str
    iteration: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "applied": self.applied,
            "dataset_hash": self.dataset_hash,
            "iteration": self.iteration,
        }


def import_revisions(state: PipelineState, submission: RevisionSubmission) -> ImportResult:
    """Apply a reviewer's label changes to the corpus, all or nothing.

    Every action is validated against the live annotations before any is
    applied; the rewritten corpus lands via an atomic rename.
    """
    with state.lock():
        manifest = state.manifest()
        current = int(manifest["current_iteration"])
        if current < 1:
            raise StaleIterationError("no sealed iteration to revise against")
        if submission.iteration != current:
            raise StaleIterationError(
                f"submission targets iteration {submission.iteration}, current is {current}"
            )
        if submission.base_version is not None and submission.base_version != manifest["dataset_hash"]:
            raise StaleIterationError(
                "corpus changed since this review was exported; re-export and retry"
            )
        if not submission.annotator.strip():
            raise RevisionError("annotator id must be non-empty")
        if not submission.actions:
            raise RevisionError("submission contains no actions")

        dataset = state.dataset()
        leaves = set(dataset.taxonomy.ids(3))
        staged: dict[str, set[str]] = {}
        touched: set[tuple[str, str]] = set()
        for i, a in enumerate(submission.actions):
            where = f"action {i} ({a.action} {a.code!r} on {a.experience_id!r})"
            try:
                exp = dataset.by_id(a.experience_id)
            except ValidationError:
                raise RevisionError(f"{where}: unknown experience id") from None
            if a.code not in leaves:
                raise RevisionError(f"{where}: not a leaf credential id")
            if not a.rationale.strip():
                raise RevisionError(f"{where}: rationale must be non-empty")
            if (a.experience_id, a.code) in touched:
                raise RevisionError(f"{where}: duplicate action for this experience and code")
            touched.add((a.experience_id, a.code))
            current_codes = staged.setdefault(a.experience_id, set(exp.annotations))
            if a.action == "added":
                if a.code in current_codes:
                    raise RevisionError(f"{where}: code already annotated")
                current_codes.add(a.code)
            else:
                if a.code not in current_codes:
                    raise RevisionError(f"{where}: code not currently annotated")
                current_codes.remove(a.code)

        events: dict[str, list[RevisionEvent]] = {}
        for a in submission.actions:
            events.setdefault(a.experience_id, []).append(
                RevisionEvent(
                    iteration=current,
                    code_id=a.code,
                    action=a.action,
                    annotator_id=submission.annotator,
                    rationale=a.rationale,
                )
            )
        revised: list[Experience] = []
        for e in dataset.experiences:
            if e.id in staged:
                revised.append(
                    replace(
                        e,
                        annotations=frozenset(staged[e.id]),
                        annotation_history=e.annotation_history + tuple(events[e.id]),
                    )
                )
            else:
                revised.append(e)
        new_dataset = dataset.with_experiences(revised)
        new_hash = dataset_hash(new_dataset)

        tmp = state.corpus_path.with_suffix(".jsonl.tmp")
        write_corpus(new_dataset, tmp)
        os.replace(tmp, state.corpus_path)
        manifest["dataset_hash"] = new_hash
        state._write_manifest(manifest)
        state.append_trail(
            "revisions_imported",
            iteration=current,
            annotator=submission.annotator,
            actions=len(submission.actions),
            experiences=len(staged),
            dataset_hash=new_hash,
        )
        return ImportResult(applied=len(submission.actions), dataset_hash=new_hash, iteration=current)


# ---------------------------------------------------------------------------
# Audit views


def audit_credential(state: PipelineState, credential: str) -> dict[str, Any]:
    """Rate history, flags and label revisions for one credential."""
    records = state.records()
    if not records:
        raise ValidationError("no sealed iterations yet")
    taxonomy = state.dataset().taxonomy
    level = taxonomy.level_of(credential)
    history = []
    reports: list[CspReport] = []
    for r in records:
        report = r.csp_level2 if level == 2 else r.csp_level3 if level == 3 else None
        if report is None:
            raise ValidationError("audit views cover level 2 and level 3 credentials")
        entries = {g: e.to_dict() for g, e in report.by_credential(credential).items()}
        flagged = [f.to_dict() for f in r.flags.flags if f.credential == credential]
        history.append(
            {
                "iteration": r.iteration,
                "record_hash": r.record_hash,
                "rates": entries,
                "flags": flagged,
            }
        )
        reports.append(report)
    diffs = [
        csp_diff(reports[i], reports[i + 1], credential).to_dict()
        for i in range(len(reports) - 1)
    ]
    leaves = set(_leaf_descendants(taxonomy, credential))
    revisions: dict[int, int] = {}
    for e in state.dataset().experiences:
        for ev in e.annotation_history:
            if ev.code_id in leaves:
                revisions[ev.iteration] = revisions.get(ev.iteration, 0) + 1
    return {
        "schema_version": 1,
        "credential": credential,
        "credential_name": taxonomy.name(credential),
        "level": level,
        "iterations": history,
        "diffs": diffs,
        "revisions_by_iteration": {str(k): v for k, v in sorted(revisions.items())},
    }


def render_audit(audit: Mapping[str, Any]) -> str:
    lines = [f"Audit for {audit['credential']} {audit['credential_name']}"]
    for it in audit["iterations"]:
        rates = ", ".join(
            f"{g}={e['rate']:.4f}" for g, e in sorted(it["rates"].items())
        )
        n_flags = len(it["flags"])
        lines.append(f"  iteration {it['iteration']}: {rates}  flags={n_flags}")
    for i, d in enumerate(audit["diffs"], start=1):
        lines.append("")
        lines.append(f"Change from iteration {i} to {i + 1}:")
        rows = [("Group", "Before", "After", "Change")]
        for r in d["rows"]:
            before = "-" if r["before"] is None else f"{r['before']:.4f}"
            after = "-" if r["after"] is None else f"{r['after']:.4f}"
            change = (
                "-"
                if r["before"] is None or r["after"] is None
                else f"{r['after'] - r['before']:+.4f}"
            )
            rows.append((r["group"], before, after, change))
        widths = [max(len(r[c]) for r in rows) for c in range(4)]
        table = [
            "  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)).rstrip()
            for row in rows
        ]
        table.insert(1, "  ".join("-" * w for w in widths))
        lines.extend(table)
        lines.append(f"max gap: {d['gap_before']:.4f} -> {d['gap_after']:.4f}")
    rev = audit["revisions_by_iteration"]
    if rev:
        lines.append("")
        lines.append(
            "revisions: "
            + ", ".join(f"iteration {k}: {v}" for k, v in rev.items())
        )
    return "\n".join(lines)
