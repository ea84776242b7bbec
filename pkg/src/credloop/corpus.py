"""Data model for experience essays, annotations and the credential taxonomy.

An :class:`Experience` is one submitted essay together with its demographic
attributes and the set of leaf ("level-3") credential codes annotators have
assigned to it.  Codes live in a three-level hierarchy: 152 leaf credentials
grouped into 39 disjoint level-2 groups under 8 level-1 domains in the
built-in reference taxonomy.

Datasets are immutable after construction; revision happens by building a new
dataset (see :mod:`credloop.loop`).
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping

logger = logging.getLogger(__name__)

UNDISCLOSED = "undisclosed"

# Essay lengths far outside what the generator produces usually indicate a
# broken upstream export; warn but accept anything non-empty.
TEXT_LENGTH_WARN_RANGE = (9, 2649)

_RESERVED_CSV_COLUMNS = ("id", "user_id", "text", "annotations")


class ValidationError(ValueError):
    """A record or value violates a data-model invariant."""


@dataclass(frozen=True)
class RevisionEvent:
    """One add/remove of a leaf code on one experience, with provenance."""

    iteration: int
    code_id: str
    action: str  # "added" | "removed"
    annotator_id: str
    rationale: str = ""

    def __post_init__(self) -> None:
        if self.action not in ("added", "removed"):
            raise ValidationError(f"unknown revision action {self.action!r}")
        if self.iteration < 1:
            raise ValidationError("revision iteration must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return {
            "iteration": self.iteration,
            "code_id": self.code_id,
            "action": self.action,
            "annotator_id": self.annotator_id,
            "rationale": self.rationale,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RevisionEvent":
        return cls(
            iteration=int(d["iteration"]),
            code_id=str(d["code_id"]),
            action=str(d["action"]),
            annotator_id=str(d["annotator_id"]),
            rationale=str(d.get("rationale", "")),
        )


@dataclass(frozen=True)
class Experience:
    """One submitted essay with demographics and its current annotation set."""

    id: str
    user_id: str
    text: str
    demographics: Mapping[str, str]
    annotations: frozenset[str]
    annotation_history: tuple[RevisionEvent, ...] = ()
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.text) < 1:
            raise ValidationError(f"experience {self.id!r}: text must be non-empty")
        lo, hi = TEXT_LENGTH_WARN_RANGE
        if not lo <= len(self.text) <= hi:
            logger.warning(
                "experience %s: text length %d outside expected range [%d, %d]",
                self.id, len(self.text), lo, hi,
            )
        its = [e.iteration for e in self.annotation_history]
        if any(b < a for a, b in zip(its, its[1:])):
            raise ValidationError(
                f"experience {self.id!r}: revision iterations must be non-decreasing"
            )

    def group(self, attribute: str) -> str:
        return self.demographics.get(attribute, UNDISCLOSED)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "id": self.id,
            "user_id": self.user_id,
            "text": self.text,
            "demographics": dict(self.demographics),
            "annotations": sorted(self.annotations),
        }
        if self.annotation_history:
            d["history"] = [e.to_dict() for e in self.annotation_history]
        for k, v in self.extra.items():
            d.setdefault(k, v)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Experience":
        known = {"id", "user_id", "text", "demographics", "annotations", "history"}
        for f in ("id", "user_id", "text"):
            if f not in d:
                raise ValidationError(f"missing field {f!r}")
        anns = d.get("annotations", [])
        if len(set(anns)) != len(list(anns)):
            raise ValidationError(f"duplicate annotation codes on {d['id']!r}")
        return cls(
            id=str(d["id"]),
            user_id=str(d["user_id"]),
            text=str(d["text"]),
            demographics={str(k): str(v) for k, v in dict(d.get("demographics", {})).items()},
            annotations=frozenset(str(a) for a in anns),
            annotation_history=tuple(RevisionEvent.from_dict(e) for e in d.get("history", ())),
            extra={k: v for k, v in d.items() if k not in known},
        )


@dataclass(frozen=True)
class Code:
    """One taxonomy node; parent is None only at level 1."""

    id: str
    name: str
    parent: str | None = None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"id": self.id, "name": self.name}
        if self.parent is not None:
            d["parent"] = self.parent
        return d


@dataclass(frozen=True)
class Taxonomy:
    """Three-level credential hierarchy with disjoint groups at each level."""

    level1: tuple[Code, ...]
    level2: tuple[Code, ...]
    level3: tuple[Code, ...]

    def __post_init__(self) -> None:
        for tier, codes in (("level1", self.level1), ("level2", self.level2), ("level3", self.level3)):
            ids = [c.id for c in codes]
            if len(set(ids)) != len(ids):
                raise ValidationError(f"duplicate code ids in {tier}")
        l1 = {c.id for c in self.level1}
        l2 = {c.id for c in self.level2}
        for c in self.level2:
            if c.parent not in l1:
                raise ValidationError(f"level-2 code {c.id!r} has unknown parent {c.parent!r}")
        for c in self.level3:
            if c.parent not in l2:
                raise ValidationError(f"level-3 code {c.id!r} has unknown parent {c.parent!r}")

    @cached_property
    def level2_parent(self) -> Mapping[str, str]:
        return {c.id: c.parent for c in self.level3}  # type: ignore[misc]

    @cached_property
    def level1_parent(self) -> Mapping[str, str]:
        return {c.id: c.parent for c in self.level2}  # type: ignore[misc]

    def ids(self, level: int) -> tuple[str, ...]:
        return tuple(c.id for c in self._tier(level))

    def name(self, code_id: str) -> str:
        for tier in (self.level3, self.level2, self.level1):
            for c in tier:
                if c.id == code_id:
                    return c.name
        raise ValidationError(f"unknown code id {code_id!r}")

    def level_of(self, code_id: str) -> int:
        for level, tier in ((3, self.level3), (2, self.level2), (1, self.level1)):
            if any(c.id == code_id for c in tier):
                return level
        raise ValidationError(f"unknown code id {code_id!r}")

    def children(self, code_id: str) -> tuple[str, ...]:
        level = self.level_of(code_id)
        tier = self.level3 if level == 2 else self.level2 if level == 1 else ()
        return tuple(c.id for c in tier if c.parent == code_id)

    def _tier(self, level: int) -> tuple[Code, ...]:
        if level == 1:
            return self.level1
        if level == 2:
            return self.level2
        if level == 3:
            return self.level3
        raise ValidationError(f"taxonomy level must be 1, 2 or 3, got {level}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "level1": [c.to_dict() for c in self.level1],
            "level2": [c.to_dict() for c in self.level2],
            "level3": [c.to_dict() for c in self.level3],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Taxonomy":
        def tier(key: str) -> tuple[Code, ...]:
            return tuple(
                Code(id=str(c["id"]), name=str(c.get("name", c["id"])), parent=c.get("parent"))
                for c in d.get(key, ())
            )

        return cls(level1=tier("level1"), level2=tier("level2"), level3=tier("level3"))


def rollup(codes: Iterable[str], level: int, taxonomy: Taxonomy) -> frozenset[str]:
    """Map a set of leaf codes to their ancestors at the requested level.

    Union semantics: an ancestor is included iff at least one of its leaf
    descendants is in the input.  Level 3 is the identity (after validation).
    """
    if level not in (1, 2, 3):
        raise ValidationError(f"rollup level must be 1, 2 or 3, got {level}")
    codes = frozenset(codes)
    p2 = taxonomy.level2_parent
    unknown = codes - p2.keys()
    if unknown:
        raise ValidationError(f"unknown level-3 code id {sorted(unknown)[0]!r}")
    if level == 3:
        return codes
    parents = {p2[c] for c in codes}
    if level == 2:
        return frozenset(parents)
    p1 = taxonomy.level1_parent
    return frozenset(p1[g] for g in parents)


@dataclass(frozen=True)
class Dataset:
    """Validated, immutable collection of experiences plus their taxonomy."""

    experiences: tuple[Experience, ...]
    taxonomy: Taxonomy
    demographic_attributes: tuple[str, ...]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for e in self.experiences:
            if e.id in seen:
                raise ValidationError(f"duplicate experience id {e.id!r}")
            seen.add(e.id)
        known = set(self.taxonomy.ids(3))
        for e in self.experiences:
            bad = e.annotations - known
            if bad:
                raise ValidationError(
                    f"experience {e.id!r}: unknown code id {sorted(bad)[0]!r}"
                )

    def __len__(self) -> int:
        return len(self.experiences)

    @cached_property
    def _index(self) -> dict[str, Experience]:
        return {e.id: e for e in self.experiences}

    def by_id(self, experience_id: str) -> Experience:
        try:
            return self._index[experience_id]
        except KeyError:
            raise ValidationError(f"unknown experience id {experience_id!r}") from None

    def user_submission_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for e in self.experiences:
            counts[e.user_id] = counts.get(e.user_id, 0) + 1
        return counts

    def with_experiences(self, experiences: Iterable[Experience]) -> "Dataset":
        return replace(self, experiences=tuple(experiences))


def build_dataset(
    experiences: Iterable[Experience],
    taxonomy: Taxonomy,
    demographic_attributes: Iterable[str] | None = None,
) -> Dataset:
    """Construct a dataset, normalising missing demographics to "undisclosed"."""
    exps = list(experiences)
    if demographic_attributes is None:
        attrs = sorted({a for e in exps for a in e.demographics})
    else:
        attrs = list(demographic_attributes)
    normalised = []
    for e in exps:
        demo = dict(e.demographics)
        missing = [a for a in attrs if a not in demo]
        if missing:
            for a in missing:
                demo[a] = UNDISCLOSED
            e = replace(e, demographics=demo)
        normalised.append(e)
    return Dataset(
        experiences=tuple(normalised),
        taxonomy=taxonomy,
        demographic_attributes=tuple(attrs),
    )


def dataset_hash(dataset: Dataset) -> str:
    """Content hash of the corpus; changes iff an annotation (or record) changes.

    Revision history is deliberately excluded so that a submission whose
    actions cancel out leaves the version hash unchanged.
    """
    h = hashlib.sha256()
    for e in sorted(dataset.experiences, key=lambda x: x.id):
        h.update(
            json.dumps(
                {
                    "id": e.id,
                    "user_id": e.user_id,
                    "text": e.text,
                    "demographics": dict(sorted(e.demographics.items())),
                    "annotations": sorted(e.annotations),
                },
                sort_keys=True,
                ensure_ascii=False,
            ).encode("utf-8")
        )
        h.update(b"\n")
    return h.hexdigest()


def replay_history(initial: Iterable[str], history: Iterable[RevisionEvent]) -> frozenset[str]:
    """Re-apply a revision history to an initial annotation set."""
    current = set(initial)
    for ev in history:
        if ev.action == "added":
            if ev.code_id in current:
                raise ValidationError(f"history adds already-present code {ev.code_id!r}")
            current.add(ev.code_id)
        else:
            if ev.code_id not in current:
                raise ValidationError(f"history removes absent code {ev.code_id!r}")
            current.remove(ev.code_id)
    return frozenset(current)


def initial_annotations(experience: Experience) -> frozenset[str]:
    """Undo the revision history to recover the as-ingested annotation set."""
    current = set(experience.annotations)
    for ev in reversed(experience.annotation_history):
        if ev.action == "added":
            current.discard(ev.code_id)
        else:
            current.add(ev.code_id)
    return frozenset(current)


# ---------------------------------------------------------------------------
# Persistence


def write_corpus(dataset: Dataset, path: str | Path) -> None:
    """One experience per line, UTF-8 JSON; unknown fields survive round-trips."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for e in dataset.experiences:
            fh.write(json.dumps(e.to_dict(), sort_keys=True, ensure_ascii=False))
            fh.write("\n")


def write_taxonomy(taxonomy: Taxonomy, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(taxonomy.to_dict(), sort_keys=True, ensure_ascii=False, indent=1),
        encoding="utf-8",
    )


def read_taxonomy(path: str | Path) -> Taxonomy:
    return Taxonomy.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def ingest(
    path: str | Path,
    fmt: str = "jsonl",
    taxonomy: Taxonomy | None = None,
    demographic_attributes: Iterable[str] | None = None,
) -> Dataset:
    """Load and validate a corpus file.

    Errors carry the offending line number and field so bad exports can be
    fixed record by record.
    """
    if taxonomy is None:
        taxonomy = reference_taxonomy()
    path = Path(path)
    if fmt == "jsonl":
        records = _read_jsonl(path)
    elif fmt == "csv":
        records = _read_csv(path)
    else:
        raise ValidationError(f"unknown corpus format {fmt!r}")

    experiences = []
    known = set(taxonomy.ids(3))
    seen_ids: set[str] = set()
    for lineno, rec in records:
        try:
            exp = Experience.from_dict(rec)
        except ValidationError as err:
            raise ValidationError(f"{path.name} line {lineno}: {err}") from None
        except (KeyError, TypeError, AttributeError) as err:
            raise ValidationError(f"{path.name} line {lineno}: malformed record ({err})") from None
        if exp.id in seen_ids:
            raise ValidationError(f"{path.name} line {lineno}: duplicate experience id {exp.id!r}")
        seen_ids.add(exp.id)
        bad = exp.annotations - known
        if bad:
            raise ValidationError(
                f"{path.name} line {lineno}: unknown code id {sorted(bad)[0]!r} in field 'annotations'"
            )
        experiences.append(exp)
    return build_dataset(experiences, taxonomy, demographic_attributes)


def _read_jsonl(path: Path) -> list[tuple[int, dict[str, Any]]]:
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as err:
                raise ValidationError(f"{path.name} line {lineno}: invalid JSON ({err.msg})") from None
            if not isinstance(rec, dict):
                raise ValidationError(f"{path.name} line {lineno}: record must be an object")
            records.append((lineno, rec))
    return records


def _read_csv(path: Path) -> list[tuple[int, dict[str, Any]]]:
    # Reserved columns hold the record proper; any other column is treated as
    # a demographic attribute.  Annotations are '|'-separated code ids.
    records = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            rec: dict[str, Any] = {
                "id": row.get("id"),
                "user_id": row.get("user_id"),
                "text": row.get("text"),
                "annotations": [a for a in (row.get("annotations") or "").split("|") if a],
                "demographics": {
                    k: v for k, v in row.items()
                    if k not in _RESERVED_CSV_COLUMNS and v not in (None, "")
                },
            }
            if rec["id"] is None or rec["user_id"] is None or rec["text"] is None:
                raise ValidationError(
                    f"{path.name} line {lineno}: missing one of columns {_RESERVED_CSV_COLUMNS[:3]}"
                )
            records.append((lineno, rec))
    return records


# ---------------------------------------------------------------------------
# Reference taxonomy fixture: 8 level-1 domains, 39 level-2 groups, 152 leaf
# credentials.  Names are invented; ids are stable.

_LEVEL1_NAMES = (
    "Collaboration",
    "Communication",
    "Critical Thinking",
    "Creativity",
    "Leadership",
    "Global Citizenship",
    "Social-Emotional Learning",
    "Wellness & Self-Care",
)

# 39 group names, distributed 5/5/5/5/5/5/5/4 across the domains above.
_LEVEL2_NAMES = (
    # Collaboration
    "Working with Others",
    "Team Coordination",
    "Peer Mentoring",
    "Conflict Resolution",
    "Community Organizing",
    # Communication
    "Public Speaking",
    "Active Listening",
    "Written Expression",
    "Multilingual Communication",
    "Digital Communication",
    # Critical Thinking
    "Problem Solving",
    "Evidence-Based Reasoning",
    "Planning & Prioritizing",
    "Financial Literacy",
    "Systems Thinking",
    # Creativity
    "Creative Expression",
    "Design & Making",
    "Improvisation",
    "Storytelling",
    "Entrepreneurial Thinking",
    # Leadership
    "Taking Initiative",
    "Mentoring & Coaching",
    "Advocacy",
    "Decision Making",
    "Accountability",
    # Global Citizenship
    "Cultural Awareness",
    "Civic Participation",
    "Environmental Stewardship",
    "Ethical Judgment",
    "Service to Others",
    # Social-Emotional Learning
    "Self-Awareness",
    "Empathy",
    "Resilience",
    "Stress Management",
    "Relationship Building",
    # Wellness & Self-Care
    "Physical Health",
    "Mental Wellness",
    "Healthy Routines",
    "Caregiving",
)

_LEAF_VARIANTS = ("Foundations", "In Practice", "Under Pressure", "Across Communities")


def reference_taxonomy() -> Taxonomy:
    """Built-in demo taxonomy: 152 leaves in 39 groups under 8 domains."""
    level1 = tuple(
        Code(id=f"L1_{i + 1}", name=name) for i, name in enumerate(_LEVEL1_NAMES)
    )
    group_domain = [min(i // 5, 7) for i in range(len(_LEVEL2_NAMES))]
    level2 = tuple(
        Code(id=f"L2_{i + 1:02d}", name=name, parent=f"L1_{group_domain[i] + 1}")
        for i, name in enumerate(_LEVEL2_NAMES)
    )
    # 35 groups carry 4 leaves, the last 4 groups carry 3: 35*4 + 4*3 = 152.
    level3 = []
    seq = 0
    for gi, group in enumerate(level2):
        n_leaves = 4 if gi < 35 else 3
        for v in range(n_leaves):
            seq += 1
            level3.append(
                Code(
                    id=f"L3_{seq:03d}",
                    name=f"{group.name}: {_LEAF_VARIANTS[v]}",
                    parent=group.id,
                )
            )
    return Taxonomy(level1=level1, level2=level2, level3=tuple(level3))
