"""Conditional statistical parity over credential outcomes.

The audited quantity, for a credential c and a demographic group g, is

    csp(c, g) = |eligible experiences of g whose outcome includes c|
                / |eligible experiences of g|

where an experience is eligible when its author has submitted at least
``min_submissions`` experiences in total.  Outcomes may be human annotations
or model predictions; both arrive as leaf-code sets and are rolled up to the
requested taxonomy level before counting.  A credential is flagged when two
groups' rates differ by at least the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .corpus import Dataset, Taxonomy, UNDISCLOSED, ValidationError, rollup

DEFAULT_MIN_SUBMISSIONS = 5
DEFAULT_FLAG_THRESHOLD = 0.05


@dataclass(frozen=True)
class CspEntry:
    credential: str
    group: str
    awarded: int
    eligible: int

    def __post_init__(self) -> None:
        if self.eligible < 1:
            raise ValidationError("a CSP entry needs at least one eligible experience")
        if not 0 <= self.awarded <= self.eligible:
            raise ValidationError("awarded count must lie in [0, eligible]")

    @property
    def rate(self) -> float:
        return self.awarded / self.eligible

    def to_dict(self) -> dict[str, Any]:
        return {
            "credential": self.credential,
            "group": self.group,
            "awarded": self.awarded,
            "eligible": self.eligible,
            "rate": self.rate,
        }


@dataclass(frozen=True)
class CspReport:
    attribute: str
    level: int
    min_submissions: int
    source: str  # "annotations" or "predictions"
    entries: tuple[CspEntry, ...]
    iteration: int | None = None

    def groups(self) -> tuple[str, ...]:
        return tuple(sorted({e.group for e in self.entries}))

    def credentials(self) -> tuple[str, ...]:
        seen: list[str] = []
        for e in self.entries:
            if e.credential not in seen:
                seen.append(e.credential)
        return tuple(seen)

    def by_credential(self, credential: str) -> dict[str, CspEntry]:
        found = {e.group: e for e in self.entries if e.credential == credential}
        if not found:
            raise ValidationError(f"no CSP entries for credential {credential!r}")
        return found

    def rate(self, credential: str, group: str) -> float:
        try:
            return self.by_credential(credential)[group].rate
        except KeyError:
            raise ValidationError(
                f"no eligible experiences for group {group!r} under {credential!r}"
            ) from None

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": 1,
            "attribute": self.attribute,
            "level": self.level,
            "min_submissions": self.min_submissions,
            "source": self.source,
            "iteration": self.iteration,
            "entries": [e.to_dict() for e in self.entries],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CspReport":
        return cls(
            attribute=str(d["attribute"]),
            level=int(d["level"]),
            min_submissions=int(d["min_submissions"]),
            source=str(d["source"]),
            iteration=d.get("iteration"),
            entries=tuple(
                CspEntry(
                    credential=str(e["credential"]),
                    group=str(e["group"]),
                    awarded=int(e["awarded"]),
                    eligible=int(e["eligible"]),
                )
                for e in d["entries"]
            ),
        )


def annotation_outcomes(dataset: Dataset) -> dict[str, frozenset[str]]:
    """Outcome map drawn from the current human annotations."""
    return {e.id: e.annotations for e in dataset.experiences}


def compute_csp(
    dataset: Dataset,
    outcomes: Mapping[str, Iterable[str]],
    attribute: str,
    level: int = 2,
    min_submissions: int = DEFAULT_MIN_SUBMISSIONS,
    source: str = "annotations",
    iteration: int | None = None,
) -> CspReport:
    """Award rates per (credential, group) over eligible experiences.

    ``outcomes`` maps every experience id to its awarded leaf codes.  Groups
    with no eligible experiences produce no entry at all, as opposed to an
    entry with rate zero.
    """
    if len(dataset) == 0:
        raise ValidationError("cannot audit an empty dataset")
    if min_submissions < 1:
        raise ValidationError("min_submissions must be >= 1")
    if source not in ("annotations", "predictions"):
        raise ValidationError(f"unknown outcome source {source!r}")
    if not any(attribute in e.demographics for e in dataset.experiences):
        raise ValidationError(f"attribute {attribute!r} appears in no experience")
    known_ids = {e.id for e in dataset.experiences}
    extra = set(outcomes) - known_ids
    if extra:
        raise ValidationError(f"outcome for unknown experience {sorted(extra)[0]!r}")
    missing = known_ids - set(outcomes)
    if missing:
        raise ValidationError(f"no outcome for experience {sorted(missing)[0]!r}")

    taxonomy = dataset.taxonomy
    counts = dataset.user_submission_counts()
    credentials = taxonomy.ids(level)
    eligible: dict[str, int] = {}
    awarded: dict[tuple[str, str], int] = {}
    for e in dataset.experiences:
        if counts[e.user_id] < min_submissions:
            continue
        group = e.group(attribute)
        eligible[group] = eligible.get(group, 0) + 1
        for c in rollup(outcomes[e.id], level, taxonomy):
            awarded[c, group] = awarded.get((c, group), 0) + 1

    entries = tuple(
        CspEntry(credential=c, group=g, awarded=awarded.get((c, g), 0), eligible=eligible[g])
        for c in credentials
        for g in sorted(eligible)
    )
    return CspReport(
        attribute=attribute,
        level=level,
        min_submissions=min_submissions,
        source=source,
        iteration=iteration,
        entries=entries,
    )


@dataclass(frozen=True)
class Flag:
    """One credential whose award rates for two groups differ by >= threshold.

    ``group_low`` always names the disadvantaged side.
    """

    credential: str
    group_low: str
    group_high: str
    rate_low: float
    rate_high: float

    @property
    def gap(self) -> float:
        return self.rate_high - self.rate_low

    def to_dict(self) -> dict[str, Any]:
        return {
            "credential": self.credential,
            "group_low": self.group_low,
            "group_high": self.group_high,
            "rate_low": self.rate_low,
            "rate_high": self.rate_high,
            "gap": self.gap,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Flag":
        return cls(
            credential=str(d["credential"]),
            group_low=str(d["group_low"]),
            group_high=str(d["group_high"]),
            rate_low=float(d["rate_low"]),
            rate_high=float(d["rate_high"]),
        )


@dataclass(frozen=True)
class FlagSet:
    attribute: str
    level: int
    threshold: float
    source: str
    flags: tuple[Flag, ...]
    iteration: int | None = None
    include_undisclosed: bool = False

    def credentials(self) -> tuple[str, ...]:
        seen: list[str] = []
        for f in self.flags:
            if f.credential not in seen:
                seen.append(f.credential)
        return tuple(seen)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": 1,
            "attribute": self.attribute,
            "level": self.level,
            "threshold": self.threshold,
            "source": self.source,
            "iteration": self.iteration,
            "include_undisclosed": self.include_undisclosed,
            "flags": [f.to_dict() for f in self.flags],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "FlagSet":
        return cls(
            attribute=str(d["attribute"]),
            level=int(d["level"]),
            threshold=float(d["threshold"]),
            source=str(d["source"]),
            iteration=d.get("iteration"),
            include_undisclosed=bool(d.get("include_undisclosed", False)),
            flags=tuple(Flag.from_dict(f) for f in d["flags"]),
        )


def flag(
    report: CspReport,
    threshold: float = DEFAULT_FLAG_THRESHOLD,
    include_undisclosed: bool = False,
) -> FlagSet:
    """Pairwise rate comparison; a gap meeting the threshold raises a flag.

    Each unordered group pair yields at most one flag, ordered so the lower
    rate comes first.  Experiences whose authors declined to disclose the
    attribute stay in their own rates but are excluded from pairing unless
    ``include_undisclosed`` is set: a gap against an opt-out pool is not
    evidence about a disclosed group.
    """
    if threshold <= 0:
        raise ValidationError("flag threshold must be > 0")
    if not report.entries:
        raise ValidationError("cannot flag an empty CSP report")
    flags: list[Flag] = []
    for credential in report.credentials():
        rates = report.by_credential(credential)
        groups = sorted(rates)
        if not include_undisclosed:
            groups = [g for g in groups if g != UNDISCLOSED]
        for i, a in enumerate(groups):
            for b in groups[i + 1 :]:
                low, high = sorted((a, b), key=lambda g: (rates[g].rate, g))
                gap = rates[high].rate - rates[low].rate
                if gap >= threshold:
                    flags.append(
                        Flag(
                            credential=credential,
                            group_low=low,
                            group_high=high,
                            rate_low=rates[low].rate,
                            rate_high=rates[high].rate,
                        )
                    )
    flags.sort(key=lambda f: (-f.gap, f.credential, f.group_low, f.group_high))
    return FlagSet(
        attribute=report.attribute,
        level=report.level,
        threshold=threshold,
        source=report.source,
        iteration=report.iteration,
        include_undisclosed=include_undisclosed,
        flags=tuple(flags),
    )


@dataclass(frozen=True)
class FlagRateSummary:
    flagged: int
    total: int
    favored: Mapping[str, int] = field(default_factory=dict)

    @property
    def rate(self) -> float:
        return self.flagged / self.total

    def favored_share(self, group: str) -> float:
        n = sum(self.favored.values())
        if n == 0:
            return 0.0
        return self.favored.get(group, 0) / n

    def to_dict(self) -> dict[str, Any]:
        return {
            "flagged": self.flagged,
            "total": self.total,
            "rate": self.rate,
            "favored": dict(self.favored),
            "favored_share": {g: self.favored_share(g) for g in sorted(self.favored)},
        }


def flag_rate(flag_set: FlagSet, taxonomy: Taxonomy) -> FlagRateSummary:
    """Fraction of the level's credentials carrying at least one flag, plus
    how often each group sits on the favored (high-rate) side."""
    total = len(taxonomy.ids(flag_set.level))
    favored: dict[str, int] = {}
    for f in flag_set.flags:
        favored[f.group_high] = favored.get(f.group_high, 0) + 1
    return FlagRateSummary(
        flagged=len(flag_set.credentials()), total=total, favored=favored
    )


@dataclass(frozen=True)
class CspDiffRow:
    group: str
    before: float | None
    after: float | None

    def to_dict(self) -> dict[str, Any]:
        return {"group": self.group, "before": self.before, "after": self.after}


@dataclass(frozen=True)
class CspDiff:
    credential: str
    attribute: str
    level: int
    rows: tuple[CspDiffRow, ...]
    gap_before: float
    gap_after: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": 1,
            "credential": self.credential,
            "attribute": self.attribute,
            "level": self.level,
            "rows": [r.to_dict() for r in self.rows],
            "gap_before": self.gap_before,
            "gap_after": self.gap_after,
        }


def _max_gap(rates: Mapping[str, CspEntry], include_undisclosed: bool) -> float:
    groups = [g for g in rates if include_undisclosed or g != UNDISCLOSED]
    values = [rates[g].rate for g in groups]
    if len(values) < 2:
        return 0.0
    return max(values) - min(values)


def csp_diff(
    before: CspReport,
    after: CspReport,
    credential: str,
    include_undisclosed: bool = False,
) -> CspDiff:
    """Per-group rate movement for one credential between two audits."""
    if before.attribute != after.attribute or before.level != after.level:
        raise ValidationError("cannot diff reports over different attributes or levels")
    b = before.by_credential(credential)
    a = after.by_credential(credential)
    groups = sorted(set(b) | set(a))
    rows = tuple(
        CspDiffRow(
            group=g,
            before=b[g].rate if g in b else None,
            after=a[g].rate if g in a else None,
        )
        for g in groups
    )
    return CspDiff(
        credential=credential,
        attribute=before.attribute,
        level=before.level,
        rows=rows,
        gap_before=_max_gap(b, include_undisclosed),
        gap_after=_max_gap(a, include_undisclosed),
    )


# ---------------------------------------------------------------------------
# Text renderers (4-decimal display, full precision in the dicts)


def render_csp(report: CspReport, taxonomy: Taxonomy | None = None) -> str:
    header = (
        f"Conditional statistical parity -- attribute={report.attribute} "
        f"level={report.level} min_submissions={report.min_submissions} "
        f"source={report.source}"
    )
    rows = [("Credential", "Group", "Awarded", "Eligible", "Rate")]
    for e in report.entries:
        name = f"{e.credential}" if taxonomy is None else f"{e.credential} {taxonomy.name(e.credential)}"
        rows.append((name, e.group, str(e.awarded), str(e.eligible), f"{e.rate:.4f}"))
    return header + "\n" + _table(rows)


def render_flags(flag_set: FlagSet, taxonomy: Taxonomy | None = None) -> str:
    header = (
        f"Flags -- attribute={flag_set.attribute} level={flag_set.level} "
        f"threshold={flag_set.threshold:g} source={flag_set.source}"
    )
    if not flag_set.flags:
        return header + "\nno flags"
    rows = [("Credential", "Low group", "High group", "Low", "High", "Gap")]
    for f in flag_set.flags:
        name = f.credential if taxonomy is None else f"{f.credential} {taxonomy.name(f.credential)}"
        rows.append(
            (name, f.group_low, f.group_high, f"{f.rate_low:.4f}", f"{f.rate_high:.4f}", f"{f.gap:.4f}")
        )
    return header + "\n" + _table(rows)


def render_diff(diff: CspDiff, taxonomy: Taxonomy | None = None) -> str:
    name = diff.credential if taxonomy is None else f"{diff.credential} {taxonomy.name(diff.credential)}"
    header = f"CSP change for {name} (attribute={diff.attribute})"
    rows = [("Group", "Before", "After", "Change")]
    for r in diff.rows:
        before = "-" if r.before is None else f"{r.before:.4f}"
        after = "-" if r.after is None else f"{r.after:.4f}"
        change = (
            "-"
            if r.before is None or r.after is None
            else f"{r.after - r.before:+.4f}"
        )
        rows.append((r.group, before, after, change))
    footer = f"max gap: {diff.gap_before:.4f} -> {diff.gap_after:.4f}"
    return header + "\n" + _table(rows) + "\n" + footer


def _table(rows: Sequence[tuple[str, ...]]) -> str:
    widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
    out = ["  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)).rstrip() for row in rows]
    out.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(out)
