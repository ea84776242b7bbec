"""Seeded synthetic-corpus generator.

Stands in for the private production corpus: essays are bags of pseudo-word
filler plus one distinctive keyword per expressed credential, so the true
text-to-credential rule is known exactly.  Annotator bias is injected by
withholding labels at a configurable rate per (group, credential); the
withheld labels remain recoverable from the keyword rule, which gives every
downstream fairness check a ground truth to compare against.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Mapping

import numpy as np

from .corpus import Dataset, Experience, Taxonomy, ValidationError, build_dataset, reference_taxonomy
from .textvec import default_stopwords, tokenize


@dataclass(frozen=True)
class GroupSpec:
    """One demographic group: users, essay volume, extra attribute values."""

    name: str
    users: int
    experiences_total: int | None = None  # exact count; overrides the per-user range
    experiences_per_user: tuple[int, int] = (5, 5)
    attributes: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class KeywordRule:
    """Keyword that expresses a credential, optionally for some groups only."""

    credential: str
    keyword: str
    groups: tuple[str, ...] | None = None  # None: usable by every group


@dataclass(frozen=True)
class WithholdRule:
    """Drop the label for (group, credential) at this rate; "*" matches all credentials."""

    group: str
    credential: str
    rate: float


@dataclass(frozen=True)
class SynthSpec:
    groups: tuple[GroupSpec, ...]
    keywords: tuple[KeywordRule, ...] = ()  # empty: auto-generate one keyword per leaf
    seed: int = 20260814
    attribute: str = "race"
    taxonomy: Taxonomy | None = None
    withholding: tuple[WithholdRule, ...] = ()
    codes_per_essay: tuple[int, int] = (1, 5)
    filler_words_per_essay: tuple[int, int] = (25, 90)
    filler_vocab_size: int = 1500
    # How many times an expressed credential's keyword is repeated in the
    # essay; repetition controls how prominent the signal is after TF-IDF.
    keyword_copies: tuple[int, int] = (1, 3)
    # Allocate expressed credentials round-robin instead of i.i.d. so per-group
    # expression rates match almost exactly (keeps unbiased fixtures gap-free).
    balanced_expression: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "attribute": self.attribute,
            "groups": [
                {
                    "name": g.name,
                    "users": g.users,
                    "experiences_total": g.experiences_total,
                    "experiences_per_user": list(g.experiences_per_user),
                    "attributes": dict(g.attributes),
                }
                for g in self.groups
            ],
            "keywords": [
                {
                    "credential": r.credential,
                    "keyword": r.keyword,
                    "groups": list(r.groups) if r.groups is not None else None,
                }
                for r in self.keywords
            ],
            "withholding": [
                {"group": w.group, "credential": w.credential, "rate": w.rate}
                for w in self.withholding
            ],
            "taxonomy": self.taxonomy.to_dict() if self.taxonomy is not None else None,
            "codes_per_essay": list(self.codes_per_essay),
            "filler_words_per_essay": list(self.filler_words_per_essay),
            "filler_vocab_size": self.filler_vocab_size,
            "keyword_copies": list(self.keyword_copies),
            "balanced_expression": self.balanced_expression,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SynthSpec":
        groups = tuple(
            GroupSpec(
                name=str(g["name"]),
                users=int(g["users"]),
                experiences_total=(None if g.get("experiences_total") is None
                                   else int(g["experiences_total"])),
                experiences_per_user=tuple(g.get("experiences_per_user", (5, 5))),
                attributes=dict(g.get("attributes", {})),
            )
            for g in d.get("groups", ())
        )
        keywords = tuple(
            KeywordRule(
                credential=str(r["credential"]),
                keyword=str(r["keyword"]),
                groups=(None if r.get("groups") is None else tuple(r["groups"])),
            )
            for r in d.get("keywords", ())
        )
        withholding = tuple(
            WithholdRule(group=str(w["group"]), credential=str(w["credential"]), rate=float(w["rate"]))
            for w in d.get("withholding", ())
        )
        tax = d.get("taxonomy")
        return cls(
            groups=groups,
            keywords=keywords,
            seed=int(d.get("seed", 20260814)),
            attribute=str(d.get("attribute", "race")),
            taxonomy=Taxonomy.from_dict(tax) if tax else None,
            withholding=withholding,
            codes_per_essay=tuple(d.get("codes_per_essay", (1, 5))),
            filler_words_per_essay=tuple(d.get("filler_words_per_essay", (25, 90))),
            filler_vocab_size=int(d.get("filler_vocab_size", 1500)),
            keyword_copies=tuple(d.get("keyword_copies", (1, 3))),
            balanced_expression=bool(d.get("balanced_expression", False)),
        )


def load_spec(path: str | Path) -> SynthSpec:
    return SynthSpec.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


_ONSETS = ("b", "d", "f", "g", "k", "l", "m", "n", "p", "r",
           "s", "t", "v", "z", "br", "dr", "gr", "kl", "pl", "st")
_VOWELS = ("a", "e", "i", "o", "u")


def _pseudo_word(rng: np.random.Generator, syllables: int = 3) -> str:
    return "".join(
        _ONSETS[int(rng.integers(len(_ONSETS)))] + _VOWELS[int(rng.integers(len(_VOWELS)))]
        for _ in range(syllables)
    )


def _fresh_words(rng: np.random.Generator, count: int, taken: set[str]) -> list[str]:
    words: list[str] = []
    while len(words) < count:
        w = _pseudo_word(rng)
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


def _round_robin(rng: np.random.Generator, n: int) -> Iterator[int]:
    while True:
        for idx in rng.permutation(n):
            yield int(idx)


def synth_corpus(spec: SynthSpec) -> Dataset:
    """Generate a dataset from the spec; byte-identical output for a fixed seed.

    Invariant: a credential is annotated on an experience iff the experience
    text contains one of its keywords and the label was not withheld for the
    experience's group.
    """
    if not spec.groups:
        raise ValidationError("synth spec declares no groups")
    for w in spec.withholding:
        if not 0.0 <= w.rate <= 1.0:
            raise ValidationError(f"withholding rate {w.rate} outside [0, 1]")
    taxonomy = spec.taxonomy if spec.taxonomy is not None else reference_taxonomy()
    leaf_ids = set(taxonomy.ids(3))

    rng = np.random.default_rng(spec.seed)

    rules = list(spec.keywords)
    if not rules:
        kw_taken = set(default_stopwords())
        autowords = _fresh_words(rng, len(taxonomy.level3), kw_taken)
        rules = [KeywordRule(credential=c.id, keyword=w)
                 for c, w in zip(taxonomy.level3, autowords)]
    for r in rules:
        if r.credential not in leaf_ids:
            raise ValidationError(f"keyword rule references unknown credential {r.credential!r}")

    taken = {r.keyword for r in rules} | set(default_stopwords())
    fillers = _fresh_words(rng, spec.filler_vocab_size, taken)

    withhold_rate: dict[tuple[str, str], float] = {}
    for w in spec.withholding:
        withhold_rate[(w.group, w.credential)] = w.rate

    def rate_for(group: str, credential: str) -> float:
        if (group, credential) in withhold_rate:
            return withhold_rate[(group, credential)]
        return withhold_rate.get((group, "*"), 0.0)

    c_lo, c_hi = spec.codes_per_essay
    f_lo, f_hi = spec.filler_words_per_essay
    experiences: list[Experience] = []
    seq = 0
    for group in spec.groups:
        usable = [r for r in rules if r.groups is None or group.name in r.groups]
        by_cred: dict[str, list[KeywordRule]] = {}
        for r in usable:
            by_cred.setdefault(r.credential, []).append(r)
        creds = sorted(by_cred)
        stream = _round_robin(rng, len(creds)) if (spec.balanced_expression and creds) else None

        counts = _experience_counts(rng, group)
        for ui in range(group.users):
            user_id = f"u_{group.name}_{ui:04d}"
            for _ in range(counts[ui]):
                seq += 1
                k = int(rng.integers(c_lo, c_hi + 1))
                if stream is not None:
                    picked: list[str] = []
                    for _ in range(k):
                        cred = creds[next(stream)]
                        if cred not in picked:
                            picked.append(cred)
                    expressed = picked
                elif creds:
                    k = min(k, len(creds))
                    idx = rng.choice(len(creds), size=k, replace=False)
                    expressed = [creds[int(i)] for i in sorted(idx)]
                else:
                    expressed = []

                n_fill = int(rng.integers(f_lo, f_hi + 1))
                words = [fillers[int(i)] for i in rng.integers(len(fillers), size=n_fill)]
                kw_lo, kw_hi = spec.keyword_copies
                for cred in expressed:
                    options = by_cred[cred]
                    rule = options[int(rng.integers(len(options)))] if len(options) > 1 else options[0]
                    for _ in range(int(rng.integers(kw_lo, kw_hi + 1))):
                        words.insert(int(rng.integers(len(words) + 1)), rule.keyword)
                text = " ".join(words) + "."

                annotations = set()
                for cred in expressed:
                    if rng.random() >= rate_for(group.name, cred):
                        annotations.add(cred)

                demographics = {spec.attribute: group.name, **dict(group.attributes)}
                experiences.append(
                    Experience(
                        id=f"e{seq:05d}",
                        user_id=user_id,
                        text=text,
                        demographics=demographics,
                        annotations=frozenset(annotations),
                    )
                )

    attrs = [spec.attribute] + sorted(
        {a for g in spec.groups for a in g.attributes if a != spec.attribute}
    )
    return build_dataset(experiences, taxonomy, attrs)


def _experience_counts(rng: np.random.Generator, group: GroupSpec) -> list[int]:
    if group.users < 1:
        raise ValidationError(f"group {group.name!r} must have at least one user")
    if group.experiences_total is not None:
        base, rem = divmod(group.experiences_total, group.users)
        return [base + 1 if i < rem else base for i in range(group.users)]
    lo, hi = group.experiences_per_user
    return [int(rng.integers(lo, hi + 1)) for _ in range(group.users)]


def keyword_annotations(dataset: Dataset, rules: list[KeywordRule] | tuple[KeywordRule, ...]) -> dict[str, frozenset[str]]:
    """Ground-truth labels implied by the keyword rules (ignores withholding)."""
    out = {}
    for e in dataset.experiences:
        tokens = set(tokenize(e.text, stopwords=frozenset()))
        out[e.id] = frozenset(r.credential for r in rules if r.keyword in tokens)
    return out


def production_scale_spec(seed: int = 20260814) -> SynthSpec:
    """A corpus in the production shape: 2,974 essays from 621 users, 152 leaf
    credentials with auto keywords, vocabulary large enough for 5,000 TF-IDF
    features."""
    return SynthSpec(
        groups=(
            GroupSpec(name="white", users=300, experiences_total=1430),
            GroupSpec(name="black or African American", users=200, experiences_total=960),
            GroupSpec(name="undisclosed", users=121, experiences_total=584),
        ),
        seed=seed,
        attribute="race",
        codes_per_essay=(1, 5),
        filler_words_per_essay=(25, 90),
        filler_vocab_size=6000,
        # Repetition makes each credential's cue word dominate the essay's
        # TF-IDF mass the way a real on-topic essay does; with a single
        # mention, 152 rare labels sit below the award threshold for every
        # learner and the comparison table degenerates to base rates.
        keyword_copies=(4, 7),
    )


def bias_scenario_spec(seed: int = 11) -> SynthSpec:
    """Two-group fixture with one credential expressed through group-specific
    keywords and its label withheld at rate 0.5 for the second group.

    The demographic-blind classifier can only reproduce the missing labels
    through the group-correlated keyword, so the injected gap surfaces in
    predicted award rates, which is exactly what the audit should flag.
    """
    taxonomy = reference_taxonomy()
    biased = "L3_001"  # leaf under the "Working with Others" group
    others = [c.id for c in taxonomy.level3[4:32:4]]  # 7 leaves in distinct groups
    rules = [
        KeywordRule(credential=biased, keyword="organized", groups=("alpha",)),
        KeywordRule(credential=biased, keyword="included", groups=("beta",)),
    ]
    plain_words = ("together", "listened", "planned", "volunteered",
                   "researched", "painted", "budgeted")
    rules += [KeywordRule(credential=c, keyword=w) for c, w in zip(others, plain_words)]
    return SynthSpec(
        groups=(
            GroupSpec(name="alpha", users=60, experiences_per_user=(8, 8)),
            GroupSpec(name="beta", users=60, experiences_per_user=(8, 8)),
        ),
        keywords=tuple(rules),
        seed=seed,
        attribute="race",
        taxonomy=taxonomy,
        withholding=(WithholdRule(group="beta", credential=biased, rate=0.5),),
        codes_per_essay=(1, 3),
        filler_words_per_essay=(20, 60),
        filler_vocab_size=900,
        balanced_expression=True,
    )
