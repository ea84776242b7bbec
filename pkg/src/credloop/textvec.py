"""Essay text to fixed-width vectors: tokenize, stop-word removal, TF-IDF.

The weighting convention is pinned so every caller agrees exactly:
idf(t) = ln((1 + N) / (1 + df(t))) + 1 over the fitting corpus, document
weights are raw term counts times idf, then L2-normalised.  Vocabulary is
the ``max_features`` highest-document-frequency tokens, ties broken
lexicographically.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse

from .corpus import ValidationError

DEFAULT_TOKEN_PATTERN = r"[a-z']+"
DEFAULT_MAX_FEATURES = 5000

# DocVector: sparse column-index -> weight map with unit (or zero) L2 norm.
DocVector = dict[int, float]


@lru_cache(maxsize=1)
def default_stopwords() -> frozenset[str]:
    text = resources.files("credloop.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(
        line.strip() for line in text.splitlines()
        if line.strip() and not line.startswith("#")
    )


def stopword_hash(stopwords: Iterable[str]) -> str:
    blob = "\n".join(sorted(stopwords)).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


@lru_cache(maxsize=8)
def _compiled(pattern: str) -> re.Pattern[str]:
    return re.compile(pattern)


def tokenize(
    text: str,
    stopwords: frozenset[str] | None = None,
    lowercase: bool = True,
    token_pattern: str = DEFAULT_TOKEN_PATTERN,
) -> list[str]:
    """Alphabetic-or-apostrophe runs of length >= 2, lowercased, stopwords removed."""
    if stopwords is None:
        stopwords = default_stopwords()
    if lowercase:
        text = text.lower()
    return [
        t for t in _compiled(token_pattern).findall(text)
        if len(t) >= 2 and not t.strip("'") == "" and t not in stopwords
    ]


@dataclass(frozen=True, eq=False)
class VectorModel:
    """Fitted vocabulary and idf weights; immutable, transform is pure."""

    vocabulary: tuple[str, ...]
    idf: np.ndarray
    stopwords: frozenset[str]
    max_features: int = DEFAULT_MAX_FEATURES
    lowercase: bool = True
    token_pattern: str = DEFAULT_TOKEN_PATTERN

    def __post_init__(self) -> None:
        if len(self.vocabulary) != len(self.idf):
            raise ValidationError("vocabulary and idf lengths differ")
        if len(set(self.vocabulary)) != len(self.vocabulary):
            raise ValidationError("vocabulary contains duplicate tokens")
        if any(t in self.stopwords for t in self.vocabulary):
            raise ValidationError("stopword leaked into vocabulary")
        if len(self.idf) and float(np.min(self.idf)) <= 0.0:
            raise ValidationError("idf weights must be positive")

    @property
    def column_index(self) -> Mapping[str, int]:
        cached = self.__dict__.get("_column_index")
        if cached is None:
            cached = {t: i for i, t in enumerate(self.vocabulary)}
            self.__dict__["_column_index"] = cached
        return cached

    def __len__(self) -> int:
        return len(self.vocabulary)

    def tokenize(self, text: str) -> list[str]:
        return tokenize(text, self.stopwords, self.lowercase, self.token_pattern)

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "config": {
                "max_features": self.max_features,
                "lowercase": self.lowercase,
                "token_pattern": self.token_pattern,
            },
            "stopword_hash": stopword_hash(self.stopwords),
            "vocabulary": list(self.vocabulary),
            "idf": [float(v) for v in self.idf],
        }

    @classmethod
    def from_dict(cls, d: Mapping, stopwords: frozenset[str] | None = None) -> "VectorModel":
        if stopwords is None:
            stopwords = default_stopwords()
        stored = d.get("stopword_hash")
        if stored is not None and stored != stopword_hash(stopwords):
            raise ValidationError(
                "stopword list hash mismatch: model was fitted against a different list"
            )
        cfg = d.get("config", {})
        return cls(
            vocabulary=tuple(d["vocabulary"]),
            idf=np.asarray(d["idf"], dtype=np.float64),
            stopwords=stopwords,
            max_features=int(cfg.get("max_features", DEFAULT_MAX_FEATURES)),
            lowercase=bool(cfg.get("lowercase", True)),
            token_pattern=str(cfg.get("token_pattern", DEFAULT_TOKEN_PATTERN)),
        )


def fit(
    corpus: Sequence[Sequence[str]],
    max_features: int = DEFAULT_MAX_FEATURES,
    stopwords: frozenset[str] | None = None,
    lowercase: bool = True,
    token_pattern: str = DEFAULT_TOKEN_PATTERN,
) -> VectorModel:
    """Fit vocabulary and idf weights on pre-tokenized documents."""
    if len(corpus) == 0:
        raise ValidationError("cannot fit a vector model on an empty corpus")
    if max_features < 1:
        raise ValidationError("max_features must be >= 1")
    if stopwords is None:
        stopwords = default_stopwords()

    df: dict[str, int] = {}
    for tokens in corpus:
        for t in set(tokens):
            if t not in stopwords:
                df[t] = df.get(t, 0) + 1

    chosen = sorted(df, key=lambda t: (-df[t], t))[:max_features]
    n_docs = len(corpus)
    idf = np.array(
        [math.log((1.0 + n_docs) / (1.0 + df[t])) + 1.0 for t in chosen],
        dtype=np.float64,
    )
    return VectorModel(
        vocabulary=tuple(chosen),
        idf=idf,
        stopwords=stopwords,
        max_features=max_features,
        lowercase=lowercase,
        token_pattern=token_pattern,
    )


def transform(model: VectorModel, tokens: Sequence[str]) -> DocVector:
    """Counts times idf, L2-normalised; out-of-vocabulary tokens are ignored."""
    index = model.column_index
    counts: dict[int, int] = {}
    for t in tokens:
        col = index.get(t)
        if col is not None:
            counts[col] = counts.get(col, 0) + 1
    if not counts:
        return {}
    weights = {col: c * float(model.idf[col]) for col, c in counts.items()}
    norm = math.sqrt(sum(w * w for w in weights.values()))
    return {col: w / norm for col, w in sorted(weights.items())}


def transform_many(model: VectorModel, docs: Sequence[Sequence[str]]) -> sparse.csr_matrix:
    """Stack document vectors into a CSR matrix of shape (len(docs), |vocab|)."""
    data: list[float] = []
    indices: list[int] = []
    indptr = [0]
    for tokens in docs:
        vec = transform(model, tokens)
        indices.extend(vec.keys())
        data.extend(vec.values())
        indptr.append(len(indices))
    return sparse.csr_matrix(
        (np.asarray(data, dtype=np.float64),
         np.asarray(indices, dtype=np.int32),
         np.asarray(indptr, dtype=np.int32)),
        shape=(len(docs), len(model.vocabulary)),
    )


def save_vector_model(model: VectorModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), sort_keys=True), encoding="utf-8")


def load_vector_model(path: str | Path, stopwords: frozenset[str] | None = None) -> VectorModel:
    return VectorModel.from_dict(
        json.loads(Path(path).read_text(encoding="utf-8")), stopwords=stopwords
    )
