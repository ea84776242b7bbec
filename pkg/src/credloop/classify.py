"""Per-credential binary learners and the one-classifier-per-target wrapper.

Three learner kinds share one training entry point:

* ``logistic`` -- mean log-loss + (l2/2)||w||^2, full-batch gradient descent;
* ``svm``      -- mean hinge loss + the same penalty, subgradient descent;
* ``nbayes``   -- multinomial naive Bayes with additive smoothing, closed form.

Descent uses an inverse-time step lr0 / (1 + decay * t) and stops a label
once its loss change drops below the tolerance.  Training the
full label set at once is column-wise identical to training each label on its
own; columns never interact.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse
from scipy.special import expit, logsumexp

from . import kernels
from .corpus import Dataset, ValidationError
from .textvec import (
    DocVector,
    VectorModel,
    default_stopwords,
    fit as fit_vector_model,
    tokenize,
    transform,
    transform_many,
)

LEARNER_KINDS = ("logistic", "nbayes", "svm")

DISPLAY_NAMES = {
    "logistic": "Logistic Regression",
    "svm": "Support Vector Machines",
    "nbayes": "Naive Bayes",
}


@dataclass(frozen=True)
class LearnerConfig:
    kind: str = "logistic"
    l2_penalty: float = 1.0
    learning_rate: float | None = None  # None: 1 / (0.25 + l2_penalty)
    lr_decay: float = 0.01
    max_epochs: int = 300
    tolerance: float = 1e-6
    seed: int = 20260814
    nb_smoothing: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in LEARNER_KINDS:
            raise ValidationError(f"unknown learner kind {self.kind!r}")
        if self.tolerance <= 0:
            raise ValidationError("tolerance must be > 0")
        if self.max_epochs < 1:
            raise ValidationError("max_epochs must be >= 1")
        if self.l2_penalty < 0:
            raise ValidationError("l2_penalty must be >= 0")
        if self.nb_smoothing <= 0:
            raise ValidationError("nb_smoothing must be > 0")

    @property
    def effective_learning_rate(self) -> float:
        # Below 2/L for the logistic objective (rows are unit vectors) and
        # below 1/penalty, so plain descent cannot blow up at any grid point.
        if self.learning_rate is not None:
            return self.learning_rate
        return 1.0 / (0.25 + self.l2_penalty)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "l2_penalty": self.l2_penalty,
            "learning_rate": self.learning_rate,
            "lr_decay": self.lr_decay,
            "max_epochs": self.max_epochs,
            "tolerance": self.tolerance,
            "seed": self.seed,
            "nb_smoothing": self.nb_smoothing,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "LearnerConfig":
        lr = d.get("learning_rate")
        return cls(
            kind=str(d.get("kind", "logistic")),
            l2_penalty=float(d.get("l2_penalty", 1.0)),
            learning_rate=None if lr is None else float(lr),
            lr_decay=float(d.get("lr_decay", 0.01)),
            max_epochs=int(d.get("max_epochs", 300)),
            tolerance=float(d.get("tolerance", 1e-6)),
            seed=int(d.get("seed", 20260814)),
            nb_smoothing=float(d.get("nb_smoothing", 1.0)),
        )

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


@dataclass
class BinaryModel:
    """Decision function for a single credential."""

    kind: str
    weights: np.ndarray  # (F,)
    bias: float
    log_prior: np.ndarray | None = None  # (2,), nbayes only
    log_like: np.ndarray | None = None   # (2, F), nbayes only

    def decision(self, x: DocVector | np.ndarray) -> float:
        if isinstance(x, dict):
            z = self.bias + sum(self.weights[c] * v for c, v in x.items())
        else:
            z = self.bias + float(np.dot(self.weights, x))
        return float(z)

    def score(self, x: DocVector | np.ndarray) -> float:
        return float(_link(self.kind, np.asarray(self.decision(x))))


def _link(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "svm":
        return expit(2.0 * z)
    return expit(z)


def _as_csr(X: Any, n_features: int | None = None) -> sparse.csr_matrix:
    if sparse.issparse(X):
        return X.tocsr().astype(np.float64)
    if isinstance(X, np.ndarray):
        return sparse.csr_matrix(np.asarray(X, dtype=np.float64))
    # sequence of DocVector dicts
    docs = list(X)
    if n_features is None:
        n_features = 1 + max((c for d in docs for c in d), default=-1)
    data: list[float] = []
    indices: list[int] = []
    indptr = [0]
    for d in docs:
        for c in sorted(d):
            indices.append(c)
            data.append(float(d[c]))
        indptr.append(len(indices))
    return sparse.csr_matrix(
        (np.asarray(data), np.asarray(indices, dtype=np.int32), np.asarray(indptr, dtype=np.int32)),
        shape=(len(docs), n_features),
    )


# ---------------------------------------------------------------------------
# Objectives (shared by training and by the finite-difference checks)


def logistic_objective(w: np.ndarray, b: float, X: Any, y: np.ndarray, l2: float) -> float:
    X = _as_csr(X, len(w))
    z = np.asarray(X @ w).ravel() + b
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * np.dot(w, w))


def logistic_gradient(
    w: np.ndarray, b: float, X: Any, y: np.ndarray, l2: float
) -> tuple[np.ndarray, float]:
    X = _as_csr(X, len(w))
    z = np.asarray(X @ w).ravel() + b
    r = (expit(z) - y) / len(y)
    return np.asarray(X.T @ r).ravel() + l2 * w, float(r.sum())


def svm_objective(w: np.ndarray, b: float, X: Any, y: np.ndarray, l2: float) -> float:
    X = _as_csr(X, len(w))
    margin = (2.0 * y - 1.0) * (np.asarray(X @ w).ravel() + b)
    return float(np.mean(np.maximum(0.0, 1.0 - margin)) + 0.5 * l2 * np.dot(w, w))


def svm_subgradient(
    w: np.ndarray, b: float, X: Any, y: np.ndarray, l2: float
) -> tuple[np.ndarray, float]:
    X = _as_csr(X, len(w))
    pm = 2.0 * y - 1.0
    margin = pm * (np.asarray(X @ w).ravel() + b)
    r = np.where(margin < 1.0, -pm, 0.0) / len(y)
    return np.asarray(X.T @ r).ravel() + l2 * w, float(r.sum())


# ---------------------------------------------------------------------------
# Training


def _train_descent(
    X: sparse.csr_matrix, Y: np.ndarray, config: LearnerConfig
) -> tuple[np.ndarray, np.ndarray]:
    n, n_features = X.shape
    n_labels = Y.shape[1]
    W = np.zeros((n_features, n_labels))
    b = np.zeros(n_labels)
    prev = np.full(n_labels, np.inf)
    active = np.arange(n_labels)
    l2 = config.l2_penalty
    lr0 = config.effective_learning_rate
    pm = 2.0 * Y - 1.0 if config.kind == "svm" else None

    for t in range(config.max_epochs):
        full = active.size == n_labels
        Wa = W if full else np.ascontiguousarray(W[:, active])
        Z = kernels.matmul(X, Wa) + b[active]
        Ya = Y if full else Y[:, active]
        penalty = 0.5 * l2 * np.einsum("ij,ij->j", Wa, Wa)
        if config.kind == "logistic":
            loss = np.mean(np.logaddexp(0.0, Z) - Ya * Z, axis=0) + penalty
            R = (expit(Z) - Ya) / n
        else:
            Pa = pm if full else pm[:, active]
            M = Pa * Z
            loss = np.mean(np.maximum(0.0, 1.0 - M), axis=0) + penalty
            R = np.where(M < 1.0, -Pa, 0.0) / n
        converged = np.abs(prev[active] - loss) < config.tolerance
        prev[active] = loss
        keep = ~converged
        if not keep.any():
            break
        cols = active[keep]
        Ra = R if keep.all() else np.ascontiguousarray(R[:, keep])
        Gw = kernels.rmatmul(X, Ra) + l2 * W[:, cols]
        Gb = Ra.sum(axis=0)
        lr = lr0 / (1.0 + config.lr_decay * t)
        W[:, cols] -= lr * Gw
        b[cols] -= lr * Gb
        active = cols
    return W, b


def _train_nbayes(
    X: sparse.csr_matrix, Y: np.ndarray, config: LearnerConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    n, n_features = X.shape
    alpha = config.nb_smoothing
    pos_mass = kernels.rmatmul(X, Y)  # (F, L) feature mass in positive docs
    total_mass = np.asarray(X.sum(axis=0)).ravel()
    neg_mass = total_mass[:, None] - pos_mass
    theta_pos = (pos_mass + alpha) / (pos_mass.sum(axis=0) + alpha * n_features)
    theta_neg = (neg_mass + alpha) / (neg_mass.sum(axis=0) + alpha * n_features)
    pos_docs = Y.sum(axis=0)
    with np.errstate(divide="ignore"):
        log_prior = np.stack([np.log((n - pos_docs) / n), np.log(pos_docs / n)])
    log_like = np.stack([np.log(theta_neg), np.log(theta_pos)])  # (2, F, L)
    W = log_like[1] - log_like[0]
    b = log_prior[1] - log_prior[0]
    return W, b, log_prior, log_like


def train_binary(X: Any, y: Sequence[int] | np.ndarray, config: LearnerConfig) -> BinaryModel:
    """Fit one binary decision function; an all-one-class ``y`` is legal and
    yields a constant predictor."""
    Xc = _as_csr(X)
    yv = np.asarray(y, dtype=np.float64).ravel()
    if Xc.shape[0] != len(yv):
        raise ValidationError(f"X has {Xc.shape[0]} rows but y has {len(yv)} entries")
    if len(yv) < 1:
        raise ValidationError("training set must be non-empty")
    Y = yv[:, None]
    if config.kind == "nbayes":
        W, b, log_prior, log_like = _train_nbayes(Xc, Y, config)
        return BinaryModel(config.kind, W[:, 0], float(b[0]), log_prior[:, 0], log_like[:, :, 0])
    W, b = _train_descent(Xc, Y, config)
    return BinaryModel(config.kind, W[:, 0], float(b[0]))


def nb_posterior(model: BinaryModel, x: DocVector | np.ndarray) -> tuple[float, float]:
    """(negative, positive) class posterior from the stored NB parameters."""
    if model.log_prior is None or model.log_like is None:
        raise ValidationError("nb_posterior requires a naive Bayes model")
    if isinstance(x, dict):
        xv = np.zeros(model.log_like.shape[1])
        for c, v in x.items():
            xv[c] = v
    else:
        xv = np.asarray(x, dtype=np.float64)
    log_joint = model.log_prior + model.log_like @ xv
    post = np.exp(log_joint - logsumexp(log_joint))
    return float(post[0]), float(post[1])


@dataclass
class MultiOutputModel:
    """One binary decision function per leaf credential over a shared vector model."""

    vector_model: VectorModel
    labels: tuple[str, ...]
    kind: str
    weights: np.ndarray  # (F, L)
    bias: np.ndarray  # (L,)
    config: LearnerConfig
    threshold: float = 0.5
    nb_log_prior: np.ndarray | None = None  # (2, L)
    nb_log_like: np.ndarray | None = None   # (2, F, L)

    def __post_init__(self) -> None:
        if not 0.0 < self.threshold < 1.0:
            raise ValidationError("threshold must lie in (0, 1)")
        if self.weights.shape != (len(self.vector_model), len(self.labels)):
            raise ValidationError("weight matrix shape disagrees with vocabulary/labels")

    def binary(self, code_id: str) -> BinaryModel:
        j = self.labels.index(code_id)
        return BinaryModel(
            kind=self.kind,
            weights=self.weights[:, j],
            bias=float(self.bias[j]),
            log_prior=None if self.nb_log_prior is None else self.nb_log_prior[:, j],
            log_like=None if self.nb_log_like is None else self.nb_log_like[:, :, j],
        )

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "schema_version": 1,
            "kind": self.kind,
            "threshold": self.threshold,
            "labels": list(self.labels),
            "config": self.config.to_dict(),
            "config_hash": self.config.hash(),
            "vector_model": self.vector_model.to_dict(),
            "weights": [[float(v) for v in col] for col in self.weights.T],
            "bias": [float(v) for v in self.bias],
        }
        if self.nb_log_prior is not None:
            d["nb_log_prior"] = [[float(v) for v in row] for row in self.nb_log_prior.T]
            d["nb_log_like"] = [
                [[float(v) for v in self.nb_log_like[c, :, j]] for c in (0, 1)]
                for j in range(len(self.labels))
            ]
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], stopwords: frozenset[str] | None = None) -> "MultiOutputModel":
        labels = tuple(d["labels"])
        weights = np.asarray(d["weights"], dtype=np.float64).T
        nb_prior = nb_like = None
        if "nb_log_prior" in d:
            nb_prior = np.asarray(d["nb_log_prior"], dtype=np.float64).T
            like = np.asarray(d["nb_log_like"], dtype=np.float64)  # (L, 2, F)
            nb_like = np.transpose(like, (1, 2, 0))
        return cls(
            vector_model=VectorModel.from_dict(d["vector_model"], stopwords=stopwords),
            labels=labels,
            kind=str(d["kind"]),
            weights=weights,
            bias=np.asarray(d["bias"], dtype=np.float64),
            config=LearnerConfig.from_dict(d.get("config", {})),
            threshold=float(d.get("threshold", 0.5)),
            nb_log_prior=nb_prior,
            nb_log_like=nb_like,
        )


@dataclass(frozen=True)
class Prediction:
    codes: frozenset[str]
    scores: Mapping[str, float]


def train_model(
    dataset: Dataset,
    config: LearnerConfig,
    max_features: int = 5000,
    stopwords: frozenset[str] | None = None,
    threshold: float = 0.5,
) -> MultiOutputModel:
    """Fit the vector model and all per-credential classifiers on a dataset."""
    if len(dataset) == 0:
        raise ValidationError("cannot train on an empty dataset")
    if stopwords is None:
        stopwords = default_stopwords()
    docs = [tokenize(e.text, stopwords) for e in dataset.experiences]
    vm = fit_vector_model(docs, max_features=max_features, stopwords=stopwords)
    X = transform_many(vm, docs)
    labels = dataset.taxonomy.ids(3)
    Y = _label_matrix(dataset, labels)
    if config.kind == "nbayes":
        W, b, log_prior, log_like = _train_nbayes(X, Y, config)
        return MultiOutputModel(vm, labels, config.kind, W, b, config, threshold, log_prior, log_like)
    W, b = _train_descent(X, Y, config)
    return MultiOutputModel(vm, labels, config.kind, W, b, config, threshold)


def _label_matrix(dataset: Dataset, labels: Sequence[str]) -> np.ndarray:
    index = {c: j for j, c in enumerate(labels)}
    Y = np.zeros((len(dataset), len(labels)))
    for i, e in enumerate(dataset.experiences):
        for c in e.annotations:
            Y[i, index[c]] = 1.0
    return Y


def predict(model: MultiOutputModel, text: str) -> Prediction:
    """Score one essay against every credential; award at score >= threshold."""
    vec = transform(model.vector_model, model.vector_model.tokenize(text))
    z = model.bias.copy()
    if vec:
        cols = np.fromiter(vec.keys(), dtype=np.int64, count=len(vec))
        vals = np.fromiter(vec.values(), dtype=np.float64, count=len(vec))
        z = z + vals @ model.weights[cols, :]
    scores = _link(model.kind, z)
    awarded = frozenset(
        c for c, s in zip(model.labels, scores) if s >= model.threshold
    )
    return Prediction(codes=awarded, scores={c: float(s) for c, s in zip(model.labels, scores)})


def predict_batch(
    model: MultiOutputModel, texts: Sequence[str]
) -> tuple[list[frozenset[str]], np.ndarray]:
    """Vectorised prediction; returns awarded sets and the (n, L) score matrix."""
    docs = [model.vector_model.tokenize(t) for t in texts]
    X = transform_many(model.vector_model, docs)
    Z = kernels.matmul(X, model.weights) + model.bias
    scores = _link(model.kind, Z)
    hits = scores >= model.threshold
    awarded = [
        frozenset(model.labels[j] for j in np.flatnonzero(hits[i]))
        for i in range(len(texts))
    ]
    return awarded, scores


def save_model(model: MultiOutputModel, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model.to_dict(), sort_keys=True), encoding="utf-8")


def load_model(path: str | Path, stopwords: frozenset[str] | None = None) -> MultiOutputModel:
    return MultiOutputModel.from_dict(
        json.loads(Path(path).read_text(encoding="utf-8")), stopwords=stopwords
    )


# ---------------------------------------------------------------------------
# Cross-validation


@dataclass(frozen=True)
class CvReport:
    kind: str
    k: int
    seed: int
    labels: tuple[str, ...]
    accuracy_mean: np.ndarray  # (L,) mean per-label accuracy over folds
    accuracy_sd: np.ndarray    # (L,)
    f1: np.ndarray             # (L,) pooled over folds; 1.0 when vacuously undefined
    fold_macro_accuracy: np.ndarray  # (k,)
    mean_predict_seconds: float

    @property
    def macro_accuracy(self) -> float:
        return float(np.mean(self.fold_macro_accuracy))

    @property
    def macro_accuracy_sd(self) -> float:
        return float(np.std(self.fold_macro_accuracy))

    @property
    def macro_f1(self) -> float:
        return float(np.mean(self.f1))

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": 1,
            "kind": self.kind,
            "model_name": DISPLAY_NAMES[self.kind],
            "k": self.k,
            "seed": self.seed,
            "macro_accuracy": self.macro_accuracy,
            "macro_accuracy_sd": self.macro_accuracy_sd,
            "macro_f1": self.macro_f1,
            "mean_predict_seconds": self.mean_predict_seconds,
            "per_label": {
                c: {
                    "accuracy_mean": float(self.accuracy_mean[j]),
                    "accuracy_sd": float(self.accuracy_sd[j]),
                    "f1": float(self.f1[j]),
                }
                for j, c in enumerate(self.labels)
            },
        }


def fold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Seeded partition of range(n) into k near-equal validation folds."""
    if k < 2:
        raise ValidationError("k must be >= 2")
    if k > n:
        raise ValidationError(f"k={k} exceeds dataset size {n}")
    rng = np.random.default_rng(seed)
    return [np.sort(chunk) for chunk in np.array_split(rng.permutation(n), k)]


def cross_validate(
    dataset: Dataset,
    config: LearnerConfig,
    k: int = 10,
    max_features: int = 5000,
    stopwords: frozenset[str] | None = None,
) -> CvReport:
    """k-fold CV by experience; the vector model is refitted inside each fold
    so no validation text influences vocabulary or idf weights.

    Per-label accuracy is averaged label-wise (macro); per-label F1 is pooled
    over folds and reported alongside because class imbalance inflates the
    accuracy figure.
    """
    if stopwords is None:
        stopwords = default_stopwords()
    n = len(dataset)
    folds = fold_indices(n, k, config.seed)
    labels = dataset.taxonomy.ids(3)
    n_labels = len(labels)
    docs = [tokenize(e.text, stopwords) for e in dataset.experiences]
    texts = [e.text for e in dataset.experiences]
    Y = _label_matrix(dataset, labels)

    acc = np.zeros((n_labels, k))
    tp = np.zeros(n_labels)
    fp = np.zeros(n_labels)
    fn = np.zeros(n_labels)
    predict_seconds = 0.0
    n_predicted = 0

    for f, val_idx in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(n), val_idx)
        vm = fit_vector_model([docs[i] for i in train_idx], max_features=max_features, stopwords=stopwords)
        X_train = transform_many(vm, [docs[i] for i in train_idx])
        Y_train = Y[train_idx]
        if config.kind == "nbayes":
            W, b, log_prior, log_like = _train_nbayes(X_train, Y_train, config)
            model = MultiOutputModel(vm, labels, config.kind, W, b, config,
                                     nb_log_prior=log_prior, nb_log_like=log_like)
        else:
            W, b = _train_descent(X_train, Y_train, config)
            model = MultiOutputModel(vm, labels, config.kind, W, b, config)

        pred = np.zeros((len(val_idx), n_labels))
        t0 = time.perf_counter()
        for row, i in enumerate(val_idx):
            p = predict(model, texts[i])
            for j, c in enumerate(labels):
                if c in p.codes:
                    pred[row, j] = 1.0
        predict_seconds += time.perf_counter() - t0
        n_predicted += len(val_idx)

        truth = Y[val_idx]
        acc[:, f] = (pred == truth).mean(axis=0)
        tp += ((pred == 1) & (truth == 1)).sum(axis=0)
        fp += ((pred == 1) & (truth == 0)).sum(axis=0)
        fn += ((pred == 0) & (truth == 1)).sum(axis=0)

    denom = 2 * tp + fp + fn
    f1 = np.where(denom > 0, 2 * tp / np.where(denom > 0, denom, 1.0), 1.0)
    return CvReport(
        kind=config.kind,
        k=k,
        seed=config.seed,
        labels=labels,
        accuracy_mean=acc.mean(axis=1),
        accuracy_sd=acc.std(axis=1),
        f1=f1,
        fold_macro_accuracy=acc.mean(axis=0),
        mean_predict_seconds=predict_seconds / max(n_predicted, 1),
    )


def compare_learners(
    dataset: Dataset,
    configs: Iterable[LearnerConfig],
    k: int = 10,
    max_features: int = 5000,
) -> list[CvReport]:
    configs = list(configs)
    if not configs:
        raise ValidationError("compare_learners needs at least one config")
    return [cross_validate(dataset, c, k=k, max_features=max_features) for c in configs]


def render_comparison(reports: Sequence[CvReport]) -> str:
    """Three-column comparison table: model, accuracy, per-essay prediction time."""
    rows = [("Model name", "Average accuracy", "Average prediction time per essay (s)")]
    for r in reports:
        rows.append(
            (
                DISPLAY_NAMES[r.kind],
                f"{r.macro_accuracy:.4f} ± {r.macro_accuracy_sd:.4f}",
                f"{r.mean_predict_seconds:.6f}",
            )
        )
    widths = [max(len(row[c]) for row in rows) for c in range(3)]
    lines = ["  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)).rstrip() for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def comparison_csv(reports: Sequence[CvReport]) -> str:
    lines = ["model,average_accuracy,accuracy_sd,mean_prediction_seconds"]
    for r in reports:
        lines.append(
            f"{DISPLAY_NAMES[r.kind]},{r.macro_accuracy:.6f},{r.macro_accuracy_sd:.6f},{r.mean_predict_seconds:.6f}"
        )
    return "\n".join(lines) + "\n"


def tune_l2(
    dataset: Dataset,
    base: LearnerConfig,
    grid: Sequence[float] = (0.1, 1.0, 10.0),
    k: int = 10,
    max_features: int = 5000,
) -> tuple[LearnerConfig, dict[float, float]]:
    """Pick the l2 penalty with the best CV macro accuracy (ties: smaller)."""
    scores: dict[float, float] = {}
    for penalty in grid:
        cfg = replace(base, l2_penalty=penalty)
        scores[penalty] = cross_validate(dataset, cfg, k=k, max_features=max_features).macro_accuracy
    best = max(sorted(scores), key=lambda p: scores[p])
    return replace(base, l2_penalty=best), scores
