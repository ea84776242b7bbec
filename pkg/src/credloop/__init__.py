"""Essay-to-credential classification with a human revision loop.

Submitted experience essays are scored against a three-level credential
taxonomy by per-credential text classifiers.  Award rates are audited per
demographic group (conditional statistical parity); credentials whose group
rates diverge are flagged and routed to human annotators, whose label
revisions feed the next training round.
"""

from .corpus import (
    Code,
    Dataset,
    Experience,
    RevisionEvent,
    Taxonomy,
    ValidationError,
    build_dataset,
    dataset_hash,
    ingest,
    reference_taxonomy,
    rollup,
)
from .classify import (
    CvReport,
    LearnerConfig,
    MultiOutputModel,
    compare_learners,
    cross_validate,
    predict,
    predict_batch,
    train_model,
)
from .fairness import (
    CspEntry,
    CspReport,
    Flag,
    FlagSet,
    compute_csp,
    csp_diff,
    flag,
    flag_rate,
)
from .loop import (
    IterationRecord,
    PipelineSettings,
    PipelineState,
    ReviewBundle,
    RevisionAction,
    RevisionSubmission,
    StaleIterationError,
    RevisionError,
    import_revisions,
    init_state,
    run_iteration,
)
from .synth import SynthSpec, bias_scenario_spec, production_scale_spec, synth_corpus
from .textvec import VectorModel, fit, tokenize, transform, transform_many

__version__ = "0.1.0"

__all__ = [
    "Code",
    "CspEntry",
    "CspReport",
    "CvReport",
    "Dataset",
    "Experience",
    "Flag",
    "FlagSet",
    "IterationRecord",
    "LearnerConfig",
    "MultiOutputModel",
    "PipelineSettings",
    "PipelineState",
    "ReviewBundle",
    "RevisionAction",
    "RevisionEvent",
    "RevisionError",
    "RevisionSubmission",
    "StaleIterationError",
    "SynthSpec",
    "Taxonomy",
    "ValidationError",
    "VectorModel",
    "bias_scenario_spec",
    "build_dataset",
    "compare_learners",
    "compute_csp",
    "cross_validate",
    "csp_diff",
    "dataset_hash",
    "fit",
    "flag",
    "flag_rate",
    "import_revisions",
    "ingest",
    "init_state",
    "predict",
    "predict_batch",
    "production_scale_spec",
    "reference_taxonomy",
    "rollup",
    "run_iteration",
    "synth_corpus",
    "tokenize",
    "train_model",
    "transform",
    "transform_many",
    "__version__",
]
