"""Command-line entry point for the full pipeline.

Global flags live after the subcommand, e.g.::

    credloop synth spec.json --state ./state
    credloop iterate --state ./state
    credloop review export - --state ./state

Exit codes: 0 success, 1 validation or usage error, 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

from . import kernels
from .classify import (
    LEARNER_KINDS,
    LearnerConfig,
    MultiOutputModel,
    compare_learners,
    comparison_csv,
    cross_validate,
    load_model,
    predict,
    render_comparison,
    save_model,
    train_model,
)
from .corpus import Dataset, ValidationError, dataset_hash, ingest, read_taxonomy
from .fairness import (
    CspReport,
    annotation_outcomes,
    compute_csp,
    flag as compute_flags,
    flag_rate,
    render_csp,
    render_flags,
)
from .loop import (
    PipelineSettings,
    PipelineState,
    RevisionSubmission,
    audit_credential,
    import_revisions,
    init_state,
    render_audit,
    run_iteration,
)
from .synth import bias_scenario_spec, load_spec, production_scale_spec, synth_corpus

DEFAULT_SEED = 20260814

_PRESETS = {
    "production": production_scale_spec,
    "bias": bias_scenario_spec,
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # Bad flags are a caller mistake, not an internal failure: exit 1, not 2.
    def error(self, message: str) -> None:  # type: ignore[override]
        raise _UsageError(message)


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--state",
        default=os.environ.get("CREDLOOP_STATE", "./state"),
        help="pipeline state directory (env CREDLOOP_STATE, default ./state)",
    )
    parser.add_argument(
        "--format",
        choices=("text", "structured"),
        default="text",
        help="text for humans, structured for machine-parseable JSON",
    )
    parser.add_argument("--seed", type=int, default=None, help="override the run seed")


def _learner_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--learner", choices=LEARNER_KINDS, default=None, help="learner kind")
    parser.add_argument("--features", type=int, default=None, help="vocabulary size cap")
    parser.add_argument("--l2", type=float, default=None, help="l2 penalty")
    parser.add_argument("--learning-rate", type=float, default=None, help="initial step size")
    parser.add_argument("--epochs", type=int, default=None, help="max training epochs")


def build_parser() -> _Parser:
    parser = _Parser(prog="credloop", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="<command>", parser_class=_Parser)

    p = sub.add_parser("ingest", help="validate a corpus file and initialise state")
    p.add_argument("file", help="corpus file (jsonl or csv)")
    p.add_argument("--corpus-format", choices=("jsonl", "csv"), default="jsonl", help="input format")
    p.add_argument("--taxonomy", default=None, help="taxonomy JSON (default: built-in reference)")
    _common(p)

    p = sub.add_parser("synth", help="generate a synthetic corpus and initialise state")
    p.add_argument("specfile", nargs="?", default=None, help="generator spec JSON")
    p.add_argument(
        "--preset",
        choices=sorted(_PRESETS),
        default=None,
        help="built-in spec: production (full-scale corpus) or bias (withheld-label scenario)",
    )
    p.add_argument("--out", default=None, help="write the corpus to this JSONL file instead of state")
    _common(p)

    p = sub.add_parser("train", help="train a model on the state corpus")
    _learner_flags(p)
    p.add_argument("--out", default=None, help="model output path (default <state>/models/manual.json)")
    _common(p)

    p = sub.add_parser("cv", help="cross-validate on the state corpus")
    p.add_argument("--k", type=int, default=10, help="number of folds")
    p.add_argument("--compare", action="store_true", help="compare all three learners in one table")
    _learner_flags(p)
    p.add_argument("--csv", action="store_true", help="emit the comparison as CSV")
    _common(p)

    p = sub.add_parser("csp", help="conditional statistical parity report")
    p.add_argument("--level", type=int, choices=(1, 2, 3), default=2, help="taxonomy level to audit")
    p.add_argument("--attribute", default="race", help="demographic attribute to group by")
    p.add_argument("--min-submissions", type=int, default=5, help="experiences a user needs to be eligible")
    p.add_argument(
        "--source",
        choices=("predictions", "annotations"),
        default="predictions",
        help="audit model outputs or human labels",
    )
    p.add_argument("--model", default=None, help="model file (default: latest iteration, then manual)")
    _common(p)

    p = sub.add_parser("flag", help="flag credentials with group rate gaps")
    p.add_argument("--threshold", type=float, default=0.05, help="minimum gap that raises a flag")
    p.add_argument("--csp", default=None, help="flag a structured CSP report file instead of computing one")
    p.add_argument("--include-undisclosed", action="store_true", help="pair the undisclosed group too")
    p.add_argument("--level", type=int, choices=(1, 2, 3), default=2, help="taxonomy level to audit")
    p.add_argument("--attribute", default="race", help="demographic attribute to group by")
    p.add_argument("--min-submissions", type=int, default=5, help="experiences a user needs to be eligible")
    p.add_argument(
        "--source",
        choices=("predictions", "annotations"),
        default="predictions",
        help="audit model outputs or human labels",
    )
    p.add_argument("--model", default=None, help="model file (default: latest iteration, then manual)")
    _common(p)

    p = sub.add_parser("iterate", help="run one full train/audit/flag iteration")
    _learner_flags(p)
    p.add_argument("--flag-threshold", type=float, default=None, help="gap that raises a flag")
    p.add_argument("--cv", action="store_true", help="also cross-validate and record the report")
    _common(p)

    p = sub.add_parser("review", help="move review bundles and revisions")
    rsub = p.add_subparsers(dest="review_command", metavar="<export|import>", parser_class=_Parser)
    pe = rsub.add_parser("export", help="write the current iteration's review bundle")
    pe.add_argument("file", help="output path, or - for stdout")
    _common(pe)
    pi = rsub.add_parser("import", help="apply a revision submission file")
    pi.add_argument("file", help="submission JSON, or - for stdin")
    _common(pi)

    p = sub.add_parser("audit", help="iteration history, per credential if asked")
    p.add_argument("--credential", default=None, help="credential id to trace")
    _common(p)

    p = sub.add_parser("predict", help="score essays from a file, one per line")
    p.add_argument("textfile", help="input file, one essay per line")
    p.add_argument("--model", default=None, help="model file (default: latest iteration, then manual)")
    _common(p)

    p = sub.add_parser("serve", help="run the HTTP review service")
    p.add_argument("--host", default="127.0.0.1", help="bind address")
    p.add_argument("--port", type=int, default=8000, help="bind port")
    _common(p)

    return parser


def _emit(args: argparse.Namespace, doc: Any, text: str) -> None:
    if args.format == "structured":
        print(json.dumps(doc, sort_keys=True, indent=2))
    else:
        print(text)


def _config_from(args: argparse.Namespace, base: LearnerConfig | None = None) -> LearnerConfig:
    cfg = base or LearnerConfig()
    updates: dict[str, Any] = {}
    if getattr(args, "learner", None):
        updates["kind"] = args.learner
    if getattr(args, "l2", None) is not None:
        updates["l2_penalty"] = args.l2
    if getattr(args, "learning_rate", None) is not None:
        updates["learning_rate"] = args.learning_rate
    if getattr(args, "epochs", None) is not None:
        updates["max_epochs"] = args.epochs
    if args.seed is not None:
        updates["seed"] = args.seed
    return replace(cfg, **updates) if updates else cfg


def _resolve_model(state: PipelineState, path: str | None) -> MultiOutputModel:
    if path is not None:
        return load_model(path)
    if state.exists() and state.current_iteration() >= 1:
        return state.model()
    manual = state.root / "models" / "manual.json"
    if manual.exists():
        return load_model(manual)
    raise ValidationError("no trained model found; run `train` or `iterate` first")


def _predictions(state: PipelineState, dataset: Dataset, model_path: str | None) -> dict[str, frozenset[str]]:
    from .classify import predict_batch

    model = _resolve_model(state, model_path)
    awarded, _ = predict_batch(model, [e.text for e in dataset.experiences])
    return {e.id: awarded[i] for i, e in enumerate(dataset.experiences)}


def _cmd_ingest(args: argparse.Namespace) -> int:
    taxonomy = read_taxonomy(args.taxonomy) if args.taxonomy else None
    dataset = ingest(args.file, fmt=args.corpus_format, taxonomy=taxonomy)
    state = init_state(args.state, dataset)
    users = len({e.user_id for e in dataset.experiences})
    doc = {
        "schema_version": 1,
        "state": str(state.root),
        "experiences": len(dataset),
        "users": users,
        "dataset_hash": dataset_hash(dataset),
    }
    _emit(
        args,
        doc,
        f"ingested {len(dataset)} experiences from {users} users into {state.root}\n"
        f"dataset hash: {doc['dataset_hash']}",
    )
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    if (args.specfile is None) == (args.preset is None):
        raise _UsageError("synth needs a spec file or --preset (exactly one)")
    spec = _PRESETS[args.preset]() if args.preset else load_spec(args.specfile)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    dataset = synth_corpus(spec)
    users = len({e.user_id for e in dataset.experiences})
    if args.out:
        from .corpus import write_corpus, write_taxonomy

        write_corpus(dataset, args.out)
        write_taxonomy(dataset.taxonomy, Path(args.out).with_suffix(".taxonomy.json"))
        where = args.out
    else:
        init_state(args.state, dataset)
        where = args.state
    doc = {
        "schema_version": 1,
        "seed": spec.seed,
        "experiences": len(dataset),
        "users": users,
        "dataset_hash": dataset_hash(dataset),
        "out": str(where),
    }
    _emit(
        args,
        doc,
        f"seed: {spec.seed}\n"
        f"generated {len(dataset)} experiences from {users} users into {where}\n"
        f"dataset hash: {doc['dataset_hash']}",
    )
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    state = PipelineState(args.state)
    dataset = state.dataset()
    config = _config_from(args, state.config() if state.exists() else None)
    max_features = args.features if args.features is not None else 5000
    import time

    t0 = time.perf_counter()
    model = train_model(dataset, config, max_features=max_features)
    seconds = time.perf_counter() - t0
    out = Path(args.out) if args.out else state.root / "models" / "manual.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out)
    doc = {
        "schema_version": 1,
        "seed": config.seed,
        "kind": config.kind,
        "vocabulary": len(model.vector_model),
        "labels": len(model.labels),
        "backend": kernels.backend_name(),
        "train_seconds": seconds,
        "model": str(out),
    }
    _emit(
        args,
        doc,
        f"seed: {config.seed}\n"
        f"trained {config.kind} on {len(dataset)} experiences "
        f"({len(model.labels)} labels, {len(model.vector_model)} features, "
        f"{kernels.backend_name()} backend) in {seconds:.2f}s\n"
        f"model: {out}",
    )
    return 0


def _cmd_cv(args: argparse.Namespace) -> int:
    state = PipelineState(args.state)
    dataset = state.dataset()
    base = state.config() if state.exists() else LearnerConfig()
    config = _config_from(args, base)
    max_features = args.features if args.features is not None else 5000
    if args.compare:
        configs = [replace(config, kind=k) for k in ("logistic", "svm", "nbayes")]
        reports = compare_learners(dataset, configs, k=args.k, max_features=max_features)
    else:
        reports = [cross_validate(dataset, config, k=args.k, max_features=max_features)]
    if args.csv:
        print(comparison_csv(reports), end="")
        return 0
    doc = [r.to_dict() for r in reports]
    _emit(args, doc, f"seed: {config.seed}\n" + render_comparison(reports))
    return 0


def _cmd_csp(args: argparse.Namespace) -> int:
    state = PipelineState(args.state)
    dataset = state.dataset()
    if args.source == "annotations":
        outcomes = annotation_outcomes(dataset)
    else:
        outcomes = _predictions(state, dataset, args.model)
    report = compute_csp(
        dataset,
        outcomes,
        args.attribute,
        level=args.level,
        min_submissions=args.min_submissions,
        source=args.source,
    )
    _emit(args, report.to_dict(), render_csp(report, dataset.taxonomy))
    return 0


def _cmd_flag(args: argparse.Namespace) -> int:
    state = PipelineState(args.state)
    taxonomy = None
    if args.csp:
        report = CspReport.from_dict(json.loads(Path(args.csp).read_text(encoding="utf-8")))
    else:
        dataset = state.dataset()
        taxonomy = dataset.taxonomy
        if args.source == "annotations":
            outcomes = annotation_outcomes(dataset)
        else:
            outcomes = _predictions(state, dataset, args.model)
        report = compute_csp(
            dataset,
            outcomes,
            args.attribute,
            level=args.level,
            min_submissions=args.min_submissions,
            source=args.source,
        )
    flags = compute_flags(
        report, threshold=args.threshold, include_undisclosed=args.include_undisclosed
    )
    text = render_flags(flags, taxonomy)
    if taxonomy is not None:
        summary = flag_rate(flags, taxonomy)
        text += (
            f"\nflag rate: {summary.flagged}/{summary.total} = {summary.rate:.4f}"
        )
    _emit(args, flags.to_dict(), text)
    return 0


def _cmd_iterate(args: argparse.Namespace) -> int:
    state = PipelineState(args.state)
    config = _config_from(args, state.config())
    settings = state.settings()
    updates: dict[str, Any] = {}
    if args.flag_threshold is not None:
        updates["threshold"] = args.flag_threshold
    if args.features is not None:
        updates["max_features"] = args.features
    if args.cv:
        updates["run_cv"] = True
    if updates:
        settings = replace(settings, **updates)
    record = run_iteration(state, config=config, settings=settings)
    flags = record.flags
    lines = [
        f"seed: {config.seed}",
        f"iteration {record.iteration} sealed ({record.backend} backend)",
        f"dataset hash: {record.dataset_hash}",
        f"record hash: {record.record_hash}",
        f"flags: {len(flags.flags)}",
    ]
    for f in flags.flags:
        lines.append(
            f"  {f.credential}: {f.group_low} {f.rate_low:.4f} vs "
            f"{f.group_high} {f.rate_high:.4f} (gap {f.gap:.4f})"
        )
    for fu in record.followups:
        after = "-" if fu.gap_after is None else f"{fu.gap_after:.4f}"
        lines.append(
            f"  followup {fu.credential} [{fu.group_low} vs {fu.group_high}]: "
            f"{fu.gap_before:.4f} -> {after} ({fu.status})"
        )
    _emit(args, record.to_dict(), "\n".join(lines))
    return 0


def _cmd_review(args: argparse.Namespace) -> int:
    if args.review_command == "export":
        state = PipelineState(args.state)
        bundle = state.bundle()
        blob = json.dumps(bundle.to_dict(), sort_keys=True, indent=2)
        if args.file == "-":
            print(blob)
        else:
            Path(args.file).write_text(blob + "\n", encoding="utf-8")
            print(f"wrote review bundle for iteration {bundle.iteration} to {args.file}")
        return 0
    if args.review_command == "import":
        state = PipelineState(args.state)
        raw = sys.stdin.read() if args.file == "-" else Path(args.file).read_text(encoding="utf-8")
        submission = RevisionSubmission.from_dict(json.loads(raw))
        result = import_revisions(state, submission)
        _emit(
            args,
            result.to_dict(),
            f"applied {result.applied} revisions at iteration {result.iteration}\n"
            f"dataset hash: {result.dataset_hash}",
        )
        return 0
    raise _UsageError("review needs a subcommand: export or import")


def _cmd_audit(args: argparse.Namespace) -> int:
    state = PipelineState(args.state)
    if args.credential:
        doc = audit_credential(state, args.credential)
        _emit(args, doc, render_audit(doc))
        return 0
    records = state.records()
    if not records:
        raise ValidationError("no sealed iterations yet")
    doc = {
        "schema_version": 1,
        "current_iteration": state.current_iteration(),
        "iterations": [
            {
                "iteration": r.iteration,
                "dataset_hash": r.dataset_hash,
                "record_hash": r.record_hash,
                "flags": len(r.flags.flags),
                "created_at": r.created_at,
            }
            for r in records
        ],
    }
    lines = [f"iterations: {state.current_iteration()}"]
    for it in doc["iterations"]:
        lines.append(
            f"  {it['iteration']}: flags={it['flags']} dataset={it['dataset_hash'][:12]} "
            f"record={it['record_hash'][:12]}"
        )
    _emit(args, doc, "\n".join(lines))
    return 0


def _cmd_predict(args: argparse.Namespace) -> int:
    state = PipelineState(args.state)
    lines = Path(args.textfile).read_text(encoding="utf-8").splitlines()
    essays = [line for line in lines if line.strip()]
    if not essays:
        return 0
    model = _resolve_model(state, args.model)
    docs = []
    for text in essays:
        p = predict(model, text)
        docs.append(
            {
                "codes": sorted(p.codes),
                "scores": {c: p.scores[c] for c in sorted(p.codes)},
            }
        )
    if args.format == "structured":
        print(json.dumps(docs, sort_keys=True, indent=2))
    else:
        for d in docs:
            print(" ".join(d["codes"]))
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    from .api import serve

    serve(args.state, host=args.host, port=args.port)
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "synth": _cmd_synth,
    "train": _cmd_train,
    "cv": _cmd_cv,
    "csp": _cmd_csp,
    "flag": _cmd_flag,
    "iterate": _cmd_iterate,
    "review": _cmd_review,
    "audit": _cmd_audit,
    "predict": _cmd_predict,
    "serve": _cmd_serve,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # noqa: BLE001 -- last-resort boundary
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
