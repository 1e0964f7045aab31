"""Command-line front door for the whole pipeline.

Subcommands mirror the stages: ``ingest`` builds a corpus from structured
CVs and commission exports; ``resolve``, ``expand``, ``neighbors`` run the
harvest against replayed fixtures (or live sources with ``--live``);
``sections``, ``coverage``, ``metrics`` derive the analysis tables;
``sweep`` and ``usage`` run the exhaustive classification experiment;
``export-graph`` and ``export-tree`` emit plot-ready graph and tree
structures;
``validate`` checks corpus invariants.

Every command writes its artifacts under ``--out`` together with a
``manifest.json`` recording the invocation, the configuration, and a
SHA-256 per artifact.  Exit codes: 0 success, 1 unexpected error, 2 usage,
3 bad or missing input, 4 source/fixture failure, 5 validation violations.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

from . import __version__
from .graphs import (
    FEATURE_ORDER,
    METRICS_CSV_HEADER,
    build_graph,
    export_graph,
    metrics_rows,
)
from .harvest import (
    COVERAGE_CSV_HEADER,
    COVERAGE_SUMMARY_HEADER,
    SECTIONS_HEADER,
    Harvester,
    HarvestLog,
    IngestError,
    assign_all_sections,
    coverage_rows,
    coverage_summary_rows,
    ingest_commission,
    ingest_cv,
    section_rows,
)
from .matching import load_stopwords
from .model import (
    Corpus,
    CorpusError,
    load_corpus,
    save_corpus,
    validate_corpus,
)
from .sources import (
    ClientConfig,
    FixtureMissingError,
    MalformedPayloadError,
    SourceClient,
    SourceError,
)
from .sweep import (
    ClassifierConfig,
    FeatureMask,
    SweepGrid,
    SweepJournal,
    SweepTask,
    feature_usage,
    load_metrics_csv,
    load_sweep_csv,
    oversample,
    run_sweep,
    split_by_term,
    task_seed,
    write_sweep_csv,
    write_usage_csv,
)
from .tree import export_tree, train_decision_tree

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INPUT = 3
EXIT_SOURCE = 4
EXIT_VIOLATIONS = 5


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def write_manifest(out_dir: Path, argv: list[str], config: dict) -> None:
    artifacts = {}
    for path in sorted(out_dir.rglob("*")):
        if path.is_file() and path.name != "manifest.json":
            artifacts[str(path.relative_to(out_dir))] = _sha256(path)
    manifest = {
        "tool": f"citeweave {__version__}",
        "command": argv,
        "config": config,
        "artifacts": artifacts,
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _client(args) -> SourceClient:
    if args.config:
        config = ClientConfig.from_ini(args.config)
    else:
        config = ClientConfig(
            mode="live" if args.live else "replay",
            fixtures_dir=Path(args.fixtures) if args.fixtures else None,
            cache_dir=Path(args.cache) if args.cache else None,
        )
    return SourceClient(config)


def _stopwords(args) -> set[str]:
    return load_stopwords(args.stopwords) if args.stopwords else load_stopwords()


def _save_stage(corpus: Corpus, log: HarvestLog, out: Path) -> None:
    save_corpus(corpus, out)
    log.save(out)


# -- commands ---------------------------------------------------------------


def cmd_ingest(args, argv) -> int:
    out = _out_dir(args)
    corpus = Corpus()
    cv_files = sorted(Path(args.cv_dir).glob("*.json"))
    if not cv_files:
        raise IngestError(f"no CV documents under {args.cv_dir}")
    for path in cv_files:
        ingest_cv(path, corpus)
    commission_files = sorted(Path(args.commissions_dir).glob("*.csv"))
    if not commission_files:
        raise IngestError(f"no commission files under {args.commissions_dir}")
    for path in commission_files:
        ingest_commission(path, corpus)
    violations = validate_corpus(corpus)
    if violations:
        for violation in violations:
            print(violation, file=sys.stderr)
        return EXIT_VIOLATIONS
    _save_stage(corpus, HarvestLog(), out)
    write_manifest(out, argv, {"cv_dir": args.cv_dir, "commissions_dir": args.commissions_dir})
    print(f"ingested {len(corpus.applications)} applications, "
          f"{len(corpus.commissions)} commissions, {len(corpus.publications)} records")
    return EXIT_OK


def cmd_resolve(args, argv) -> int:
    out = _out_dir(args)
    corpus = load_corpus(args.corpus)
    log = HarvestLog.load(args.corpus)
    harvester = Harvester(corpus, _client(args), log, stopwords=_stopwords(args))
    for app in corpus.applications:
        harvester.resolve_application(app)
    for commission in corpus.commissions:
        harvester.resolve_commission(commission)
    _save_stage(corpus, log, out)
    write_manifest(out, argv, {"fixtures": args.fixtures, "live": args.live})
    found = sum(len(entry.found_any()) for entry in log.apps.values())
    print(f"resolved {found} CV publications across {len(corpus.applications)} applications")
    return EXIT_OK


def cmd_expand(args, argv) -> int:
    out = _out_dir(args)
    corpus = load_corpus(args.corpus)
    log = HarvestLog.load(args.corpus)
    harvester = Harvester(corpus, _client(args), log, stopwords=_stopwords(args))
    total = 0
    for app in corpus.applications:
        total += len(harvester.expand_application(app))
    _save_stage(corpus, log, out)
    write_manifest(out, argv, {"fixtures": args.fixtures, "live": args.live})
    print(f"author expansion added {total} extra records")
    return EXIT_OK


def cmd_neighbors(args, argv) -> int:
    out = _out_dir(args)
    corpus = load_corpus(args.corpus)
    log = HarvestLog.load(args.corpus)
    harvester = Harvester(corpus, _client(args), log, stopwords=_stopwords(args))
    targets: list[str] = []
    for app in corpus.applications:
        entry = log.app(app.app_id)
        targets += [lid for lid in app.cv_publications if lid in entry.found_any()]
        targets += sorted(entry.extras)
    for commission in corpus.commissions:
        targets += [
            lid
            for lid in commission.publications
            if "unresolved" not in corpus.publications[lid].flags
        ]
    pairs = harvester.fetch_neighbors(targets)
    _save_stage(corpus, log, out)
    write_manifest(out, argv, {"fixtures": args.fixtures, "live": args.live})
    print(f"collected {len(set(pairs))} citation pairs; corpus has {len(corpus.publications)} records")
    return EXIT_OK


def cmd_sections(args, argv) -> int:
    out = _out_dir(args)
    corpus = load_corpus(args.corpus)
    log = HarvestLog.load(args.corpus)
    ratio = Fraction(str(args.section_ratio))
    assign_all_sections(corpus, ratio)
    _save_stage(corpus, log, out)
    _write_csv(out / "sections.csv", SECTIONS_HEADER, section_rows(corpus))
    write_manifest(out, argv, {"section_ratio": str(ratio)})
    tally = {}
    for app in corpus.applications:
        tally[app.coverage_section.value] = tally.get(app.coverage_section.value, 0) + 1
    print("sections: " + json.dumps(tally, sort_keys=True))
    return EXIT_OK


def cmd_coverage(args, argv) -> int:
    out = _out_dir(args)
    corpus = load_corpus(args.corpus)
    log = HarvestLog.load(args.corpus)
    modes = ("strict", "selection") if args.mode == "both" else (args.mode,)
    _write_csv(out / "coverage.csv", COVERAGE_CSV_HEADER, coverage_rows(corpus, log, modes))
    summary = [
        row for row in coverage_summary_rows(corpus, log) if row[3] in modes
    ]
    _write_csv(out / "coverage_summary.csv", COVERAGE_SUMMARY_HEADER, summary)
    write_manifest(out, argv, {"mode": args.mode})
    print(f"coverage tables written for modes: {', '.join(modes)}")
    return EXIT_OK


def cmd_metrics(args, argv) -> int:
    out = _out_dir(args)
    corpus = load_corpus(args.corpus)
    rows = metrics_rows(corpus)
    _write_csv(out / "metrics.csv", METRICS_CSV_HEADER, rows)
    write_manifest(out, argv, {"corpus": args.corpus})
    print(f"metrics.csv written with {len(rows)} rows")
    return EXIT_OK


def cmd_sweep(args, argv) -> int:
    out = _out_dir(args)
    rows = load_metrics_csv(args.metrics)
    fields = tuple(sorted({row.field for row in rows}))
    roles = tuple(sorted({row.role for row in rows}))
    coverages = ("A", "AB", "ABC") if args.coverage == "all" else (args.coverage,)
    grid = SweepGrid(
        fields=fields,
        roles=roles,
        coverages=coverages,
        mask_bits=tuple(range(1, 1 << args.features)),
        n_features=args.features,
    )
    journal = SweepJournal(Path(args.journal)) if args.journal else None
    outcome = run_sweep(
        rows, grid, seed=args.seed, f1_threshold=args.f1_threshold,
        jobs=args.jobs, journal=journal,
    )
    write_sweep_csv(outcome.results, out / "sweep_results.csv")
    _write_csv(
        out / "skipped_cells.csv",
        ["field", "role", "coverage", "reason"],
        [[s.field, s.role, s.coverage, s.reason] for s in outcome.skipped],
    )
    write_manifest(out, argv, {
        "metrics": args.metrics, "seed": args.seed, "jobs": args.jobs,
        "coverage": args.coverage, "features": args.features,
        "f1_threshold": args.f1_threshold,
    })
    good = sum(1 for r in outcome.results if r.scores.weighted_f1 >= args.f1_threshold)
    print(f"sweep: {len(outcome.results)} classifiers, {good} with weighted F1 >= "
          f"{args.f1_threshold}, {len(outcome.skipped)} skipped cells")
    return EXIT_OK


def cmd_usage(args, argv) -> int:
    out = _out_dir(args)
    results = load_sweep_csv(args.results)
    usage = feature_usage(results, f1_threshold=args.f1_threshold)
    write_usage_csv(usage, out / "feature_usage.csv")
    write_manifest(out, argv, {"results": args.results, "f1_threshold": args.f1_threshold})
    print(f"feature_usage.csv written for {len(usage)} (field, role) cells")
    return EXIT_OK


def cmd_export_graph(args, argv) -> int:
    out = _out_dir(args)
    corpus = load_corpus(args.corpus)
    app = corpus.application(args.app)
    commission = corpus.commission_for(app.field, app.term)
    if commission is None:
        raise IngestError(f"no commission for ({app.field}, term {app.term})")
    graph = build_graph(app, commission, corpus)
    text = export_graph(graph, args.format)
    name = f"{args.app.replace('/', '-')}.{args.format}"
    (out / name).write_text(text, encoding="utf-8")
    write_manifest(out, argv, {"corpus": args.corpus, "app": args.app, "format": args.format})
    print(f"graph exported to {name} ({len(graph.nodes)} nodes, {len(graph.edges)} edges)")
    return EXIT_OK


def cmd_export_tree(args, argv) -> int:
    out = _out_dir(args)
    rows = load_metrics_csv(args.metrics)
    mask = FeatureMask.from_bitstring(args.mask)
    cells, _ = split_by_term(rows)
    cell = cells.get((args.field, args.role))
    if cell is None:
        raise IngestError(f"no usable ({args.field}, {args.role}) split in {args.metrics}")
    sections = {"A": {"A"}, "AB": {"A", "B"}, "ABC": {"A", "B", "C"}}[args.coverage]
    train = [r for r in cell[0] if r.coverage_section in sections]
    test = [r for r in cell[1] if r.coverage_section in sections]
    if not train or not test:
        raise IngestError("empty train or test side after coverage filtering")
    import numpy as np

    task = SweepTask(args.field, args.role, args.coverage, mask, ClassifierConfig("decision_tree"))
    X_train = np.asarray([r.features for r in train], dtype=float)
    y_train = [r.outcome for r in train]
    X_train, y_train = oversample(X_train, y_train, task_seed(args.seed, task))
    cols = list(mask.indices())
    names = tuple(FEATURE_ORDER[i] for i in cols)
    model = train_decision_tree(X_train[:, cols], y_train)
    X_test = np.asarray([r.features for r in test], dtype=float)[:, cols]
    y_test = [r.outcome for r in test]
    doc = export_tree(model, X_test, y_test, feature_names=names)
    trees_dir = out / "trees"
    trees_dir.mkdir(exist_ok=True)
    name = f"{args.field.replace('/', '-')}_{args.role}_{args.coverage}_{args.mask}.json"
    (trees_dir / name).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_manifest(out, argv, {
        "metrics": args.metrics, "field": args.field, "role": args.role,
        "coverage": args.coverage, "mask": args.mask, "seed": args.seed,
    })
    print(f"tree exported to trees/{name}")
    return EXIT_OK


def cmd_validate(args, argv) -> int:
    corpus = load_corpus(args.corpus)
    violations = validate_corpus(corpus)
    for violation in violations:
        print(violation)
    print(f"{len(violations)} violations")
    return EXIT_VIOLATIONS if violations else EXIT_OK


def _add_source_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--fixtures", help="fixture directory for replay mode")
    parser.add_argument("--cache", help="cache directory for live mode")
    parser.add_argument("--live", action="store_true", help="query live sources instead of replaying")
    parser.add_argument("--config", help="INI file with per-source settings")
    parser.add_argument("--stopwords", help="override the bundled stopword list")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="citeweave",
        description="citation-network harvesting, overlap metrics, and feature-subset sweeps",
    )
    parser.add_argument("--version", action="version", version=f"citeweave {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build a corpus from CV and commission files")
    p.add_argument("--cv-dir", required=True)
    p.add_argument("--commissions-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("resolve", help="match CV and commission records against the sources")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    _add_source_flags(p)
    p.set_defaults(func=cmd_resolve)

    p = sub.add_parser("expand", help="pull the candidates' author-id publication lists")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    _add_source_flags(p)
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("neighbors", help="fetch citing/cited neighbor records and pairs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    _add_source_flags(p)
    p.set_defaults(func=cmd_neighbors)

    p = sub.add_parser("sections", help="assign coverage sections A/B/C")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--section-ratio", type=float, default=0.7)
    p.set_defaults(func=cmd_sections)

    p = sub.add_parser("coverage", help="emit per-dataset coverage tables")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["strict", "selection", "both"], default="both")
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("metrics", help="build graphs and write metrics.csv")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("sweep", help="run the exhaustive classifier sweep")
    p.add_argument("--metrics", required=True, help="path to metrics.csv")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--coverage", choices=["A", "AB", "ABC", "all"], default="all")
    p.add_argument("--features", type=int, default=14,
                   help="enumerate masks over the first N features")
    p.add_argument("--f1-threshold", type=float, default=0.700)
    p.add_argument("--journal", help="JSONL journal for resumable sweeps")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("usage", help="rank feature usage among good classifiers")
    p.add_argument("--results", required=True, help="path to sweep_results.csv")
    p.add_argument("--out", required=True)
    p.add_argument("--f1-threshold", type=float, default=0.700)
    p.set_defaults(func=cmd_usage)

    p = sub.add_parser("export-graph", help="export one application's citation graph")
    p.add_argument("--corpus", required=True)
    p.add_argument("--app", required=True)
    p.add_argument("--format", choices=["dot", "graphml"], default="dot")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_graph)

    p = sub.add_parser("export-tree", help="train and export one decision tree")
    p.add_argument("--metrics", required=True)
    p.add_argument("--field", required=True)
    p.add_argument("--role", required=True)
    p.add_argument("--coverage", choices=["A", "AB", "ABC"], required=True)
    p.add_argument("--mask", required=True, help="bitstring in the fixed feature order")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_tree)

    p = sub.add_parser("validate", help="check corpus invariants")
    p.add_argument("--corpus", required=True)
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args, argv)
    except (IngestError, CorpusError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FixtureMissingError, MalformedPayloadError, SourceError) as exc:
        print(f"source error: {exc}", file=sys.stderr)
        return EXIT_SOURCE
    except Exception as exc:  # pragma: no cover - safety net
        logger.exception("unexpected failure")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
