"""Command-line entry points: rerank, evaluate, and sweep.

All generator traffic flows through the response cache, so rerunning any
command against a warm cache makes zero backend calls and reproduces its
output files byte for byte. Per-query backend failures fail open (the
baseline order is kept) and are summarized on stderr rather than aborting
the batch; malformed inputs and missing corpus documents exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .backends import (
    BackendKind,
    CountingBackend,
    GeneratorBackend,
    HttpBackend,
    scripted_backend_from_json,
)
from .cache import CachingBackend, ResponseCache
from .config import (
    build_backend_descriptor,
    build_car_config,
    config_echo_lines,
    load_config_file,
)
from .datafiles import load_corpus, load_queries
from .engine import rerank_corpus
from .errors import CarError, ZeroBaselineError
from .evaluation import (
    RunFile,
    ndcg_at_k,
    parse_qrels,
    parse_run,
    relative_improvement,
    run_to_ranked_lists,
    write_run,
)
from .prompts import PromptTemplates
from .sweep import DEFAULT_GRID, SweepGrid, run_sweep
from .types import ConfidenceReport

logger = logging.getLogger(__name__)

RUN_FILE_NAME = "car.run"
REPORTS_FILE_NAME = "reports.jsonl"
STATS_FILE_NAME = "stats.json"
SWEEP_FILE_NAME = "sweep.csv"


def _add_engine_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value configuration file")
    parser.add_argument("--k", type=int, help="samples per input")
    parser.add_argument("--qt", type=float, help="query threshold")
    parser.add_argument("--cm", type=float, help="confidence margin")
    parser.add_argument("--top-n", type=int, help="rerank scope size")
    parser.add_argument("--mode", choices=["greedy", "pairwise"], help="clustering mode")
    parser.add_argument(
        "--disable-qt", action="store_true", default=None, help="correct every query"
    )
    parser.add_argument(
        "--disable-cm", action="store_true", default=None, help="treat the margin as 0"
    )
    parser.add_argument("--backend", choices=["scripted", "http"], help="backend kind")
    parser.add_argument("--script", help="scripted-backend JSON file")
    parser.add_argument("--prompts", help="prompt-templates JSON file")
    parser.add_argument("--tag", default="CAR", help="run tag for output files")


def _add_rerank_io_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--queries", required=True, help="query_id TAB text file")
    parser.add_argument("--corpus", required=True, help="doc_id TAB text file")
    parser.add_argument("--run", required=True, help="baseline run file (TREC format)")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument(
        "--cache-dir", help="response cache directory (default: <out>/cache)"
    )


def _resolved_values(args: argparse.Namespace) -> dict[str, str]:
    values = load_config_file(args.config) if args.config else {}
    overrides = {
        "k": args.k,
        "query_threshold": args.qt,
        "confidence_margin": args.cm,
        "top_n": args.top_n,
        "clustering_mode": args.mode,
        "disable_qt": args.disable_qt,
        "disable_cm": args.disable_cm,
        "backend": args.backend,
    }
    for key, value in overrides.items():
        if value is not None:
            values[key] = str(value)
    return values


def _build_backend(
    args: argparse.Namespace, values: dict[str, str], templates: PromptTemplates
) -> tuple[GeneratorBackend, CountingBackend]:
    """Assemble cache -> raw-call counter -> concrete backend.

    Returns the outermost backend for the engine plus the raw counter, which
    sees only genuine (cache-missing) generator traffic.
    """
    descriptor = build_backend_descriptor(values)
    config = build_car_config(values)
    if descriptor.backend_kind is BackendKind.SCRIPTED:
        if not args.script:
            raise CarError("the scripted backend needs --script")
        base: GeneratorBackend = scripted_backend_from_json(
            args.script, config.answer_normalization
        )
    else:
        base = HttpBackend(
            descriptor,
            templates=templates,
            normalization=config.answer_normalization,
            judge_decoding=config.decoding,
        )
    raw_counter = CountingBackend(base)
    cache_dir = args.cache_dir or str(Path(args.out) / "cache")
    cache = ResponseCache(cache_dir)
    cached = CachingBackend(
        raw_counter, cache, templates=templates, judge_decoding=config.decoding
    )
    return cached, raw_counter


def _build_templates(args: argparse.Namespace, values: dict[str, str]) -> PromptTemplates:
    budget = int(values.get("doc_char_budget", PromptTemplates().doc_char_budget))
    if args.prompts:
        return PromptTemplates.load(args.prompts, doc_char_budget=budget)
    defaults = PromptTemplates()
    return PromptTemplates(
        query_only=defaults.query_only,
        query_doc=defaults.query_doc,
        entailment=defaults.entailment,
        doc_char_budget=budget,
    )


def _report_to_json(report: ConfidenceReport) -> str:
    payload = {
        "query_id": report.query_id,
        "query_confidence": report.query_confidence,
        "gated": report.gated,
        "failure": report.failure,
        "judge_call_count": report.judge_call_count,
        "sample_call_count": report.sample_call_count,
        "per_doc": [
            {
                "doc_id": doc.doc_id,
                "confidence": doc.confidence,
                "delta": doc.delta,
                "label": int(doc.label),
            }
            for doc in report.per_doc
        ],
    }
    return json.dumps(payload, sort_keys=True)


def _write_reports(
    path: Path, reports: Sequence[ConfidenceReport], header_lines: Sequence[str]
) -> None:
    with path.open("w", encoding="utf-8") as handle:
        for line in header_lines:
            handle.write(f"# {line}\n")
        for report in reports:
            handle.write(_report_to_json(report) + "\n")


def _write_stats(path: Path, stats: dict[str, object]) -> None:
    path.write_text(json.dumps(stats, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _summarize(reports: Sequence[ConfidenceReport]) -> dict[str, int]:
    return {
        "queries": len(reports),
        "gated_queries": sum(1 for r in reports if r.gated),
        "corrected_queries": sum(1 for r in reports if not r.gated and r.failure is None),
        "failed_queries": sum(1 for r in reports if r.failure is not None),
        "logical_sample_calls": sum(r.sample_call_count for r in reports),
        "logical_judge_calls": sum(r.judge_call_count for r in reports),
    }


def _require_lists(queries, lists) -> None:
    missing = [q.query_id for q in queries if q.query_id not in lists]
    if missing:
        raise CarError(f"baseline run has no entries for queries: {missing}")


def cmd_rerank(args: argparse.Namespace) -> int:
    values = _resolved_values(args)
    config = build_car_config(values)
    descriptor = build_backend_descriptor(values)
    templates = _build_templates(args, values)
    queries = load_queries(args.queries)
    documents = load_corpus(args.corpus)
    with open(args.run, encoding="utf-8") as handle:
        baseline = parse_run(handle)
    lists = run_to_ranked_lists(baseline)
    _require_lists(queries, lists)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    backend, raw_counter = _build_backend(args, values, templates)

    run, reports = rerank_corpus(queries, lists, documents, backend, config, run_tag=args.tag)
    header = config_echo_lines(config, descriptor)
    with (out_dir / RUN_FILE_NAME).open("w", encoding="utf-8") as handle:
        write_run(run, handle, header_lines=header)
    _write_reports(out_dir / REPORTS_FILE_NAME, reports, header)

    stats: dict[str, object] = _summarize(reports)
    stats["raw_sample_calls"] = raw_counter.sample_calls
    stats["raw_judge_calls"] = raw_counter.judge_calls
    _write_stats(out_dir / STATS_FILE_NAME, stats)
    print(
        f"reranked {stats['queries']} queries "
        f"(gated {stats['gated_queries']}, corrected {stats['corrected_queries']}, "
        f"failed open {stats['failed_queries']}); "
        f"backend samples {raw_counter.sample_calls}, judgments {raw_counter.judge_calls}",
        file=sys.stderr,
    )
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    with open(args.qrels, encoding="utf-8") as handle:
        qrels = parse_qrels(handle)
    runs: list[RunFile] = []
    for run_path in args.run:
        with open(run_path, encoding="utf-8") as handle:
            runs.append(parse_run(handle))

    shared = set(runs[0].query_ids())
    for run in runs[1:]:
        shared &= set(run.query_ids())
    if any(set(run.query_ids()) != shared for run in runs):
        logger.warning(
            "runs cover different query sets; evaluating their intersection (%d queries)",
            len(shared),
        )
    filtered = [
        RunFile(run.run_tag, {q: run.rankings[q] for q in run.query_ids() if q in shared})
        for run in runs
    ]

    reports = [ndcg_at_k(run, qrels, args.k) for run in filtered]
    baseline_report = reports[0]

    def delta_or_na(baseline_value: float, value: float) -> str:
        try:
            return f"{relative_improvement(baseline_value, value):+.2f}"
        except ZeroBaselineError:
            return "NA"

    lines = [f"# evaluate k={args.k} qrels={args.qrels} baseline={filtered[0].run_tag}"]
    lines.append("run,query_id,metric,value")
    for run, report in zip(filtered, reports):
        for query_id in sorted(report.per_query):
            lines.append(
                f"{run.run_tag},{query_id},ndcg@{args.k},{report.per_query[query_id]:.6f}"
            )
        lines.append(f"{run.run_tag},ALL,ndcg@{args.k},{report.macro_avg:.6f}")
        if run is not filtered[0]:
            for query_id in sorted(report.per_query):
                delta = delta_or_na(
                    baseline_report.per_query.get(query_id, 0.0),
                    report.per_query[query_id],
                )
                lines.append(f"{run.run_tag},{query_id},delta_pct,{delta}")
            lines.append(
                f"{run.run_tag},ALL,delta_pct,"
                f"{delta_or_na(baseline_report.macro_avg, report.macro_avg)}"
            )
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _parse_grid(text: str | None) -> tuple[float, ...]:
    if not text:
        return DEFAULT_GRID
    return tuple(float(part) for part in text.split(","))


def cmd_sweep(args: argparse.Namespace) -> int:
    values = _resolved_values(args)
    config = build_car_config(values)
    descriptor = build_backend_descriptor(values)
    templates = _build_templates(args, values)
    queries = load_queries(args.queries)
    documents = load_corpus(args.corpus)
    with open(args.run, encoding="utf-8") as handle:
        baseline = parse_run(handle)
    with open(args.qrels, encoding="utf-8") as handle:
        qrels = parse_qrels(handle)
    lists = run_to_ranked_lists(baseline)
    _require_lists(queries, lists)
    grid = SweepGrid(t_q_values=_parse_grid(args.qt_grid), m_values=_parse_grid(args.cm_grid))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    backend, raw_counter = _build_backend(args, values, templates)

    result = run_sweep(queries, lists, documents, qrels, backend, config, grid)

    lines = [f"# {line}" for line in config_echo_lines(config, descriptor)]
    lines.append("t_q,m,ndcg@5")
    for cell in result.cells:
        lines.append(f"{cell.t_q:g},{cell.m:g},{cell.ndcg:.6f}")
    lines.append(
        f"# argmax t_q={result.best.t_q:g} m={result.best.m:g} ndcg@5={result.best.ndcg:.6f}"
    )
    (out_dir / SWEEP_FILE_NAME).write_text("\n".join(lines) + "\n", encoding="utf-8")

    _write_stats(
        out_dir / STATS_FILE_NAME,
        {
            "cells": len(result.cells),
            "raw_sample_calls": raw_counter.sample_calls,
            "raw_judge_calls": raw_counter.judge_calls,
            "logical_sample_calls": result.sample_calls,
            "logical_judge_calls": result.judge_calls,
            "best_t_q": result.best.t_q,
            "best_m": result.best.m,
            "best_ndcg": result.best.ndcg,
        },
    )
    print(
        f"argmax t_q={result.best.t_q:g} m={result.best.m:g} ndcg@5={result.best.ndcg:.6f}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="car",
        description="Confidence-aware reranking over baseline retrieval runs.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    rerank = subparsers.add_parser("rerank", help="rerank a baseline run")
    _add_engine_flags(rerank)
    _add_rerank_io_flags(rerank)
    rerank.set_defaults(func=cmd_rerank)

    evaluate = subparsers.add_parser("evaluate", help="score runs against qrels")
    evaluate.add_argument(
        "--run",
        action="append",
        required=True,
        help="run file; repeat for treatments (first is the baseline)",
    )
    evaluate.add_argument("--qrels", required=True, help="TREC qrels file")
    evaluate.add_argument("--k", type=int, default=5, help="NDCG cutoff")
    evaluate.add_argument("--out", help="metrics CSV path (default: stdout)")
    evaluate.set_defaults(func=cmd_evaluate)

    sweep = subparsers.add_parser("sweep", help="grid-search the threshold and margin")
    _add_engine_flags(sweep)
    _add_rerank_io_flags(sweep)
    sweep.add_argument("--qrels", required=True, help="TREC qrels file")
    sweep.add_argument("--qt-grid", help="comma-separated query-threshold values")
    sweep.add_argument("--cm-grid", help="comma-separated confidence-margin values")
    sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CarError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
