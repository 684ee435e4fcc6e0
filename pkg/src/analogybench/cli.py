"""Command-line entry point: generate -> score -> sanity -> compare -> report,
plus human-annotation aggregation and packaged fixtures for offline runs.

Flag precedence everywhere: CLI flag > config file (--config, TOML or JSON)
> built-in default.  A run manifest with every resolved value is written
before any backend call, so a finished run can be replayed byte-identically
from its cache.  Errors print one machine-parsable line to stderr
(``E_CODE: message``) and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from collections import defaultdict
from importlib import resources
from pathlib import Path

from . import __version__
from .analysis import (
    AnnotationRecord,
    Verdict,
    VoteOutcome,
    annotation_matrix,
    fleiss_kappa,
    majority_vote,
    meaningful_percentage,
)
from .datasets import load_dataset
from .errors import HarnessError, InputError, MissingSettingError, MissingModeError, SchemaError, UsageError
from .gateway import (
    ConfigPreset,
    GenerationGateway,
    CompletionCache,
    HttpBackend,
    MockBackend,
    ReplayBackend,
    config_for_preset,
    load_generations,
    plan_batch,
    run_batch,
    write_generations,
)
from .metrics import MatcherConfig
from .perturb import PerturbKind, PerturbSpec
from .prompts import TaskSetting, builtin_templates
from .reporting import (
    build_comparison_table,
    build_lengths_table,
    build_model_size_curve,
    build_spelling_table,
    build_tau_matrix,
    emit,
    trace_counts,
)
from .scoring import ExternalScorer, MetricKind, RefMode, load_scores, score_batch, write_scores
from .validity import build_setting_means, ordering_test, random_perturbation_test

log = logging.getLogger("analogybench")

ENV_SCORER_URL = "ANALOGYBENCH_SCORER_URL"


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    try:
        if p.suffix == ".toml":
            return tomllib.loads(raw.decode("utf-8"))
        return json.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SchemaError(f"config {path}: {exc}") from exc


def _resolve(args: argparse.Namespace, config: dict, key: str, default=None):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _csv_list(value: str) -> list[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _make_backend(name: str):
    if name == "mock":
        return MockBackend()
    if name == "http":
        return HttpBackend()
    if name.startswith("replay:"):
        return ReplayBackend(name.split(":", 1)[1])
    raise UsageError(f"unknown backend {name!r} (use mock, http, or replay:FILE)")


def cmd_generate(args: argparse.Namespace) -> int:
    config = _load_config_file(args.config)
    dataset_path = Path(_require_arg(_resolve(args, config, "dataset"), "--dataset"))
    setting = TaskSetting(_require_arg(_resolve(args, config, "setting"), "--setting"))
    out_dir = Path(_require_arg(_resolve(args, config, "out"), "--out"))
    presets = [ConfigPreset(p) for p in _csv_list(_resolve(args, config, "preset", "tl"))]
    models = _csv_list(_resolve(args, config, "models", "mock-model"))
    perturb_kind = PerturbKind(_resolve(args, config, "perturb", "none"))
    seed = int(_resolve(args, config, "seed", 0))
    backend_name = _resolve(args, config, "backend", "mock")
    max_workers = int(_resolve(args, config, "max_workers", 4))
    keep_going = bool(_resolve(args, config, "keep_going", False))
    cache_dir = _resolve(args, config, "cache")

    templates = builtin_templates(setting)
    prompt_filter = _resolve(args, config, "prompts")
    if prompt_filter:
        wanted = set(_csv_list(prompt_filter))
        templates = [t for t in templates if t.short_id in wanted or t.id in wanted]
        missing = wanted - {t.short_id for t in templates} - {t.id for t in templates}
        if missing:
            raise UsageError(f"unknown prompt ids for {setting.value}: {sorted(missing)}")

    dataset = load_dataset(dataset_path)
    configs = [config_for_preset(preset, model) for model in models for preset in presets]
    perturb_spec = PerturbSpec(kind=perturb_kind, seed=seed)
    plan = plan_batch(dataset, templates, configs, perturb_spec)

    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "tool": "analogybench",
        "version": __version__,
        "command": "generate",
        "dataset": str(dataset_path),
        "dataset_sha256": _sha256_file(dataset_path),
        "setting": setting.value,
        "prompt_ids": [t.id for t in sorted(templates, key=lambda t: t.id)],
        "presets": [p.value for p in presets],
        "models": models,
        "perturb": {"kind": perturb_kind.value, "seed": seed},
        "backend": backend_name,
        "cache_dir": str(cache_dir) if cache_dir else None,
        "out_dir": str(out_dir),
        "planned_records": len(plan),
        "keep_going": keep_going,
        "max_workers": max_workers,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    log.info("manifest written to %s (%d planned records)", manifest_path, len(plan))

    if args.dry_run:
        print(f"planned {len(plan)} generation records (dry run, no backend calls)")
        return 0

    backend = _make_backend(backend_name)
    cache = CompletionCache(cache_dir) if cache_dir else None
    gateway = GenerationGateway(backend, cache=cache, max_workers=max_workers)
    result = run_batch(gateway, plan, keep_going=keep_going)
    generations_path = out_dir / "generations.jsonl"
    write_generations(result.records, generations_path)
    if result.failures:
        failures_path = out_dir / "failures.jsonl"
        with open(failures_path, "w", encoding="utf-8") as fh:
            for failure in result.failures:
                fh.write(json.dumps({"cell": failure.cell.index, "error": failure.error}) + "\n")
        log.warning("%d cells failed; details in %s", len(result.failures), failures_path)
    print(f"wrote {len(result.records)} generation records to {generations_path}")
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    config = _load_config_file(args.config)
    dataset = load_dataset(_require_arg(_resolve(args, config, "dataset"), "--dataset"))
    generations = load_generations(_require_arg(_resolve(args, config, "generations"), "--generations"))
    out_path = Path(_require_arg(_resolve(args, config, "out"), "--out"))
    metric_names = _csv_list(_resolve(args, config, "metrics", "rouge_l,meteor"))
    metrics = [MetricKind.parse(name) for name in metric_names]
    modes = [RefMode(m) for m in _csv_list(_resolve(args, config, "ref_modes", "matched,random"))]
    seed = int(_resolve(args, config, "seed", 0))
    matcher = None
    synonyms = _resolve(args, config, "synonyms")
    if synonyms:
        matcher = MatcherConfig.from_synonym_file(synonyms)
    external = None
    if any(m.kind == "external" for m in metrics):
        scorer_url = _resolve(args, config, "scorer_url") or os.environ.get(ENV_SCORER_URL)
        if not scorer_url:
            raise UsageError(f"external metrics need --scorer-url or {ENV_SCORER_URL}")
        external = ExternalScorer(scorer_url)
    records = score_batch(
        generations, dataset, metrics, modes,
        rng_seed=seed, matcher=matcher, external=external,
        skip_missing=bool(_resolve(args, config, "skip_missing", False)),
    )
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_scores(records, out_path)
    print(f"wrote {len(records)} score records to {out_path}")
    return 0


def cmd_sanity(args: argparse.Namespace) -> int:
    scores = load_scores(args.scores)
    means = build_setting_means(scores, args.metric)
    report: dict = {"metric": args.metric, "means": {}}
    for (setting, mode), value in sorted(means.means.items()):
        report["means"][f"{setting}/{mode.value}"] = value
    verdicts = []
    try:
        verdicts.append(ordering_test(means))
    except MissingSettingError as exc:
        report["ot"] = {"skipped": str(exc)}
        print(f"OT [{args.metric}]: SKIPPED ({exc})")
    try:
        verdicts.append(random_perturbation_test(means))
    except MissingModeError as exc:
        report["rpt"] = {"skipped": str(exc)}
        print(f"RPT [{args.metric}]: SKIPPED ({exc})")
    for verdict in verdicts:
        report[verdict.tester.value] = {
            "pass": verdict.passed,
            "details": list(verdict.details),
        }
        print(verdict.summary())
        for item in verdict.details:
            log.info("%s detail: %s", verdict.tester.value, item)
    if args.out:
        Path(args.out).write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    config = _load_config_file(args.config)
    scores = load_scores(_require_arg(_resolve(args, config, "scores"), "--scores"))
    metrics = _csv_list(_resolve(args, config, "metrics", "rouge_l,meteor"))
    out_dir = Path(_require_arg(_resolve(args, config, "out"), "--out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    table = build_comparison_table(scores, metrics, paired=bool(args.paired))
    formats = _csv_list(_resolve(args, config, "formats", "csv,json"))
    for fmt in formats:
        emit(table, fmt, out_dir / f"comparison.{fmt}")
    if args.trace:
        trace_path = out_dir / "comparison_trace.json"
        trace_path.write_text(
            json.dumps(trace_counts(table), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    best = ", ".join(f"{metric}: {table.best[metric]}" for metric in table.metrics)
    print(f"comparison table over {len(table.rows)} conditions (best per metric: {best})")
    return 0


def _parse_sizes(raw: str | None) -> dict[str, str]:
    sizes = {}
    for pair in _csv_list(raw or ""):
        model, _, label = pair.partition("=")
        if not model or not label:
            raise UsageError(f"bad --sizes entry {pair!r} (use model=LABEL, e.g. ada=0.3B)")
        sizes[model] = label
    return sizes


def cmd_report(args: argparse.Namespace) -> int:
    config = _load_config_file(args.config)
    out_dir = Path(_require_arg(_resolve(args, config, "out"), "--out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    formats = _csv_list(_resolve(args, config, "formats", "csv,json"))
    kind = args.kind
    metric = _resolve(args, config, "metric", "rouge_l")

    if kind == "human-eval":
        annotations = _require_arg(_resolve(args, config, "annotations"), "--annotations")
        return _human_eval_report(Path(annotations), out_dir)

    if kind == "lengths":
        generations = load_generations(
            _require_arg(_resolve(args, config, "generations"), "--generations")
        )
        report = build_lengths_table(generations)
    else:
        scores = load_scores(_require_arg(_resolve(args, config, "scores"), "--scores"))
        if kind == "prompts":
            metrics = _csv_list(_resolve(args, config, "metrics", metric))
            report = build_comparison_table(scores, metrics)
        elif kind == "spelling":
            report = build_spelling_table(scores, metric)
        elif kind == "model-size":
            report = build_model_size_curve(scores, metric, _parse_sizes(args.sizes))
        elif kind == "tau":
            report = build_tau_matrix(scores, metric)
        else:
            raise UsageError(f"unknown report kind {kind!r}")

    stem = kind.replace("-", "_")
    written = []
    for fmt in formats:
        written.append(emit(report, fmt, out_dir / f"{stem}.{fmt}"))
    if args.trace and hasattr(report, "cells"):
        trace_path = out_dir / f"{stem}_trace.json"
        trace_path.write_text(
            json.dumps(trace_counts(report), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        written.append(trace_path)
    print(f"wrote {', '.join(str(p) for p in written)}")
    return 0


def load_annotations(path: Path) -> tuple[list[AnnotationRecord], dict[str, tuple[str, str]]]:
    """Read the annotations CSV; optional model_id/setting columns drive grouping."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise InputError(f"cannot read annotations {path}: {exc}") from exc
    records = []
    groups: dict[str, tuple[str, str]] = {}
    for lineno, row in enumerate(rows, start=2):
        try:
            record = AnnotationRecord(
                analogy_id=row["analogy_id"],
                worker_id=row["worker_id"],
                verdict=Verdict(row["verdict"]),
                rationale=row.get("rationale", "") or "",
            )
        except (KeyError, ValueError) as exc:
            raise SchemaError(f"annotations {path}, line {lineno}: {exc}") from exc
        records.append(record)
        groups[record.analogy_id] = (row.get("model_id") or "all", row.get("setting") or "all")
    return records, groups


def _human_eval_report(annotations_path: Path, out_dir: Path) -> int:
    records, groups = load_annotations(annotations_path)
    by_analogy: dict[str, list[AnnotationRecord]] = defaultdict(list)
    for record in records:
        by_analogy[record.analogy_id].append(record)
    votes: dict[str, VoteOutcome] = {}
    for analogy_id in sorted(by_analogy):
        votes[analogy_id] = majority_vote(by_analogy[analogy_id])
    cells: dict[tuple[str, str], list[VoteOutcome]] = defaultdict(list)
    for analogy_id, outcome in votes.items():
        cells[groups[analogy_id]].append(outcome)
    percentages = meaningful_percentage(cells)

    kappas: dict[str, dict] = {}
    by_setting: dict[str, list[AnnotationRecord]] = defaultdict(list)
    for record in records:
        by_setting[groups[record.analogy_id][1]].append(record)
    for setting in sorted(by_setting):
        result = fleiss_kappa(annotation_matrix(by_setting[setting]))
        kappas[setting] = {
            "kappa": result.kappa,
            "observed": result.observed,
            "expected": result.expected,
            "degenerate": result.degenerate,
        }
    overall = fleiss_kappa(annotation_matrix(records))

    out_dir.mkdir(parents=True, exist_ok=True)
    votes_path = out_dir / "votes.csv"
    with open(votes_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["analogy_id", "model_id", "setting", "outcome"])
        for analogy_id in sorted(votes):
            model_id, setting = groups[analogy_id]
            writer.writerow([analogy_id, model_id, setting, votes[analogy_id].value])
    report = {
        "kind": "human_eval",
        "percent_meaningful": {
            f"{model}/{setting}": value for (model, setting), value in sorted(percentages.items())
        },
        "fleiss_kappa": kappas,
        "fleiss_kappa_overall": overall.kappa,
        "discarded": sum(1 for outcome in votes.values() if outcome is VoteOutcome.DISCARDED),
        "items": len(votes),
    }
    report_path = out_dir / "human_eval.json"
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    with open(out_dir / "human_eval.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model_id", "setting", "percent_meaningful"])
        for (model, setting), value in sorted(percentages.items()):
            writer.writerow([model, setting, f"{value:.2f}"])
    print(f"aggregated {len(votes)} analogies -> {report_path}")
    return 0


def cmd_human_eval(args: argparse.Namespace) -> int:
    return _human_eval_report(Path(args.annotations), Path(args.out))


def cmd_fixtures(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    package_fixtures = resources.files("analogybench") / "fixtures"
    written = []
    for name in ("toy_dataset.jsonl", "toy_annotations.csv", "sanity_scores.csv"):
        target = out_dir / name
        target.write_bytes((package_fixtures / name).read_bytes())
        written.append(target)
    print(f"wrote {', '.join(str(p) for p in written)}")
    return 0


def _require_arg(value, flag: str):
    if value in (None, ""):
        raise UsageError(f"missing required option {flag}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="analogybench",
        description="Generate, score, sanity-check, compare, and report on LLM-produced analogies.",
    )
    parser.add_argument("--version", action="version", version=f"analogybench {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="run a generation batch against a completion backend")
    p.add_argument("--config", help="TOML or JSON config file; CLI flags win")
    p.add_argument("--dataset", help="dataset JSONL file")
    p.add_argument("--setting", choices=[s.value for s in TaskSetting],
                   help="task setting: no_src (target only), wsrc (target+source), "
                        "no_anlgy (plain-explanation control), std (standard analogies)")
    p.add_argument("--prompts", help="comma-separated prompt ids (P3,P5); default: all for the setting")
    p.add_argument("--preset", help="comma-separated presets: tl (deterministic, temperature 0, 1 sample), "
                                    "th (temperature 0.85, penalties 1.24/1.71, 5 samples best-of-3)")
    p.add_argument("--models", help="comma-separated backend model identifiers")
    p.add_argument("--perturb", choices=[k.value for k in PerturbKind],
                   help="spelling-error kind injected into the target")
    p.add_argument("--seed", type=int, help="base seed for perturbation (64-bit unsigned)")
    p.add_argument("--backend", help="mock | http | replay:FILE (http reads "
                                     "ANALOGYBENCH_API_BASE / ANALOGYBENCH_API_KEY)")
    p.add_argument("--cache", help="completion cache directory (one file per key)")
    p.add_argument("--out", help="output directory (manifest.json, generations.jsonl)")
    p.add_argument("--dry-run", action="store_true", help="plan and write the manifest only")
    p.add_argument("--keep-going", action="store_true", help="record per-cell failures and continue")
    p.add_argument("--max-workers", type=int, dest="max_workers", help="concurrent backend requests (default 4)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("score", help="score generations against dataset references")
    p.add_argument("--config", help="TOML or JSON config file; CLI flags win")
    p.add_argument("--dataset", help="dataset JSONL file")
    p.add_argument("--generations", help="generations JSONL file")
    p.add_argument("--metrics", help="comma-separated: rouge_l, meteor, external:<name>")
    p.add_argument("--ref-modes", dest="ref_modes",
                   help="matched (own references, max) and/or random (seeded draw from other concepts)")
    p.add_argument("--seed", type=int, help="seed for random-reference draws")
    p.add_argument("--synonyms", help="TSV synonym table enabling the synonym match stage")
    p.add_argument("--scorer-url", dest="scorer_url", help="external scorer base URL")
    p.add_argument("--skip-missing", dest="skip_missing", action="store_true",
                   help="skip generations without usable references instead of failing")
    p.add_argument("--out", help="output scores CSV path")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("sanity", help="run the ordering and random-perturbation metric testers")
    p.add_argument("--scores", required=True, help="scores CSV file")
    p.add_argument("--metric", required=True,
                   help="metric column to test: rouge_l, meteor, or external:<name>")
    p.add_argument("--out", help="optional JSON report path")
    p.set_defaults(func=cmd_sanity)

    p = sub.add_parser("compare", help="condition comparison table with significance markers")
    p.add_argument("--config", help="TOML or JSON config file; CLI flags win")
    p.add_argument("--scores", help="scores CSV file")
    p.add_argument("--metrics", help="comma-separated metric columns")
    p.add_argument("--paired", action="store_true",
                   help="paired t-test over shared concepts (default: Welch unequal-variance)")
    p.add_argument("--formats", help="comma-separated output formats: csv,json")
    p.add_argument("--trace", action="store_true", help="also write per-cell record counts")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="assemble output tables, curves, and plots")
    p.add_argument("--config", help="TOML or JSON config file; CLI flags win")
    p.add_argument("--scores", help="scores CSV file")
    p.add_argument("--generations", help="generations JSONL (for --kind lengths)")
    p.add_argument("--annotations", help="annotations CSV (for --kind human-eval)")
    p.add_argument("--kind", required=True,
                   choices=["prompts", "spelling", "model-size", "tau", "human-eval", "lengths"])
    p.add_argument("--metric", help="metric column for single-metric reports (default rouge_l)")
    p.add_argument("--metrics", help="metric columns for the prompts table")
    p.add_argument("--sizes", help="model parameter counts, e.g. ada=0.3B,davinci=175B")
    p.add_argument("--formats", help="comma-separated output formats: csv,json,svg")
    p.add_argument("--trace", action="store_true", help="also write per-cell record counts")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("human-eval", help="aggregate annotator verdicts: majority vote, percentages, agreement")
    p.add_argument("--annotations", required=True,
                   help="CSV: analogy_id, worker_id, verdict {yes|no|cant_decide}, rationale "
                        "(+ optional model_id, setting columns for grouping)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_human_eval)

    p = sub.add_parser("fixtures", help="copy the packaged toy dataset and fixture files")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_fixtures)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except HarnessError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"E_INTERNAL: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
