"""Report assembly: comparison tables with significance markers, spelling-error
impact tables, model-size curves, rank-correlation matrices, and length stats.

Everything renders to CSV (3 decimal places, matching the table style used
throughout), JSON (full float precision), or static SVG.  Emission is
byte-deterministic: identical inputs give identical files.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .analysis import (
    ConditionKey,
    ConditionSample,
    SignificanceMark,
    kendall_tau_b,
    mean_by_condition,
    per_item_means,
    significance_mark,
    welch_t_test,
    paired_t_test,
)
from .errors import InputError, NoSizeLabelError, UsageError
from .gateway import GenerationRecord
from .scoring import RefMode, ScoreRecord


@dataclass(frozen=True)
class TableCell:
    mean: float
    mark: SignificanceMark = SignificanceMark.NONE
    n: int = 0  # contributing per-concept items (trace support)
    p_vs_best: float | None = None


def _prompt_order(row_id: str) -> tuple[int, int, str]:
    match = re.search(r"P(\d+)", row_id)
    number = int(match.group(1)) if match else 0
    preset_rank = {"tl": 0, "th": 1}.get(row_id.rsplit("_", 1)[-1], 2)
    return (number, preset_rank, row_id)


def _row_id(key: ConditionKey, with_model: bool, with_perturb: bool) -> str:
    row = key.row_id
    if with_model:
        row += f"@{key.model_id}"
    if with_perturb and key.perturb != "none":
        row += f"+{key.perturb}"
    return row


@dataclass
class ComparisonTable:
    metrics: list[str]
    rows: list[str]
    cells: dict[tuple[str, str], TableCell]  # (row, metric) -> cell
    best: dict[str, str]  # metric -> best row


def build_comparison_table(
    scores: Sequence[ScoreRecord],
    metrics: Sequence[str],
    ref_mode: RefMode = RefMode.MATCHED,
    paired: bool = False,
) -> ComparisonTable:
    """Condition means per metric with markers versus the best condition."""
    test = paired_t_test if paired else welch_t_test
    all_rows: set[str] = set()
    cells: dict[tuple[str, str], TableCell] = {}
    best: dict[str, str] = {}
    for metric in metrics:
        conditions = mean_by_condition([s for s in scores if s.metric == metric], ref_mode)
        if not conditions:
            raise UsageError(f"no scores found for metric {metric!r}")
        models = {key.model_id for key in conditions}
        perturbs = {key.perturb for key in conditions}
        row_of = {
            key: _row_id(key, with_model=len(models) > 1, with_perturb=len(perturbs) > 1)
            for key in conditions
        }
        best_key = max(conditions, key=lambda k: (conditions[k].mean, row_of[k]))
        best[metric] = row_of[best_key]
        best_sample = conditions[best_key]
        for key, sample in conditions.items():
            row = row_of[key]
            all_rows.add(row)
            if key == best_key:
                cells[(row, metric)] = TableCell(mean=sample.mean, n=len(sample.values))
                continue
            if len(sample.values) < 2 or len(best_sample.values) < 2:
                mark, p = SignificanceMark.NONE, None
            else:
                if paired:
                    a, b = _paired_values(best_sample, sample, scores, metric, ref_mode)
                else:
                    a, b = list(best_sample.values), list(sample.values)
                result = test(a, b)
                mark, p = significance_mark(result.p_two_tailed), result.p_two_tailed
            cells[(row, metric)] = TableCell(mean=sample.mean, mark=mark, n=len(sample.values), p_vs_best=p)
    return ComparisonTable(
        metrics=list(metrics),
        rows=sorted(all_rows, key=_prompt_order),
        cells=cells,
        best=best,
    )


def _paired_values(
    best_sample: ConditionSample,
    other_sample: ConditionSample,
    scores: Sequence[ScoreRecord],
    metric: str,
    ref_mode: RefMode,
) -> tuple[list[float], list[float]]:
    items = per_item_means([s for s in scores if s.metric == metric], ref_mode)
    best_items = items[best_sample.condition]
    other_items = items[other_sample.condition]
    shared = sorted(set(best_items) & set(other_items))
    if len(shared) < 2:
        raise UsageError("paired test needs at least 2 shared concepts")
    return [best_items[c] for c in shared], [other_items[c] for c in shared]


SPELLING_KINDS = ["delete", "permute", "insert", "replace", "none"]
SPELLING_LABELS = {"delete": "D", "permute": "P", "insert": "I", "replace": "R", "none": "O"}


@dataclass
class SpellingTable:
    metric: str
    prompts: list[str]  # short prompt ids
    cells: dict[tuple[str, str], TableCell]  # (prompt, kind) -> cell; marks vs original
    drops: dict[tuple[str, str], float]  # (prompt, kind) -> relative drop (O - X) / O


def build_spelling_table(scores: Sequence[ScoreRecord], metric: str) -> SpellingTable:
    """Mean per (prompt, error kind) plus relative drops against the clean prompt."""
    conditions = mean_by_condition([s for s in scores if s.metric == metric])
    if not conditions:
        raise UsageError(f"no scores found for metric {metric!r}")
    presets = {key.preset for key in conditions}
    if len(presets) > 1:
        raise UsageError(f"spelling table expects one preset, got {sorted(presets)}")
    by_prompt_kind: dict[tuple[str, str], ConditionSample] = {}
    prompts: set[str] = set()
    for key, sample in conditions.items():
        short = key.prompt_id.rsplit(".", 1)[-1]
        prompts.add(short)
        by_prompt_kind[(short, key.perturb)] = sample
    ordered_prompts = sorted(prompts, key=_prompt_order)
    cells: dict[tuple[str, str], TableCell] = {}
    drops: dict[tuple[str, str], float] = {}
    for prompt in ordered_prompts:
        for kind in SPELLING_KINDS:
            if (prompt, kind) not in by_prompt_kind:
                raise UsageError(f"missing column {SPELLING_LABELS[kind]!r} for prompt {prompt}")
        original = by_prompt_kind[(prompt, "none")]
        cells[(prompt, "none")] = TableCell(mean=original.mean, n=len(original.values))
        for kind in SPELLING_KINDS[:-1]:
            sample = by_prompt_kind[(prompt, kind)]
            if len(sample.values) >= 2 and len(original.values) >= 2:
                result = welch_t_test(sample.values, original.values)
                mark, p = significance_mark(result.p_two_tailed), result.p_two_tailed
            else:
                mark, p = SignificanceMark.NONE, None
            cells[(prompt, kind)] = TableCell(mean=sample.mean, mark=mark, n=len(sample.values), p_vs_best=p)
            drops[(prompt, kind)] = (
                (original.mean - sample.mean) / original.mean if original.mean else math.nan
            )
    return SpellingTable(metric=metric, prompts=ordered_prompts, cells=cells, drops=drops)


_SIZE_SUFFIX = {"k": 1e3, "m": 1e6, "b": 1e9, "t": 1e12}


def parse_size_label(label: str) -> float:
    match = re.fullmatch(r"\s*([0-9]+(?:\.[0-9]+)?)\s*([kKmMbBtT])\s*", label)
    if not match:
        raise NoSizeLabelError(f"cannot parse parameter-count label {label!r}")
    return float(match.group(1)) * _SIZE_SUFFIX[match.group(2).lower()]


@dataclass(frozen=True)
class SizePoint:
    model_id: str
    label: str
    params: float
    mean: float
    rel_improvement: float | None  # vs previous (smaller) model


@dataclass
class SizeCurve:
    metric: str
    series: dict[str, list[SizePoint]]  # setting -> points sorted by params


def build_model_size_curve(
    scores: Sequence[ScoreRecord],
    metric: str,
    size_labels: Mapping[str, str],
) -> SizeCurve:
    """Mean per model (per setting), ordered by parameter count, with step improvements."""
    conditions = mean_by_condition([s for s in scores if s.metric == metric])
    if not conditions:
        raise UsageError(f"no scores found for metric {metric!r}")
    merged: dict[tuple[str, str], list[float]] = {}
    for key, sample in conditions.items():
        merged.setdefault((key.setting, key.model_id), []).extend(sample.values)
    series: dict[str, list[SizePoint]] = {}
    for (setting, model_id), values in merged.items():
        if model_id not in size_labels:
            raise NoSizeLabelError(f"model {model_id!r} has no parameter-count label")
        label = size_labels[model_id]
        point = SizePoint(
            model_id=model_id,
            label=label,
            params=parse_size_label(label),
            mean=sum(values) / len(values),
            rel_improvement=None,
        )
        series.setdefault(setting, []).append(point)
    for setting, points in series.items():
        points.sort(key=lambda p: p.params)
        enriched = [points[0]]
        for prev, current in zip(points, points[1:]):
            step = (current.mean - prev.mean) / prev.mean if prev.mean else math.nan
            enriched.append(
                SizePoint(current.model_id, current.label, current.params, current.mean, step)
            )
        series[setting] = enriched
    return SizeCurve(metric=metric, series=series)


@dataclass
class TauMatrix:
    metric: str
    conditions: list[str]  # row/column ids
    values: list[list[float]]  # symmetric, unit diagonal


def build_tau_matrix(
    scores: Sequence[ScoreRecord], metric: str, ref_mode: RefMode = RefMode.MATCHED
) -> TauMatrix:
    """Rank correlation of per-concept scores between every pair of conditions."""
    items = per_item_means([s for s in scores if s.metric == metric], ref_mode)
    if not items:
        raise UsageError(f"no scores found for metric {metric!r}")
    models = {key.model_id for key in items}
    perturbs = {key.perturb for key in items}
    keyed = sorted(items, key=lambda k: _prompt_order(_row_id(k, len(models) > 1, len(perturbs) > 1)))
    labels = [_row_id(k, len(models) > 1, len(perturbs) > 1) for k in keyed]
    n = len(keyed)
    values = [[1.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            shared = sorted(set(items[keyed[i]]) & set(items[keyed[j]]))
            try:
                tau = kendall_tau_b(
                    [items[keyed[i]][c] for c in shared],
                    [items[keyed[j]][c] for c in shared],
                )
            except Exception:
                tau = math.nan
            values[i][j] = values[j][i] = tau
    return TauMatrix(metric=metric, conditions=labels, values=values)


@dataclass
class LengthsTable:
    rows: list[dict]  # prompt_id, preset, mean_words, n


def build_lengths_table(generations: Sequence[GenerationRecord]) -> LengthsTable:
    """Mean whitespace-token count of completions per (prompt, preset)."""
    groups: dict[tuple[str, str], list[int]] = {}
    for gen in generations:
        groups.setdefault((gen.prompt_id, gen.config_preset.value), []).append(
            len(gen.completion.split())
        )
    rows = [
        {
            "prompt_id": prompt_id,
            "preset": preset,
            "mean_words": sum(counts) / len(counts),
            "n": len(counts),
        }
        for (prompt_id, preset), counts in sorted(groups.items())
    ]
    return LengthsTable(rows=rows)


def _fmt(value: float) -> str:
    return "nan" if isinstance(value, float) and math.isnan(value) else f"{value:.3f}"


def _cell_text(cell: TableCell) -> str:
    return f"{_fmt(cell.mean)}{cell.mark.value}"


def _comparison_csv(table: ComparisonTable) -> str:
    lines = ["condition," + ",".join(table.metrics)]
    for row in table.rows:
        cells = [
            _cell_text(table.cells[(row, m)]) if (row, m) in table.cells else ""
            for m in table.metrics
        ]
        lines.append(row + "," + ",".join(cells))
    lines.append("best," + ",".join(table.best[m] for m in table.metrics))
    return "\n".join(lines) + "\n"


def _comparison_json(table: ComparisonTable) -> dict:
    return {
        "kind": "comparison",
        "metrics": table.metrics,
        "best": table.best,
        "rows": [
            {
                "condition": row,
                "cells": {
                    m: {
                        "mean": table.cells[(row, m)].mean,
                        "mark": table.cells[(row, m)].mark.name.lower(),
                        "n": table.cells[(row, m)].n,
                        "p_vs_best": table.cells[(row, m)].p_vs_best,
                    }
                    for m in table.metrics
                    if (row, m) in table.cells
                },
            }
            for row in table.rows
        ],
    }


def _spelling_csv(table: SpellingTable) -> str:
    kinds = SPELLING_KINDS
    header = ["prompt"] + [SPELLING_LABELS[k] for k in kinds] + [
        f"drop_{SPELLING_LABELS[k]}" for k in kinds[:-1]
    ]
    lines = [",".join(header)]
    for prompt in table.prompts:
        row = [prompt]
        row += [_cell_text(table.cells[(prompt, k)]) for k in kinds]
        row += [_fmt(table.drops[(prompt, k)]) for k in kinds[:-1]]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _spelling_json(table: SpellingTable) -> dict:
    return {
        "kind": "spelling",
        "metric": table.metric,
        "prompts": table.prompts,
        "cells": {
            f"{prompt}/{kind}": {
                "mean": cell.mean,
                "mark": cell.mark.name.lower(),
                "n": cell.n,
                "p_vs_original": cell.p_vs_best,
            }
            for (prompt, kind), cell in sorted(table.cells.items())
        },
        "relative_drops": {
            f"{prompt}/{kind}": drop for (prompt, kind), drop in sorted(table.drops.items())
        },
    }


def _size_csv(curve: SizeCurve) -> str:
    lines = ["setting,model_id,label,params,mean,rel_improvement"]
    for setting in sorted(curve.series):
        for point in curve.series[setting]:
            step = "" if point.rel_improvement is None else _fmt(point.rel_improvement)
            lines.append(
                f"{setting},{point.model_id},{point.label},{point.params:.0f},{_fmt(point.mean)},{step}"
            )
    return "\n".join(lines) + "\n"


def _size_json(curve: SizeCurve) -> dict:
    return {
        "kind": "model_size",
        "metric": curve.metric,
        "series": {
            setting: [
                {
                    "model_id": p.model_id,
                    "label": p.label,
                    "params": p.params,
                    "mean": p.mean,
                    "rel_improvement": p.rel_improvement,
                }
                for p in points
            ]
            for setting, points in sorted(curve.series.items())
        },
    }


def _tau_csv(matrix: TauMatrix) -> str:
    lines = ["," + ",".join(matrix.conditions)]
    for label, row in zip(matrix.conditions, matrix.values):
        lines.append(label + "," + ",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _tau_json(matrix: TauMatrix) -> dict:
    return {"kind": "tau", "metric": matrix.metric, "conditions": matrix.conditions,
            "values": matrix.values}


def _lengths_csv(table: LengthsTable) -> str:
    lines = ["prompt_id,preset,mean_words,n"]
    for row in table.rows:
        lines.append(f"{row['prompt_id']},{row['preset']},{_fmt(row['mean_words'])},{row['n']}")
    return "\n".join(lines) + "\n"


def _color(value: float) -> str:
    """Blue (-1) through white (0) to red (+1)."""
    if math.isnan(value):
        return "#cccccc"
    v = max(-1.0, min(1.0, value))
    if v >= 0:
        other = round(255 * (1 - v))
        return f"#ff{other:02x}{other:02x}"
    other = round(255 * (1 + v))
    return f"#{other:02x}{other:02x}ff"


def _tau_svg(matrix: TauMatrix) -> str:
    cell, margin = 46, 90
    n = len(matrix.conditions)
    width = margin + n * cell + 10
    height = margin + n * cell + 10
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="monospace" font-size="10">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for j, label in enumerate(matrix.conditions):
        x = margin + j * cell + cell // 2
        parts.append(f'<text x="{x}" y="{margin - 6}" text-anchor="middle">{label}</text>')
    for i, label in enumerate(matrix.conditions):
        y = margin + i * cell + cell // 2 + 4
        parts.append(f'<text x="{margin - 6}" y="{y}" text-anchor="end">{label}</text>')
        for j in range(n):
            value = matrix.values[i][j]
            x = margin + j * cell
            y0 = margin + i * cell
            parts.append(
                f'<rect x="{x}" y="{y0}" width="{cell}" height="{cell}" '
                f'fill="{_color(value)}" stroke="#888"/>'
            )
            parts.append(
                f'<text x="{x + cell // 2}" y="{y0 + cell // 2 + 4}" '
                f'text-anchor="middle">{_fmt(value)}</text>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _size_svg(curve: SizeCurve) -> str:
    width, height, pad = 560, 360, 60
    all_points = [p for pts in curve.series.values() for p in pts]
    if not all_points:
        raise UsageError("size curve has no points")
    means = [p.mean for p in all_points]
    lo, hi = min(means), max(means)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    logs = [math.log10(p.params) for p in all_points]
    xlo, xhi = min(logs), max(logs)
    if xhi == xlo:
        xlo, xhi = xlo - 0.5, xhi + 0.5

    def sx(params: float) -> float:
        return pad + (math.log10(params) - xlo) / (xhi - xlo) * (width - 2 * pad)

    def sy(mean: float) -> float:
        return height - pad - (mean - lo) / (hi - lo) * (height - 2 * pad)

    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="monospace" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width // 2}" y="{height - 12}" text-anchor="middle">parameters</text>',
        f'<text x="14" y="{height // 2}" transform="rotate(-90 14 {height // 2})" '
        f'text-anchor="middle">{curve.metric} mean</text>',
    ]
    for idx, setting in enumerate(sorted(curve.series)):
        color = palette[idx % len(palette)]
        points = curve.series[setting]
        coords = " ".join(f"{sx(p.params):.1f},{sy(p.mean):.1f}" for p in points)
        if len(points) > 1:
            parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        for p in points:
            parts.append(f'<circle cx="{sx(p.params):.1f}" cy="{sy(p.mean):.1f}" r="3.5" fill="{color}"/>')
            parts.append(
                f'<text x="{sx(p.params):.1f}" y="{sy(p.mean) - 8:.1f}" text-anchor="middle">'
                f"{p.label}</text>"
            )
        parts.append(
            f'<text x="{width - pad}" y="{pad + 14 * idx}" text-anchor="end" fill="{color}">{setting}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit(report: object, fmt: str, path: str | Path) -> Path:
    """Write a report in the requested format; identical inputs give identical bytes."""
    path = Path(path)
    if fmt == "json":
        if isinstance(report, ComparisonTable):
            payload = _comparison_json(report)
        elif isinstance(report, SpellingTable):
            payload = _spelling_json(report)
        elif isinstance(report, SizeCurve):
            payload = _size_json(report)
        elif isinstance(report, TauMatrix):
            payload = _tau_json(report)
        elif isinstance(report, LengthsTable):
            payload = {"kind": "lengths", "rows": report.rows}
        elif isinstance(report, dict):
            payload = report
        else:
            raise UsageError(f"cannot emit {type(report).__name__} as json")
        text = json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    elif fmt == "csv":
        if isinstance(report, ComparisonTable):
            text = _comparison_csv(report)
        elif isinstance(report, SpellingTable):
            text = _spelling_csv(report)
        elif isinstance(report, SizeCurve):
            text = _size_csv(report)
        elif isinstance(report, TauMatrix):
            text = _tau_csv(report)
        elif isinstance(report, LengthsTable):
            text = _lengths_csv(report)
        else:
            raise UsageError(f"cannot emit {type(report).__name__} as csv")
    elif fmt == "svg":
        if isinstance(report, TauMatrix):
            text = _tau_svg(report)
        elif isinstance(report, SizeCurve):
            text = _size_svg(report)
        else:
            raise UsageError(f"no svg rendering for {type(report).__name__}")
    else:
        raise UsageError(f"unknown report format {fmt!r}")
    try:
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise InputError(f"cannot write report {path}: {exc}") from exc
    return path


def trace_counts(report: ComparisonTable | SpellingTable) -> list[dict]:
    """Contributing per-concept item counts per cell (``--trace`` support)."""
    if isinstance(report, ComparisonTable):
        return [
            {"row": row, "column": metric, "n": report.cells[(row, metric)].n}
            for row in report.rows
            for metric in report.metrics
            if (row, metric) in report.cells
        ]
    return [
        {"row": prompt, "column": kind, "n": cell.n}
        for (prompt, kind), cell in sorted(report.cells.items())
    ]
