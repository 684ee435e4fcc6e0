"""Statistical machinery: aggregation, significance, rank correlation,
annotation aggregation, and automated source-match counting.

Condition means follow a two-stage rule: scores are first averaged over
sample indices within a concept, then over concepts.  Significance uses
Welch's unequal-variance two-tailed t-test by default (a paired variant is
available), with markers at p < 0.1 and p < 0.05.
"""

from __future__ import annotations

import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

from scipy.special import stdtr

from .datasets import ConceptRecord
from .errors import (
    EmptyCellError,
    LengthMismatchError,
    UnequalRatersError,
    UsageError,
    WrongArityError,
)
from .gateway import GenerationRecord
from .scoring import RefMode, ScoreRecord


@dataclass(frozen=True, order=True)
class ConditionKey:
    """One experimental condition: setting x prompt x preset x model x perturb."""

    setting: str
    prompt_id: str
    preset: str
    model_id: str
    perturb: str

    @property
    def row_id(self) -> str:
        """Short display id, e.g. 'P3_tl'."""
        short = self.prompt_id.rsplit(".", 1)[-1]
        return f"{short}_{self.preset}"


@dataclass(frozen=True)
class ConditionSample:
    condition: ConditionKey
    values: tuple[float, ...]  # one per concept, already averaged over samples

    @property
    def mean(self) -> float:
        return sum(self.values) / len(self.values)


def setting_of(prompt_id: str) -> str:
    """Prompt ids are '<SETTING>.P<n>'; recover the setting tag."""
    setting, _, _ = prompt_id.rpartition(".")
    return setting or prompt_id


def per_item_means(
    scores: Iterable[ScoreRecord], ref_mode: RefMode | None = RefMode.MATCHED
) -> dict[ConditionKey, dict[str, float]]:
    """Per-condition map of concept id -> sample-averaged score."""
    per_concept: dict[ConditionKey, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    for record in scores:
        if ref_mode is not None and record.ref_mode is not ref_mode:
            continue
        key = ConditionKey(
            setting=setting_of(record.prompt_id),
            prompt_id=record.prompt_id,
            preset=record.preset,
            model_id=record.model_id,
            perturb=record.perturb,
        )
        per_concept[key][record.concept_id].append(record.value)
    return {
        key: {concept: sum(vals) / len(vals) for concept, vals in concepts.items()}
        for key, concepts in per_concept.items()
    }


def mean_by_condition(
    scores: Iterable[ScoreRecord], ref_mode: RefMode | None = RefMode.MATCHED
) -> dict[ConditionKey, ConditionSample]:
    """Group scores into conditions; average samples within a concept first."""
    out = {}
    for key, items in per_item_means(scores, ref_mode).items():
        values = tuple(value for _, value in sorted(items.items()))
        out[key] = ConditionSample(condition=key, values=values)
    return out


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: float
    p_two_tailed: float
    degenerate: bool = False


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Welch's unequal-variance t-test with Welch-Satterthwaite df."""
    if len(a) < 2 or len(b) < 2:
        raise UsageError("welch_t_test needs at least 2 values per sample")
    na, nb = len(a), len(b)
    mean_a, mean_b = sum(a) / na, sum(b) / nb
    var_a = sum((x - mean_a) ** 2 for x in a) / (na - 1)
    var_b = sum((x - mean_b) ** 2 for x in b) / (nb - 1)
    if var_a == 0.0 and var_b == 0.0:
        if mean_a == mean_b:
            return TTestResult(t=0.0, df=float(na + nb - 2), p_two_tailed=1.0, degenerate=True)
        return TTestResult(t=math.inf if mean_a > mean_b else -math.inf,
                           df=float(na + nb - 2), p_two_tailed=0.0, degenerate=True)
    se2 = var_a / na + var_b / nb
    t = (mean_a - mean_b) / math.sqrt(se2)
    df = se2**2 / ((var_a / na) ** 2 / (na - 1) + (var_b / nb) ** 2 / (nb - 1))
    p = 2.0 * float(stdtr(df, -abs(t)))
    return TTestResult(t=t, df=df, p_two_tailed=p)


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Paired-sample variant (conditions share concepts); exposed behind a flag."""
    if len(a) != len(b):
        raise LengthMismatchError(f"paired samples differ in length: {len(a)} vs {len(b)}")
    if len(a) < 2:
        raise UsageError("paired_t_test needs at least 2 pairs")
    diffs = [x - y for x, y in zip(a, b)]
    n = len(diffs)
    mean_d = sum(diffs) / n
    var_d = sum((d - mean_d) ** 2 for d in diffs) / (n - 1)
    if var_d == 0.0:
        if mean_d == 0.0:
            return TTestResult(t=0.0, df=float(n - 1), p_two_tailed=1.0, degenerate=True)
        return TTestResult(t=math.inf if mean_d > 0 else -math.inf,
                           df=float(n - 1), p_two_tailed=0.0, degenerate=True)
    t = mean_d / math.sqrt(var_d / n)
    df = float(n - 1)
    p = 2.0 * float(stdtr(df, -abs(t)))
    return TTestResult(t=t, df=df, p_two_tailed=p)


class SignificanceMark(str, Enum):
    NONE = ""
    STAR = "*"     # p < 0.1
    DAGGER = "†"  # p < 0.05


def significance_mark(p: float) -> SignificanceMark:
    if p < 0.05:
        return SignificanceMark.DAGGER
    if p < 0.1:
        return SignificanceMark.STAR
    return SignificanceMark.NONE


def kendall_tau_b(x: Sequence[float], y: Sequence[float]) -> float:
    """Tau-b rank correlation with tie correction, by explicit pair counting."""
    if len(x) != len(y):
        raise LengthMismatchError(f"paired inputs differ in length: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 2:
        raise UsageError("kendall_tau_b needs at least 2 pairs")
    concordant = discordant = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = (x[i] > x[j]) - (x[i] < x[j])
            dy = (y[i] > y[j]) - (y[i] < y[j])
            product = dx * dy
            if product > 0:
                concordant += 1
            elif product < 0:
                discordant += 1
    n0 = n * (n - 1) // 2
    n1 = sum(c * (c - 1) // 2 for c in Counter(x).values())
    n2 = sum(c * (c - 1) // 2 for c in Counter(y).values())
    denom = math.sqrt((n0 - n1) * (n0 - n2))
    if denom == 0.0:
        raise UsageError("kendall_tau_b undefined: one input is constant")
    return (concordant - discordant) / denom


class Verdict(str, Enum):
    YES = "yes"
    NO = "no"
    CANT_DECIDE = "cant_decide"


class VoteOutcome(str, Enum):
    MEANINGFUL = "meaningful"
    NOT_MEANINGFUL = "not_meaningful"
    DISCARDED = "discarded"


@dataclass(frozen=True)
class AnnotationRecord:
    analogy_id: str
    worker_id: str
    verdict: Verdict
    rationale: str = ""


def majority_vote(records: Sequence[AnnotationRecord]) -> VoteOutcome:
    """Three-rater majority; ties and can't-decide majorities are discarded."""
    if len(records) != 3:
        raise WrongArityError(f"expected exactly 3 annotations, got {len(records)}")
    if len({r.analogy_id for r in records}) != 1:
        raise WrongArityError("annotations must share one analogy_id")
    counts = Counter(r.verdict for r in records)
    if counts[Verdict.YES] >= 2:
        return VoteOutcome.MEANINGFUL
    if counts[Verdict.NO] >= 2:
        return VoteOutcome.NOT_MEANINGFUL
    return VoteOutcome.DISCARDED


@dataclass(frozen=True)
class FleissResult:
    kappa: float
    observed: float
    expected: float
    degenerate: bool = False  # expected agreement is 1 (single category used)


def fleiss_kappa(counts: Sequence[Sequence[int]]) -> FleissResult:
    """Fleiss' kappa from an item x category count matrix (equal raters per item)."""
    if not counts:
        raise UsageError("fleiss_kappa needs at least one item")
    raters = sum(counts[0])
    if raters < 2:
        raise UnequalRatersError("each item needs at least 2 ratings")
    for i, row in enumerate(counts):
        if sum(row) != raters:
            raise UnequalRatersError(f"item {i} has {sum(row)} ratings, expected {raters}")
        if any(c < 0 for c in row):
            raise UsageError(f"item {i} has a negative count")
    n_items = len(counts)
    per_item = [
        (sum(c * c for c in row) - raters) / (raters * (raters - 1)) for row in counts
    ]
    observed = sum(per_item) / n_items
    totals = [sum(row[j] for row in counts) for j in range(len(counts[0]))]
    grand = n_items * raters
    proportions = [t / grand for t in totals]
    expected = sum(p * p for p in proportions)
    if expected >= 1.0:
        return FleissResult(kappa=1.0, observed=observed, expected=expected, degenerate=True)
    kappa = (observed - expected) / (1.0 - expected)
    return FleissResult(kappa=kappa, observed=observed, expected=expected)


def annotation_matrix(records: Sequence[AnnotationRecord]) -> list[list[int]]:
    """Group annotations by analogy into a count matrix over (yes, no, cant_decide)."""
    order = [Verdict.YES, Verdict.NO, Verdict.CANT_DECIDE]
    grouped: dict[str, list[AnnotationRecord]] = defaultdict(list)
    for record in records:
        grouped[record.analogy_id].append(record)
    matrix = []
    for analogy_id in sorted(grouped):
        counts = Counter(r.verdict for r in grouped[analogy_id])
        matrix.append([counts[v] for v in order])
    return matrix


def meaningful_percentage(
    cells: Mapping[tuple[str, str], Sequence[VoteOutcome]]
) -> dict[tuple[str, str], float]:
    """Percent meaningful per (model_id, setting) cell, discards excluded."""
    out = {}
    for cell, outcomes in cells.items():
        meaningful = sum(1 for o in outcomes if o is VoteOutcome.MEANINGFUL)
        not_meaningful = sum(1 for o in outcomes if o is VoteOutcome.NOT_MEANINGFUL)
        kept = meaningful + not_meaningful
        if kept == 0:
            raise EmptyCellError(f"cell {cell} has no kept verdicts (all discarded)")
        out[cell] = 100.0 * meaningful / kept
    return out


class MatchMode(str, Enum):
    EXACT = "exact"
    SUBSTRING = "substring"


def match_sources(
    generations: Sequence[GenerationRecord],
    dataset: Sequence[ConceptRecord],
    mode: MatchMode = MatchMode.EXACT,
) -> dict[str, int]:
    """Count, per prompt id, generations whose text mentions a reference source.

    Exact mode requires the lowercased source to appear as a whole-word
    phrase; substring mode is raw containment.  A valid-but-different
    analogy never counts; this automates only literal source retrieval.
    """
    sources_by_concept = {
        concept.id: [ref.source.lower() for ref in concept.references] for concept in dataset
    }
    counts: dict[str, int] = defaultdict(int)
    for gen in generations:
        counts.setdefault(gen.prompt_id, 0)
        text = gen.completion.lower()
        if not text.strip():
            continue
        matched = False
        for source in sources_by_concept.get(gen.concept_id, []):
            if mode is MatchMode.EXACT:
                if re.search(rf"(?<!\w){re.escape(source)}(?!\w)", text):
                    matched = True
                    break
            elif source in text:
                matched = True
                break
        if matched:
            counts[gen.prompt_id] += 1
    return dict(counts)
