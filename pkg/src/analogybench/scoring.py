"""Scoring generated analogies against dataset references.

Matched mode scores a generation against its own concept's references
(max over the non-empty ones; WSRC generations only use references whose
source was in the prompt).  Random mode scores against one seeded draw
from the references of *other* concepts, which deliberately breaks the
content link while preserving the text style.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

import requests

from .datasets import ConceptRecord, ReferenceAnalogy
from .errors import (
    InputError,
    NoReferenceError,
    SchemaError,
    ScorerProtocolError,
    ScorerUnavailableError,
    UsageError,
)
from .gateway import GenerationRecord
from .metrics import MatcherConfig, meteor, rouge_l_f1

log = logging.getLogger(__name__)


class RefMode(str, Enum):
    MATCHED = "matched"
    RANDOM = "random"


@dataclass(frozen=True)
class MetricKind:
    kind: str  # "rouge_l" | "meteor" | "external"
    name: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("rouge_l", "meteor", "external"):
            raise UsageError(f"unknown metric kind {self.kind!r}")
        if self.kind == "external" and not self.name:
            raise UsageError("external metrics need a scorer name, e.g. 'external:bleurt'")

    def canonical(self) -> str:
        return self.kind if self.name is None else f"{self.kind}:{self.name}"

    @classmethod
    def parse(cls, text: str) -> "MetricKind":
        kind, _, name = text.partition(":")
        return cls(kind=kind, name=name or None)


ROUGE_L = MetricKind("rouge_l")
METEOR = MetricKind("meteor")


@dataclass(frozen=True)
class ScoreRecord:
    concept_id: str
    prompt_id: str
    preset: str
    model_id: str
    sample_index: int
    perturb: str
    metric: str
    ref_mode: RefMode
    reference_id: str
    value: float


SCORE_COLUMNS = [
    "concept_id", "prompt_id", "preset", "model_id", "sample_index",
    "perturb", "metric", "ref_mode", "reference_id", "value",
]


def write_scores(records: Iterable[ScoreRecord], path: str | Path) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SCORE_COLUMNS)
            for r in records:
                writer.writerow(
                    [
                        r.concept_id, r.prompt_id, r.preset, r.model_id, r.sample_index,
                        r.perturb, r.metric, r.ref_mode.value, r.reference_id,
                        repr(r.value),
                    ]
                )
    except OSError as exc:
        raise InputError(f"cannot write scores {path}: {exc}") from exc


def load_scores(path: str | Path, dataset: Sequence[ConceptRecord] | None = None) -> list[ScoreRecord]:
    """Read a scores CSV; with a dataset given, check referential integrity."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
    except OSError as exc:
        raise InputError(f"cannot read scores {path}: {exc}") from exc
    known_refs: set[str] | None = None
    if dataset is not None:
        known_refs = {ref.id for concept in dataset for ref in concept.references}
    records = []
    for lineno, row in enumerate(rows, start=2):
        try:
            record = ScoreRecord(
                concept_id=row["concept_id"],
                prompt_id=row["prompt_id"],
                preset=row["preset"],
                model_id=row["model_id"],
                sample_index=int(row["sample_index"]),
                perturb=row["perturb"],
                metric=row["metric"],
                ref_mode=RefMode(row["ref_mode"]),
                reference_id=row["reference_id"],
                value=float(row["value"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"scores {path}, line {lineno}: {exc}") from exc
        if known_refs is not None and record.reference_id not in known_refs:
            raise SchemaError(
                f"scores {path}, line {lineno}: reference id {record.reference_id!r} not in dataset"
            )
        records.append(record)
    return records


def external_score(candidate: str, reference: str, endpoint: str, timeout: float = 30.0) -> float:
    """Ask an external scorer service for its value, passed through unmodified."""
    url = endpoint.rstrip("/") + "/v1/score"
    try:
        response = requests.post(url, json={"candidate": candidate, "reference": reference}, timeout=timeout)
    except requests.RequestException as exc:
        raise ScorerUnavailableError(f"scorer at {endpoint} unreachable: {exc}") from exc
    if response.status_code == 503:
        raise ScorerUnavailableError(f"scorer at {endpoint} not ready (HTTP 503)")
    if response.status_code != 200:
        raise ScorerProtocolError(f"scorer returned HTTP {response.status_code}: {response.text[:200]}")
    try:
        payload = response.json()
    except ValueError as exc:
        raise ScorerProtocolError(f"scorer returned malformed JSON: {exc}") from exc
    score = payload.get("score") if isinstance(payload, dict) else None
    if not isinstance(score, (int, float)) or not math.isfinite(score):
        raise ScorerProtocolError(f"scorer response missing finite 'score': {payload!r}")
    return float(score)


class ExternalScorer:
    """Callable wrapper so batch scoring can treat the external metric like the native ones."""

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def __call__(self, candidate: str, reference: str) -> float:
        return external_score(candidate, reference, self.endpoint, self.timeout)


def _metric_fn(
    metric: MetricKind,
    matcher: MatcherConfig | None,
    external: Callable[[str, str], float] | None,
) -> Callable[[str, str], float]:
    if metric.kind == "rouge_l":
        return lambda cand, ref: rouge_l_f1(cand, ref).f1
    if metric.kind == "meteor":
        return lambda cand, ref: meteor(cand, ref, matcher)
    if external is None:
        raise UsageError(f"metric {metric.canonical()} needs a scorer endpoint")
    return external


def _random_draw(
    gen: GenerationRecord, rng_seed: int, pool: Sequence[tuple[str, ReferenceAnalogy]]
) -> tuple[str, ReferenceAnalogy]:
    """Seeded uniform draw, a pure function of (generation identity, seed)."""
    material = "\x1f".join(
        [
            str(rng_seed), gen.concept_id, gen.prompt_id, gen.config_preset.value,
            gen.model_id, str(gen.sample_index), gen.perturb, gen.source or "",
        ]
    )
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return pool[int.from_bytes(digest[:8], "big") % len(pool)]


def score_generation(
    gen: GenerationRecord,
    dataset: Sequence[ConceptRecord],
    metric: MetricKind,
    ref_mode: RefMode,
    rng_seed: int = 0,
    matcher: MatcherConfig | None = None,
    external: Callable[[str, str], float] | None = None,
) -> ScoreRecord:
    """Score one generation; matched = max over its references, random = seeded draw."""
    by_id = {concept.id: concept for concept in dataset}
    if gen.concept_id not in by_id:
        raise NoReferenceError(f"concept {gen.concept_id!r} not in dataset")
    fn = _metric_fn(metric, matcher, external)
    candidate = gen.completion.strip()

    if ref_mode is RefMode.MATCHED:
        refs = [r for r in by_id[gen.concept_id].references if r.text.strip()]
        if gen.source is not None:
            refs = [r for r in refs if r.source == gen.source]
        if not refs:
            raise NoReferenceError(f"concept {gen.concept_id!r} has no usable references for matched scoring")
        best_ref, best_value = refs[0], fn(candidate, refs[0].text)
        for ref in refs[1:]:
            value = fn(candidate, ref.text)
            if value > best_value:
                best_ref, best_value = ref, value
        chosen, value = best_ref, best_value
    else:
        pool = [
            (concept.id, ref)
            for concept in dataset
            if concept.id != gen.concept_id
            for ref in concept.references
            if ref.text.strip()
        ]
        if not pool:
            raise NoReferenceError("random mode needs at least one other concept with references")
        _, chosen = _random_draw(gen, rng_seed, pool)
        value = fn(candidate, chosen.text)

    return ScoreRecord(
        concept_id=gen.concept_id,
        prompt_id=gen.prompt_id,
        preset=gen.config_preset.value,
        model_id=gen.model_id,
        sample_index=gen.sample_index,
        perturb=gen.perturb.partition(":")[0],
        metric=metric.canonical(),
        ref_mode=ref_mode,
        reference_id=chosen.id,
        value=value,
    )


def score_batch(
    generations: Sequence[GenerationRecord],
    dataset: Sequence[ConceptRecord],
    metrics: Sequence[MetricKind],
    ref_modes: Sequence[RefMode],
    rng_seed: int = 0,
    matcher: MatcherConfig | None = None,
    external: Callable[[str, str], float] | None = None,
    skip_missing: bool = False,
) -> list[ScoreRecord]:
    """Score every (generation, metric, mode) cell in deterministic order."""
    records = []
    for gen in generations:
        for metric in metrics:
            for mode in ref_modes:
                try:
                    records.append(
                        score_generation(gen, dataset, metric, mode, rng_seed, matcher, external)
                    )
                except NoReferenceError:
                    if not skip_missing:
                        raise
                    log.warning(
                        "skipping %s/%s sample %d: no usable reference (%s)",
                        gen.concept_id, gen.prompt_id, gen.sample_index, mode.value,
                    )
    return records
