"""Dataset schema, JSONL loader, and corpus statistics.

File contract (one JSON object per line, UTF-8, LF):

    {"id": str, "target": str,
     "references": [{"id": str, "source": str, "text": str}],
     "dataset": "std" | "saqa" | "custom"}

``text`` may be empty (standard-analogy records carry source concepts only);
such references count toward source matching but are skipped by text-overlap
metrics in matched mode.  Targets are stored verbatim; lowercasing happens at
prompt render time.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InputError, SchemaError


class DatasetTag(str, Enum):
    STD = "std"
    SAQA = "saqa"
    CUSTOM = "custom"


@dataclass(frozen=True)
class ReferenceAnalogy:
    """One reference analogy: a source concept plus an optional explanation."""

    id: str
    source: str
    text: str = ""


@dataclass(frozen=True)
class ConceptRecord:
    """A target concept with zero or more reference analogies."""

    id: str
    target: str
    references: tuple[ReferenceAnalogy, ...] = field(default_factory=tuple)
    dataset_tag: DatasetTag = DatasetTag.CUSTOM

    @property
    def wsrc_eligible(self) -> bool:
        return len(self.references) > 0


@dataclass(frozen=True)
class DatasetStats:
    concept_count: int
    reference_count: int
    wsrc_eligible_count: int


def _require(condition: bool, lineno: int, message: str) -> None:
    if not condition:
        raise SchemaError(f"line {lineno}: {message}")


def _parse_record(obj: object, lineno: int, seen_ids: set[str]) -> ConceptRecord:
    _require(isinstance(obj, dict), lineno, "expected a JSON object")
    assert isinstance(obj, dict)

    concept_id = obj.get("id")
    _require(isinstance(concept_id, str) and concept_id != "", lineno, "missing or empty 'id'")
    _require(concept_id not in seen_ids, lineno, f"duplicate concept id {concept_id!r}")
    seen_ids.add(concept_id)

    target = obj.get("target")
    _require(isinstance(target, str) and target.strip() != "", lineno, "missing or empty 'target'")

    tag_raw = obj.get("dataset", DatasetTag.CUSTOM.value)
    try:
        tag = DatasetTag(tag_raw)
    except ValueError:
        raise SchemaError(f"line {lineno}: unknown dataset tag {tag_raw!r}") from None

    refs_raw = obj.get("references", [])
    _require(isinstance(refs_raw, list), lineno, "'references' must be a list")
    references = []
    ref_ids: set[str] = set()
    for ref in refs_raw:
        _require(isinstance(ref, dict), lineno, "each reference must be an object")
        ref_id = ref.get("id")
        _require(isinstance(ref_id, str) and ref_id != "", lineno, "missing or empty reference 'id'")
        _require(ref_id not in ref_ids, lineno, f"duplicate reference id {ref_id!r}")
        ref_ids.add(ref_id)
        source = ref.get("source")
        _require(isinstance(source, str) and source.strip() != "", lineno, "missing or empty reference 'source'")
        text = ref.get("text", "")
        _require(isinstance(text, str), lineno, "reference 'text' must be a string")
        references.append(ReferenceAnalogy(id=ref_id, source=source, text=text))

    return ConceptRecord(id=concept_id, target=target, references=tuple(references), dataset_tag=tag)


def load_dataset(path: str | Path, expected_tag: DatasetTag | str | None = None) -> list[ConceptRecord]:
    """Load and validate a dataset file, rejecting the whole file on any violation.

    Records come back in file order.  When ``expected_tag`` is given, every
    record must carry that tag.
    """
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read dataset {path}: {exc}") from exc
    return parse_dataset(raw, expected_tag=expected_tag)


def parse_dataset(text: str, expected_tag: DatasetTag | str | None = None) -> list[ConceptRecord]:
    if expected_tag is not None:
        expected_tag = DatasetTag(expected_tag)
    records: list[ConceptRecord] = []
    seen_ids: set[str] = set()
    for lineno, line in enumerate(io.StringIO(text), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
        record = _parse_record(obj, lineno, seen_ids)
        if expected_tag is not None and record.dataset_tag is not expected_tag:
            raise SchemaError(
                f"line {lineno}: dataset tag {record.dataset_tag.value!r} != expected {expected_tag.value!r}"
            )
        records.append(record)
    return records


def record_to_dict(record: ConceptRecord) -> dict:
    return {
        "id": record.id,
        "target": record.target,
        "references": [{"id": r.id, "source": r.source, "text": r.text} for r in record.references],
        "dataset": record.dataset_tag.value,
    }


def dump_dataset(records: Iterable[ConceptRecord]) -> str:
    """Serialize to the JSONL contract; ``parse_dataset`` round-trips it."""
    return "".join(json.dumps(record_to_dict(r), ensure_ascii=False) + "\n" for r in records)


def save_dataset(records: Iterable[ConceptRecord], path: str | Path) -> None:
    try:
        Path(path).write_text(dump_dataset(records), encoding="utf-8", newline="\n")
    except OSError as exc:
        raise InputError(f"cannot write dataset {path}: {exc}") from exc


def dataset_stats(records: Sequence[ConceptRecord]) -> DatasetStats:
    return DatasetStats(
        concept_count=len(records),
        reference_count=sum(len(r.references) for r in records),
        wsrc_eligible_count=sum(1 for r in records if r.wsrc_eligible),
    )


def reference_index(records: Sequence[ConceptRecord]) -> dict[str, set[str]]:
    """Map concept id -> set of its reference ids (for integrity checks)."""
    return {r.id: {ref.id for ref in r.references} for r in records}
