"""Completion-backend gateway: presets, caching, budget, and batch runs.

Two generation presets are built in:

* ``tl`` - deterministic: temperature = frequency_penalty = presence_penalty = 0,
  one sample.
* ``th`` - creative: temperature 0.85, frequency_penalty 1.24, presence_penalty
  1.71, five samples each selected as the best of three candidates.

Both use max_tokens 939 and top_p 1.  Completions are cached one file per
content key (atomic rename), so finished batches replay with zero backend
calls and byte-identical records.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import requests

from .datasets import ConceptRecord
from .errors import AuthError, BackendError, BudgetExceededError, InputError, SchemaError, UsageError
from .metrics import tokenize
from .perturb import PerturbKind, PerturbSpec, perturb_target
from .prompts import PromptTemplate, TaskSetting, render

log = logging.getLogger(__name__)

ENV_API_BASE = "ANALOGYBENCH_API_BASE"
ENV_API_KEY = "ANALOGYBENCH_API_KEY"
ENV_BUDGET_TOKENS = "ANALOGYBENCH_BUDGET_TOKENS"

DEFAULT_MAX_TOKENS = 939
DEFAULT_TOP_P = 1.0


class ConfigPreset(str, Enum):
    TL = "tl"
    TH = "th"
    CUSTOM = "custom"


@dataclass(frozen=True)
class GenerationConfig:
    model_id: str
    temperature: float = 0.0
    frequency_penalty: float = 0.0
    presence_penalty: float = 0.0
    top_p: float = DEFAULT_TOP_P
    max_tokens: int = DEFAULT_MAX_TOKENS
    best_of: int = 1
    num_samples: int = 1

    def __post_init__(self) -> None:
        if not self.model_id:
            raise UsageError("model_id must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise UsageError("temperature must lie in [0, 2]")
        if not 0.0 < self.top_p <= 1.0:
            raise UsageError("top_p must lie in (0, 1]")
        if self.max_tokens < 1:
            raise UsageError("max_tokens must be positive")
        if self.best_of < 1 or self.num_samples < 1:
            raise UsageError("best_of and num_samples must be >= 1")

    @property
    def deterministic(self) -> bool:
        return self.temperature == 0.0


def tl_config(model_id: str, max_tokens: int = DEFAULT_MAX_TOKENS) -> GenerationConfig:
    return GenerationConfig(model_id=model_id, max_tokens=max_tokens)


def th_config(model_id: str, max_tokens: int = DEFAULT_MAX_TOKENS) -> GenerationConfig:
    return GenerationConfig(
        model_id=model_id,
        temperature=0.85,
        frequency_penalty=1.24,
        presence_penalty=1.71,
        max_tokens=max_tokens,
        best_of=3,
        num_samples=5,
    )


def preset_of(config: GenerationConfig) -> ConfigPreset:
    if replace(config, model_id="m", max_tokens=DEFAULT_MAX_TOKENS) == tl_config("m"):
        return ConfigPreset.TL
    if replace(config, model_id="m", max_tokens=DEFAULT_MAX_TOKENS) == th_config("m"):
        return ConfigPreset.TH
    return ConfigPreset.CUSTOM


def config_for_preset(preset: ConfigPreset | str, model_id: str) -> GenerationConfig:
    preset = ConfigPreset(preset)
    if preset is ConfigPreset.TL:
        return tl_config(model_id)
    if preset is ConfigPreset.TH:
        return th_config(model_id)
    raise UsageError("custom presets need an explicit GenerationConfig")


def cache_key(rendered_prompt: str, config: GenerationConfig, sample_index: int) -> str:
    """Stable content hash; deterministic (temperature 0) configs collapse samples to 0."""
    effective_sample = 0 if config.deterministic else sample_index
    payload = json.dumps(
        {
            "prompt": rendered_prompt,
            "model": config.model_id,
            "temperature": config.temperature,
            "frequency_penalty": config.frequency_penalty,
            "presence_penalty": config.presence_penalty,
            "top_p": config.top_p,
            "max_tokens": config.max_tokens,
            "best_of": config.best_of,
            "sample_index": effective_sample,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class GenerationRecord:
    concept_id: str
    prompt_id: str
    perturb: str  # encoded PerturbSpec, e.g. "none" or "replace:17"
    rendered_prompt: str
    config_preset: ConfigPreset
    model_id: str
    sample_index: int
    completion: str
    cache_key: str
    created_at: str
    source: str | None = None  # WSRC: the reference source rendered into the prompt
    selection: str = "single"  # how this completion was picked (best_of handling)

    def to_dict(self) -> dict:
        out = {
            "concept_id": self.concept_id,
            "prompt_id": self.prompt_id,
            "perturb": self.perturb,
            "rendered_prompt": self.rendered_prompt,
            "config_preset": self.config_preset.value,
            "model_id": self.model_id,
            "sample_index": self.sample_index,
            "completion": self.completion,
            "cache_key": self.cache_key,
            "created_at": self.created_at,
            "selection": self.selection,
        }
        if self.source is not None:
            out["source"] = self.source
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "GenerationRecord":
        try:
            return cls(
                concept_id=obj["concept_id"],
                prompt_id=obj["prompt_id"],
                perturb=obj["perturb"],
                rendered_prompt=obj["rendered_prompt"],
                config_preset=ConfigPreset(obj["config_preset"]),
                model_id=obj["model_id"],
                sample_index=int(obj["sample_index"]),
                completion=obj["completion"],
                cache_key=obj["cache_key"],
                created_at=obj["created_at"],
                source=obj.get("source"),
                selection=obj.get("selection", "single"),
            )
        except (KeyError, ValueError) as exc:
            raise SchemaError(f"malformed generation record: {exc}") from exc


def write_generations(records: Iterable[GenerationRecord], path: str | Path) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for record in records:
                fh.write(json.dumps(record.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
    except OSError as exc:
        raise InputError(f"cannot write generations {path}: {exc}") from exc


def load_generations(path: str | Path) -> list[GenerationRecord]:
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read generations {path}: {exc}") from exc
    records = []
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
        records.append(GenerationRecord.from_dict(obj))
    return records


class CompletionCache:
    """One JSON file per cache key, published atomically (temp + rename)."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> dict | None:
        path = self._path(key)
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"corrupt cache entry {path}: {exc}") from exc

    def put(self, key: str, entry: dict) -> None:
        path = self._path(key)
        tmp = path.with_name(f".{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
        tmp.write_text(json.dumps(entry, ensure_ascii=False, sort_keys=True), encoding="utf-8")
        os.replace(tmp, path)


class MemoryCache:
    """Dict-backed cache for tests and throwaway runs."""

    def __init__(self) -> None:
        self._entries: dict[str, dict] = {}
        self._lock = threading.Lock()

    def get(self, key: str) -> dict | None:
        with self._lock:
            return self._entries.get(key)

    def put(self, key: str, entry: dict) -> None:
        with self._lock:
            self._entries[key] = entry


class BudgetMeter:
    """Token budget guard: refuses a call *before* it would cross the cap."""

    def __init__(self, cap_tokens: int | None):
        self.cap_tokens = cap_tokens
        self.spent = 0
        self._lock = threading.Lock()

    @staticmethod
    def estimate(prompt: str, config: GenerationConfig) -> int:
        prompt_tokens = max(1, len(prompt) // 4)
        return prompt_tokens + config.max_tokens * max(config.best_of, 1)

    def reserve(self, prompt: str, config: GenerationConfig) -> int:
        estimate = self.estimate(prompt, config)
        if self.cap_tokens is None:
            return estimate
        with self._lock:
            if self.spent + estimate > self.cap_tokens:
                raise BudgetExceededError(
                    f"estimated {estimate} tokens would exceed cap "
                    f"({self.spent}/{self.cap_tokens} already spent)"
                )
            self.spent += estimate
        return estimate

    def settle(self, reserved: int, actual: int | None) -> None:
        if self.cap_tokens is None or actual is None:
            return
        with self._lock:
            self.spent += actual - reserved


class CompletionBackend(Protocol):
    def generate(self, prompt: str, config: GenerationConfig, sample_index: int) -> str:
        """Return one completion for the given sample slot."""
        ...

    def selection_mode(self, config: GenerationConfig) -> str:
        ...


_MOCK_SOURCES = [
    "a river delta", "a clockwork orchestra", "a busy post office", "a relay race",
    "a city power grid", "a library index", "a beehive", "a traffic roundabout",
    "a factory assembly line", "a garden trellis",
]
_MOCK_FILLER = [
    "both move pieces along fixed paths", "each part does one small job",
    "the whole depends on steady flow", "signals pass from stage to stage",
    "small units combine into larger structure", "energy is traded for order",
    "blockages upstream starve everything downstream", "timing keeps the parts aligned",
]
_MOCK_STOPWORDS = {
    "explain", "using", "an", "analogy", "create", "to", "what", "is", "used",
    "use", "a", "how", "like", "similar", "analogous", "in", "plain", "language",
    "second", "grader", "well", "known", "often", "involving",
}


class MockBackend:
    """Deterministic offline backend: completion is a pure function of the request."""

    def __init__(self) -> None:
        self.call_count = 0

    def generate(self, prompt: str, config: GenerationConfig, sample_index: int) -> str:
        self.call_count += 1
        seed_material = f"{prompt}\x1f{config.model_id}\x1f{config.temperature}\x1f{sample_index}"
        digest = hashlib.sha256(seed_material.encode("utf-8")).digest()
        rng = random.Random(int.from_bytes(digest[:8], "big"))
        content = [w for w in tokenize(prompt) if w not in _MOCK_STOPWORDS]
        topic = " ".join(content) if content else "this idea"
        source = rng.choice(_MOCK_SOURCES)
        clauses = "; ".join(rng.choice(_MOCK_FILLER) for _ in range(rng.randrange(2, 4)))
        return f"{topic} is like {source}: {clauses}."

    def selection_mode(self, config: GenerationConfig) -> str:
        return "single" if config.best_of == 1 else "backend_best_of"


class ReplayBackend:
    """Serves completions recorded in a generations JSONL file; never goes live."""

    def __init__(self, path: str | Path):
        self._by_key = {rec.cache_key: rec.completion for rec in load_generations(path)}
        self.call_count = 0

    def generate(self, prompt: str, config: GenerationConfig, sample_index: int) -> str:
        self.call_count += 1
        key = cache_key(prompt, config, sample_index)
        try:
            return self._by_key[key]
        except KeyError:
            raise BackendError(f"replay file has no completion for key {key[:12]}...") from None

    def selection_mode(self, config: GenerationConfig) -> str:
        return "replay"


class HttpBackend:
    """Generic JSON completion endpoint.

    Request body: {model, prompt, temperature, top_p, max_tokens,
    frequency_penalty, presence_penalty, best_of, n}; response must carry
    choices[*].text.  When the endpoint does not support best_of, the
    backend requests best_of candidates itself and keeps the one with the
    highest mean token log-probability (choices[*].logprobs.token_logprobs).
    """

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        supports_best_of: bool = True,
        max_retries: int = 3,
        requests_per_minute: float | None = 60.0,
        timeout: float = 120.0,
    ):
        self.base_url = base_url or os.environ.get(ENV_API_BASE)
        if not self.base_url:
            raise AuthError(f"no backend base URL configured (set {ENV_API_BASE})")
        self.api_key = api_key or os.environ.get(ENV_API_KEY)
        if not self.api_key:
            raise AuthError(f"no backend credential configured (set {ENV_API_KEY})")
        self.supports_best_of = supports_best_of
        self.max_retries = max_retries
        self.min_interval = 60.0 / requests_per_minute if requests_per_minute else 0.0
        self.timeout = timeout
        self.call_count = 0
        self._lock = threading.Lock()
        self._last_request = 0.0

    def _throttle(self) -> None:
        if self.min_interval <= 0:
            return
        with self._lock:
            wait = self._last_request + self.min_interval - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._last_request = time.monotonic()

    def _post(self, body: dict) -> dict:
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            self._throttle()
            try:
                response = requests.post(
                    self.base_url,
                    json=body,
                    headers={"Authorization": f"Bearer {self.api_key}"},
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                last_error = exc
            else:
                if response.status_code in (401, 403):
                    raise AuthError(f"backend rejected credential (HTTP {response.status_code})")
                if response.status_code == 200:
                    try:
                        return response.json()
                    except ValueError as exc:
                        raise BackendError(f"backend returned non-JSON body: {exc}") from exc
                if response.status_code not in (429,) and response.status_code < 500:
                    raise BackendError(f"backend error HTTP {response.status_code}: {response.text[:200]}")
                last_error = BackendError(f"backend error HTTP {response.status_code}")
            if attempt < self.max_retries:
                time.sleep(0.5 * 2**attempt)
        raise BackendError(f"backend unreachable after {self.max_retries + 1} attempts: {last_error}")

    def generate(self, prompt: str, config: GenerationConfig, sample_index: int) -> str:
        self.call_count += 1
        body = {
            "model": config.model_id,
            "prompt": prompt,
            "temperature": config.temperature,
            "top_p": config.top_p,
            "max_tokens": config.max_tokens,
            "frequency_penalty": config.frequency_penalty,
            "presence_penalty": config.presence_penalty,
        }
        if self.supports_best_of:
            body["best_of"] = config.best_of
            body["n"] = 1
        else:
            body["n"] = config.best_of
            body["logprobs"] = 0
        payload = self._post(body)
        choices = payload.get("choices")
        if not isinstance(choices, list) or not choices:
            raise BackendError("backend response has no choices")
        if self.supports_best_of or len(choices) == 1:
            return str(choices[0].get("text", ""))
        return str(max(choices, key=self._mean_logprob).get("text", ""))

    @staticmethod
    def _mean_logprob(choice: dict) -> float:
        logprobs = (choice.get("logprobs") or {}).get("token_logprobs") or []
        values = [v for v in logprobs if isinstance(v, (int, float))]
        return sum(values) / len(values) if values else float("-inf")

    def selection_mode(self, config: GenerationConfig) -> str:
        if config.best_of == 1:
            return "single"
        return "backend_best_of" if self.supports_best_of else "client_max_logprob"


def _utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class GenerationGateway:
    """Caching front door to a completion backend."""

    def __init__(
        self,
        backend: CompletionBackend,
        cache: CompletionCache | MemoryCache | None = None,
        budget: BudgetMeter | None = None,
        max_workers: int = 4,
    ):
        self.backend = backend
        self.cache = cache if cache is not None else MemoryCache()
        self.budget = budget or BudgetMeter(_budget_from_env())
        self.max_workers = max(1, max_workers)

    def complete_one(self, prompt: str, config: GenerationConfig, sample_index: int) -> dict:
        """One cached completion slot; returns the cache entry."""
        effective_sample = 0 if config.deterministic else sample_index
        key = cache_key(prompt, config, sample_index)
        entry = self.cache.get(key)
        if entry is not None:
            return {"cache_key": key, **entry}
        reserved = self.budget.reserve(prompt, config)
        completion = self.backend.generate(prompt, config, effective_sample)
        self.budget.settle(reserved, None)
        entry = {
            "completion": completion,
            "created_at": _utc_now(),
            "model_id": config.model_id,
            "sample_index": effective_sample,
            "selection": self.backend.selection_mode(config),
        }
        self.cache.put(key, entry)
        return {"cache_key": key, **entry}

    def complete(self, prompt: str, config: GenerationConfig) -> list[str]:
        """num_samples completions in stable sample order, all cached before return."""
        return [self.complete_one(prompt, config, i)["completion"] for i in range(config.num_samples)]


def derive_cell_seed(base_seed: int, concept_id: str) -> int:
    digest = hashlib.sha256(f"{base_seed}\x1f{concept_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class PlannedCell:
    index: int
    concept_id: str
    template_id: str
    source: str | None
    perturb: PerturbSpec
    rendered_prompt: str
    preset: ConfigPreset
    config: GenerationConfig
    sample_index: int
    cache_key: str


@dataclass
class BatchFailure:
    cell: PlannedCell
    error: str


@dataclass
class BatchResult:
    records: list[GenerationRecord]
    failures: list[BatchFailure] = field(default_factory=list)


def plan_batch(
    dataset: Sequence[ConceptRecord],
    templates: Sequence[PromptTemplate],
    configs: Sequence[GenerationConfig],
    perturb_spec: PerturbSpec = PerturbSpec(),
) -> list[PlannedCell]:
    """Deterministic Cartesian plan: dataset order, template id, config, sample.

    WSRC produces one unit per reference source.  Each concept gets its own
    perturbation seed derived from (base seed, concept id), so a concept is
    misspelled the same way across every template, config, and sample.
    """
    if not templates:
        raise UsageError("no templates selected")
    settings = {t.setting for t in templates}
    if len(settings) > 1:
        raise UsageError(f"templates span multiple settings: {sorted(s.value for s in settings)}")
    setting = settings.pop()
    ordered_templates = sorted(templates, key=lambda t: t.id)

    cells: list[PlannedCell] = []
    for concept in dataset:
        if perturb_spec.kind is PerturbKind.NONE:
            cell_spec = perturb_spec
            target = concept.target
        else:
            cell_spec = PerturbSpec(perturb_spec.kind, derive_cell_seed(perturb_spec.seed, concept.id))
            target = perturb_target(concept.target, cell_spec)
        if setting is TaskSetting.WSRC:
            if not concept.wsrc_eligible:
                raise UsageError(f"concept {concept.id!r} has no references; not WSRC-eligible")
            units: list[str | None] = [ref.source for ref in concept.references]
        else:
            units = [None]
        for source in units:
            for template in ordered_templates:
                prompt = render(template, target, source)
                for config in configs:
                    preset = preset_of(config)
                    for sample_index in range(config.num_samples):
                        cells.append(
                            PlannedCell(
                                index=len(cells),
                                concept_id=concept.id,
                                template_id=template.id,
                                source=source,
                                perturb=cell_spec,
                                rendered_prompt=prompt,
                                preset=preset,
                                config=config,
                                sample_index=sample_index,
                                cache_key=cache_key(prompt, config, sample_index),
                            )
                        )
    return cells


def run_batch(
    gateway: GenerationGateway,
    plan: Sequence[PlannedCell],
    keep_going: bool = False,
) -> BatchResult:
    """Execute a plan (cache hits skip the backend); output follows plan order."""
    results: dict[int, GenerationRecord] = {}
    failures: list[BatchFailure] = []
    lock = threading.Lock()

    def execute(cell: PlannedCell) -> None:
        entry = gateway.complete_one(cell.rendered_prompt, cell.config, cell.sample_index)
        record = GenerationRecord(
            concept_id=cell.concept_id,
            prompt_id=cell.template_id,
            perturb=cell.perturb.encode(),
            rendered_prompt=cell.rendered_prompt,
            config_preset=cell.preset,
            model_id=cell.config.model_id,
            sample_index=cell.sample_index,
            completion=entry["completion"],
            cache_key=entry["cache_key"],
            created_at=entry["created_at"],
            source=cell.source,
            selection=entry.get("selection", "single"),
        )
        with lock:
            results[cell.index] = record

    if gateway.max_workers == 1:
        for cell in plan:
            try:
                execute(cell)
            except Exception as exc:
                if not keep_going:
                    raise
                log.warning("cell %d failed: %s", cell.index, exc)
                failures.append(BatchFailure(cell=cell, error=str(exc)))
    else:
        with ThreadPoolExecutor(max_workers=gateway.max_workers) as pool:
            futures = {pool.submit(execute, cell): cell for cell in plan}
            for future, cell in futures.items():
                try:
                    future.result()
                except Exception as exc:
                    if not keep_going:
                        raise
                    log.warning("cell %d failed: %s", cell.index, exc)
                    failures.append(BatchFailure(cell=cell, error=str(exc)))

    records = [results[i] for i in sorted(results)]
    failures.sort(key=lambda f: f.cell.index)
    return BatchResult(records=records, failures=failures)


def _budget_from_env() -> int | None:
    raw = os.environ.get(ENV_BUDGET_TOKENS)
    if not raw:
        return None
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{ENV_BUDGET_TOKENS} must be an integer, got {raw!r}") from None
