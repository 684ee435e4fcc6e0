"""Prompt template registry and rendering.

Four task settings are covered by the built-in templates:

* ``NO_SRC``  - produce an analogous source concept for a bare target.
* ``WSRC``    - explain the similarity between a given target and source.
* ``NO_ANLGY``- control prompts that ask for plain explanations, no analogy.
* ``STD``     - retrieval-flavored prompts for well-known standard analogies.

Patterns carry a ``<target>`` placeholder (exactly once) and, for WSRC only,
a ``<src>`` placeholder.  Rendering lowercases the inserted concepts; the
surrounding template text is preserved byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import InputError, MissingSourceError, SchemaError, UnexpectedSourceError, UsageError


class TaskSetting(str, Enum):
    NO_SRC = "no_src"
    WSRC = "wsrc"
    NO_ANLGY = "no_anlgy"
    STD = "std"


class PromptStyle(str, Enum):
    QUESTION = "question"
    STATEMENT = "statement"


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    setting: TaskSetting
    pattern: str

    def __post_init__(self) -> None:
        if self.pattern.count("<target>") != 1:
            raise SchemaError(f"template {self.id}: pattern must contain '<target>' exactly once")
        src_count = self.pattern.count("<src>")
        if self.setting is TaskSetting.WSRC and src_count != 1:
            raise SchemaError(f"template {self.id}: WSRC pattern must contain '<src>' exactly once")
        if self.setting is not TaskSetting.WSRC and src_count != 0:
            raise SchemaError(f"template {self.id}: only WSRC patterns may contain '<src>'")

    @property
    def style(self) -> PromptStyle:
        return PromptStyle.QUESTION if self.pattern.endswith("?") else PromptStyle.STATEMENT

    @property
    def short_id(self) -> str:
        """'NO_SRC.P3' -> 'P3'."""
        return self.id.rsplit(".", 1)[-1]


_BUILTIN_PATTERNS: dict[TaskSetting, list[str]] = {
    TaskSetting.NO_SRC: [
        "Explain <target> using an analogy.",
        "Create an analogy to explain <target>.",
        "Using an analogy, explain <target>.",
        "What analogy is used to explain <target>?",
        "Use an analogy to explain <target>.",
    ],
    TaskSetting.WSRC: [
        "Explain <target> using an analogy involving <src>.",
        "Explain how <target> is analogous to <src>.",
        "Explain how <target> is like <src>.",
        "Explain how <target> is similar to <src>.",
        "How is <target> analogous to <src>?",
        "How is <target> like <src>?",
        "How is <target> similar to <src>?",
    ],
    TaskSetting.NO_ANLGY: [
        "Explain <target>.",
        "What is <target>?",
        "Explain <target> in plain language to a second grader.",
    ],
    TaskSetting.STD: [
        "Explain <target> using an analogy.",
        "Explain <target> using a well-known analogy.",
        "What analogy is often used to explain <target>?",
        "Using a well-known analogy, explain <target>.",
        "Using an analogy, explain <target>.",
        "What is a well-known analogy to explain <target>?",
        "What is analogous to <target>?",
    ],
}


def builtin_templates(setting: TaskSetting | str) -> list[PromptTemplate]:
    """Return the built-in templates for a setting, in registry order (P1, P2, ...)."""
    setting = TaskSetting(setting)
    return [
        PromptTemplate(id=f"{setting.name}.P{i}", setting=setting, pattern=pattern)
        for i, pattern in enumerate(_BUILTIN_PATTERNS[setting], start=1)
    ]


def all_builtin_templates() -> list[PromptTemplate]:
    out: list[PromptTemplate] = []
    for setting in TaskSetting:
        out.extend(builtin_templates(setting))
    return out


def get_template(template_id: str) -> PromptTemplate:
    for template in all_builtin_templates():
        if template.id == template_id:
            return template
    raise UsageError(f"unknown template id {template_id!r}")


def render(template: PromptTemplate, target: str, src: str | None = None) -> str:
    """Substitute lowercased concepts into the pattern.

    ``src`` is required for WSRC templates and rejected for all others.
    """
    if not target or not target.strip():
        raise UsageError(f"template {template.id}: target must be non-empty")
    if template.setting is TaskSetting.WSRC:
        if src is None:
            raise MissingSourceError(f"template {template.id} requires a source concept")
    elif src is not None:
        raise UnexpectedSourceError(f"template {template.id} takes no source concept")
    rendered = template.pattern.replace("<target>", target.lower())
    if src is not None:
        rendered = rendered.replace("<src>", src.lower())
    return rendered


def question_statement_pairs(setting: TaskSetting | str) -> list[tuple[str, str]]:
    """(statement id, question id) pairs used for style comparisons.

    WSRC pairs the synonymous statement/question phrasings; NO_SRC pairs its
    single question prompt against every statement prompt.
    """
    setting = TaskSetting(setting)
    if setting is TaskSetting.WSRC:
        return [("P2", "P5"), ("P3", "P6"), ("P4", "P7")]
    if setting is TaskSetting.NO_SRC:
        templates = builtin_templates(setting)
        questions = [t.short_id for t in templates if t.style is PromptStyle.QUESTION]
        statements = [t.short_id for t in templates if t.style is PromptStyle.STATEMENT]
        return [(s, q) for q in questions for s in statements]
    raise UsageError(f"no question/statement pairing defined for setting {setting.value!r}")


def load_templates_file(path: str | Path) -> list[PromptTemplate]:
    """Load custom templates from a JSON file: [{"id", "setting", "pattern"}].

    Style is derived from the pattern, never stored; placeholder invariants
    are enforced exactly as for the built-ins.
    """
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read template file {path}: {exc}") from exc
    try:
        entries = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"template file {path}: malformed JSON ({exc.msg})") from exc
    if not isinstance(entries, list):
        raise SchemaError(f"template file {path}: expected a JSON list")
    templates = []
    seen: set[str] = set()
    for entry in entries:
        if not isinstance(entry, dict) or not {"id", "setting", "pattern"} <= entry.keys():
            raise SchemaError(f"template file {path}: each entry needs id/setting/pattern")
        if entry["id"] in seen:
            raise SchemaError(f"template file {path}: duplicate template id {entry['id']!r}")
        seen.add(entry["id"])
        try:
            setting = TaskSetting(entry["setting"])
        except ValueError:
            raise SchemaError(f"template file {path}: unknown setting {entry['setting']!r}") from None
        templates.append(PromptTemplate(id=entry["id"], setting=setting, pattern=entry["pattern"]))
    return templates
