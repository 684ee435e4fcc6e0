"""Seeded character-level spelling-error injection for target concepts.

Four error kinds operate on the internal characters of one word of the
target (positions strictly between the word's first and last character):

* DELETE  - drop one internal character (word gets 1 shorter)
* PERMUTE - swap two adjacent internal characters (needs word length >= 4)
* INSERT  - add one random lowercase letter at an internal position
* REPLACE - change one internal character to a different random lowercase letter

Words shorter than 3 characters are never touched.  Exactly one uniformly
chosen eligible word is perturbed; if no word is eligible the target passes
through unchanged.  All randomness comes from ``random.Random(seed)``
(Mersenne Twister), so a given (target, kind, seed) maps to the same output
on every platform and run.  OS entropy is never consulted.
"""

from __future__ import annotations

import random
import re
import string
from dataclasses import dataclass
from enum import Enum


class PerturbKind(str, Enum):
    NONE = "none"
    DELETE = "delete"
    PERMUTE = "permute"
    INSERT = "insert"
    REPLACE = "replace"


@dataclass(frozen=True)
class PerturbSpec:
    kind: PerturbKind = PerturbKind.NONE
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def encode(self) -> str:
        return self.kind.value if self.kind is PerturbKind.NONE else f"{self.kind.value}:{self.seed}"

    @classmethod
    def decode(cls, text: str) -> "PerturbSpec":
        kind, _, seed = text.partition(":")
        return cls(kind=PerturbKind(kind), seed=int(seed) if seed else 0)


_WORD = re.compile(r"\S+")

_MIN_LENGTH = {
    PerturbKind.DELETE: 3,
    PerturbKind.INSERT: 3,
    PerturbKind.REPLACE: 3,
    PerturbKind.PERMUTE: 4,
}


def eligible_words(target: str, kind: PerturbKind) -> list[int]:
    """Indices of whitespace-delimited words long enough for ``kind``."""
    if kind is PerturbKind.NONE:
        return []
    minimum = _MIN_LENGTH[kind]
    return [i for i, m in enumerate(_WORD.finditer(target)) if len(m.group()) >= minimum]


def _perturb_word(word: str, kind: PerturbKind, rng: random.Random) -> str:
    last = len(word) - 1  # internal positions are 1 .. last-1
    if kind is PerturbKind.DELETE:
        pos = rng.randrange(1, last)
        return word[:pos] + word[pos + 1 :]
    if kind is PerturbKind.PERMUTE:
        pos = rng.randrange(1, last - 1)  # swap (pos, pos+1), both internal
        return word[:pos] + word[pos + 1] + word[pos] + word[pos + 2 :]
    if kind is PerturbKind.INSERT:
        pos = rng.randrange(1, last + 1)
        letter = rng.choice(string.ascii_lowercase)
        return word[:pos] + letter + word[pos:]
    if kind is PerturbKind.REPLACE:
        pos = rng.randrange(1, last)
        alphabet = string.ascii_lowercase.replace(word[pos].lower(), "")
        return word[:pos] + rng.choice(alphabet) + word[pos + 1 :]
    raise AssertionError(kind)


def perturb_target(target: str, spec: PerturbSpec) -> str:
    """Apply one seeded spelling error to the target; degenerate inputs pass through."""
    if spec.kind is PerturbKind.NONE:
        return target
    candidates = eligible_words(target, spec.kind)
    if not candidates:
        return target
    rng = random.Random(spec.seed)
    chosen = candidates[rng.randrange(len(candidates))]
    span = list(_WORD.finditer(target))[chosen]
    mangled = _perturb_word(span.group(), spec.kind, rng)
    return target[: span.start()] + mangled + target[span.end() :]
