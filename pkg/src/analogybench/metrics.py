"""Reference-based text overlap metrics: ROUGE-L (F1) and METEOR.

Both metrics share one tokenizer: lowercase, split on maximal runs of
non-alphanumeric characters.  METEOR aligns unigrams in three stages
(exact match, Porter stem match, then synonym match when a synonym table
is configured), maximizing the number of matches; the fragmentation
penalty counts chunks of contiguous, order-preserving matches.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from . import porter
from .errors import ResourceError

_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)

# METEOR parameters (the metric's published defaults).
METEOR_ALPHA = 0.9
METEOR_BETA = 3.0
METEOR_GAMMA = 0.5


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric tokens; empty input gives an empty list."""
    return _TOKEN.findall(text.lower())


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Length of the longest common subsequence of two token sequences."""
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for token_a in a:
        current = [0]
        for j, token_b in enumerate(b, start=1):
            if token_a == token_b:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float


def rouge_l_f1(candidate: str, reference: str) -> RougeScore:
    """LCS-based precision/recall/F1 over tokens, each in [0, 1]."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    lcs = lcs_length(cand, ref)
    precision = lcs / len(cand) if cand else 0.0
    recall = lcs / len(ref) if ref else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return RougeScore(precision=precision, recall=recall, f1=f1)


@dataclass(frozen=True)
class MatcherConfig:
    """Resources for METEOR's staged matchers.

    Stemming is always on (built-in Porter); the synonym stage runs only
    when a synonym table is supplied.
    """

    synonyms: Mapping[str, frozenset[str]] | None = None

    @classmethod
    def from_synonym_file(cls, path: str | Path) -> "MatcherConfig":
        """Load a TSV synonym table (word<TAB>synonym per line, symmetric)."""
        try:
            raw = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ResourceError(f"cannot read synonym table {path}: {exc}") from exc
        table: dict[str, set[str]] = {}
        for lineno, line in enumerate(raw.splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ResourceError(f"synonym table {path}, line {lineno}: expected word<TAB>synonym")
            a, b = parts[0].lower(), parts[1].lower()
            table.setdefault(a, set()).add(b)
            table.setdefault(b, set()).add(a)
        return cls(synonyms={w: frozenset(s) for w, s in table.items()})

    def are_synonyms(self, a: str, b: str) -> bool:
        if self.synonyms is None:
            return False
        return b in self.synonyms.get(a, frozenset()) or a in self.synonyms.get(b, frozenset())


def _match_by_key(
    cand: list[str], ref: list[str], free_c: list[int], free_r: list[int], key
) -> list[tuple[int, int]]:
    """Greedy in-order matching on equal keys (maximal for equality relations)."""
    pending: dict[str, list[int]] = {}
    for j in free_r:
        pending.setdefault(key(ref[j]), []).append(j)
    matches = []
    for i in free_c:
        slots = pending.get(key(cand[i]))
        if slots:
            matches.append((i, slots.pop(0)))
    return matches


def _match_synonyms(
    cand: list[str], ref: list[str], free_c: list[int], free_r: list[int], config: MatcherConfig
) -> list[tuple[int, int]]:
    """Maximum bipartite matching (augmenting paths) under the synonym relation."""
    edges = {i: [j for j in free_r if config.are_synonyms(cand[i], ref[j])] for i in free_c}
    owner: dict[int, int] = {}

    def try_assign(i: int, banned: set[int]) -> bool:
        for j in edges[i]:
            if j in banned:
                continue
            banned.add(j)
            if j not in owner or try_assign(owner[j], banned):
                owner[j] = i
                return True
        return False

    for i in free_c:
        try_assign(i, set())
    return sorted((i, j) for j, i in owner.items())


def align_unigrams(
    cand: list[str], ref: list[str], config: MatcherConfig | None = None
) -> list[tuple[int, int]]:
    """Stage-wise unigram alignment; returns (candidate index, reference index) pairs."""
    config = config or MatcherConfig()
    matches: list[tuple[int, int]] = []
    free_c = list(range(len(cand)))
    free_r = list(range(len(ref)))

    def consume(stage_matches: list[tuple[int, int]]) -> None:
        matches.extend(stage_matches)
        used_c = {i for i, _ in stage_matches}
        used_r = {j for _, j in stage_matches}
        free_c[:] = [i for i in free_c if i not in used_c]
        free_r[:] = [j for j in free_r if j not in used_r]

    consume(_match_by_key(cand, ref, free_c, free_r, key=lambda w: w))
    consume(_match_by_key(cand, ref, free_c, free_r, key=porter.stem))
    if config.synonyms is not None:
        consume(_match_synonyms(cand, ref, free_c, free_r, config))
    return sorted(matches)


def _count_chunks(matches: list[tuple[int, int]]) -> int:
    """Chunks = maximal runs of matches contiguous and in order on both sides."""
    chunks = 0
    prev = None
    for ci, ri in matches:  # sorted by candidate index
        if prev is None or ci != prev[0] + 1 or ri != prev[1] + 1:
            chunks += 1
        prev = (ci, ri)
    return chunks


def meteor(candidate: str, reference: str, config: MatcherConfig | None = None) -> float:
    """METEOR score in [0, 1] with alpha=0.9, beta=3, gamma=0.5."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    matches = align_unigrams(cand, ref, config)
    m = len(matches)
    if m == 0:
        return 0.0
    precision = m / len(cand)
    recall = m / len(ref)
    fmean = precision * recall / (METEOR_ALPHA * precision + (1 - METEOR_ALPHA) * recall)
    penalty = METEOR_GAMMA * (_count_chunks(matches) / m) ** METEOR_BETA
    return fmean * (1 - penalty)
