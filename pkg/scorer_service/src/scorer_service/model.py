"""Checkpoint loading and deterministic pair-scoring.

A checkpoint is a JSON file holding regression weights over text-pair
similarity features (hashed character n-gram cosine, token Jaccard, length
ratio).  Scoring is pure arithmetic in inference mode: no sampling, no
dropout, so a fixed checkpoint maps identical requests to identical scores.
Checkpoint identity is configuration, not code; swap the file to serve a
different metric.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)

FEATURE_NAMES = ("ngram_cosine", "token_jaccard", "length_ratio")


class CheckpointError(Exception):
    pass


@dataclass(frozen=True)
class Checkpoint:
    checkpoint_id: str
    ngram_sizes: tuple[int, ...]
    hash_dim: int
    weights: dict[str, float]
    bias: float

    @classmethod
    def from_file(cls, path: str | Path) -> "Checkpoint":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"cannot load checkpoint {path}: {exc}") from exc
        try:
            checkpoint = cls(
                checkpoint_id=str(raw["checkpoint_id"]),
                ngram_sizes=tuple(int(n) for n in raw["ngram_sizes"]),
                hash_dim=int(raw["hash_dim"]),
                weights={str(k): float(v) for k, v in raw["weights"].items()},
                bias=float(raw["bias"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"malformed checkpoint {path}: {exc}") from exc
        if checkpoint.hash_dim < 8:
            raise CheckpointError("hash_dim must be at least 8")
        unknown = set(checkpoint.weights) - set(FEATURE_NAMES)
        if unknown:
            raise CheckpointError(f"unknown feature weights: {sorted(unknown)}")
        return checkpoint


def default_checkpoint_path() -> Path:
    return Path(str(resources.files("scorer_service") / "default_checkpoint.json"))


def _tokens(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


class PairScorer:
    """Reference-based quality scorer for (candidate, reference) text pairs."""

    def __init__(self, checkpoint: Checkpoint):
        self.checkpoint = checkpoint

    def _ngram_vector(self, text: str) -> dict[int, int]:
        vector: dict[int, int] = {}
        normalized = " ".join(_tokens(text))
        for size in self.checkpoint.ngram_sizes:
            for i in range(max(0, len(normalized) - size + 1)):
                gram = normalized[i : i + size]
                digest = hashlib.sha1(f"{size}:{gram}".encode("utf-8")).digest()
                index = int.from_bytes(digest[:4], "big") % self.checkpoint.hash_dim
                vector[index] = vector.get(index, 0) + 1
        return vector

    @staticmethod
    def _cosine(a: dict[int, int], b: dict[int, int]) -> float:
        if not a or not b:
            return 0.0
        dot = sum(count * b.get(index, 0) for index, count in a.items())
        norm = math.sqrt(sum(c * c for c in a.values())) * math.sqrt(sum(c * c for c in b.values()))
        return dot / norm if norm else 0.0

    def features(self, candidate: str, reference: str) -> dict[str, float]:
        cand_tokens, ref_tokens = _tokens(candidate), _tokens(reference)
        union = set(cand_tokens) | set(ref_tokens)
        jaccard = len(set(cand_tokens) & set(ref_tokens)) / len(union) if union else 0.0
        if cand_tokens and ref_tokens:
            length_ratio = min(len(cand_tokens), len(ref_tokens)) / max(len(cand_tokens), len(ref_tokens))
        else:
            length_ratio = 0.0
        return {
            "ngram_cosine": self._cosine(self._ngram_vector(candidate), self._ngram_vector(reference)),
            "token_jaccard": jaccard,
            "length_ratio": length_ratio,
        }

    def score(self, candidate: str, reference: str) -> float:
        features = self.features(candidate, reference)
        value = self.checkpoint.bias + sum(
            weight * features[name] for name, weight in self.checkpoint.weights.items()
        )
        if not math.isfinite(value):
            raise CheckpointError("inference produced a non-finite score")
        return value
