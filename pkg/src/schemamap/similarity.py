"""String and embedding similarity measures, all mapping to [0, 1].

Three interchangeable measures score how alike two identifiers are:
character-bigram Jaccard, Sørensen–Dice over the same bigram sets, and
cosine similarity of mean word vectors (affinely mapped from [-1, 1] to
[0, 1] so it composes with the string measures). A small loader reads
word2vec/GloVe-style text files into an in-memory table.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np


class VectorFormatError(ValueError):
    """Raised when a word-vector file line cannot be parsed."""


_TOKEN_RE = re.compile(
    r"[A-Z]+(?=[A-Z][a-z])"  # leading acronym of a camel hump: XMLParser -> XML
    r"|[A-Z]?[a-z]+"  # Capitalized or lowercase run
    r"|[A-Z]+"  # trailing acronym
    r"|\d+"  # digit run
)


def tokenize_identifier(name: str) -> list[str]:
    """Split an identifier into lowercase tokens.

    Handles underscores, hyphens, whitespace, camelCase humps and
    digit/letter boundaries: ``"HomePhoneNumber"`` -> ``["home", "phone",
    "number"]``, ``"XYZ_first_name"`` -> ``["xyz", "first", "name"]``.
    """
    return [m.group(0).lower() for m in _TOKEN_RE.finditer(name)]


def _bigrams(text: str) -> set[str]:
    t = text.lower()
    return {t[i : i + 2] for i in range(len(t) - 1)}


def bigram_jaccard(x: str, y: str) -> float:
    """Jaccard overlap of character-bigram sets, lowercase-normalized.

    Both bigram sets empty (strings of length <= 1) counts as a perfect
    match; exactly one empty set scores 0.
    """
    bx, by = _bigrams(x), _bigrams(y)
    if not bx and not by:
        return 1.0
    if not bx or not by:
        return 0.0
    return len(bx & by) / len(bx | by)


def sorensen_dice(x: str, y: str) -> float:
    """Sørensen–Dice coefficient over character-bigram sets.

    Equivalent to ``2j / (1 + j)`` for bigram Jaccard ``j``; degenerate
    cases follow :func:`bigram_jaccard`.
    """
    bx, by = _bigrams(x), _bigrams(y)
    if not bx and not by:
        return 1.0
    if not bx or not by:
        return 0.0
    return 2 * len(bx & by) / (len(bx) + len(by))


# ---------------------------------------------------------------------------
# Word vectors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WordVectorTable:
    """Token -> vector lookup with a single shared dimension."""

    dimension: int
    entries: dict  # token -> np.ndarray, tokens lowercase

    def __contains__(self, token: str) -> bool:
        return token.lower() in self.entries

    def get(self, token: str):
        return self.entries.get(token.lower())

    def __len__(self) -> int:
        return len(self.entries)


def load_vectors(path: str | Path) -> WordVectorTable:
    """Load a word2vec/GloVe-style text file: token then D floats per line.

    An optional first header line "count dim" is detected and skipped.
    Duplicate tokens keep their first occurrence. Raises
    :class:`VectorFormatError` naming the offending line on dimension
    mismatch or unparsable floats.
    """
    path = Path(path)
    entries: dict = {}
    dimension: int | None = None
    with path.open(encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            parts = [p for p in parts if p]
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2:
                try:
                    int(parts[0]), int(parts[1])
                    continue  # word2vec header
                except ValueError:
                    pass
            token = parts[0].lower()
            try:
                vector = np.asarray([float(p) for p in parts[1:]], dtype=np.float32)
            except ValueError as exc:
                raise VectorFormatError(f"{path}:{lineno}: unparsable float ({exc})") from None
            if dimension is None:
                if vector.size == 0:
                    raise VectorFormatError(f"{path}:{lineno}: no vector components")
                dimension = int(vector.size)
            elif vector.size != dimension:
                raise VectorFormatError(
                    f"{path}:{lineno}: expected {dimension} components, got {vector.size}"
                )
            if token not in entries:
                entries[token] = vector
    if dimension is None:
        raise VectorFormatError(f"{path}: no vector entries found")
    return WordVectorTable(dimension=dimension, entries=entries)


@dataclass(frozen=True)
class CosineScore:
    """Embedding similarity with provenance: unit-interval score, raw cosine,
    and whether either side was fully out of vocabulary."""

    score: float  # (cos + 1) / 2, clipped to [0, 1]; 0 when OOV
    raw_cosine: float | None  # untransformed cosine, None when OOV
    oov: bool


def _embed(text: str, table: WordVectorTable):
    vectors = [table.get(tok) for tok in tokenize_identifier(text)]
    vectors = [v for v in vectors if v is not None]
    if not vectors:
        return None
    return np.mean(vectors, axis=0)


def embedding_cosine_detail(x: str, y: str, table: WordVectorTable) -> CosineScore:
    """Cosine similarity of mean token vectors, with OOV handling.

    Each string embeds as the unweighted mean of its in-vocabulary token
    vectors. If either side has no in-vocabulary token the score is 0 and the
    OOV flag is set rather than raising.
    """
    vx, vy = _embed(x, table), _embed(y, table)
    if vx is None or vy is None:
        return CosineScore(score=0.0, raw_cosine=None, oov=True)
    nx, ny = float(np.linalg.norm(vx)), float(np.linalg.norm(vy))
    if nx == 0.0 or ny == 0.0:
        return CosineScore(score=0.0, raw_cosine=None, oov=True)
    raw = float(np.dot(vx, vy) / (nx * ny))
    score = min(1.0, max(0.0, (raw + 1.0) / 2.0))
    return CosineScore(score=score, raw_cosine=raw, oov=False)


def embedding_cosine(x: str, y: str, table: WordVectorTable) -> float:
    """Unit-interval embedding similarity; see :func:`embedding_cosine_detail`."""
    return embedding_cosine_detail(x, y, table).score


# ---------------------------------------------------------------------------
# Measure selection
# ---------------------------------------------------------------------------


class MeasureKind(str, Enum):
    BIGRAM_JACCARD = "bigram_jaccard"
    SORENSEN_DICE = "sorensen_dice"
    EMBEDDING_COSINE = "embedding_cosine"


@dataclass(frozen=True)
class SimilarityMeasure:
    """A configured similarity function sim(x, y) in [0, 1].

    Symmetric, and 1.0 on identical non-empty strings (for the embedding
    measure: identical strings with at least one in-vocabulary token).
    """

    kind: MeasureKind
    vectors: WordVectorTable | None = None

    def __post_init__(self) -> None:
        if self.kind is MeasureKind.EMBEDDING_COSINE and self.vectors is None:
            raise ValueError("embedding_cosine measure requires a WordVectorTable")

    def score(self, x: str, y: str) -> float:
        if self.kind is MeasureKind.BIGRAM_JACCARD:
            return bigram_jaccard(x, y)
        if self.kind is MeasureKind.SORENSEN_DICE:
            return sorensen_dice(x, y)
        assert self.vectors is not None
        return embedding_cosine(x, y, self.vectors)

    def __call__(self, x: str, y: str) -> float:
        return self.score(x, y)

    @classmethod
    def from_name(cls, name: str, vectors: WordVectorTable | None = None) -> "SimilarityMeasure":
        return cls(kind=MeasureKind(name), vectors=vectors)
