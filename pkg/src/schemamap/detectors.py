"""Stage-1 object-type detection and stage-3 key detection.

The object-type detector partitions incoming columns across the target
schema's object types by similarity between the column name and each type's
attribute vocabulary (names plus aliases). The key detector filters columns
through a user-configurable keep/drop rule chain, checks value uniqueness,
and lets the matcher backend rank the survivors.
"""

from __future__ import annotations

import fnmatch
import re
from dataclasses import dataclass
from enum import Enum

from schemamap.core import DataType, EntityLabel, ObjectType, SourceColumn
from schemamap.filters import (
    ColumnQuery,
    CompressedChoices,
    FilterTrace,
    KeptExample,
    OptionDatabase,
    OptionEntry,
)
from schemamap.ner import LabelVerdict
from schemamap.prompting import (
    KEY_INSTRUCTION,
    MatcherBackend,
    OracleBackend,
    RemoteLLMBackend,
    build_prompt,
    match_llm,
    match_oracle,
    parse_answer,
)
from schemamap.similarity import SimilarityMeasure

# Generic key-ish name fragments the oracle backend ranks candidates against.
KEY_NAME_HINTS = ("id", "key", "uuid", "guid", "identifier", "record_id", "code")


@dataclass(frozen=True)
class ColumnPartition:
    """Disjoint grouping of input columns by detected object type."""

    groups: dict  # object_type name -> list[str] column names
    scores: dict  # column name -> {object_type: affinity}

    def group_of(self, column_name: str) -> str | None:
        for object_type, names in self.groups.items():
            if column_name in names:
                return object_type
        return None

    def to_dict(self) -> dict:
        return {"groups": self.groups, "scores": self.scores}


def detect_object_types(
    columns: list[SourceColumn],
    schema: list[ObjectType],
    measure: SimilarityMeasure,
) -> ColumnPartition:
    """Assign every column to the object type with the highest name affinity.

    Affinity of a column to an object type is the best similarity between
    the column name and any attribute name or alias of that type. Ties go to
    schema declaration order, so the result is deterministic.
    """
    if not schema:
        raise ValueError("schema must contain at least one object type")
    vocab = {
        ot.name: [a.name for a in ot.attributes]
        + [alias for a in ot.attributes for alias in a.aliases]
        for ot in schema
    }
    groups: dict = {ot.name: [] for ot in schema}
    scores: dict = {}
    for column in columns:
        per_type = {}
        for ot in schema:
            texts = vocab[ot.name]
            per_type[ot.name] = max(
                (measure.score(column.name, t) for t in texts), default=0.0
            )
        best = max(schema, key=lambda ot: per_type[ot.name])  # max is order-stable
        groups[best.name].append(column.name)
        scores[column.name] = per_type
    return ColumnPartition(groups=groups, scores=scores)


# ---------------------------------------------------------------------------
# Key candidate rules
# ---------------------------------------------------------------------------


class KeyAction(str, Enum):
    KEEP = "keep"
    DROP = "drop"


class KeyRuleError(ValueError):
    """Raised for an invalid rule pattern at load time."""


@dataclass(frozen=True)
class KeyRule:
    """One link of the candidate-filter chain.

    ``pattern`` is a glob ("*" wildcard) unless prefixed with "re:", which
    switches to a regular expression. The first matching rule in the chain
    decides; unmatched columns are dropped.
    """

    pattern: str
    action: KeyAction

    def __post_init__(self) -> None:
        try:
            self._compiled()
        except re.error as exc:
            raise KeyRuleError(f"invalid key-rule pattern {self.pattern!r}: {exc}") from exc

    def _compiled(self) -> re.Pattern:
        if self.pattern.startswith("re:"):
            return re.compile(self.pattern[3:])
        return re.compile(fnmatch.translate(self.pattern))

    def matches(self, column_name: str) -> bool:
        return bool(self._compiled().match(column_name))


def filter_key_candidates(
    columns: list[SourceColumn], rules: list[KeyRule]
) -> list[str]:
    """Apply the rule chain to every column name; keep survivors in input order."""
    kept = []
    for column in columns:
        for rule in rules:
            if rule.matches(column.name):
                if rule.action is KeyAction.KEEP:
                    kept.append(column.name)
                break  # first matching rule decides either way
    return kept


# ---------------------------------------------------------------------------
# Key detection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KeyVerdict:
    column: str
    is_key: bool
    uniqueness_ratio: float
    rationale: str

    def to_dict(self) -> dict:
        return {
            "column": self.column,
            "is_key": self.is_key,
            "uniqueness_ratio": self.uniqueness_ratio,
            "rationale": self.rationale,
        }


def uniqueness_ratio(samples: tuple[str, ...] | list[str]) -> float:
    """Distinct non-empty samples over non-empty samples; 0 with no evidence."""
    non_empty = [s for s in samples if s.strip()]
    if not non_empty:
        return 0.0
    return len(set(non_empty)) / len(non_empty)


def _candidate_choices(candidates: list[str], object_type: str) -> CompressedChoices:
    options = tuple(
        OptionEntry(
            index=i,
            attribute_id=name,
            text=name,
            dtype=DataType.STRING,
            entity_label=EntityLabel.FREE_TEXT,
        )
        for i, name in enumerate(candidates)
    )
    examples = {
        name: tuple(
            KeptExample(position=j, text=hint, score=0.0)
            for j, hint in enumerate(KEY_NAME_HINTS)
        )
        for name in candidates
    }
    return CompressedChoices(
        object_type=object_type,
        options=options,
        examples=examples,
        k1=len(options),
        k2=len(KEY_NAME_HINTS),
        trace=FilterTrace(),
    )


def detect_keys(
    candidates: list[str],
    columns: list[SourceColumn],
    backend: MatcherBackend,
    object_type: str = "",
    threshold: float = 1.0,
    template: str | None = None,
) -> list[KeyVerdict]:
    """Judge key candidates by sample uniqueness, then rank survivors.

    Candidates whose uniqueness ratio over available samples falls below
    ``threshold`` are rejected outright. The backend ranks the rest via a
    key-selection prompt whose options are the candidate names; the
    top-ranked survivor is marked as the key. All verdicts come back, with
    rejected candidates included for audit.
    """
    by_name = {c.name: c for c in columns}
    unknown = [name for name in candidates if name not in by_name]
    if unknown:
        raise ValueError(f"key candidates not present in columns: {unknown}")

    ratios = {name: uniqueness_ratio(by_name[name].samples) for name in candidates}
    eligible = [name for name in candidates if ratios[name] >= threshold]
    verdicts: dict = {
        name: KeyVerdict(
            column=name,
            is_key=False,
            uniqueness_ratio=ratios[name],
            rationale=f"rejected: uniqueness {ratios[name]:.3f} < {threshold:.3f}",
        )
        for name in candidates
        if name not in eligible
    }

    chosen: str | None = None
    if len(eligible) == 1:
        chosen = eligible[0]
        rationale = "sole eligible candidate"
    elif len(eligible) > 1:
        choices = _candidate_choices(eligible, object_type)
        query = ColumnQuery(
            name=f"unique key for {object_type or 'records'}",
            values=tuple(by_name[eligible[0]].samples[:1]),
            dtype=DataType.STRING,
            label=LabelVerdict(EntityLabel.FREE_TEXT, (), 0.0),
        )
        if isinstance(backend, OracleBackend):
            scored = []
            for name in eligible:
                score = max(backend.measure.score(name, hint) for hint in KEY_NAME_HINTS)
                scored.append((score, name))
            chosen = max(scored, key=lambda pair: pair[0])[1]  # ties: earliest wins
            rationale = "oracle ranking over key-name hints"
        else:
            assert isinstance(backend, RemoteLLMBackend)
            prompt, _ = build_prompt(
                choices, query, template=template, instruction=KEY_INSTRUCTION
            )
            raw = match_llm(prompt, backend)
            parsed = parse_answer(raw, choices, source=query.name)
            if parsed.predicted_attribute != "unmapped":
                chosen = parsed.predicted_attribute
                rationale = "llm key-selection prompt"
            else:
                chosen = eligible[0]
                rationale = "llm answer unparsable; defaulted to first eligible"

    for name in eligible:
        verdicts[name] = KeyVerdict(
            column=name,
            is_key=(name == chosen),
            uniqueness_ratio=ratios[name],
            rationale=rationale if name == chosen else "eligible, not top-ranked",
        )
    return [verdicts[name] for name in candidates]
