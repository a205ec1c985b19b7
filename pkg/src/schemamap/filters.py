"""Prompt-compression filters over the option and exemplar databases.

Two independent, composable filters shrink the candidate set for a source
column before a prompt is built:

* an entity/dtype destination filter that keeps only options whose declared
  data type and entity label both equal the query column's, and
* a two-stage top-k retrieval compressor that keeps the ``k1`` options most
  similar to the query column name, then the ``k2`` most similar exemplars
  per kept option.

The destination filter fails open: if the strict result is empty it returns
the unfiltered input with a bypass flag, because removing every option would
guarantee a miss.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from schemamap.core import DataType, EntityLabel, ObjectType
from schemamap.ner import LabelVerdict
from schemamap.similarity import SimilarityMeasure


@dataclass(frozen=True)
class ColumnQuery:
    """The query pair for one source column: header name plus sampled values,
    with the dtype and label verdict the filters act on."""

    name: str
    values: tuple[str, ...]
    dtype: DataType
    label: LabelVerdict


@dataclass(frozen=True)
class OptionEntry:
    """One candidate destination attribute with its original database index."""

    index: int
    attribute_id: str
    text: str
    dtype: DataType
    entity_label: EntityLabel
    node_path: tuple[str, ...] = ()


@dataclass(frozen=True)
class OptionDatabase:
    """Ordered candidate options for one object type."""

    object_type: str
    options: tuple[OptionEntry, ...]
    ner_bypassed: bool = False  # set when the strict entity filter failed open

    def __len__(self) -> int:
        return len(self.options)

    def ids(self) -> list[str]:
        return [o.attribute_id for o in self.options]


@dataclass(frozen=True)
class ExampleDatabase:
    """Exemplar rows keyed by attribute id; rows may be ragged."""

    rows: dict  # attribute_id -> tuple[str, ...]

    def row(self, attribute_id: str) -> tuple[str, ...]:
        return tuple(self.rows.get(attribute_id, ()))

    def max_row_length(self) -> int:
        return max((len(r) for r in self.rows.values()), default=0)


def build_databases(object_type: ObjectType) -> tuple[OptionDatabase, ExampleDatabase]:
    """Derive the option/exemplar databases from a target object type:
    options are attribute names, exemplars are their aliases."""
    options = tuple(
        OptionEntry(
            index=i,
            attribute_id=attr.id,
            text=attr.name,
            dtype=attr.dtype,
            entity_label=attr.entity_label,
            node_path=attr.node_path,
        )
        for i, attr in enumerate(object_type.attributes)
    )
    rows = {attr.id: tuple(attr.aliases) for attr in object_type.attributes}
    return OptionDatabase(object_type.name, options), ExampleDatabase(rows)


@dataclass(frozen=True)
class KeptExample:
    position: int  # index within the attribute's exemplar row
    text: str
    score: float


@dataclass(frozen=True)
class FilterTrace:
    """Audit record of what each filter kept, removed and scored."""

    ner_enabled: bool = False
    ner_bypassed: bool = False
    ner_removed: tuple[str, ...] = ()
    rag_enabled: bool = False
    measure: str | None = None
    option_scores: tuple = ()  # (attribute_id, score) in database order
    rag_removed: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "ner_enabled": self.ner_enabled,
            "ner_bypassed": self.ner_bypassed,
            "ner_removed": list(self.ner_removed),
            "rag_enabled": self.rag_enabled,
            "measure": self.measure,
            "option_scores": [[a, s] for a, s in self.option_scores],
            "rag_removed": list(self.rag_removed),
        }


@dataclass(frozen=True)
class CompressedChoices:
    """The surviving options and exemplars handed to the prompt builder."""

    object_type: str
    options: tuple[OptionEntry, ...]  # original indices preserved
    examples: dict  # attribute_id -> tuple[KeptExample, ...]
    k1: int
    k2: int
    trace: FilterTrace = field(default_factory=FilterTrace)

    def __len__(self) -> int:
        return len(self.options)

    def examples_for(self, attribute_id: str) -> tuple[KeptExample, ...]:
        return tuple(self.examples.get(attribute_id, ()))

    def total_examples(self) -> int:
        return sum(len(v) for v in self.examples.values())

    def to_dict(self) -> dict:
        return {
            "object_type": self.object_type,
            "options": [
                {
                    "index": o.index,
                    "attribute_id": o.attribute_id,
                    "text": o.text,
                    "dtype": o.dtype.value,
                    "entity_label": o.entity_label.value,
                }
                for o in self.options
            ],
            "examples": {
                attr_id: [[e.position, e.text, e.score] for e in kept]
                for attr_id, kept in self.examples.items()
            },
            "k1": self.k1,
            "k2": self.k2,
            "trace": self.trace.to_dict(),
        }


# ---------------------------------------------------------------------------
# Filters
# ---------------------------------------------------------------------------


def ner_filter(options: OptionDatabase, query: ColumnQuery) -> OptionDatabase:
    """Keep options matching the query's data type AND entity label.

    Order is preserved. An empty strict result fails open: the unfiltered
    input comes back with ``ner_bypassed`` set, so a later stage can still
    choose among all options (and ablation accounting can see the bypass).
    """
    kept = tuple(
        o
        for o in options.options
        if o.dtype == query.dtype and o.entity_label == query.label.label
    )
    if not kept:
        return replace(options, ner_bypassed=True)
    return OptionDatabase(options.object_type, kept)


def _top_k(scored: list[tuple[float, int]], k: int) -> list[int]:
    # highest score first, ties to the lower index; stable prefix of a full sort
    order = sorted(range(len(scored)), key=lambda i: (-scored[i][0], scored[i][1]))
    return order[: max(k, 0)]


def double_rag(
    options: OptionDatabase,
    examples: ExampleDatabase,
    query: ColumnQuery,
    measure: SimilarityMeasure,
    k1: int = 4,
    k2: int = 1,
) -> CompressedChoices:
    """Two-stage top-k compression of options and their exemplars.

    Every option text is scored against the query column name; the ``k1``
    best survive (ties to the lower database index). Exemplars are then
    scored the same way but only within surviving options, keeping at most
    ``k2`` per option. Scores land in the trace for auditability.
    """
    if k1 < 1:
        raise ValueError("k1 must be >= 1")
    if k2 < 0:
        raise ValueError("k2 must be >= 0")
    entries = options.options
    scored = [(measure.score(o.text, query.name), o.index) for o in entries]
    kept_positions = _top_k(scored, k1)
    kept_positions_set = set(kept_positions)
    kept_options = tuple(entries[i] for i in sorted(kept_positions))

    kept_examples: dict = {}
    for pos in sorted(kept_positions):
        entry = entries[pos]
        row = examples.row(entry.attribute_id)
        ex_scored = [(measure.score(ex, query.name), j) for j, ex in enumerate(row)]
        kept_j = sorted(_top_k(ex_scored, k2))
        kept_examples[entry.attribute_id] = tuple(
            KeptExample(position=j, text=row[j], score=ex_scored[j][0]) for j in kept_j
        )

    trace = FilterTrace(
        ner_bypassed=options.ner_bypassed,
        rag_enabled=True,
        measure=measure.kind.value,
        option_scores=tuple(
            (entries[i].attribute_id, scored[i][0]) for i in range(len(entries))
        ),
        rag_removed=tuple(
            entries[i].attribute_id
            for i in range(len(entries))
            if i not in kept_positions_set
        ),
    )
    return CompressedChoices(
        object_type=options.object_type,
        options=kept_options,
        examples=kept_examples,
        k1=k1,
        k2=k2,
        trace=trace,
    )


@dataclass(frozen=True)
class FilterConfig:
    """Which filters run, and the compressor's parameters."""

    ner_enabled: bool = True
    rag_enabled: bool = True
    k1: int = 4
    k2: int = 1


def compose_filters(
    options: OptionDatabase,
    examples: ExampleDatabase,
    query: ColumnQuery,
    measure: SimilarityMeasure,
    config: FilterConfig = FilterConfig(),
) -> CompressedChoices:
    """Run the enabled filters in fixed order: entity/dtype filter, then
    top-k compression. With both disabled the full databases pass through."""
    working = options
    ner_removed: tuple[str, ...] = ()
    ner_bypassed = False
    if config.ner_enabled:
        working = ner_filter(working, query)
        ner_bypassed = working.ner_bypassed
        kept_ids = set(working.ids())
        ner_removed = tuple(
            o.attribute_id for o in options.options if o.attribute_id not in kept_ids
        )

    if config.rag_enabled:
        choices = double_rag(working, examples, query, measure, config.k1, config.k2)
        trace = replace(
            choices.trace,
            ner_enabled=config.ner_enabled,
            ner_bypassed=ner_bypassed,
            ner_removed=ner_removed,
        )
        return replace(choices, trace=trace)

    # no compression: keep every surviving option with all of its exemplars
    kept_examples = {
        o.attribute_id: tuple(
            KeptExample(position=j, text=ex, score=0.0)
            for j, ex in enumerate(examples.row(o.attribute_id))
        )
        for o in working.options
    }
    trace = FilterTrace(
        ner_enabled=config.ner_enabled,
        ner_bypassed=ner_bypassed,
        ner_removed=ner_removed,
        rag_enabled=False,
    )
    return CompressedChoices(
        object_type=working.object_type,
        options=working.options,
        examples=kept_examples,
        k1=len(working.options),
        k2=examples.max_row_length(),
        trace=trace,
    )
