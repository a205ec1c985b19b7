"""Domain model: target schemas, source columns, mapping results.

Loads target-schema configuration (JSON) and ingests CSV tables into
``SourceColumn`` records with inferred data types.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import date, datetime
from enum import Enum
from pathlib import Path
from typing import Iterable


class SchemaConfigError(ValueError):
    """Raised when a target-schema config fails to parse or validate."""


class IngestError(ValueError):
    """Raised when a CSV table cannot be ingested."""


class DataType(str, Enum):
    STRING = "String"
    INTEGER = "Integer"
    FLOAT = "Float"
    BOOLEAN = "Boolean"
    DATE = "Date"
    TIMESTAMP = "Timestamp"


class EntityLabel(str, Enum):
    """Closed fine-grained taxonomy of value categories.

    Declaration order is the canonical taxonomy order. ``FREE_TEXT`` is the
    unique fallback for anything the other categories do not capture.
    """

    FIRST_NAME = "FirstName"
    MIDDLE_NAME = "MiddleName"
    LAST_NAME = "LastName"
    FULL_NAME = "FullName"
    BUSINESS_NAME = "BusinessName"
    PRODUCT_NAME = "ProductName"
    DATES = "Dates"
    GENDER = "Gender"
    EMAIL = "Email"
    URL = "URL"
    CREDIT_CARD_NUMBER = "CreditCardNumber"
    TIMESTAMPS = "Timestamps"
    ADDRESS_LINE = "AddressLine"
    CITY = "City"
    PROVINCE_STATE = "ProvinceState"
    COUNTRY = "Country"
    ZIP_POSTAL_CODE = "ZipPostalCode"
    PHONE_NUMBER = "PhoneNumber"
    PRICES = "Prices"
    CURRENCIES = "Currencies"
    WEIGHTS_UNITS = "WeightsUnits"
    FREE_TEXT = "FreeText"


@dataclass(frozen=True)
class TargetAttribute:
    """A destination attribute: one leaf of the target schema tree.

    ``aliases`` are known source-side name variants for this attribute; they
    feed the exemplar database and few-shot prompt blocks.
    """

    id: str
    name: str
    dtype: DataType
    entity_label: EntityLabel = EntityLabel.FREE_TEXT
    aliases: tuple[str, ...] = ()
    node_path: tuple[str, ...] = ()


@dataclass(frozen=True)
class ObjectType:
    """A topic-level group of target attributes (e.g. Profile, Order)."""

    name: str
    attributes: tuple[TargetAttribute, ...]
    description: str = ""

    def __post_init__(self) -> None:
        if not self.attributes:
            raise SchemaConfigError(f"object type {self.name!r} has no attributes")
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise SchemaConfigError(
                f"duplicate attribute names in object type {self.name!r}: {dupes}"
            )

    def attribute_by_id(self, attribute_id: str) -> TargetAttribute | None:
        for attr in self.attributes:
            if attr.id == attribute_id:
                return attr
        return None


@dataclass(frozen=True)
class SourceColumn:
    """A column of the incoming table: header name plus sampled raw values.

    Samples may contain empty or invalid entries; noise is kept on purpose so
    downstream labeling sees realistic input. ``declared_dtype`` comes from
    metadata when available, otherwise from inference at ingest time.
    """

    name: str
    samples: tuple[str, ...] = ()
    declared_dtype: DataType | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("source column name must be non-empty")


class Provenance(str, Enum):
    LLM = "llm"
    ORACLE = "oracle"
    HUMAN_OVERRIDE = "human_override"


UNMAPPED = "unmapped"


@dataclass
class MappingResult:
    """Predicted destination for one source column."""

    source: str
    object_type: str
    predicted_attribute: str  # TargetAttribute id or "unmapped"
    confidence: float
    provenance: Provenance

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "object_type": self.object_type,
            "predicted_attribute": self.predicted_attribute,
            "confidence": self.confidence,
            "provenance": self.provenance.value,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MappingResult":
        return cls(
            source=doc["source"],
            object_type=doc["object_type"],
            predicted_attribute=doc["predicted_attribute"],
            confidence=doc["confidence"],
            provenance=Provenance(doc["provenance"]),
        )


# ---------------------------------------------------------------------------
# Data type inference
# ---------------------------------------------------------------------------

#: Fraction of non-empty samples a candidate type must accept.
DTYPE_AGREEMENT = 0.9

_BOOL_TOKENS = {"true", "false"}


def _parses_int(value: str) -> bool:
    try:
        int(value)
        return True
    except ValueError:
        return False


def _parses_float(value: str) -> bool:
    if value.lower() in ("nan", "inf", "-inf", "+inf", "infinity", "-infinity"):
        return False
    try:
        float(value)
        return True
    except ValueError:
        return False


def _parses_bool(value: str) -> bool:
    return value.lower() in _BOOL_TOKENS


def _parses_date(value: str) -> bool:
    try:
        date.fromisoformat(value)
        return True
    except ValueError:
        return False


def _parses_timestamp(value: str) -> bool:
    if "T" not in value and " " not in value:
        return False
    try:
        datetime.fromisoformat(value.replace("Z", "+00:00"))
        return True
    except ValueError:
        return False


_DTYPE_CHECKS: tuple[tuple[DataType, object], ...] = (
    (DataType.INTEGER, _parses_int),
    (DataType.FLOAT, _parses_float),
    (DataType.BOOLEAN, _parses_bool),
    (DataType.DATE, _parses_date),
    (DataType.TIMESTAMP, _parses_timestamp),
)


def infer_dtype(samples: Iterable[str]) -> DataType:
    """Infer the most specific data type accepted by >=90% of non-empty samples.

    Candidates are tried from most to least specific (Integer, Float, Boolean,
    Date, Timestamp); String is the fallback. Empty strings are ignored.
    """
    values = [s.strip() for s in samples if s and s.strip()]
    if not values:
        return DataType.STRING
    for dtype, check in _DTYPE_CHECKS:
        hits = sum(1 for v in values if check(v))  # type: ignore[operator]
        if hits / len(values) >= DTYPE_AGREEMENT:
            return dtype
    return DataType.STRING


# ---------------------------------------------------------------------------
# Target schema config
# ---------------------------------------------------------------------------


def _parse_attribute(doc: dict, object_type: str, seen_ids: set[str]) -> TargetAttribute:
    for required in ("id", "name", "dtype"):
        if required not in doc:
            raise SchemaConfigError(
                f"attribute in object type {object_type!r} missing field {required!r}"
            )
    attr_id = doc["id"]
    if attr_id in seen_ids:
        raise SchemaConfigError(
            f"duplicate attribute id {attr_id!r} in object type {object_type!r}"
        )
    seen_ids.add(attr_id)
    try:
        dtype = DataType(doc["dtype"])
    except ValueError:
        raise SchemaConfigError(
            f"attribute {attr_id!r}: unknown dtype {doc['dtype']!r}"
        ) from None
    label_text = doc.get("entity_label")
    if label_text is None:
        label = EntityLabel.FREE_TEXT
    else:
        try:
            label = EntityLabel(label_text)
        except ValueError:
            raise SchemaConfigError(
                f"attribute {attr_id!r}: unknown entity label {label_text!r}"
            ) from None
    aliases = tuple(doc.get("aliases", ()))
    node_path = tuple(doc.get("node_path", (object_type, doc["name"])))
    return TargetAttribute(
        id=attr_id,
        name=doc["name"],
        dtype=dtype,
        entity_label=label,
        aliases=aliases,
        node_path=node_path,
    )


def parse_target_schema(doc: dict) -> list[ObjectType]:
    """Build object types from an already-decoded schema config document."""
    if "object_types" not in doc:
        raise SchemaConfigError("schema config missing top-level 'object_types'")
    object_types = []
    for ot_doc in doc["object_types"]:
        if "name" not in ot_doc:
            raise SchemaConfigError("object type entry missing 'name'")
        seen_ids: set[str] = set()
        attributes = tuple(
            _parse_attribute(a, ot_doc["name"], seen_ids)
            for a in ot_doc.get("attributes", ())
        )
        object_types.append(
            ObjectType(
                name=ot_doc["name"],
                attributes=attributes,
                description=ot_doc.get("description", ""),
            )
        )
    return object_types


def load_target_schema(path: str | Path) -> list[ObjectType]:
    """Load and validate a target-schema config file (JSON).

    Top level: ``{"object_types": [{"name", "description", "attributes":
    [{"id", "name", "dtype", "entity_label", "aliases": [...]}]}]}``.
    ``entity_label`` defaults to FreeText, ``aliases`` to empty. Unknown
    attribute fields are ignored so sidecar metadata can ride along.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaConfigError(f"cannot read schema config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaConfigError(
            f"schema config {path} is not valid JSON (line {exc.lineno}): {exc.msg}"
        ) from exc
    return parse_target_schema(doc)


def dump_target_schema(object_types: Iterable[ObjectType]) -> dict:
    """Serialize object types back to the schema-config document shape."""
    return {
        "object_types": [
            {
                "name": ot.name,
                "description": ot.description,
                "attributes": [
                    {
                        "id": a.id,
                        "name": a.name,
                        "dtype": a.dtype.value,
                        "entity_label": a.entity_label.value,
                        "aliases": list(a.aliases),
                        "node_path": list(a.node_path),
                    }
                    for a in ot.attributes
                ],
            }
            for ot in object_types
        ]
    }


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RowWarning:
    row_index: int  # 1-based data row index (header excluded)
    kind: str  # "extra_cells" | "missing_cells"
    detail: str


@dataclass
class IngestResult:
    """Columns extracted from a CSV table plus per-row ingestion warnings."""

    columns: list[SourceColumn]
    warnings: list[RowWarning] = field(default_factory=list)
    row_count: int = 0

    @property
    def warning_count(self) -> int:
        return len(self.warnings)

    def __iter__(self):
        return iter(self.columns)


def ingest_csv(path: str | Path, sample_limit: int = 6) -> IngestResult:
    """Read a CSV table (RFC 4180, UTF-8, first row header) into columns.

    Keeps at most ``sample_limit`` sample values per column, in file order.
    Empty cells are retained as samples (they are meaningful noise for the
    labeler) but ignored by dtype inference. Ragged rows are tolerated: extra
    cells are dropped and short rows padded with empty strings, each recorded
    as a :class:`RowWarning`.
    """
    if sample_limit < 1:
        raise ValueError("sample_limit must be >= 1")
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty file (no header row)") from None
        if not header or all(not cell.strip() for cell in header):
            raise IngestError(f"{path}: header row is empty")

        n_cols = len(header)
        samples: list[list[str]] = [[] for _ in range(n_cols)]
        warnings: list[RowWarning] = []
        row_count = 0
        for row_index, row in enumerate(reader, start=1):
            row_count += 1
            if len(row) > n_cols:
                warnings.append(
                    RowWarning(
                        row_index,
                        "extra_cells",
                        f"{len(row) - n_cols} extra cell(s) dropped",
                    )
                )
                row = row[:n_cols]
            elif len(row) < n_cols:
                warnings.append(
                    RowWarning(
                        row_index,
                        "missing_cells",
                        f"{n_cols - len(row)} missing cell(s) padded",
                    )
                )
                row = row + [""] * (n_cols - len(row))
            for i, cell in enumerate(row):
                if len(samples[i]) < sample_limit:
                    samples[i].append(cell)

    columns = [
        SourceColumn(
            name=name.strip() or f"column_{i + 1}",
            samples=tuple(samples[i]),
            declared_dtype=infer_dtype(samples[i]),
        )
        for i, name in enumerate(header)
    ]
    return IngestResult(columns=columns, warnings=warnings, row_count=row_count)
