"""Three-stage mapping pipeline, session persistence and human corrections.

Stage 1 partitions incoming columns into object types, stage 2 maps each
column to a destination attribute (filters -> prompt -> backend -> parse),
stage 3 nominates unique keys per group. The run result is a
:class:`MappingSession` persisted as one JSON document; reviewers then apply
corrections and finalize, producing the final mapping document.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

from schemamap.core import (
    DataType,
    MappingResult,
    ObjectType,
    Provenance,
    SourceColumn,
    UNMAPPED,
    infer_dtype,
    load_target_schema,
)
from schemamap.detectors import (
    ColumnPartition,
    KeyAction,
    KeyRule,
    KeyVerdict,
    detect_keys,
    detect_object_types,
    filter_key_candidates,
)
from schemamap.filters import (
    ColumnQuery,
    FilterConfig,
    build_databases,
    compose_filters,
)
from schemamap.ner import Lexicons, RuleLabeler
from schemamap.prompting import (
    BackendUnavailableError,
    OracleBackend,
    PromptBudget,
    RemoteLLMBackend,
    build_prompt,
    default_template,
    load_template,
    match_llm,
    match_oracle,
    parse_answer,
)
from schemamap.similarity import MeasureKind, SimilarityMeasure, load_vectors

logger = logging.getLogger(__name__)


class PipelineConfigError(ValueError):
    pass


class SessionNotFoundError(KeyError):
    pass


class SessionFinalizedError(RuntimeError):
    pass


class UnknownColumnError(ValueError):
    pass


class UnknownAttributeError(ValueError):
    pass


DEFAULT_KEY_RULES = (
    KeyRule(pattern="*_id", action=KeyAction.KEEP),
    KeyRule(pattern="id", action=KeyAction.KEEP),
)


@dataclass(frozen=True)
class BackendSpec:
    """Declarative backend choice; the pipeline instantiates it at startup."""

    kind: str = "oracle"  # "oracle" | "llm"
    endpoint: str = ""
    model: str = ""
    auth_token_env: str | None = None
    timeout: float = 30.0
    max_retries: int = 3
    backoff_base: float = 0.5

    @classmethod
    def from_dict(cls, doc: dict) -> "BackendSpec":
        kind = doc.get("kind", "oracle")
        if kind not in ("oracle", "llm"):
            raise PipelineConfigError(f"unknown backend kind {kind!r}")
        if kind == "llm" and not doc.get("endpoint"):
            raise PipelineConfigError("llm backend requires an 'endpoint'")
        return cls(
            kind=kind,
            endpoint=doc.get("endpoint", ""),
            model=doc.get("model", ""),
            auth_token_env=doc.get("auth_token_env"),
            timeout=doc.get("timeout", 30.0),
            max_retries=doc.get("max_retries", 3),
            backoff_base=doc.get("backoff_base", 0.5),
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "endpoint": self.endpoint,
            "model": self.model,
            "auth_token_env": self.auth_token_env,
            "timeout": self.timeout,
            "max_retries": self.max_retries,
            "backoff_base": self.backoff_base,
        }


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a pipeline run needs, loadable from one JSON file."""

    schema_path: str
    lexicon_dir: str | None = None
    vector_path: str | None = None
    measure: str = MeasureKind.EMBEDDING_COSINE.value
    k1: int = 4
    k2: int = 1
    ner_enabled: bool = True
    rag_enabled: bool = True
    backend: BackendSpec = BackendSpec()
    sample_limit: int = 6
    key_rules: tuple[KeyRule, ...] = DEFAULT_KEY_RULES
    key_threshold: float = 1.0
    concurrency: int = 8
    session_dir: str = "sessions"
    prompt_template_path: str | None = None
    key_template_path: str | None = None
    query_values: int = 1
    auth_token_env: str | None = None
    ui_dir: str | None = None

    def __post_init__(self) -> None:
        if self.k1 < 1:
            raise PipelineConfigError("k1 must be >= 1")
        if self.k2 < 0:
            raise PipelineConfigError("k2 must be >= 0")
        if not 1 <= self.sample_limit <= 6:
            raise PipelineConfigError("sample_limit must be in [1, 6]")
        if self.concurrency < 1:
            raise PipelineConfigError("concurrency must be >= 1")

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise PipelineConfigError(f"{path}: invalid JSON: {exc}") from exc
        base = path.parent

        def resolve(key: str) -> str | None:
            value = doc.get(key)
            if value is None:
                return None
            p = Path(value)
            return str(p if p.is_absolute() else base / p)

        if "schema" not in doc:
            raise PipelineConfigError(f"{path}: missing required 'schema' path")
        filters = doc.get("filters", ["ner", "rag"])
        unknown = set(filters) - {"ner", "rag"}
        if unknown:
            raise PipelineConfigError(f"{path}: unknown filters {sorted(unknown)}")
        rules = tuple(
            KeyRule(pattern=r["pattern"], action=KeyAction(r["action"]))
            for r in doc.get("key_rules", [])
        ) or DEFAULT_KEY_RULES
        return cls(
            schema_path=resolve("schema"),  # type: ignore[arg-type]
            lexicon_dir=resolve("lexicons"),
            vector_path=resolve("vectors"),
            measure=doc.get("measure", MeasureKind.EMBEDDING_COSINE.value),
            k1=doc.get("k1", 4),
            k2=doc.get("k2", 1),
            ner_enabled="ner" in filters,
            rag_enabled="rag" in filters,
            backend=BackendSpec.from_dict(doc.get("backend", {})),
            sample_limit=doc.get("sample_limit", 6),
            key_rules=rules,
            key_threshold=doc.get("key_threshold", 1.0),
            concurrency=doc.get("concurrency", 8),
            session_dir=resolve("session_dir") or str(base / "sessions"),
            prompt_template_path=resolve("prompt_template"),
            key_template_path=resolve("key_prompt_template"),
            query_values=doc.get("query_values", 1),
            auth_token_env=doc.get("auth_token_env"),
            ui_dir=resolve("ui_dir"),
        )

    def summary(self) -> dict:
        return {
            "measure": self.measure,
            "k1": self.k1,
            "k2": self.k2,
            "filters": [
                name
                for name, on in (("ner", self.ner_enabled), ("rag", self.rag_enabled))
                if on
            ],
            "backend": self.backend.kind,
            "sample_limit": self.sample_limit,
            "key_threshold": self.key_threshold,
        }


class SessionStatus(str, Enum):
    PENDING_REVIEW = "pending_review"
    FINALIZED = "finalized"


@dataclass
class MappingSession:
    """Persisted output of one pipeline run plus its review history."""

    id: str
    created_at: str
    fingerprint: str
    columns: list  # [{name, samples, dtype}]
    partition: ColumnPartition
    machine_mappings: list  # immutable snapshot of the run's predictions
    mappings: list  # current state, corrections applied
    keys: list
    corrections: list = field(default_factory=list)
    status: SessionStatus = SessionStatus.PENDING_REVIEW
    budgets: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    config_summary: dict = field(default_factory=dict)

    def mapping_for(self, column: str) -> MappingResult | None:
        for m in self.mappings:
            if m.source == column:
                return m
        return None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "created_at": self.created_at,
            "fingerprint": self.fingerprint,
            "columns": self.columns,
            "partition": self.partition.to_dict(),
            "machine_mappings": [m.to_dict() for m in self.machine_mappings],
            "mappings": [m.to_dict() for m in self.mappings],
            "keys": [k.to_dict() if isinstance(k, KeyVerdict) else k for k in self.keys],
            "corrections": self.corrections,
            "status": self.status.value,
            "budgets": self.budgets,
            "errors": self.errors,
            "config": self.config_summary,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MappingSession":
        return cls(
            id=doc["id"],
            created_at=doc["created_at"],
            fingerprint=doc["fingerprint"],
            columns=doc["columns"],
            partition=ColumnPartition(
                groups=doc["partition"]["groups"], scores=doc["partition"]["scores"]
            ),
            machine_mappings=[MappingResult.from_dict(m) for m in doc["machine_mappings"]],
            mappings=[MappingResult.from_dict(m) for m in doc["mappings"]],
            keys=[
                KeyVerdict(
                    column=k["column"],
                    is_key=k["is_key"],
                    uniqueness_ratio=k["uniqueness_ratio"],
                    rationale=k["rationale"],
                )
                for k in doc["keys"]
            ],
            corrections=doc.get("corrections", []),
            status=SessionStatus(doc["status"]),
            budgets=doc.get("budgets", []),
            errors=doc.get("errors", []),
            config_summary=doc.get("config", {}),
        )


def table_fingerprint(columns: list[SourceColumn]) -> str:
    payload = json.dumps(
        [[c.name, list(c.samples)] for c in columns], ensure_ascii=False
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def replay_corrections(
    machine_mappings: list[MappingResult], corrections: list[dict]
) -> list[MappingResult]:
    """Re-apply the correction audit list over the machine predictions.

    By construction the result must equal the session's current mappings;
    evaluation and tests use this to verify audit completeness.
    """
    current = {m.source: replace(m) for m in machine_mappings}
    ordered = [m.source for m in machine_mappings]
    for correction in corrections:
        column = correction["column"]
        if column not in current:
            raise UnknownColumnError(column)
        previous = current[column]
        current[column] = MappingResult(
            source=previous.source,
            object_type=previous.object_type,
            predicted_attribute=correction["corrected_attribute"],
            confidence=1.0,
            provenance=Provenance.HUMAN_OVERRIDE,
        )
    return [current[name] for name in ordered]


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


class Pipeline:
    """Loaded, immutable pipeline components; safe to share across threads."""

    def __init__(self, config: PipelineConfig, schema: list[ObjectType] | None = None):
        self.config = config
        self.schema = schema if schema is not None else load_target_schema(config.schema_path)
        if not self.schema:
            raise PipelineConfigError("target schema has no object types")
        lexicons = (
            Lexicons.from_dir(config.lexicon_dir) if config.lexicon_dir else None
        )
        self.labeler = RuleLabeler(lexicons)
        self.measure = self._build_measure(config)
        self.databases = {ot.name: build_databases(ot) for ot in self.schema}
        self.template = (
            load_template(config.prompt_template_path)
            if config.prompt_template_path
            else default_template()
        )
        self.key_template = (
            load_template(config.key_template_path) if config.key_template_path else None
        )
        self.filter_config = FilterConfig(
            ner_enabled=config.ner_enabled,
            rag_enabled=config.rag_enabled,
            k1=config.k1,
            k2=config.k2,
        )
        self.backend = self._build_backend(config)

    @staticmethod
    def _build_measure(config: PipelineConfig) -> SimilarityMeasure:
        kind = MeasureKind(config.measure)
        if kind is MeasureKind.EMBEDDING_COSINE:
            if config.vector_path is None:
                # degrade gracefully to a string measure instead of failing
                logger.warning(
                    "measure %s needs a vector file but none is configured; "
                    "falling back to %s",
                    kind.value,
                    MeasureKind.SORENSEN_DICE.value,
                )
                return SimilarityMeasure(MeasureKind.SORENSEN_DICE)
            return SimilarityMeasure(kind, vectors=load_vectors(config.vector_path))
        return SimilarityMeasure(kind)

    def _build_backend(self, config: PipelineConfig):
        if config.backend.kind == "oracle":
            return OracleBackend(measure=self.measure)
        return RemoteLLMBackend(
            endpoint=config.backend.endpoint,
            model=config.backend.model,
            auth_token_env=config.backend.auth_token_env,
            timeout=config.backend.timeout,
            max_retries=config.backend.max_retries,
            backoff_base=config.backend.backoff_base,
        )

    def make_query(self, column: SourceColumn) -> ColumnQuery:
        dtype = column.declared_dtype or infer_dtype(column.samples)
        verdict = self.labeler.label_column(column, k_max=self.config.sample_limit)
        return ColumnQuery(
            name=column.name,
            values=tuple(column.samples[: self.config.sample_limit]),
            dtype=dtype,
            label=verdict,
        )

    def match_column(
        self, column: SourceColumn, object_type: str
    ) -> tuple[MappingResult, PromptBudget]:
        """Run filters, prompt construction and the backend for one column."""
        options, examples = self.databases[object_type]
        query = self.make_query(column)
        choices = compose_filters(
            options, examples, query, self.measure, self.filter_config
        )
        prompt, budget = build_prompt(
            choices,
            query,
            template=self.template,
            query_values=self.config.query_values,
        )
        if isinstance(self.backend, OracleBackend):
            result = match_oracle(choices, query, self.measure)
        else:
            raw = match_llm(prompt, self.backend)
            result = parse_answer(raw, choices, source=column.name)
        return result, budget

    def run(self, columns: list[SourceColumn]) -> MappingSession:
        """Execute all three stages and assemble an unsaved session."""
        config = self.config
        session_id = uuid.uuid4().hex
        created_at = datetime.now(timezone.utc).isoformat()

        if not columns:
            return MappingSession(
                id=session_id,
                created_at=created_at,
                fingerprint=table_fingerprint([]),
                columns=[],
                partition=ColumnPartition(groups={}, scores={}),
                machine_mappings=[],
                mappings=[],
                keys=[],
                config_summary=config.summary(),
            )

        partition = detect_object_types(columns, self.schema, self.measure)
        object_type_of = {
            name: ot for ot, names in partition.groups.items() for name in names
        }

        mappings: list[MappingResult] = []
        budgets: list[dict] = []
        errors: list[dict] = []
        aborted = False

        with ThreadPoolExecutor(max_workers=config.concurrency) as executor:
            futures = [
                executor.submit(self.match_column, col, object_type_of[col.name])
                for col in columns
            ]
            for column, future in zip(columns, futures):
                if aborted:
                    future.cancel()
                    mappings.append(
                        self._error_mapping(column, object_type_of[column.name])
                    )
                    errors.append(
                        {"column": column.name, "message": "aborted after backend failure"}
                    )
                    continue
                try:
                    result, budget = future.result()
                except BackendUnavailableError as exc:
                    aborted = True
                    mappings.append(
                        self._error_mapping(column, object_type_of[column.name])
                    )
                    errors.append({"column": column.name, "message": str(exc)})
                    continue
                mappings.append(result)
                budgets.append(
                    {
                        "column": column.name,
                        "object_type": object_type_of[column.name],
                        **budget.to_dict(),
                    }
                )

        keys: list[KeyVerdict] = []
        if not aborted:
            by_name = {c.name: c for c in columns}
            for ot in self.schema:
                group_names = partition.groups.get(ot.name, [])
                group_columns = [by_name[n] for n in group_names]
                candidates = filter_key_candidates(group_columns, list(config.key_rules))
                if not candidates:
                    continue
                keys.extend(
                    detect_keys(
                        candidates,
                        group_columns,
                        self.backend,
                        object_type=ot.name,
                        threshold=config.key_threshold,
                        template=self.key_template,
                    )
                )

        return MappingSession(
            id=session_id,
            created_at=created_at,
            fingerprint=table_fingerprint(columns),
            columns=[
                {
                    "name": c.name,
                    "samples": list(c.samples[: config.sample_limit]),
                    "dtype": (c.declared_dtype or infer_dtype(c.samples)).value,
                }
                for c in columns
            ],
            partition=partition,
            machine_mappings=[replace(m) for m in mappings],
            mappings=mappings,
            keys=keys,
            budgets=budgets,
            errors=errors,
            config_summary=config.summary(),
        )

    @staticmethod
    def _error_mapping(column: SourceColumn, object_type: str) -> MappingResult:
        return MappingResult(
            source=column.name,
            object_type=object_type,
            predicted_attribute=UNMAPPED,
            confidence=0.0,
            provenance=Provenance.LLM,
        )


# ---------------------------------------------------------------------------
# Persistence and review
# ---------------------------------------------------------------------------


class SessionStore:
    """One JSON document per session under a data directory, with per-session
    write serialization."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._locks: dict = {}
        self._locks_guard = threading.Lock()

    def _lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            if session_id not in self._locks:
                self._locks[session_id] = threading.Lock()
            return self._locks[session_id]

    def _path(self, session_id: str) -> Path:
        return self.directory / f"{session_id}.json"

    def save(self, session: MappingSession) -> None:
        with self._lock(session.id):
            payload = json.dumps(session.to_dict(), indent=2, ensure_ascii=False)
            self._path(session.id).write_text(payload, encoding="utf-8")

    def load(self, session_id: str) -> MappingSession:
        path = self._path(session_id)
        if not path.is_file():
            raise SessionNotFoundError(session_id)
        return MappingSession.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def list_ids(self) -> list[str]:
        return sorted(p.stem for p in self.directory.glob("*.json") if not p.stem.endswith(".final"))

    def save_document(self, session_id: str, document: dict) -> Path:
        path = self.directory / f"{session_id}.final.json"
        path.write_text(
            json.dumps(document, indent=2, ensure_ascii=False), encoding="utf-8"
        )
        return path


def build_final_document(session: MappingSession) -> dict:
    """The finalized mapping document: one entry per source column plus keys."""
    return {
        "session_id": session.id,
        "finalized_at": datetime.now(timezone.utc).isoformat(),
        "mappings": [
            {
                "source_column": m.source,
                "object_type": m.object_type,
                "target_attribute": None if m.predicted_attribute == UNMAPPED else m.predicted_attribute,
                "provenance": m.provenance.value,
                "unmapped": m.predicted_attribute == UNMAPPED,
            }
            for m in session.mappings
        ],
        "keys": [k.to_dict() if isinstance(k, KeyVerdict) else k for k in session.keys],
    }


class SessionManager:
    """Runs the pipeline and owns the review lifecycle of stored sessions."""

    def __init__(self, config: PipelineConfig, pipeline: Pipeline | None = None):
        self.config = config
        self.pipeline = pipeline or Pipeline(config)
        self.store = SessionStore(config.session_dir)

    def run_table(self, columns: list[SourceColumn]) -> MappingSession:
        session = self.pipeline.run(columns)
        self.store.save(session)
        return session

    def get(self, session_id: str) -> MappingSession:
        return self.store.load(session_id)

    def apply_correction(
        self, session_id: str, column: str, attribute_id: str
    ) -> MappingSession:
        """Replace one column's mapping with a human-chosen attribute."""
        session = self.store.load(session_id)
        if session.status is SessionStatus.FINALIZED:
            raise SessionFinalizedError(session_id)
        mapping = session.mapping_for(column)
        if mapping is None:
            raise UnknownColumnError(f"no mapping for column {column!r}")
        object_type = next(
            (ot for ot in self.pipeline.schema if ot.name == mapping.object_type), None
        )
        if object_type is None or object_type.attribute_by_id(attribute_id) is None:
            raise UnknownAttributeError(
                f"attribute {attribute_id!r} not in object type {mapping.object_type!r}"
            )
        previous = mapping.predicted_attribute
        mapping.predicted_attribute = attribute_id
        mapping.confidence = 1.0
        mapping.provenance = Provenance.HUMAN_OVERRIDE
        session.corrections.append(
            {
                "column": column,
                "corrected_attribute": attribute_id,
                "previous_attribute": previous,
                "timestamp": datetime.now(timezone.utc).isoformat(),
            }
        )
        self.store.save(session)
        return session

    def finalize(self, session_id: str) -> tuple[MappingSession, dict]:
        session = self.store.load(session_id)
        if session.status is SessionStatus.FINALIZED:
            raise SessionFinalizedError(session_id)
        session.status = SessionStatus.FINALIZED
        document = build_final_document(session)
        self.store.save(session)
        self.store.save_document(session_id, document)
        return session, document

    def reopen(self, session_id: str) -> MappingSession:
        session = self.store.load(session_id)
        if session.status is not SessionStatus.FINALIZED:
            return session
        session.status = SessionStatus.PENDING_REVIEW
        self.store.save(session)
        return session


def run_pipeline(columns: list[SourceColumn], config: PipelineConfig) -> MappingSession:
    """Run all three stages on a table and persist the session."""
    return SessionManager(config).run_table(columns)
