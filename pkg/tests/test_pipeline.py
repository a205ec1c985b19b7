"""Three-stage pipeline runs, session persistence, corrections, finalize."""

from __future__ import annotations

import json

import pytest

from schemamap.core import Provenance, SourceColumn, UNMAPPED
from schemamap.pipeline import (
    BackendSpec,
    MappingSession,
    Pipeline,
    PipelineConfig,
    PipelineConfigError,
    SessionFinalizedError,
    SessionManager,
    SessionNotFoundError,
    SessionStatus,
    UnknownAttributeError,
    UnknownColumnError,
    replay_corrections,
    run_pipeline,
)
from tests.conftest import make_config

FIG3_COLUMN = SourceColumn(name="contact_name", samples=("Amazon.com Inc.",))


def session_comparable(session: MappingSession) -> dict:
    doc = session.to_dict()
    doc.pop("id")
    doc.pop("created_at")
    return doc


class TestRunPipeline:
    def test_fig3_column_maps_to_business_name(self, oracle_config):
        session = run_pipeline([FIG3_COLUMN], oracle_config)
        [mapping] = session.mappings
        assert mapping.object_type == "Profile"
        assert mapping.predicted_attribute == "business_name"
        assert mapping.provenance is Provenance.ORACLE
        assert session.status is SessionStatus.PENDING_REVIEW
        assert session.budgets and session.budgets[0]["column"] == "contact_name"

    def test_empty_table(self, oracle_config):
        session = run_pipeline([], oracle_config)
        assert session.mappings == [] and session.keys == []
        assert session.partition.groups == {}

    def test_two_object_types_all_columns_mapped(self, combined_schema_path, tmp_path):
        config = make_config(combined_schema_path, str(tmp_path / "s"))
        columns = [
            SourceColumn(name="first_name", samples=("Mary",)),
            SourceColumn(name="company", samples=("Acme Labs Inc.",)),
            SourceColumn(name="email", samples=("a.b@example.com",)),
            SourceColumn(name="order_id", samples=("ORD-1", "ORD-2", "ORD-3")),
            SourceColumn(name="order_total", samples=("$12.29",)),
            SourceColumn(name="qty", samples=("3",)),
        ]
        session = run_pipeline(columns, config)
        assert set(session.partition.groups["Profile"]) == {
            "first_name", "company", "email",
        }
        assert set(session.partition.groups["Order"]) == {
            "order_id", "order_total", "qty",
        }
        predicted = {m.source: m.predicted_attribute for m in session.mappings}
        assert predicted["first_name"] == "first_name"
        assert predicted["company"] == "business_name"
        assert predicted["email"] == "email_address"
        assert predicted["order_id"] == "order_id"
        assert predicted["order_total"] == "total_amount"
        assert predicted["qty"] == "quantity"
        keys = [k for k in session.keys if k.is_key]
        assert [k.column for k in keys] == ["order_id"]

    def test_every_column_mapped_exactly_once(self, oracle_config):
        columns = [
            SourceColumn(name=f"col_{i}", samples=(f"v{i}",)) for i in range(20)
        ]
        session = run_pipeline(columns, oracle_config)
        assert sorted(m.source for m in session.mappings) == sorted(c.name for c in columns)

    def test_session_persisted(self, oracle_config):
        session = run_pipeline([FIG3_COLUMN], oracle_config)
        stored = SessionManager(oracle_config).get(session.id)
        assert stored.to_dict() == session.to_dict()

    def test_determinism_modulo_id_and_timestamps(self, oracle_config):
        a = run_pipeline([FIG3_COLUMN], oracle_config)
        b = run_pipeline([FIG3_COLUMN], oracle_config)
        assert a.id != b.id
        assert session_comparable(a) == session_comparable(b)

    def test_filter_ledger_monotone(self, person_schema_path, tmp_path):
        import dataclasses

        columns = [
            SourceColumn(name="fname", samples=("Mary",)),
            SourceColumn(name="company", samples=("Acme Labs Inc.",)),
            SourceColumn(name="zip", samples=("98101",)),
        ]
        filters_on = make_config(person_schema_path, str(tmp_path / "a"))
        filters_off = dataclasses.replace(
            filters_on, ner_enabled=False, rag_enabled=False, session_dir=str(tmp_path / "b")
        )
        on = run_pipeline(columns, filters_on)
        off = run_pipeline(columns, filters_off)
        total_on = sum(b["exact_tokens"] for b in on.budgets)
        total_off = sum(b["exact_tokens"] for b in off.budgets)
        assert total_on < total_off

    def test_backend_unavailable_saves_partial_session(self, person_schema_path, tmp_path):
        config = make_config(
            person_schema_path,
            str(tmp_path / "s"),
            backend=BackendSpec(
                kind="llm",
                endpoint="http://127.0.0.1:9",  # unreachable
                model="m",
                max_retries=0,
                timeout=0.3,
                backoff_base=0.01,
            ),
            concurrency=2,
        )
        columns = [
            SourceColumn(name="fname", samples=("Mary",)),
            SourceColumn(name="lname", samples=("Smith",)),
            SourceColumn(name="city", samples=("Seattle",)),
        ]
        session = run_pipeline(columns, config)
        assert session.errors  # at least the first failure is recorded
        assert len(session.mappings) == 3  # every column still present
        assert all(m.predicted_attribute == UNMAPPED for m in session.mappings)
        assert session.keys == []  # stage 3 skipped on abort
        # session reached disk despite the failure
        stored = SessionManager(config).get(session.id)
        assert stored.errors == session.errors


class TestCorrections:
    def run_session(self, config) -> tuple[SessionManager, MappingSession]:
        manager = SessionManager(config)
        session = manager.run_table([FIG3_COLUMN])
        return manager, session

    def test_override_logs_audit_entry(self, oracle_config):
        manager, session = self.run_session(oracle_config)
        updated = manager.apply_correction(session.id, "contact_name", "account")
        [mapping] = updated.mappings
        assert mapping.predicted_attribute == "account"
        assert mapping.provenance is Provenance.HUMAN_OVERRIDE
        assert mapping.confidence == 1.0
        assert len(updated.corrections) == 1
        assert updated.corrections[0]["previous_attribute"] == "business_name"
        # machine prediction snapshot is untouched
        assert updated.machine_mappings[0].predicted_attribute == "business_name"

    def test_correction_on_finalized_session_rejected(self, oracle_config):
        manager, session = self.run_session(oracle_config)
        manager.finalize(session.id)
        with pytest.raises(SessionFinalizedError):
            manager.apply_correction(session.id, "contact_name", "account")

    def test_unknown_column_and_attribute(self, oracle_config):
        manager, session = self.run_session(oracle_config)
        with pytest.raises(UnknownColumnError):
            manager.apply_correction(session.id, "ghost", "account")
        with pytest.raises(UnknownAttributeError):
            manager.apply_correction(session.id, "contact_name", "no_such_attr")

    def test_unknown_session(self, oracle_config):
        manager = SessionManager(oracle_config)
        with pytest.raises(SessionNotFoundError):
            manager.apply_correction("nope", "c", "a")

    def test_two_corrections_last_wins_both_logged(self, oracle_config):
        manager, session = self.run_session(oracle_config)
        manager.apply_correction(session.id, "contact_name", "account")
        updated = manager.apply_correction(session.id, "contact_name", "first_name")
        assert updated.mappings[0].predicted_attribute == "first_name"
        assert [c["corrected_attribute"] for c in updated.corrections] == [
            "account",
            "first_name",
        ]

    def test_replay_reproduces_current_state(self, oracle_config):
        manager, session = self.run_session(oracle_config)
        manager.apply_correction(session.id, "contact_name", "account")
        updated = manager.apply_correction(session.id, "contact_name", "business_name")
        replayed = replay_corrections(updated.machine_mappings, updated.corrections)
        assert [m.to_dict() for m in replayed] == [m.to_dict() for m in updated.mappings]


class TestFinalize:
    def test_finalize_emits_document(self, oracle_config):
        manager = SessionManager(oracle_config)
        session = manager.run_table([FIG3_COLUMN])
        finalized, document = manager.finalize(session.id)
        assert finalized.status is SessionStatus.FINALIZED
        [entry] = document["mappings"]
        assert entry["source_column"] == "contact_name"
        assert entry["target_attribute"] == "business_name"
        assert entry["unmapped"] is False
        # document also written next to the session
        doc_path = manager.store.directory / f"{session.id}.final.json"
        assert json.loads(doc_path.read_text(encoding="utf-8")) == document

    def test_double_finalize_rejected(self, oracle_config):
        manager = SessionManager(oracle_config)
        session = manager.run_table([FIG3_COLUMN])
        manager.finalize(session.id)
        with pytest.raises(SessionFinalizedError):
            manager.finalize(session.id)

    def test_finalize_with_unmapped_column_flagged(self, oracle_config, monkeypatch):
        manager = SessionManager(oracle_config)
        session = manager.run_table([FIG3_COLUMN])
        session.mappings[0].predicted_attribute = UNMAPPED
        session.mappings[0].confidence = 0.0
        manager.store.save(session)
        _, document = manager.finalize(session.id)
        [entry] = document["mappings"]
        assert entry["unmapped"] is True
        assert entry["target_attribute"] is None

    def test_reopen_allows_followup_correction(self, oracle_config):
        manager = SessionManager(oracle_config)
        session = manager.run_table([FIG3_COLUMN])
        manager.finalize(session.id)
        manager.reopen(session.id)
        updated = manager.apply_correction(session.id, "contact_name", "account")
        assert updated.mappings[0].predicted_attribute == "account"


class TestPipelineConfig:
    def test_validation_bounds(self, person_schema_path, tmp_path):
        with pytest.raises(PipelineConfigError):
            make_config(person_schema_path, str(tmp_path), k1=0)
        with pytest.raises(PipelineConfigError):
            make_config(person_schema_path, str(tmp_path), k2=-1)
        with pytest.raises(PipelineConfigError):
            make_config(person_schema_path, str(tmp_path), sample_limit=7)

    def test_from_file_resolves_relative_paths(self, person_schema_path, tmp_path):
        config_doc = {
            "schema": person_schema_path,
            "measure": "sorensen_dice",
            "filters": ["ner", "rag"],
            "backend": {"kind": "oracle"},
            "session_dir": "sessions",
            "k1": 3,
        }
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(config_doc), encoding="utf-8")
        config = PipelineConfig.from_file(path)
        assert config.k1 == 3
        assert config.session_dir == str(tmp_path / "sessions")
        assert config.ner_enabled and config.rag_enabled

    def test_unknown_filter_rejected(self, person_schema_path, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(
            json.dumps({"schema": person_schema_path, "filters": ["bogus"]}),
            encoding="utf-8",
        )
        with pytest.raises(PipelineConfigError, match="unknown filters"):
            PipelineConfig.from_file(path)

    def test_llm_backend_requires_endpoint(self):
        with pytest.raises(PipelineConfigError, match="endpoint"):
            BackendSpec.from_dict({"kind": "llm"})

    def test_embedding_measure_without_vectors_falls_back(self, person_schema_path, tmp_path):
        config = make_config(
            person_schema_path, str(tmp_path / "s"), measure="embedding_cosine"
        )
        pipeline = Pipeline(config)
        assert pipeline.measure.kind.value == "sorensen_dice"
