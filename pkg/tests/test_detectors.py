"""Object-type partitioning and key detection."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from schemamap.core import SourceColumn, load_target_schema
from schemamap.detectors import (
    KEY_NAME_HINTS,
    KeyAction,
    KeyRule,
    KeyRuleError,
    detect_keys,
    detect_object_types,
    filter_key_candidates,
    uniqueness_ratio,
)
from schemamap.prompting import OracleBackend, RemoteLLMBackend
from schemamap.similarity import MeasureKind, SimilarityMeasure

DICE = SimilarityMeasure(MeasureKind.SORENSEN_DICE)


def cols(*names):
    return [SourceColumn(name=n) for n in names]


@pytest.fixture
def combined_schema(combined_schema_path):
    return load_target_schema(combined_schema_path)


class TestDetectObjectTypes:
    def test_profile_and_order_split(self, combined_schema):
        columns = cols("first_name", "order_total")
        partition = detect_object_types(columns, combined_schema, DICE)
        assert partition.groups["Profile"] == ["first_name"]
        assert partition.groups["Order"] == ["order_total"]

    def test_single_object_type_takes_all(self, combined_schema):
        profile_only = [combined_schema[0]]
        columns = cols("first_name", "order_total", "whatever")
        partition = detect_object_types(columns, profile_only, DICE)
        assert partition.groups["Profile"] == ["first_name", "order_total", "whatever"]

    def test_six_column_fixture_matches_exhaustive_affinities(self, combined_schema):
        names = ["fname", "order_no", "zip", "ship_date", "company", "qty"]
        partition = detect_object_types(cols(*names), combined_schema, DICE)
        # independent brute force over the full vocabulary
        for column in names:
            best_type, best_score = None, -1.0
            for ot in combined_schema:
                texts = [a.name for a in ot.attributes] + [
                    al for a in ot.attributes for al in a.aliases
                ]
                score = max(DICE.score(column, t) for t in texts)
                if score > best_score:
                    best_type, best_score = ot.name, score
            assert column in partition.groups[best_type]
            assert partition.scores[column][best_type] == pytest.approx(best_score)

    def test_empty_schema_rejected(self):
        with pytest.raises(ValueError):
            detect_object_types(cols("a"), [], DICE)

    @given(
        names=st.lists(
            st.text(alphabet="abcdefgh_", min_size=1, max_size=10),
            min_size=1,
            max_size=12,
            unique=True,
        )
    )
    @settings(max_examples=40, deadline=None)
    def test_partition_total_and_disjoint(self, names):
        from schemamap.evaluation import domain_schema_path

        schema = load_target_schema(domain_schema_path("person")) + load_target_schema(
            domain_schema_path("sales")
        )
        partition = detect_object_types(cols(*names), schema, DICE)
        seen = [n for group in partition.groups.values() for n in group]
        assert sorted(seen) == sorted(names)  # total, no duplicates


class TestKeyRules:
    def test_keep_id_pattern(self):
        rules = [KeyRule(pattern="*_id", action=KeyAction.KEEP)]
        kept = filter_key_candidates(cols("customer_id", "first_name"), rules)
        assert kept == ["customer_id"]

    def test_empty_chain_drops_all(self):
        assert filter_key_candidates(cols("a", "b_id"), []) == []

    def test_first_match_wins(self):
        rules = [
            KeyRule(pattern="tmp_*", action=KeyAction.DROP),
            KeyRule(pattern="*_id", action=KeyAction.KEEP),
        ]
        kept = filter_key_candidates(cols("tmp_id", "user_id"), rules)
        assert kept == ["user_id"]

    def test_regex_prefix(self):
        rules = [KeyRule(pattern="re:^.*(id|key)$", action=KeyAction.KEEP)]
        kept = filter_key_candidates(cols("rowkey", "name", "recid"), rules)
        assert kept == ["rowkey", "recid"]

    def test_invalid_regex_rejected_at_load(self):
        with pytest.raises(KeyRuleError):
            KeyRule(pattern="re:([bad", action=KeyAction.KEEP)

    def test_order_equivariance(self):
        rules = [
            KeyRule(pattern="tmp_*", action=KeyAction.DROP),
            KeyRule(pattern="*_id", action=KeyAction.KEEP),
            KeyRule(pattern="id", action=KeyAction.KEEP),
        ]
        names = ["a_id", "tmp_id", "id", "b_id", "name"]
        rng = random.Random(3)
        expected_set = set(filter_key_candidates(cols(*names), rules))
        for _ in range(10):
            shuffled = names[:]
            rng.shuffle(shuffled)
            kept = filter_key_candidates(cols(*shuffled), rules)
            assert set(kept) == expected_set
            assert kept == [n for n in shuffled if n in expected_set]  # input order


class TestUniquenessRatio:
    def test_all_distinct(self):
        assert uniqueness_ratio(("1", "2", "3")) == 1.0

    def test_two_thirds(self):
        assert uniqueness_ratio(("open", "open", "closed")) == pytest.approx(2 / 3)

    def test_empty_values_ignored(self):
        assert uniqueness_ratio(("a", "", " ", "b")) == 1.0

    def test_no_evidence(self):
        assert uniqueness_ratio(()) == 0.0
        assert uniqueness_ratio(("", "")) == 0.0

    @given(samples=st.lists(st.text(alphabet="abc", max_size=2), max_size=10))
    def test_permutation_invariant_and_bounded(self, samples):
        base = uniqueness_ratio(samples)
        assert 0.0 <= base <= 1.0
        rng = random.Random(0)
        shuffled = samples[:]
        rng.shuffle(shuffled)
        assert uniqueness_ratio(shuffled) == base

    @given(samples=st.lists(st.text(alphabet="abc", min_size=1, max_size=2), min_size=1, max_size=8))
    def test_duplicate_never_increases(self, samples):
        base = uniqueness_ratio(samples)
        with_dup = samples + [samples[0]]
        assert uniqueness_ratio(with_dup) <= base


class TestDetectKeys:
    def backend(self):
        return OracleBackend(measure=DICE)

    def test_all_distinct_eligible(self):
        columns = [SourceColumn(name="customer_id", samples=("1", "2", "3"))]
        [verdict] = detect_keys(["customer_id"], columns, self.backend())
        assert verdict.uniqueness_ratio == 1.0
        assert verdict.is_key

    def test_repeats_rejected_at_default_threshold(self):
        columns = [SourceColumn(name="status", samples=("open", "open", "closed"))]
        [verdict] = detect_keys(["status"], columns, self.backend())
        assert verdict.uniqueness_ratio == pytest.approx(2 / 3)
        assert not verdict.is_key
        assert "rejected" in verdict.rationale

    def test_oracle_ranks_key_like_name_first(self):
        columns = [
            SourceColumn(name="row_number", samples=("1", "2")),
            SourceColumn(name="customer_id", samples=("a", "b")),
        ]
        verdicts = detect_keys(
            ["row_number", "customer_id"], columns, self.backend()
        )
        # independent scoring against the hint list
        scores = {
            name: max(DICE.score(name, hint) for hint in KEY_NAME_HINTS)
            for name in ("row_number", "customer_id")
        }
        expected = max(scores, key=lambda n: scores[n])
        chosen = [v.column for v in verdicts if v.is_key]
        assert chosen == [expected] == ["customer_id"]

    def test_lower_threshold_admits_noisy_column(self):
        columns = [SourceColumn(name="code", samples=("x", "x", "y", "z"))]
        [verdict] = detect_keys(["code"], columns, self.backend(), threshold=0.5)
        assert verdict.is_key

    def test_unknown_candidate_rejected(self):
        with pytest.raises(ValueError, match="not present"):
            detect_keys(["ghost"], cols("real"), self.backend())

    def test_llm_backend_selects_by_prompt(self, mock_llm_server):
        mock_llm_server.queue((200, {"text": "order_id"}))
        backend = RemoteLLMBackend(
            endpoint=mock_llm_server.endpoint, model="m", max_retries=0, timeout=5
        )
        columns = [
            SourceColumn(name="order_id", samples=("a", "b")),
            SourceColumn(name="line_id", samples=("1", "2")),
        ]
        verdicts = detect_keys(["order_id", "line_id"], columns, backend, object_type="Order")
        assert [v.column for v in verdicts if v.is_key] == ["order_id"]
        sent = mock_llm_server.seen()[-1]["prompt"]
        assert "order_id" in sent and "line_id" in sent
