"""Similarity measures: tokenization, bigram overlap scores, word vectors."""

from __future__ import annotations

import math
import os

import numpy as np
import pytest
from hypothesis import given, strategies as st

from schemamap.similarity import (
    MeasureKind,
    SimilarityMeasure,
    VectorFormatError,
    WordVectorTable,
    bigram_jaccard,
    embedding_cosine,
    embedding_cosine_detail,
    load_vectors,
    sorensen_dice,
    tokenize_identifier,
)


class TestTokenizeIdentifier:
    @pytest.mark.parametrize(
        "name,expected",
        [
            ("phone_number", ["phone", "number"]),
            ("HomePhoneNumber", ["home", "phone", "number"]),
            ("XYZ_first_name", ["xyz", "first", "name"]),
            ("ship-date", ["ship", "date"]),
            ("address1", ["address", "1"]),
            ("XMLParser", ["xml", "parser"]),
            ("order total", ["order", "total"]),
            ("", []),
            ("__", []),
        ],
    )
    def test_examples(self, name, expected):
        assert tokenize_identifier(name) == expected


class TestBigramScores:
    def test_phone_tel_no_shared_bigram(self):
        assert bigram_jaccard("phone", "tel") == 0.0
        assert sorensen_dice("phone", "tel") == 0.0

    def test_identity(self):
        assert bigram_jaccard("phone", "phone") == 1.0

    def test_night_nacht(self):
        # bigrams {ni,ig,gh,ht} vs {na,ac,ch,ht}: intersection {ht}, union 7
        assert bigram_jaccard("night", "nacht") == pytest.approx(1 / 7)
        assert sorensen_dice("night", "nacht") == 0.25  # 2*1/(4+4)

    def test_single_chars_both_empty_bigrams(self):
        assert sorensen_dice("a", "a") == 1.0
        assert bigram_jaccard("a", "b") == 1.0  # both bigram sets empty
        assert bigram_jaccard("a", "ab") == 0.0  # exactly one empty

    def test_case_normalization(self):
        assert bigram_jaccard("Phone", "pHoNe") == 1.0

    text = st.text(max_size=16)

    @given(text, text)
    def test_range_and_symmetry(self, x, y):
        for fn in (bigram_jaccard, sorensen_dice):
            score = fn(x, y)
            assert 0.0 <= score <= 1.0
            assert score == fn(y, x)

    @given(text)
    def test_reflexivity(self, x):
        assert bigram_jaccard(x, x) == 1.0
        assert sorensen_dice(x, x) == 1.0

    @given(text, text)
    def test_dice_jaccard_identity(self, x, y):
        j = bigram_jaccard(x, y)
        d = sorensen_dice(x, y)
        assert math.isclose(d, 2 * j / (1 + j), rel_tol=1e-12, abs_tol=1e-12)


@pytest.fixture
def tiny_vectors(tmp_path) -> WordVectorTable:
    path = tmp_path / "vec.txt"
    path.write_text(
        "phone 1.0 0.0 0.0\n"
        "tel 0.8 0.6 0.0\n"
        "number 0.0 1.0 0.0\n"
        "email 0.0 0.0 1.0\n"
        "home -1.0 0.0 0.0\n",
        encoding="utf-8",
    )
    return load_vectors(path)


class TestLoadVectors:
    def test_two_line_fixture(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("a 1 0\nb 0 1\n", encoding="utf-8")
        table = load_vectors(path)
        assert table.dimension == 2
        assert len(table) == 2
        assert "a" in table

    def test_header_line_skipped(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("2 3\na 1 0 0\nb 0 1 0\n", encoding="utf-8")
        table = load_vectors(path)
        assert table.dimension == 3
        assert len(table) == 2

    def test_dimension_mismatch_names_line(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("a 1 0 0\nb 0 1\n", encoding="utf-8")
        with pytest.raises(VectorFormatError, match=":2"):
            load_vectors(path)

    def test_unparsable_float_names_line(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("a 1 0\nb x 1\n", encoding="utf-8")
        with pytest.raises(VectorFormatError, match=":2"):
            load_vectors(path)

    def test_duplicates_keep_first(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("a 1 0\na 0 1\n", encoding="utf-8")
        table = load_vectors(path)
        assert np.allclose(table.get("a"), [1, 0])

    def test_tokens_lowercased(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("Phone 1 0\n", encoding="utf-8")
        table = load_vectors(path)
        assert "phone" in table and "PHONE" in table


class TestEmbeddingCosine:
    def test_identical_strings(self, tiny_vectors):
        detail = embedding_cosine_detail("phone", "phone", tiny_vectors)
        assert detail.raw_cosine == pytest.approx(1.0)
        assert detail.score == pytest.approx(1.0)
        assert not detail.oov

    def test_known_angle(self, tiny_vectors):
        detail = embedding_cosine_detail("phone", "tel", tiny_vectors)
        assert detail.raw_cosine == pytest.approx(0.8)
        assert detail.score == pytest.approx(0.9)

    def test_oov_scores_zero_with_flag(self, tiny_vectors):
        detail = embedding_cosine_detail("qqqq", "phone", tiny_vectors)
        assert detail.score == 0.0
        assert detail.raw_cosine is None
        assert detail.oov

    def test_multi_token_mean(self, tiny_vectors):
        # "phone_number" embeds as mean of phone and number
        detail = embedding_cosine_detail("phone_number", "phone", tiny_vectors)
        expected = (np.array([1, 0, 0]) + np.array([0, 1, 0])) / 2
        raw = float(
            expected @ np.array([1, 0, 0])
            / (np.linalg.norm(expected) * 1.0)
        )
        assert detail.raw_cosine == pytest.approx(raw)

    def test_opposite_vectors_clip_to_zero(self, tiny_vectors):
        detail = embedding_cosine_detail("phone", "home", tiny_vectors)
        assert detail.raw_cosine == pytest.approx(-1.0)
        assert detail.score == 0.0  # (cos+1)/2 = 0

    def test_unknown_tokens_skipped_in_mean(self, tiny_vectors):
        a = embedding_cosine("zzz_phone", "phone", tiny_vectors)
        b = embedding_cosine("phone", "phone", tiny_vectors)
        assert a == pytest.approx(b)


class TestSimilarityMeasure:
    def test_from_name(self, tiny_vectors):
        for name in ("bigram_jaccard", "sorensen_dice"):
            m = SimilarityMeasure.from_name(name)
            assert 0.0 <= m.score("phone", "tel") <= 1.0
        m = SimilarityMeasure.from_name("embedding_cosine", vectors=tiny_vectors)
        assert m.score("phone", "tel") == pytest.approx(0.9)

    def test_embedding_requires_vectors(self):
        with pytest.raises(ValueError):
            SimilarityMeasure(MeasureKind.EMBEDDING_COSINE)


GLOVE_PATH = os.environ.get("GLOVE_PATH", "")


@pytest.mark.skipif(
    not (GLOVE_PATH and os.path.isfile(GLOVE_PATH)),
    reason="set GLOVE_PATH to the glove.42B.300d text file to enable",
)
def test_glove_phone_tel_cosine():
    table = load_vectors(GLOVE_PATH)
    assert table.dimension == 300
    assert "phone" in table and "tel" in table
    detail = embedding_cosine_detail("phone", "tel", table)
    assert detail.raw_cosine == pytest.approx(0.50, abs=0.05)
