import json

import numpy as np
import pytest

from ilrkit import embedstore
from ilrkit.embedstore import (
    EmbeddingRecord,
    EmbeddingSet,
    TokenFeatureMap,
    load_embedding_set,
    load_token_maps,
    save_embedding_set,
    save_token_maps,
)
from ilrkit.errors import DataValidationError


@pytest.fixture
def sample_set():
    rng = np.random.default_rng(5)
    records = [
        EmbeddingRecord(f"img{i:03d}", f"inst{i % 4:02d}", "pet",
                        rng.standard_normal(12).astype(np.float32))
        for i in range(10)
    ]
    return EmbeddingSet.from_records("enc", records)


class TestEmbeddingSet:
    def test_indexing(self, sample_set):
        assert sample_set.dimension == 12
        assert sample_set.row_of("img003") == 3
        assert sample_set.record("img007").instance_id == "inst03"
        assert sample_set.instance_index["inst01"] == ["img001", "img005", "img009"]
        assert sample_set.matrix().shape == (10, 12)

    def test_duplicate_image_id_rejected(self):
        rec = EmbeddingRecord("a", "i", "pet", np.ones(3, dtype=np.float32))
        with pytest.raises(DataValidationError, match="duplicate"):
            EmbeddingSet.from_records("enc", [rec, rec])

    def test_dimension_mismatch_rejected(self):
        records = [
            EmbeddingRecord("a", "i", "pet", np.ones(3, dtype=np.float32)),
            EmbeddingRecord("b", "i", "pet", np.ones(4, dtype=np.float32)),
        ]
        with pytest.raises(DataValidationError, match="dimension"):
            EmbeddingSet.from_records("enc", records)

    def test_empty_set_rejected(self):
        with pytest.raises(DataValidationError):
            EmbeddingSet.from_records("enc", [])

    def test_record_validation(self):
        with pytest.raises(DataValidationError):
            EmbeddingRecord("a", "", "pet", np.ones(3))
        with pytest.raises(DataValidationError):
            EmbeddingRecord("a", "i", "pet", np.ones((2, 2)))
        with pytest.raises(DataValidationError):
            EmbeddingRecord("a", "i", "pet", np.empty(0))


@pytest.mark.parametrize("fmt", ["jsonl", "bin"])
def test_round_trip_bit_exact(sample_set, tmp_path, fmt):
    path = tmp_path / f"emb.{fmt}"
    save_embedding_set(sample_set, path, fmt)
    loaded = load_embedding_set(path, fmt)
    assert loaded.dimension == sample_set.dimension
    assert loaded.image_ids == sample_set.image_ids
    for got, want in zip(loaded.records, sample_set.records):
        assert got.instance_id == want.instance_id
        assert got.category == want.category
        assert got.vector.dtype == np.float32
        assert np.array_equal(got.vector, want.vector)


def test_jsonl_dimension_error_names_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    lines = [
        {"image_id": "a", "instance_id": "i", "category": "c", "vector": [1.0, 2.0]},
        {"image_id": "b", "instance_id": "i", "category": "c", "vector": [1.0, 2.0]},
        {"image_id": "c", "instance_id": "i", "category": "c", "vector": [1.0]},
    ]
    path.write_text("\n".join(json.dumps(o) for o in lines) + "\n")
    with pytest.raises(DataValidationError, match="line 3"):
        load_embedding_set(path)


def test_jsonl_malformed_record_names_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"image_id": "a"}\n')
    with pytest.raises(DataValidationError, match="line 1"):
        load_embedding_set(path)


def test_jsonl_blank_lines_skipped(sample_set, tmp_path):
    path = tmp_path / "emb.jsonl"
    save_embedding_set(sample_set, path)
    padded = tmp_path / "padded.jsonl"
    padded.write_text("\n" + path.read_text() + "\n\n")
    assert load_embedding_set(padded).image_ids == sample_set.image_ids


def test_empty_file_rejected(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with pytest.raises(DataValidationError, match="empty"):
        load_embedding_set(path)


class TestBinaryFormat:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(DataValidationError, match="magic"):
            load_embedding_set(path, "bin")

    def test_truncated_vector(self, sample_set, tmp_path):
        path = tmp_path / "x.bin"
        save_embedding_set(sample_set, path, "bin")
        data = path.read_bytes()
        path.write_bytes(data[:-6])
        with pytest.raises(DataValidationError, match="truncated"):
            load_embedding_set(path, "bin")

    def test_trailing_bytes(self, sample_set, tmp_path):
        path = tmp_path / "x.bin"
        save_embedding_set(sample_set, path, "bin")
        path.write_bytes(path.read_bytes() + b"\x00\x00")
        with pytest.raises(DataValidationError, match="trailing"):
            load_embedding_set(path, "bin")

    def test_unknown_format_rejected(self, sample_set, tmp_path):
        with pytest.raises(DataValidationError):
            save_embedding_set(sample_set, tmp_path / "x", "parquet")


class TestTokenMaps:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        maps = [
            TokenFeatureMap(f"img{i}", rng.standard_normal((4, 6)).astype(np.float32))
            for i in range(5)
        ]
        path = tmp_path / "tokens.jsonl"
        save_token_maps(maps, path)
        loaded = load_token_maps(path)
        assert [m.image_id for m in loaded] == [m.image_id for m in maps]
        for got, want in zip(loaded, maps):
            assert np.array_equal(got.tokens, want.tokens)

    def test_inconsistent_shape_rejected(self, tmp_path):
        path = tmp_path / "tokens.jsonl"
        path.write_text(
            json.dumps({"image_id": "a", "tokens": [[1.0, 2.0]]}) + "\n"
            + json.dumps({"image_id": "b", "tokens": [[1.0, 2.0], [3.0, 4.0]]}) + "\n"
        )
        with pytest.raises(DataValidationError, match="line 2"):
            load_token_maps(path)

    def test_non_finite_rejected(self):
        with pytest.raises(DataValidationError, match="non-finite"):
            TokenFeatureMap("a", np.array([[1.0, np.nan]]))

    def test_shape_validation(self):
        with pytest.raises(DataValidationError):
            TokenFeatureMap("a", np.ones(3))

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "tokens.jsonl"
        path.write_text("\n")
        with pytest.raises(DataValidationError, match="empty"):
            load_token_maps(path)


def test_magic_constant():
    assert embedstore.MAGIC == b"EMB1"
