"""Load, validate, index, and persist embedding sets and token feature maps.

Two interchange formats are supported for embedding sets:

* JSONL: one record per line,
  ``{"image_id": str, "instance_id": str, "category": str, "vector": [float, ...]}``
* Binary "EMB1": magic ``EMB1``, little-endian u32 dimension, u32 record
  count, then per record three length-prefixed (u32) UTF-8 strings
  (image_id, instance_id, category) followed by ``dimension`` raw 32-bit
  little-endian floats.

Token maps are JSONL only: ``{"image_id": str, "tokens": [[float, ...], ...]}``.

Vectors are stored un-normalized, exactly as the encoder produced them;
normalization is the similarity layer's job. Sets are immutable once
loaded and safe to share across threads.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataValidationError

MAGIC = b"EMB1"
FORMATS = ("jsonl", "bin")


@dataclass(frozen=True)
class EmbeddingRecord:
    """One image's identity metadata plus its feature vector."""

    image_id: str
    instance_id: str
    category: str
    vector: np.ndarray  # float32, shape (dimension,)

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float32)
        object.__setattr__(self, "vector", vec)
        if vec.ndim != 1 or vec.size == 0:
            raise DataValidationError(
                f"record {self.image_id!r}: vector must be a non-empty 1-d array"
            )
        if not self.instance_id:
            raise DataValidationError(f"record {self.image_id!r}: empty instance_id")


@dataclass
class EmbeddingSet:
    """A validated collection of embedding records under one encoder view."""

    encoder_name: str
    dimension: int
    records: list[EmbeddingRecord]
    instance_index: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.records:
            raise DataValidationError("embedding set must contain at least one record")
        if self.dimension < 1:
            raise DataValidationError("dimension must be >= 1")
        seen: set[str] = set()
        index: dict[str, list[str]] = {}
        for i, rec in enumerate(self.records):
            if rec.vector.shape[0] != self.dimension:
                raise DataValidationError(
                    f"record {i} ({rec.image_id!r}): dimension "
                    f"{rec.vector.shape[0]} != declared {self.dimension}"
                )
            if rec.image_id in seen:
                raise DataValidationError(f"duplicate image_id {rec.image_id!r}")
            seen.add(rec.image_id)
            index.setdefault(rec.instance_id, []).append(rec.image_id)
        self.instance_index = index
        self._row_of = {rec.image_id: i for i, rec in enumerate(self.records)}
        self._matrix = None

    @classmethod
    def from_records(cls, encoder_name: str, records: Iterable[EmbeddingRecord]) -> "EmbeddingSet":
        records = list(records)
        if not records:
            raise DataValidationError("embedding set must contain at least one record")
        return cls(encoder_name, records[0].vector.shape[0], records)

    @property
    def image_ids(self) -> list[str]:
        return [rec.image_id for rec in self.records]

    def row_of(self, image_id: str) -> int:
        return self._row_of[image_id]

    def record(self, image_id: str) -> EmbeddingRecord:
        return self.records[self._row_of[image_id]]

    def vector(self, image_id: str) -> np.ndarray:
        return self.records[self._row_of[image_id]].vector

    def matrix(self) -> np.ndarray:
        """All vectors stacked as an (n, dimension) float32 array."""
        if self._matrix is None:
            self._matrix = np.stack([rec.vector for rec in self.records])
        return self._matrix


@dataclass(frozen=True)
class TokenFeatureMap:
    """The N-token x d feature matrix of one image."""

    image_id: str
    tokens: np.ndarray  # float32, shape (N, d)

    def __post_init__(self):
        tok = np.asarray(self.tokens, dtype=np.float32)
        object.__setattr__(self, "tokens", tok)
        if tok.ndim != 2 or tok.shape[0] < 1 or tok.shape[1] < 1:
            raise DataValidationError(
                f"token map {self.image_id!r}: tokens must be a non-empty 2-d matrix"
            )
        if not np.all(np.isfinite(tok)):
            raise DataValidationError(
                f"token map {self.image_id!r} contains non-finite values"
            )


def _check_format(fmt: str) -> None:
    if fmt not in FORMATS:
        raise DataValidationError(f"unknown format {fmt!r}, expected one of {FORMATS}")


def load_embedding_set(path: str | Path, fmt: str = "jsonl", encoder_name: str | None = None) -> EmbeddingSet:
    """Load and validate an embedding set from ``path``.

    ``encoder_name`` defaults to the file stem. Raises DataValidationError
    on dimension mismatch, duplicate ids, malformed records, or empty files,
    naming the offending line or byte offset.
    """
    _check_format(fmt)
    path = Path(path)
    name = encoder_name if encoder_name is not None else path.stem
    if fmt == "jsonl":
        records = _read_jsonl_records(path)
    else:
        records = _read_bin_records(path)
    if not records:
        raise DataValidationError(f"{path}: empty embedding file")
    return EmbeddingSet(name, records[0].vector.shape[0], records)


def _read_jsonl_records(path: Path) -> list[EmbeddingRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rec = EmbeddingRecord(
                    image_id=obj["image_id"],
                    instance_id=obj["instance_id"],
                    category=obj["category"],
                    vector=np.asarray(obj["vector"], dtype=np.float32),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataValidationError(f"{path}: line {lineno}: malformed record: {exc}") from exc
            if records and rec.vector.shape[0] != records[0].vector.shape[0]:
                raise DataValidationError(
                    f"{path}: line {lineno}: dimension {rec.vector.shape[0]} "
                    f"!= {records[0].vector.shape[0]} of first record"
                )
            records.append(rec)
    return records


def _read_bin_records(path: Path) -> list[EmbeddingRecord]:
    data = path.read_bytes()
    if len(data) == 0:
        raise DataValidationError(f"{path}: empty embedding file")
    if data[:4] != MAGIC:
        raise DataValidationError(f"{path}: bad magic, not an EMB1 file")
    if len(data) < 12:
        raise DataValidationError(f"{path}: truncated header")
    dim, count = struct.unpack_from("<II", data, 4)
    off = 12
    records = []

    def read_str(off: int) -> tuple[str, int]:
        if off + 4 > len(data):
            raise DataValidationError(f"{path}: truncated at offset {off}")
        (n,) = struct.unpack_from("<I", data, off)
        off += 4
        if off + n > len(data):
            raise DataValidationError(f"{path}: truncated string at offset {off}")
        return data[off : off + n].decode("utf-8"), off + n

    for i in range(count):
        image_id, off = read_str(off)
        instance_id, off = read_str(off)
        category, off = read_str(off)
        nbytes = dim * 4
        if off + nbytes > len(data):
            raise DataValidationError(f"{path}: record {i}: truncated vector at offset {off}")
        vec = np.frombuffer(data[off : off + nbytes], dtype="<f4").astype(np.float32)
        off += nbytes
        records.append(EmbeddingRecord(image_id, instance_id, category, vec))
    if off != len(data):
        raise DataValidationError(f"{path}: {len(data) - off} trailing bytes after last record")
    return records


def save_embedding_set(eset: EmbeddingSet, path: str | Path, fmt: str = "jsonl") -> None:
    """Write ``eset`` so that load_embedding_set reads it back bit-exactly."""
    _check_format(fmt)
    path = Path(path)
    if fmt == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            for rec in eset.records:
                fh.write(
                    json.dumps(
                        {
                            "image_id": rec.image_id,
                            "instance_id": rec.instance_id,
                            "category": rec.category,
                            # float() of a float32 is its exact double value,
                            # so json round-trips the 32-bit payload exactly
                            "vector": [float(x) for x in rec.vector],
                        }
                    )
                    + "\n"
                )
    else:
        parts = [MAGIC, struct.pack("<II", eset.dimension, len(eset.records))]
        for rec in eset.records:
            for s in (rec.image_id, rec.instance_id, rec.category):
                b = s.encode("utf-8")
                parts.append(struct.pack("<I", len(b)))
                parts.append(b)
            parts.append(rec.vector.astype("<f4").tobytes())
        Path(path).write_bytes(b"".join(parts))


def load_token_maps(path: str | Path) -> list[TokenFeatureMap]:
    """Load token maps from JSONL, enforcing constant N and d across the file."""
    path = Path(path)
    maps: list[TokenFeatureMap] = []
    shape: tuple[int, int] | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                tokens = np.asarray(obj["tokens"], dtype=np.float32)
                tmap = TokenFeatureMap(obj["image_id"], tokens)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataValidationError(f"{path}: line {lineno}: malformed token map: {exc}") from exc
            if shape is None:
                shape = tmap.tokens.shape
            elif tmap.tokens.shape != shape:
                raise DataValidationError(
                    f"{path}: line {lineno}: token map shape {tmap.tokens.shape} != {shape}"
                )
            maps.append(tmap)
    if not maps:
        raise DataValidationError(f"{path}: empty token-map file")
    return maps


def save_token_maps(maps: Sequence[TokenFeatureMap], path: str | Path) -> None:
    """Write token maps as JSONL, one map per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for tmap in maps:
            fh.write(
                json.dumps(
                    {
                        "image_id": tmap.image_id,
                        "tokens": [[float(x) for x in row] for row in tmap.tokens],
                    }
                )
                + "\n"
            )
