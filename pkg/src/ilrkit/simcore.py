"""Exact similarity computation and brute-force instance matching.

Supports cosine and dot-product similarity. Scores are always accumulated
in 64-bit floats so that ranking and tie behavior are stable even over
32-bit inputs. Everything here is a pure function over immutable inputs;
callers may parallelize over queries freely.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .embedstore import EmbeddingSet
from .errors import DataValidationError

KINDS = ("cosine", "dot")
DEFAULT_KIND = "cosine"

_ZERO_TOL = 0.0  # exact zero norm is the error condition


def _check_kind(kind: str) -> None:
    if kind not in KINDS:
        raise DataValidationError(f"unknown similarity kind {kind!r}, expected one of {KINDS}")


@dataclass(frozen=True)
class MatchResult:
    """Argmax match over a gallery plus the full score list for diagnostics."""

    best_index: int
    scores: np.ndarray  # float64, one score per gallery item


def similarity(a: Sequence[float], b: Sequence[float], kind: str = DEFAULT_KIND) -> float:
    """Similarity of two vectors; cosine lies in [-1, 1], dot is unbounded."""
    _check_kind(kind)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DataValidationError(f"vector length mismatch: {a.shape} vs {b.shape}")
    dot = float(a @ b)
    if kind == "dot":
        return dot
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == _ZERO_TOL or nb == _ZERO_TOL:
        raise DataValidationError("cosine similarity is undefined for zero vectors")
    return min(1.0, max(-1.0, dot / (na * nb)))


def score_gallery(query: np.ndarray, gallery: np.ndarray, kind: str = DEFAULT_KIND) -> np.ndarray:
    """Scores of ``query`` (d,) against every row of ``gallery`` (n, d), float64."""
    _check_kind(kind)
    query = np.asarray(query, dtype=np.float64)
    gallery = np.asarray(gallery, dtype=np.float64)
    if gallery.ndim != 2 or gallery.shape[0] == 0:
        raise DataValidationError("gallery must be a non-empty (n, d) matrix")
    if gallery.shape[1] != query.shape[0]:
        raise DataValidationError(
            f"dimension mismatch: query {query.shape[0]}, gallery {gallery.shape[1]}"
        )
    scores = kernels.dot_scores(gallery, query)
    if kind == "cosine":
        nq = float(np.linalg.norm(query))
        ng = np.linalg.norm(gallery, axis=1)
        if nq == 0.0 or np.any(ng == 0.0):
            raise DataValidationError("cosine similarity is undefined for zero vectors")
        scores = scores / (nq * ng)
    return scores


def match_by_similarity(
    query: Sequence[float],
    gallery: Iterable[Sequence[float]],
    kind: str = DEFAULT_KIND,
) -> MatchResult:
    """Match a query against a gallery; ties broken by lowest index."""
    gallery = np.asarray(list(gallery), dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    scores = score_gallery(query, gallery, kind)
    return MatchResult(best_index=int(np.argmax(scores)), scores=scores)


def top_k(
    query: Sequence[float],
    pool: EmbeddingSet,
    k: int,
    kind: str = DEFAULT_KIND,
    exclude: frozenset[str] | set[str] = frozenset(),
) -> list[tuple[str, float]]:
    """The k highest-scoring non-excluded records, sorted descending.

    Ties break deterministically by (score desc, image_id asc). Returns all
    remaining records when fewer than k survive the exclusion.
    """
    if k < 1:
        raise DataValidationError("k must be >= 1")
    keep = [i for i, rec in enumerate(pool.records) if rec.image_id not in exclude]
    if not keep:
        raise DataValidationError("pool is empty after exclusion")
    scores = score_gallery(np.asarray(query, dtype=np.float64), pool.matrix()[keep], kind)
    ranked = sorted(
        zip((pool.records[i].image_id for i in keep), scores),
        key=lambda item: (-item[1], item[0]),
    )
    return [(image_id, float(score)) for image_id, score in ranked[:k]]
