"""Toy instance-recognition expert: a linear embedding head trained with
instance classification plus batch-hard triplet loss.

The frozen raw view stands in for a vision backbone; the head maps raw
vectors to unit-normalized instance embeddings. Classification prototypes
are trained jointly and discarded after training. All gradients are
analytic and checked against finite differences in the test suite.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .embedstore import EmbeddingRecord, EmbeddingSet
from .errors import DataValidationError, DivergenceError

logger = logging.getLogger(__name__)

_NORM_EPS = 1e-12


@dataclass
class ExpertHead:
    """Linear embedding head producing unit-normalized identity vectors."""

    w: np.ndarray  # (d_raw, d_out)
    b: np.ndarray  # (d_out,)
    margin: float = 0.3
    loss_weights: tuple[float, float] = (1.0, 1.0)  # (classification, triplet)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.w.ndim != 2 or self.b.shape != (self.w.shape[1],):
            raise DataValidationError("inconsistent head parameter shapes")
        if self.w.shape[1] < 2:
            raise DataValidationError("d_out must be >= 2")
        if self.margin < 0:
            raise DataValidationError("margin must be >= 0")
        if not (np.all(np.isfinite(self.w)) and np.all(np.isfinite(self.b))):
            raise DivergenceError("non-finite head parameters")

    def copy(self) -> "ExpertHead":
        return ExpertHead(self.w.copy(), self.b.copy(), self.margin, self.loss_weights)


def _normalize_rows(y: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(y, axis=-1, keepdims=True)
    if np.any(norms < _NORM_EPS):
        raise DataValidationError("zero vector cannot be normalized")
    return y / norms


def embed(head: ExpertHead, raw_vec) -> np.ndarray:
    """Unit-normalized identity embedding of one raw vector."""
    v = np.asarray(raw_vec, dtype=np.float64)
    if v.shape != (head.w.shape[0],):
        raise DataValidationError(
            f"raw vector has shape {v.shape}, head expects ({head.w.shape[0]},)"
        )
    return _normalize_rows((v @ head.w + head.b)[None, :])[0]


def embed_set(head: ExpertHead, raw_set: EmbeddingSet, encoder_name: str = "expert") -> EmbeddingSet:
    """Embed every record of a raw set, producing an expert-view EmbeddingSet."""
    y = np.asarray(raw_set.matrix(), dtype=np.float64) @ head.w + head.b
    y = _normalize_rows(y)
    records = [
        EmbeddingRecord(rec.image_id, rec.instance_id, rec.category, y[i].astype(np.float32))
        for i, rec in enumerate(raw_set.records)
    ]
    return EmbeddingSet.from_records(encoder_name, records)


def triplet_loss(anchor, positive, negative, margin: float = 0.3) -> float:
    """Hinge triplet loss on unit-normalized embeddings (Euclidean distances)."""
    a, p, n = (
        _normalize_rows(np.asarray(v, dtype=np.float64)[None, :])[0]
        for v in (anchor, positive, negative)
    )
    d_ap = float(np.linalg.norm(a - p))
    d_an = float(np.linalg.norm(a - n))
    return max(0.0, d_ap - d_an + margin)


def _pairwise_dist(embeddings: np.ndarray) -> np.ndarray:
    sq = np.sum(embeddings**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (embeddings @ embeddings.T)
    return np.sqrt(np.maximum(d2, 0.0))


def batch_hard_mine(embeddings: np.ndarray, labels) -> list[tuple[int, int, int]]:
    """Per anchor: farthest same-label and nearest different-label sample.

    Ties break by lowest index. The batch must contain >= 2 labels, each
    with >= 2 samples.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = list(labels)
    if embeddings.shape[0] != len(labels):
        raise DataValidationError("embedding/label count mismatch")
    counts: dict = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    if len(counts) < 2 or any(c < 2 for c in counts.values()):
        raise DataValidationError(
            "batch must contain >= 2 instances with >= 2 samples each"
        )
    dist = _pairwise_dist(embeddings)
    triplets = []
    for i in range(len(labels)):
        same = [j for j in range(len(labels)) if labels[j] == labels[i] and j != i]
        diff = [j for j in range(len(labels)) if labels[j] != labels[i]]
        pos = max(same, key=lambda j: (dist[i, j], -j))
        neg = min(diff, key=lambda j: (dist[i, j], j))
        triplets.append((i, pos, neg))
    return triplets


@dataclass(frozen=True)
class ExpertTrainConfig:
    d_out: int = 64
    margin: float = 0.3
    loss_weights: tuple[float, float] = (1.0, 1.0)
    p_instances: int = 8
    q_images: int = 4
    step_size: float = 0.15
    epochs: int = 30
    seed: int = 0


def combined_loss_and_grads(
    head: ExpertHead,
    prototypes: np.ndarray,
    x: np.ndarray,
    labels: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Classification + batch-hard triplet loss with analytic gradients.

    Returns (loss, grad_w, grad_b, grad_prototypes). ``labels`` are
    integer indices into the prototype columns.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    batch = x.shape[0]
    cw, tw = head.loss_weights

    y = x @ head.w + head.b
    norms = np.linalg.norm(y, axis=1, keepdims=True)
    if np.any(norms < _NORM_EPS):
        raise DataValidationError("zero embedding cannot be normalized")
    e = y / norms

    # classification term
    logits = e @ prototypes
    logits -= logits.max(axis=1, keepdims=True)
    expl = np.exp(logits)
    probs = expl / expl.sum(axis=1, keepdims=True)
    rows = np.arange(batch)
    ce = -np.mean(np.log(np.maximum(probs[rows, labels], 1e-300)))

    dlogits = probs.copy()
    dlogits[rows, labels] -= 1.0
    dlogits /= batch
    grad_protos = cw * (e.T @ dlogits)
    de = cw * (dlogits @ prototypes.T)

    # batch-hard triplet term
    str_labels = [str(l) for l in labels]
    triplets = batch_hard_mine(e, str_labels)
    tri_loss = 0.0
    for a, p, n in triplets:
        d_ap = np.linalg.norm(e[a] - e[p])
        d_an = np.linalg.norm(e[a] - e[n])
        hinge = d_ap - d_an + head.margin
        if hinge > 0:
            tri_loss += hinge
            coef = tw / len(triplets)
            if d_ap > _NORM_EPS:
                g = coef * (e[a] - e[p]) / d_ap
                de[a] += g
                de[p] -= g
            if d_an > _NORM_EPS:
                g = coef * (e[a] - e[n]) / d_an
                de[a] -= g
                de[n] += g
    tri_loss /= len(triplets)

    # back through normalization: e = y / |y|
    dy = (de - np.sum(de * e, axis=1, keepdims=True) * e) / norms
    grad_w = x.T @ dy
    grad_b = dy.sum(axis=0)
    loss = cw * ce + tw * tri_loss
    if not math.isfinite(loss):
        raise DivergenceError("non-finite expert loss")
    return loss, grad_w, grad_b, grad_protos


class _BatchSampler:
    """P instances x Q images batch sampler over a raw set."""

    def __init__(self, raw_set: EmbeddingSet, p_instances: int, q_images: int):
        self.raw_set = raw_set
        self.p = p_instances
        self.q = q_images
        self.instances = sorted(raw_set.instance_index)
        if len(self.instances) < 2 or self.p < 2 or self.q < 2:
            raise DataValidationError("need >= 2 instances and P, Q >= 2")
        for inst in self.instances:
            if len(raw_set.instance_index[inst]) < 2:
                raise DataValidationError(f"training instance {inst!r} has a single image")

    def epoch_batches(self, rng: np.random.Generator):
        order = rng.permutation(len(self.instances))
        for start in range(0, len(order) - 1, self.p):
            chosen = order[start : start + self.p]
            if len(chosen) < 2:
                continue
            rows, labels = [], []
            for local in chosen:
                inst = self.instances[local]
                image_ids = self.raw_set.instance_index[inst]
                take = min(self.q, len(image_ids))
                picks = rng.choice(len(image_ids), size=take, replace=False)
                rows.extend(self.raw_set.row_of(image_ids[i]) for i in picks)
                labels.extend([local] * take)
            yield np.asarray(rows), np.asarray(labels)


def train_expert(
    raw_set: EmbeddingSet,
    head_init: ExpertHead | None = None,
    config: ExpertTrainConfig = ExpertTrainConfig(),
) -> ExpertHead:
    """Train the expert head on a raw-view set; deterministic per seed."""
    instances = sorted(raw_set.instance_index)
    label_of = {inst: i for i, inst in enumerate(instances)}
    d_raw = raw_set.dimension

    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xE8]))
    if head_init is None:
        lim = 1.0 / math.sqrt(d_raw)
        head = ExpertHead(
            w=rng.uniform(-lim, lim, size=(d_raw, config.d_out)),
            b=np.zeros(config.d_out),
            margin=config.margin,
            loss_weights=config.loss_weights,
        )
    else:
        head = head_init.copy()
    lim = 1.0 / math.sqrt(config.d_out)
    prototypes = rng.uniform(-lim, lim, size=(head.w.shape[1], len(instances)))

    sampler = _BatchSampler(raw_set, config.p_instances, config.q_images)
    matrix = np.asarray(raw_set.matrix(), dtype=np.float64)
    record_labels = np.asarray([label_of[rec.instance_id] for rec in raw_set.records])

    for epoch in range(config.epochs):
        epoch_loss, n_batches = 0.0, 0
        for rows, labels in sampler.epoch_batches(rng):
            loss, gw, gb, gp = combined_loss_and_grads(
                head, prototypes, matrix[rows], record_labels[rows]
            )
            head.w -= config.step_size * gw
            head.b -= config.step_size * gb
            prototypes -= config.step_size * gp
            epoch_loss += loss
            n_batches += 1
        if n_batches and not math.isfinite(epoch_loss):
            raise DivergenceError(f"expert training diverged at epoch {epoch}")
        logger.info(
            "expert training: epoch %d mean loss %.6f", epoch, epoch_loss / max(n_batches, 1)
        )
    return head
