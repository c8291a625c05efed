"""Expert-fusion adapter: attention-weighted identity embedding injection.

The expert identity vector is projected through a two-layer MLP, scored
against every token of the general encoder's feature map with a scaled
dot product, and the softmax-weighted projection is added back to each
token. A desk-scale training surrogate optimizes the same parameters on
the gallery-matching task via a cosine readout over mean-pooled fused
features, with fully analytic gradients.

All training math is 64-bit; checkpoints store parameters as 32-bit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .embedstore import TokenFeatureMap
from .errors import DataValidationError, DivergenceError

logger = logging.getLogger(__name__)


@dataclass
class FusionAdapter:
    """Trainable projector parameters plus the attention temperature."""

    w1: np.ndarray  # (d_e, h)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (h, d)
    b2: np.ndarray  # (d,)
    temperature: float = 1.0

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        self.b2 = np.asarray(self.b2, dtype=np.float64)
        d_e, h = self.w1.shape
        h2, d = self.w2.shape
        if h2 != h or self.b1.shape != (h,) or self.b2.shape != (d,):
            raise DataValidationError("inconsistent adapter parameter shapes")
        if self.temperature <= 0:
            raise DataValidationError("temperature must be > 0")
        for name in ("w1", "b1", "w2", "b2"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DivergenceError(f"non-finite values in adapter parameter {name}")

    @property
    def expert_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def output_dim(self) -> int:
        return self.w2.shape[1]

    def copy(self) -> "FusionAdapter":
        return FusionAdapter(
            self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy(), self.temperature
        )


@dataclass(frozen=True)
class FusionOutput:
    fused: np.ndarray  # (N, d)
    attention: np.ndarray  # (N,), non-negative, sums to 1
    projected: np.ndarray  # (d,)


@dataclass(frozen=True)
class MultiFusionOutput:
    fused: np.ndarray  # (N, d)
    per_expert: dict[str, FusionOutput]


def init_adapter(
    expert_dim: int,
    output_dim: int,
    hidden: int | None = None,
    temperature: float = 1.0,
    seed: int = 0,
) -> FusionAdapter:
    """Seeded uniform init in +/- 1/sqrt(fan_in); final layer scaled by 0.1
    so the initial fusion is a small perturbation of the tokens."""
    if hidden is None:
        hidden = max(expert_dim, output_dim)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xADA7]))
    lim1 = 1.0 / math.sqrt(expert_dim)
    lim2 = 1.0 / math.sqrt(hidden)
    return FusionAdapter(
        w1=rng.uniform(-lim1, lim1, size=(expert_dim, hidden)),
        b1=rng.uniform(-lim1, lim1, size=hidden),
        w2=0.1 * rng.uniform(-lim2, lim2, size=(hidden, output_dim)),
        b2=0.1 * rng.uniform(-lim2, lim2, size=output_dim),
        temperature=temperature,
    )


def project_expert(adapter: FusionAdapter, expert_vec: Sequence[float]) -> np.ndarray:
    """MLP projection of the expert identity vector into token space."""
    v = np.asarray(expert_vec, dtype=np.float64)
    if v.shape != (adapter.expert_dim,):
        raise DataValidationError(
            f"expert vector has shape {v.shape}, adapter expects ({adapter.expert_dim},)"
        )
    hidden = np.maximum(0.0, v @ adapter.w1 + adapter.b1)
    return hidden @ adapter.w2 + adapter.b2


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - np.max(scores)
    e = np.exp(shifted)
    return e / e.sum()


def fuse(
    adapter: FusionAdapter,
    tokens: TokenFeatureMap | np.ndarray,
    expert_vec: Sequence[float],
) -> FusionOutput:
    """Add the attention-weighted identity embedding onto every token."""
    tok = tokens.tokens if isinstance(tokens, TokenFeatureMap) else np.asarray(tokens)
    tok = np.asarray(tok, dtype=np.float64)
    if tok.ndim != 2:
        raise DataValidationError("tokens must be an (N, d) matrix")
    d = tok.shape[1]
    if d != adapter.output_dim:
        raise DataValidationError(
            f"token dimension {d} != adapter output dimension {adapter.output_dim}"
        )
    projected = project_expert(adapter, expert_vec)
    scores = (tok @ projected) / (adapter.temperature * math.sqrt(d))
    if not np.all(np.isfinite(scores)):
        raise DivergenceError("non-finite attention scores")
    attention = _softmax(scores)
    fused = tok + attention[:, None] * projected[None, :]
    return FusionOutput(fused=fused, attention=attention, projected=projected)


def fuse_multi(
    adapter_by_category: Mapping[str, FusionAdapter],
    tokens: TokenFeatureMap | np.ndarray,
    expert_vecs: Mapping[str, Sequence[float]],
    active: set[str] | frozenset[str],
) -> MultiFusionOutput:
    """Parallel experts: each contributes an independently-softmaxed additive term."""
    tok = tokens.tokens if isinstance(tokens, TokenFeatureMap) else np.asarray(tokens)
    fused = np.asarray(tok, dtype=np.float64).copy()
    per_expert = {}
    for category in sorted(active):
        if category not in adapter_by_category:
            raise DataValidationError(f"no adapter for active category {category!r}")
        if category not in expert_vecs:
            raise DataValidationError(f"no expert vector for active category {category!r}")
        out = fuse(adapter_by_category[category], tok, expert_vecs[category])
        fused += out.attention[:, None] * out.projected[None, :]
        per_expert[category] = out
    return MultiFusionOutput(fused=fused, per_expert=per_expert)


def pooled_fused(adapter: FusionAdapter, tokens: np.ndarray, expert_vec: Sequence[float]) -> np.ndarray:
    """Mean over tokens of the fused feature map.

    The attention weights sum to one, so the pooled fused vector equals
    mean(tokens) + projected/N; the attention path cancels under mean
    pooling and only the MLP carries gradient to the pooled readout.
    """
    out = fuse(adapter, tokens, expert_vec)
    return out.fused.mean(axis=0)


def _mlp_backward(
    adapter: FusionAdapter, expert_vec: np.ndarray, grad_out: np.ndarray, grads: "AdapterGrads"
) -> None:
    z = expert_vec @ adapter.w1 + adapter.b1
    a = np.maximum(0.0, z)
    grads.w2 += np.outer(a, grad_out)
    grads.b2 += grad_out
    gz = (adapter.w2 @ grad_out) * (z > 0)
    grads.w1 += np.outer(expert_vec, gz)
    grads.b1 += gz


@dataclass
class AdapterGrads:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def zeros_like(cls, adapter: FusionAdapter) -> "AdapterGrads":
        return cls(
            np.zeros_like(adapter.w1),
            np.zeros_like(adapter.b1),
            np.zeros_like(adapter.w2),
            np.zeros_like(adapter.b2),
        )

    def scale(self, factor: float) -> None:
        for g in (self.w1, self.b1, self.w2, self.b2):
            g *= factor

    def add(self, other: "AdapterGrads") -> None:
        self.w1 += other.w1
        self.b1 += other.b1
        self.w2 += other.w2
        self.b2 += other.b2


def matching_loss_and_grads(
    adapter: FusionAdapter,
    query_tokens: TokenFeatureMap | np.ndarray,
    gallery_tokens: Sequence[TokenFeatureMap | np.ndarray],
    query_expert: Sequence[float],
    gallery_experts: Sequence[Sequence[float]],
    answer_index: int,
    readout_temperature: float = 0.1,
) -> tuple[float, AdapterGrads]:
    """Cross-entropy matching loss over cosine scores of pooled fused features.

    score_i = cos(pool(F(query)), pool(F(gallery_i))) / readout_temperature,
    loss = -log softmax(score)[answer_index]. Gradients are analytic over
    all adapter parameters.
    """
    if len(gallery_tokens) < 2:
        raise DataValidationError("gallery must contain at least 2 items")
    if len(gallery_tokens) != len(gallery_experts):
        raise DataValidationError("gallery token maps and expert vectors differ in length")
    if not 0 <= answer_index < len(gallery_tokens):
        raise DataValidationError("answer_index out of range")

    def tok_of(t):
        return np.asarray(t.tokens if isinstance(t, TokenFeatureMap) else t, dtype=np.float64)

    q_tok = tok_of(query_tokens)
    g_toks = [tok_of(t) for t in gallery_tokens]
    q_vec = np.asarray(query_expert, dtype=np.float64)
    g_vecs = [np.asarray(v, dtype=np.float64) for v in gallery_experts]

    n_q = q_tok.shape[0]
    p_q = q_tok.mean(axis=0) + project_expert(adapter, q_vec) / n_q
    pools = []
    for tok, vec in zip(g_toks, g_vecs):
        pools.append(tok.mean(axis=0) + project_expert(adapter, vec) / tok.shape[0])

    nq = np.linalg.norm(p_q)
    if nq == 0.0:
        raise DataValidationError("degenerate zero pooled query vector under cosine")
    scores = np.empty(len(pools))
    for i, p in enumerate(pools):
        npi = np.linalg.norm(p)
        if npi == 0.0:
            raise DataValidationError("degenerate zero pooled gallery vector under cosine")
        scores[i] = (p_q @ p) / (nq * npi) / readout_temperature
    probs = _softmax(scores)
    loss = -math.log(max(probs[answer_index], 1e-300))
    if not math.isfinite(loss):
        raise DivergenceError("non-finite matching loss")

    # backward
    dscores = probs.copy()
    dscores[answer_index] -= 1.0
    grads = AdapterGrads.zeros_like(adapter)
    d_pq = np.zeros_like(p_q)
    for i, p in enumerate(pools):
        gsc = dscores[i] / readout_temperature
        npi = np.linalg.norm(p)
        cos = (p_q @ p) / (nq * npi)
        d_pq += gsc * (p / (nq * npi) - cos * p_q / (nq * nq))
        d_pi = gsc * (p_q / (nq * npi) - cos * p / (npi * npi))
        _mlp_backward(adapter, g_vecs[i], d_pi / g_toks[i].shape[0], grads)
    _mlp_backward(adapter, q_vec, d_pq / n_q, grads)
    return loss, grads


@dataclass(frozen=True)
class AdapterTrainConfig:
    step_size: float = 0.02  # Adam step
    epochs: int = 30
    batch_size: int = 8
    seed: int = 0
    readout_temperature: float = 0.1


class _Adam:
    """Deterministic Adam state over a list of parameter arrays."""

    def __init__(self, params: list[np.ndarray], step: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.step = step
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def update(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        for j, (p, g) in enumerate(zip(params, grads)):
            self.m[j] = self.beta1 * self.m[j] + (1 - self.beta1) * g
            self.v[j] = self.beta2 * self.v[j] + (1 - self.beta2) * g * g
            mh = self.m[j] / (1 - self.beta1**self.t)
            vh = self.v[j] / (1 - self.beta2**self.t)
            p -= self.step * mh / (np.sqrt(vh) + self.eps)


def train_adapter(
    adapter_init: FusionAdapter,
    tasks: Sequence,
    token_maps: Mapping[str, TokenFeatureMap],
    expert_vectors: Mapping[str, np.ndarray],
    config: AdapterTrainConfig = AdapterTrainConfig(),
) -> FusionAdapter:
    """Seeded Adam over gallery-matching tasks; deterministic per seed.

    Returns the trained adapter; if the final epoch's mean loss exceeds the
    initial one, the best epoch's parameters are returned instead.
    """
    if not tasks:
        raise DataValidationError("no training tasks")
    for task in tasks:
        for image_id in (task.query_id, *task.gallery_ids):
            if image_id not in token_maps:
                raise DataValidationError(f"missing token map for image {image_id!r}")
            if image_id not in expert_vectors:
                raise DataValidationError(f"missing expert vector for image {image_id!r}")
    adapter = adapter_init.copy()
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x7A1]))

    def task_loss_grads(task, current):
        return matching_loss_and_grads(
            current,
            token_maps[task.query_id],
            [token_maps[g] for g in task.gallery_ids],
            expert_vectors[task.query_id],
            [expert_vectors[g] for g in task.gallery_ids],
            task.answer_index,
            readout_temperature=config.readout_temperature,
        )

    def mean_loss(current):
        return sum(task_loss_grads(t, current)[0] for t in tasks) / len(tasks)

    initial_loss = mean_loss(adapter)
    best_loss, best = initial_loss, adapter.copy()
    logger.info("adapter training: initial mean loss %.6f over %d tasks", initial_loss, len(tasks))

    params = [adapter.w1, adapter.b1, adapter.w2, adapter.b2]
    optimizer = _Adam(params, config.step_size)
    order = np.arange(len(tasks))
    for epoch in range(config.epochs):
        rng.shuffle(order)
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            acc = AdapterGrads.zeros_like(adapter)
            for idx in batch:
                loss, grads = task_loss_grads(tasks[idx], adapter)
                epoch_loss += loss
                acc.add(grads)
            acc.scale(1.0 / len(batch))
            optimizer.update(params, [acc.w1, acc.b1, acc.w2, acc.b2])
            adapter = FusionAdapter(*params, adapter.temperature)
        epoch_loss /= len(order)
        if not math.isfinite(epoch_loss):
            raise DivergenceError(f"adapter training diverged at epoch {epoch}")
        if epoch_loss < best_loss:
            best_loss, best = epoch_loss, adapter.copy()
        logger.info("adapter training: epoch %d mean loss %.6f", epoch, epoch_loss)

    final_loss = mean_loss(adapter)
    if final_loss > initial_loss:
        logger.warning(
            "adapter training: final loss %.6f above initial %.6f, returning best checkpoint",
            final_loss,
            initial_loss,
        )
        return best
    return adapter
