"""Similarity kernels and the classification rules over a pool.

Distances are negated so that "higher = more similar" holds for every kind;
a class's score against a query is the max over its pool entries, and class
probabilities are a max-stabilized softmax over those scores.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from . import _kernels
from .errors import ValidationError
from .types import ClassId, LabelVector, Pool, as_embedding


class SimilarityKind(Enum):
    L1 = "l1"
    L2 = "l2"
    COSINE = "cosine"

    @property
    def code(self) -> int:
        return {"l1": _kernels.KIND_L1, "l2": _kernels.KIND_L2, "cosine": _kernels.KIND_COSINE}[self.value]


@dataclass(frozen=True)
class SoftmaxConfig:
    """Inverse temperature for turning scores into probabilities.

    The classification argmax is invariant to ``tau``; only the probability
    values change.
    """

    tau: float = 1.0

    def __post_init__(self):
        if not (self.tau > 0 and np.isfinite(self.tau)):
            raise ValidationError(f"tau must be positive and finite, got {self.tau}")


DEFAULT_SOFTMAX = SoftmaxConfig()


def sim(kind: SimilarityKind, a, b) -> float:
    """Similarity between two embeddings; symmetric, finite, higher = closer.

    L1/L2 return negated distances (0 iff identical); cosine returns the
    usual dot-product similarity in [-1, 1] and rejects zero vectors, which
    signal a corrupt embedding.
    """
    av = np.asarray(as_embedding(a), dtype=np.float64)
    bv = np.asarray(as_embedding(b), dtype=np.float64)
    if av.shape[0] != bv.shape[0]:
        raise ValidationError(f"dimension mismatch: {av.shape[0]} vs {bv.shape[0]}")
    if kind is SimilarityKind.L1:
        return float(-np.abs(av - bv).sum())
    if kind is SimilarityKind.L2:
        return float(-np.sqrt(np.square(av - bv).sum()))
    na = float(np.sqrt(av @ av))
    nb = float(np.sqrt(bv @ bv))
    if na == 0.0 or nb == 0.0:
        raise ValidationError("cosine similarity undefined for a zero vector")
    return float((av @ bv) / (na * nb))


def pool_similarity(kind: SimilarityKind, pool_entry: Sequence[LabelVector], query) -> float:
    """Max similarity between the query and any vector of one class's entry list."""
    if not pool_entry:
        raise ValidationError("empty pool entry list")
    return max(sim(kind, entry.vector, query) for entry in pool_entry)


def class_scores(kind: SimilarityKind, pool: Pool, query) -> dict[ClassId, float]:
    """One score per class: exactly sum(P^k) kernel evaluations."""
    q = as_embedding(query, dim=pool.dim)
    return {cid: pool_similarity(kind, entries, q) for cid, entries in pool.entries.items()}


def class_probabilities(
    scores: Mapping[ClassId, float], cfg: SoftmaxConfig = DEFAULT_SOFTMAX
) -> dict[ClassId, float]:
    """Softmax over scores with max-subtraction; sums to 1 within 1e-9."""
    if not scores:
        raise ValidationError("empty score map")
    keys = list(scores)
    values = np.array([scores[k] for k in keys], dtype=np.float64)
    if not np.isfinite(values).all():
        raise ValidationError("scores contain NaN or Inf")
    logits = cfg.tau * values
    logits -= logits.max()
    exps = np.exp(logits)
    probs = exps / exps.sum()
    return dict(zip(keys, probs.tolist()))


def classify(
    kind: SimilarityKind, pool: Pool, query, cfg: SoftmaxConfig = DEFAULT_SOFTMAX
) -> tuple[ClassId, dict[ClassId, float]]:
    """Most-similar class plus the full probability map.

    Ties break toward the smallest ClassId; the winner does not depend on
    ``cfg.tau``.
    """
    scores = class_scores(kind, pool, query)
    winner = None
    best = -np.inf
    for cid in pool.classes:  # canonical order makes the tie-break deterministic
        value = scores[cid]
        if value > best:
            best = value
            winner = cid
    return winner, class_probabilities(scores, cfg)


def score_matrix(kind: SimilarityKind, pool: Pool, queries) -> np.ndarray:
    """Batched class scores, shape (n_queries, n_classes) in pool class order.

    Runs on the accelerated backend; equivalent to calling
    :func:`class_scores` per query.
    """
    qarr = np.ascontiguousarray(np.atleast_2d(np.asarray(queries, dtype=np.float64)))
    if qarr.ndim != 2 or qarr.shape[1] != pool.dim:
        raise ValidationError(f"queries must have shape (n, {pool.dim})")
    if not np.isfinite(qarr).all():
        raise ValidationError("queries contain NaN or Inf")
    vectors, offsets, _ = pool.stacked()
    if "v_norms" not in pool._cache:
        norms = np.sqrt(np.einsum("ij,ij->i", vectors, vectors))
        norms.setflags(write=False)
        pool._cache["v_norms"] = norms
    v_norms = pool._cache["v_norms"]
    q_norms = np.sqrt(np.einsum("ij,ij->i", qarr, qarr))
    if kind is SimilarityKind.COSINE:
        if (v_norms == 0.0).any():
            raise ValidationError("pool contains a zero vector; cosine undefined")
        if (q_norms == 0.0).any():
            raise ValidationError("query batch contains a zero vector; cosine undefined")
    return _kernels.segment_scores(kind.code, vectors, offsets, qarr, v_norms, q_norms)


def classify_batch(
    kind: SimilarityKind,
    pool: Pool,
    queries,
    cfg: SoftmaxConfig = DEFAULT_SOFTMAX,
    return_probabilities: bool = False,
):
    """Vectorized :func:`classify` over a query batch.

    Returns the predicted ClassId list, optionally with the (n, K)
    probability matrix in pool class order.
    """
    scores = score_matrix(kind, pool, queries)
    classes = pool.classes
    picks = scores.argmax(axis=1)  # first max = smallest ClassId (canonical order)
    predicted = [classes[i] for i in picks]
    if not return_probabilities:
        return predicted
    logits = cfg.tau * scores
    logits -= logits.max(axis=1, keepdims=True)
    exps = np.exp(logits)
    probs = exps / exps.sum(axis=1, keepdims=True)
    return predicted, probs
