"""Trainable per-class mixing of text and image-mean vectors.

Each class gets a pair of elementwise weight vectors (alpha for the text
vector, beta for the image mean); the mixed reference is
``alpha * text + beta * image_mean``. Pairs are trained per task with SGD on
a cross-entropy whose softmax ranges over the task's own classes only, so a
task's parameters never touch another task's, and previously composed
vectors stay bit-identical when new tasks arrive.

Training logits are ``tau * cosine(mixed, query)``; the gradient includes
the norm term of the cosine (full quotient rule), which the finite-difference
suite enforces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .errors import NumericError, ValidationError
from .types import ClassId, LabelVector, Modality, Pool, TaskSpec


@dataclass(frozen=True)
class MixTrainConfig:
    learning_rate: float = 1e-4
    epochs: int = 10
    batch_size: int = 256
    tau: float = 100.0
    seed: int = 0
    alpha_init: float = 0.5
    beta_init: float = 1.0

    def __post_init__(self):
        if not (self.learning_rate > 0 and np.isfinite(self.learning_rate)):
            raise ValidationError("learning_rate must be positive and finite")
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if not (self.tau > 0 and np.isfinite(self.tau)):
            raise ValidationError("tau must be positive and finite")
        if not np.isfinite(self.alpha_init) or not np.isfinite(self.beta_init):
            raise ValidationError("initializers must be finite")


@dataclass
class MixParams:
    """Per-class (alpha, beta) pairs owned by one task.

    ``domain_id`` is the task's domain when the task was single-domain; it
    binds each pair to the matching image-mean entry when composing a pool.
    """

    task_index: int
    classes: tuple[ClassId, ...]
    alpha: np.ndarray  # (K_t, D) float64
    beta: np.ndarray  # (K_t, D) float64
    domain_id: Optional[int] = None
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if self.alpha.shape != self.beta.shape or self.alpha.ndim != 2:
            raise ValidationError("alpha and beta must both have shape (n_classes, dim)")
        if self.alpha.shape[0] != len(self.classes):
            raise ValidationError("one (alpha, beta) pair per class is required")
        if not (np.isfinite(self.alpha).all() and np.isfinite(self.beta).all()):
            raise ValidationError("mixing parameters must be finite")
        self._index = {cid: i for i, cid in enumerate(self.classes)}

    @property
    def dim(self) -> int:
        return self.alpha.shape[1]

    def pair_for(self, class_id: ClassId) -> tuple[np.ndarray, np.ndarray]:
        try:
            i = self._index[class_id]
        except KeyError:
            raise ValidationError(f"no mixing parameters for class {class_id}") from None
        return self.alpha[i], self.beta[i]


def compose_mixed(params: MixParams, class_id: ClassId, text, image_mean) -> np.ndarray:
    """Elementwise ``alpha * text + beta * image_mean`` for one class."""
    alpha, beta = params.pair_for(class_id)
    t = np.asarray(text, dtype=np.float64)
    m = np.asarray(image_mean, dtype=np.float64)
    if t.shape != (params.dim,) or m.shape != (params.dim,):
        raise ValidationError("text/image-mean dimension mismatch against parameters")
    return alpha * t + beta * m


def mixing_loss_and_grads(alpha, beta, texts, image_means, queries, labels, tau):
    """Loss and analytic alpha/beta gradients for one batch.

    Arrays: alpha/beta/texts/image_means (K_t, D), queries (B, D), labels (B,)
    integer rows into the class axis. Loss is the batch mean of
    ``-log softmax(tau * cos(mixed_k, query))[label]`` with the softmax taken
    over the K_t given classes only.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    texts = np.asarray(texts, dtype=np.float64)
    means = np.asarray(image_means, dtype=np.float64)
    q = np.asarray(queries, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n = q.shape[0]
    if n < 1:
        raise ValidationError("need at least one record")

    mixed = alpha * texts + beta * means  # (K, D)
    mixed_norms = np.sqrt(np.einsum("ij,ij->i", mixed, mixed))
    if (mixed_norms == 0.0).any():
        bad = int(np.argmin(mixed_norms))
        raise NumericError(f"mixing collapsed class row {bad} to the zero vector")
    q_norms = np.sqrt(np.einsum("ij,ij->i", q, q))
    if (q_norms == 0.0).any():
        raise ValidationError("query batch contains a zero vector; cosine undefined")

    dots = q @ mixed.T  # (B, K)
    logits = tau * dots / (q_norms[:, None] * mixed_norms[None, :])
    logits_s = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(logits_s)
    probs = exp / exp.sum(axis=1, keepdims=True)
    loss = float(-np.mean(logits_s[np.arange(n), y] - np.log(exp.sum(axis=1))))

    dlogit = probs.copy()
    dlogit[np.arange(n), y] -= 1.0
    dlogit /= n
    scaled = dlogit / q_norms[:, None]  # (B, K)
    term1 = tau * (scaled.T @ q) / mixed_norms[:, None]  # (K, D)
    seen = np.einsum("bk,bk->k", scaled, dots)
    term2 = tau * mixed * (seen / mixed_norms**3)[:, None]
    grad_mixed = term1 - term2
    return loss, grad_mixed * texts, grad_mixed * means


def _as_vector_map(source: Union[Pool, Mapping[ClassId, np.ndarray]], wanted_modality=None):
    if isinstance(source, Pool):
        out = {}
        for cid, entries in source.entries.items():
            picks = [e for e in entries if wanted_modality is None or e.modality is wanted_modality]
            if picks:
                out[cid] = np.asarray(picks[0].vector, dtype=np.float64)
        return out
    return {cid: np.asarray(v, dtype=np.float64) for cid, v in source.items()}


def _task_arrays(task: TaskSpec, texts, image_means):
    classes = task.class_ids
    dim = task.dim
    text_map = _as_vector_map(texts, Modality.TEXT)
    mean_map = _as_vector_map(image_means)
    missing_text = [c for c in classes if c not in text_map]
    if missing_text:
        raise ValidationError(
            "text-free class(es) cannot be mixed: " + ", ".join(str(c) for c in missing_text)
        )
    missing_mean = [c for c in classes if c not in mean_map]
    if missing_mean:
        raise ValidationError(
            "missing image mean for class(es): " + ", ".join(str(c) for c in missing_mean)
        )
    t_arr = np.stack([text_map[c] for c in classes])
    m_arr = np.stack([mean_map[c] for c in classes])
    if t_arr.shape[1] != dim or m_arr.shape[1] != dim:
        raise ValidationError("text/image-mean dimension mismatch against task records")
    index = {c: i for i, c in enumerate(classes)}
    q = np.stack([r.embedding for r in task.records]).astype(np.float64)
    y = np.array([index[r.class_id] for r in task.records], dtype=np.int64)
    return classes, t_arr, m_arr, q, y


def task_loss_and_grads(
    params: MixParams, task: TaskSpec, texts, image_means, cfg: MixTrainConfig
):
    """Full-batch loss/gradients for a task under the given parameters."""
    classes, t_arr, m_arr, q, y = _task_arrays(task, texts, image_means)
    if classes != params.classes:
        raise ValidationError("parameter classes do not match the task's classes")
    return mixing_loss_and_grads(params.alpha, params.beta, t_arr, m_arr, q, y, cfg.tau)


def train_mixing_for_task(
    task: TaskSpec, texts, image_means, cfg: MixTrainConfig = MixTrainConfig()
) -> MixParams:
    """Mini-batch SGD over the task's records; deterministic for a fixed seed.

    ``texts``/``image_means`` may be Pools or plain class->vector mappings;
    every task class must appear in both.
    """
    classes, t_arr, m_arr, q, y = _task_arrays(task, texts, image_means)
    dim = t_arr.shape[1]
    alpha = np.full((len(classes), dim), cfg.alpha_init, dtype=np.float64)
    beta = np.full((len(classes), dim), cfg.beta_init, dtype=np.float64)
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    n = q.shape[0]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            _, g_alpha, g_beta = mixing_loss_and_grads(
                alpha, beta, t_arr, m_arr, q[batch], y[batch], cfg.tau
            )
            alpha -= cfg.learning_rate * g_alpha
            beta -= cfg.learning_rate * g_beta
    domain_ids = {r.domain_id for r in task.records}
    domain = domain_ids.pop() if len(domain_ids) == 1 else None
    return MixParams(task.index, classes, alpha, beta, domain)


def build_mixed_pool(
    pool_i: Pool, text_pool: Pool, params: Sequence[MixParams]
) -> Pool:
    """Compose one mixed entry per (class, parameter set) over the mean pool.

    Each parameter set composes against the image-mean entry matching its
    ``domain_id``; single-task class-incremental streams yield exactly one
    mixed vector per class. Class-set mismatches are reported with the
    offending classes named.
    """
    if not params:
        raise ValidationError("no mixing parameters supplied")
    text_map = _as_vector_map(text_pool, Modality.TEXT)
    entries: dict[ClassId, list[LabelVector]] = {}
    offenders: list[str] = []
    for p in sorted(params, key=lambda p: p.task_index):
        for cid in p.classes:
            source = None
            for entry in pool_i.entries.get(cid, ()):
                if entry.modality is Modality.IMAGE_MEAN and entry.domain_id == p.domain_id:
                    source = entry
                    break
            if source is None or cid not in text_map:
                offenders.append(str(cid))
                continue
            vec = compose_mixed(p, cid, text_map[cid], source.vector)
            if not vec.any():
                raise NumericError(f"mixing collapsed class {cid} to the zero vector")
            entries.setdefault(cid, []).append(
                LabelVector(
                    vector=vec,
                    class_id=cid,
                    modality=Modality.MIXED,
                    domain_id=p.domain_id,
                    sample_count=source.sample_count,
                )
            )
    if offenders:
        raise ValidationError("class-set mismatch while composing: " + ", ".join(sorted(set(offenders))))
    provenance = pool_i.provenance + (
        f"mixed-pool tasks={sorted(p.task_index for p in params)} classes={len(entries)}",
    )
    return Pool(pool_i.dim, entries, provenance, pool_i.display_names)
