"""Linear softmax head trained on the pool's label vectors only.

The head never sees raw training records (that shortcut exists solely in the
harness's upper-bound mode). Training is full-batch adaptive-moment descent
from zero initialization: the problem is convex, so the optimum does not
depend on any seed, and full-batch runs are bit-reproducible.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NumericError, ValidationError
from .types import ClassId, Pool, as_embedding


@dataclass(frozen=True)
class HeadTrainConfig:
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    target_loss_low: float = 0.05
    target_loss_high: float = 0.1
    max_steps: int = 5000
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.target_loss_low <= self.target_loss_high):
            raise ValidationError("need 0 < target_loss_low <= target_loss_high")
        if self.max_steps < 1:
            raise ValidationError("max_steps must be >= 1")
        if not (self.learning_rate > 0 and np.isfinite(self.learning_rate)):
            raise ValidationError("learning_rate must be positive and finite")


@dataclass(eq=False)
class LinearClassifier:
    """Row-per-class linear map; rows follow sorted ClassId order."""

    weights: np.ndarray  # (K, D) float64
    bias: np.ndarray  # (K,) float64
    class_order: tuple[ClassId, ...]
    final_loss: float = float("nan")
    steps: int = 0
    reached_low: bool = False

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[0] != len(self.class_order):
            raise ValidationError("weights must have one row per class")
        if self.bias.shape != (self.weights.shape[0],):
            raise ValidationError("bias must have one entry per class")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ValidationError("classifier parameters must be finite")

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, LinearClassifier):
            return NotImplemented
        return (
            self.class_order == other.class_order
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.bias, other.bias)
        )

    __hash__ = None  # type: ignore[assignment]


def fit_softmax_regression(x: np.ndarray, y_idx: np.ndarray, n_classes: int, cfg: HeadTrainConfig):
    """Full-batch Adam on mean cross-entropy from zero init.

    Stops once the loss is <= ``target_loss_high`` or after ``max_steps``
    updates (with a warning if the target was not met). Returns
    (weights, bias, final_loss, steps_run, reached_low).
    """
    n, dim = x.shape
    w = np.zeros((n_classes, dim))
    b = np.zeros(n_classes)
    m_w = np.zeros_like(w)
    v_w = np.zeros_like(w)
    m_b = np.zeros_like(b)
    v_b = np.zeros_like(b)
    onehot_rows = np.arange(n)
    loss = float("inf")
    steps = 0
    # overflow inside a diverging step is expected; the finite-loss check
    # below is the guard that turns it into an explicit error
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(1, cfg.max_steps + 1):
            logits = x @ w.T + b
            logits -= logits.max(axis=1, keepdims=True)
            exp = np.exp(logits)
            log_z = np.log(exp.sum(axis=1))
            loss = float(np.mean(log_z - logits[onehot_rows, y_idx]))
            if not np.isfinite(loss):
                raise NumericError(
                    f"head training diverged at step {step}; lower the learning rate"
                )
            if loss <= cfg.target_loss_high:
                break
            grad_logits = exp / exp.sum(axis=1, keepdims=True)
            grad_logits[onehot_rows, y_idx] -= 1.0
            grad_logits /= n
            g_w = grad_logits.T @ x
            g_b = grad_logits.sum(axis=0)
            m_w = cfg.beta1 * m_w + (1 - cfg.beta1) * g_w
            v_w = cfg.beta2 * v_w + (1 - cfg.beta2) * g_w**2
            m_b = cfg.beta1 * m_b + (1 - cfg.beta1) * g_b
            v_b = cfg.beta2 * v_b + (1 - cfg.beta2) * g_b**2
            c1 = 1 - cfg.beta1**step
            c2 = 1 - cfg.beta2**step
            w -= cfg.learning_rate * (m_w / c1) / (np.sqrt(v_w / c2) + cfg.epsilon)
            b -= cfg.learning_rate * (m_b / c1) / (np.sqrt(v_b / c2) + cfg.epsilon)
            steps = step
    if loss > cfg.target_loss_high:
        warnings.warn(
            f"head loss {loss:.4f} did not reach {cfg.target_loss_high} "
            f"within {cfg.max_steps} steps",
            RuntimeWarning,
            stacklevel=2,
        )
    return w, b, loss, steps, loss <= cfg.target_loss_low


def train_head(pool: Pool, cfg: HeadTrainConfig = HeadTrainConfig()) -> LinearClassifier:
    """Train a head on every label vector in the pool (one example each).

    A pure function of (pool, cfg): retraining after the pool grows never
    mutates a previously returned head.
    """
    if pool.num_classes < 2:
        raise ValidationError("need at least 2 classes to train a head")
    vectors, offsets, classes = pool.stacked()
    y_idx = np.repeat(np.arange(len(classes)), np.diff(offsets))
    w, b, loss, steps, reached_low = fit_softmax_regression(vectors, y_idx, len(classes), cfg)
    return LinearClassifier(w, b, classes, final_loss=loss, steps=steps, reached_low=reached_low)


def decision_values(head: LinearClassifier, queries) -> np.ndarray:
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if q.shape[1] != head.dim:
        raise ValidationError(f"queries must have shape (n, {head.dim})")
    if not np.isfinite(q).all():
        raise ValidationError("queries contain NaN or Inf")
    return q @ head.weights.T + head.bias


def predict(head: LinearClassifier, query) -> ClassId:
    """Argmax over class rows; ties pick the smallest ClassId."""
    values = decision_values(head, as_embedding(query, dim=head.dim))[0]
    return head.class_order[int(values.argmax())]


def predict_batch(head: LinearClassifier, queries) -> list[ClassId]:
    picks = decision_values(head, queries).argmax(axis=1)
    return [head.class_order[i] for i in picks]


def select_head_inputs(pool_i: Pool, pool_mixed: Optional[Pool] = None) -> Pool:
    """Per class, prefer mixed-modality entries when available, else image means."""
    if pool_mixed is None:
        return pool_i
    if pool_mixed.dim != pool_i.dim:
        raise ValidationError("pool dimension mismatch")
    entries = {}
    for cid in sorted(set(pool_i.entries) | set(pool_mixed.entries)):
        chosen = pool_mixed.entries.get(cid) or pool_i.entries[cid]
        entries[cid] = list(chosen)
    provenance = pool_i.provenance + ("head-inputs: mixed preferred over image-mean",)
    names = dict(pool_i.display_names)
    names.update(pool_mixed.display_names)
    return Pool(pool_i.dim, entries, provenance, names)
