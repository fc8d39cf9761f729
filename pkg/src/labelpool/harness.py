"""End-to-end incremental protocols: stream tasks, evaluate after each stage.

After every training task the harness rebuilds whatever the chosen variant
needs (merged mean pool, per-task mixing parameters, retrained head) and
evaluates every test task whose classes have been learned, filling one row
of the accuracy matrix. The final average is the plain mean of the last row;
a sample-weighted average is reported alongside for streams with unequal
test tasks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError
from .head import (
    HeadTrainConfig,
    LinearClassifier,
    fit_softmax_regression,
    predict_batch,
    select_head_inputs,
    train_head,
)
from .mixing import MixParams, MixTrainConfig, build_mixed_pool, train_mixing_for_task
from .pooling import MergePolicy, build_mean_pool, merge
from .similarity import SimilarityKind, SoftmaxConfig, classify_batch
from .types import EvalReport, Modality, Pool, Record, TaskSpec


class ProtocolKind(Enum):
    CIL = "cil"
    DIL = "dil"
    CTIL = "ctil"


class Variant(Enum):
    IMAGE_MEAN = "i"
    IMAGE_TEXT = "it"
    CLASSIFIER = "c"


@dataclass
class Protocol:
    kind: ProtocolKind
    variant: Variant
    similarity: Optional[SimilarityKind] = None
    tau: float = 1.0
    mix_cfg: MixTrainConfig = field(default_factory=MixTrainConfig)
    head_cfg: HeadTrainConfig = field(default_factory=HeadTrainConfig)
    seed: int = 0

    def resolved_similarity(self) -> SimilarityKind:
        if self.similarity is not None:
            return self.similarity
        # image-to-image comparisons favor L1; mixed/text references favor cosine
        if self.variant is Variant.IMAGE_MEAN:
            return SimilarityKind.L1
        return SimilarityKind.COSINE


@dataclass
class RunState:
    """Mutable state while a stream is being learned (pools only grow)."""

    pool: Optional[Pool] = None
    mixed_pool: Optional[Pool] = None
    mix_params: list[MixParams] = field(default_factory=list)
    head: Optional[LinearClassifier] = None
    stage: int = 0


def _text_coverage(text_pool: Optional[Pool], classes) -> bool:
    if text_pool is None:
        return False
    return all(
        any(e.modality is Modality.TEXT for e in text_pool.entries.get(c, ()))
        for c in classes
    )


def _task_queries(task: TaskSpec):
    q = np.stack([r.embedding for r in task.records]).astype(np.float64)
    truth = [r.class_id for r in task.records]
    return q, truth


def _accuracy(predicted, truth) -> float:
    hits = sum(1 for p, t in zip(predicted, truth) if p == t)
    return hits / len(truth)


def evaluate_variant(
    protocol: Protocol, state: RunState, task: TaskSpec
) -> float:
    queries, truth = _task_queries(task)
    cfg = SoftmaxConfig(protocol.tau)
    if protocol.variant is Variant.CLASSIFIER:
        predicted = predict_batch(state.head, queries)
    elif protocol.variant is Variant.IMAGE_TEXT:
        predicted = classify_batch(protocol.resolved_similarity(), state.mixed_pool, queries, cfg)
    else:
        predicted = classify_batch(protocol.resolved_similarity(), state.pool, queries, cfg)
    return _accuracy(predicted, truth)


def learn_task(protocol: Protocol, state: RunState, task: TaskSpec, text_pool: Optional[Pool]):
    """Advance the state by one training task."""
    task_pool = build_mean_pool(task)
    state.pool = task_pool if state.pool is None else merge([state.pool, task_pool], MergePolicy.APPEND)
    wants_mixing = protocol.variant in (Variant.IMAGE_TEXT, Variant.CLASSIFIER)
    if wants_mixing and _text_coverage(text_pool, task.class_ids):
        # the task's own per-class means; single-domain tasks have exactly one
        domains = {r.domain_id for r in task.records}
        domain = domains.pop() if len(domains) == 1 else None
        means = {}
        for cid, entries in task_pool.entries.items():
            for entry in entries:
                if entry.domain_id == domain:
                    means[cid] = entry.vector
        params = train_mixing_for_task(task, text_pool, means, protocol.mix_cfg)
        state.mix_params.append(params)
        state.mixed_pool = build_mixed_pool(state.pool, text_pool, state.mix_params)
    if protocol.variant is Variant.CLASSIFIER:
        inputs = select_head_inputs(state.pool, state.mixed_pool)
        state.head = train_head(inputs, protocol.head_cfg)
    state.stage += 1


def run(
    protocol: Protocol,
    train_tasks: Sequence[TaskSpec],
    test_tasks: Sequence[TaskSpec],
    text_pool: Optional[Pool] = None,
) -> EvalReport:
    """Learn the stream task by task; one accuracy-matrix row per stage."""
    if not train_tasks or not test_tasks:
        raise ValidationError("need at least one training and one test task")
    if protocol.variant is Variant.IMAGE_TEXT:
        all_classes = {c for t in train_tasks for c in t.class_ids}
        if not _text_coverage(text_pool, all_classes):
            raise ValidationError(
                "image+text variant requires a text vector for every training class"
            )
    state = RunState()
    matrix: list[list[Optional[float]]] = []
    for task in train_tasks:
        learn_task(protocol, state, task, text_pool)
        learned = set(state.pool.classes)
        row: list[Optional[float]] = []
        for test_task in test_tasks:
            if set(test_task.class_ids) <= learned:
                row.append(evaluate_variant(protocol, state, test_task))
            else:
                row.append(None)
        matrix.append(row)

    namespaces = {r.class_id.namespace for t in test_tasks for r in t.records}
    if len(namespaces) > 1:
        labels = [
            f"{t.records[0].class_id.namespace}:{t.index}" if t.records else f"task{j+1}"
            for j, t in enumerate(test_tasks)
        ]
    else:
        labels = [f"task {j + 1}" for j in range(len(test_tasks))]
    return EvalReport(
        matrix=matrix,
        test_task_labels=labels,
        stage_labels=[f"after task {t.index}" for t in train_tasks],
        test_task_sizes=[len(t.records) for t in test_tasks],
        config={
            "kind": protocol.kind.value,
            "variant": protocol.variant.value,
            "similarity": protocol.resolved_similarity().value,
            "tau": protocol.tau,
        },
        seed=protocol.seed,
    )


def forgetting_audit(report: EvalReport) -> dict[int, float]:
    """Per test task, the largest accuracy drop between any two stages.

    Zero everywhere means nothing learned later ever hurt an earlier task.
    Tasks evaluated in fewer than two stages are omitted.
    """
    audit: dict[int, float] = {}
    n_tasks = len(report.test_task_labels)
    for j in range(n_tasks):
        column = [row[j] for row in report.matrix if row[j] is not None]
        if len(column) < 2:
            continue
        worst = 0.0
        best_so_far = column[0]
        for value in column[1:]:
            worst = max(worst, best_so_far - value)
            best_so_far = max(best_so_far, value)
        audit[j] = worst
    return audit


def upper_bound(
    records: Sequence[Record],
    test_tasks: Sequence[TaskSpec],
    cfg: HeadTrainConfig = HeadTrainConfig(),
) -> float:
    """Train a head on ALL raw records at once (the non-incremental reference).

    This is intentionally the only code path where raw records reach a head.
    """
    if not records:
        raise ValidationError("need training records")
    classes = tuple(sorted({r.class_id for r in records}))
    if len(classes) < 2:
        raise ValidationError("need at least 2 classes")
    index = {c: i for i, c in enumerate(classes)}
    x = np.stack([r.embedding for r in records]).astype(np.float64)
    y = np.array([index[r.class_id] for r in records], dtype=np.int64)
    w, b, loss, steps, reached = fit_softmax_regression(x, y, len(classes), cfg)
    head = LinearClassifier(w, b, classes, final_loss=loss, steps=steps, reached_low=reached)
    accuracies = []
    for task in test_tasks:
        queries, truth = _task_queries(task)
        accuracies.append(_accuracy(predict_batch(head, queries), truth))
    return float(np.mean(accuracies))


def interleave_streams(streams: Sequence[Sequence[TaskSpec]], seed: int) -> list[TaskSpec]:
    """Concatenate dataset streams and shuffle task order with a seeded
    permutation; tasks are re-indexed 1..M in the shuffled order."""
    flat = [task for stream in streams for task in stream]
    rng = np.random.Generator(np.random.Philox(seed))
    order = rng.permutation(len(flat))
    out = []
    for new_index, old in enumerate(order, start=1):
        task = flat[old]
        out.append(TaskSpec(index=new_index, records=task.records, kind=task.kind))
    return out
