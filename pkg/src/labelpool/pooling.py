"""Pool construction: exact streaming per-class means, merging, accounting.

Learning a task never touches existing label vectors, so merging new task
pools is forgetting-free by construction. Accumulation is float64 with the
incremental mean update, which keeps streaming equal to batch means at the
1e-12 level even over millions of samples.
"""

from __future__ import annotations

from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ValidationError
from .types import ClassId, LabelVector, Modality, Pool, TaskKind, TaskSpec


class MergePolicy(Enum):
    APPEND = "append"  # shared classes concatenate entry lists (P grows)
    WEIGHTED_MEAN = "weighted-mean"  # same (class, domain) image means combine exactly
    ERROR = "error"  # shared classes are a caller bug


class MeanAccumulator:
    """Streaming arithmetic mean of embeddings for one (class, domain) key."""

    __slots__ = ("class_id", "domain_id", "dim", "_mean", "count")

    def __init__(self, class_id: ClassId, dim: int, domain_id: Optional[int] = None):
        if dim < 1:
            raise ValidationError("accumulator dimension must be >= 1")
        self.class_id = class_id
        self.domain_id = domain_id
        self.dim = dim
        self._mean = np.zeros(dim, dtype=np.float64)
        self.count = 0

    def update(self, embedding) -> "MeanAccumulator":
        e = np.asarray(embedding, dtype=np.float64)
        if e.shape != (self.dim,):
            raise ValidationError(f"dimension mismatch: expected {self.dim}, got {e.shape}")
        if not np.isfinite(e).all():
            raise ValidationError("embedding contains NaN or Inf")
        self.count += 1
        self._mean += (e - self._mean) / self.count
        return self

    @property
    def mean(self) -> np.ndarray:
        return self._mean.copy()

    def merged_with(self, other: "MeanAccumulator") -> "MeanAccumulator":
        """Exact count-weighted combination of two accumulators."""
        if (self.class_id, self.domain_id, self.dim) != (other.class_id, other.domain_id, other.dim):
            raise ValidationError("cannot merge accumulators with different keys")
        out = MeanAccumulator(self.class_id, self.dim, self.domain_id)
        out.count = self.count + other.count
        if out.count:
            out._mean = (self.count * self._mean + other.count * other._mean) / out.count
        return out

    def to_label_vector(self) -> LabelVector:
        if self.count < 1:
            raise ValidationError("accumulator has seen no samples")
        return LabelVector(
            vector=self._mean.copy(),
            class_id=self.class_id,
            modality=Modality.IMAGE_MEAN,
            domain_id=self.domain_id,
            sample_count=self.count,
        )


def accumulate(acc: MeanAccumulator, embedding) -> MeanAccumulator:
    """Functional alias for :meth:`MeanAccumulator.update`."""
    return acc.update(embedding)


def build_mean_pool(task: TaskSpec) -> Pool:
    """Pool of per-class mean label vectors for one task.

    CIL tasks produce one image-mean entry per class; DIL tasks one per
    (class, domain) pair present in the task. The reduction order is sorted
    (class, domain), so sharding a build by key and merging reproduces the
    sequential result exactly.
    """
    if not task.records:
        raise ValidationError(f"task {task.index} has no records; nothing to learn")
    dim = task.records[0].dim
    accs: dict[tuple, MeanAccumulator] = {}
    for record in task.records:
        domain = record.domain_id if task.kind is TaskKind.DIL else None
        key = (record.class_id, domain)
        acc = accs.get(key)
        if acc is None:
            acc = accs[key] = MeanAccumulator(record.class_id, dim, domain)
        acc.update(record.embedding)
    entries: dict[ClassId, list[LabelVector]] = {}
    for class_id, domain in sorted(accs, key=lambda k: (k[0], -1 if k[1] is None else k[1])):
        entries.setdefault(class_id, []).append(accs[(class_id, domain)].to_label_vector())
    provenance = (
        f"mean-pool task={task.index} kind={task.kind.value} "
        f"classes={len(entries)} records={len(task.records)}",
    )
    return Pool(dim, entries, provenance)


def _weighted_merge_entries(
    class_id: ClassId, groups: Sequence[Sequence[LabelVector]]
) -> list[LabelVector]:
    by_key: dict[tuple, LabelVector] = {}
    order: list[tuple] = []
    for group in groups:
        for entry in group:
            key = (entry.domain_id, entry.modality)
            if key not in by_key:
                by_key[key] = entry
                order.append(key)
                continue
            if entry.modality is not Modality.IMAGE_MEAN:
                raise ValidationError(
                    f"class {class_id}: duplicate {entry.modality.name} entry cannot be mean-merged"
                )
            prev = by_key[key]
            total = prev.sample_count + entry.sample_count
            mixed = (
                prev.sample_count * np.asarray(prev.vector, dtype=np.float64)
                + entry.sample_count * np.asarray(entry.vector, dtype=np.float64)
            ) / total
            by_key[key] = LabelVector(
                vector=mixed,
                class_id=class_id,
                modality=Modality.IMAGE_MEAN,
                domain_id=entry.domain_id,
                sample_count=total,
            )
    return [by_key[k] for k in order]


def merge(pools: Sequence[Pool], policy: MergePolicy = MergePolicy.APPEND) -> Pool:
    """Union of pools. Disjoint classes copy verbatim (bit-identical).

    Shared classes follow the policy: APPEND concatenates entry lists,
    WEIGHTED_MEAN combines image-mean entries with the same (class, domain)
    into an exact count-weighted mean, ERROR rejects naming the class.
    """
    if not pools:
        raise ValidationError("merge needs at least one pool")
    dim = pools[0].dim
    for pool in pools[1:]:
        if pool.dim != dim:
            raise ValidationError(f"dimension mismatch in merge: {pool.dim} != {dim}")
    if len(pools) == 1:
        return pools[0]
    groups: dict[ClassId, list] = {}
    for pool in pools:
        for class_id, items in pool.entries.items():
            groups.setdefault(class_id, []).append(items)
    entries: dict[ClassId, list[LabelVector]] = {}
    for class_id, parts in groups.items():
        if len(parts) == 1:
            entries[class_id] = list(parts[0])
        elif policy is MergePolicy.ERROR:
            raise ValidationError(f"class {class_id} appears in more than one pool")
        elif policy is MergePolicy.APPEND:
            entries[class_id] = [entry for part in parts for entry in part]
        else:
            entries[class_id] = _weighted_merge_entries(class_id, parts)
    provenance: list[str] = []
    names: dict[ClassId, str] = {}
    for pool in pools:
        provenance.extend(pool.provenance)
        for cid, name in pool.display_names.items():
            names.setdefault(cid, name)
    return Pool(dim, entries, provenance, names)


def complexity(pool: Pool) -> int:
    """Similarity evaluations per query: sum over classes of the pool size."""
    return sum(len(items) for items in pool.entries.values())


def memory_floats(pool: Pool) -> int:
    """Stored scalars (metadata excluded): sum of pool sizes times dimension."""
    return complexity(pool) * pool.dim


def build_sharded(tasks: Iterable[TaskSpec], policy: MergePolicy = MergePolicy.APPEND) -> Pool:
    """Build per-task pools and merge them; order-invariant for CIL streams."""
    pools = [build_mean_pool(task) for task in tasks]
    return merge(pools, policy)
