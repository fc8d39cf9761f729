"""Domain vocabulary shared by every other module.

All types validate at construction and are treated as immutable afterwards;
downstream code assumes validity. Embeddings are plain 1-D numpy arrays
(float32 or float64) checked through :func:`as_embedding`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import ValidationError


def as_embedding(values, dim: Optional[int] = None) -> np.ndarray:
    """Validate and return an embedding vector as a read-only numpy array.

    Accepts any 1-D sequence of reals; float32/float64 are kept, everything
    else is converted to float64. Rejects empty, non-finite, or wrong-dimension
    input.
    """
    arr = np.asarray(values)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    if arr.ndim != 1:
        raise ValidationError(f"embedding must be 1-D, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise ValidationError("embedding must have dimension >= 1")
    if dim is not None and arr.shape[0] != dim:
        raise ValidationError(f"dimension mismatch: expected {dim}, got {arr.shape[0]}")
    if not np.isfinite(arr).all():
        raise ValidationError("embedding contains NaN or Inf")
    if arr.flags.writeable:
        # never flip flags on a caller-owned array; keep a frozen private copy
        arr = arr.copy()
        arr.setflags(write=False)
    return arr


@dataclass(frozen=True, order=True)
class ClassId:
    """Globally unique class identity: (namespace, local_id).

    Ordering is lexicographic on the namespace, then numeric on the local id;
    this is the canonical order used for tie-breaking and serialization.
    """

    namespace: str
    local_id: int

    def __post_init__(self):
        if self.local_id < 0:
            raise ValidationError(f"local_id must be non-negative, got {self.local_id}")

    def __str__(self) -> str:
        return f"{self.namespace}/{self.local_id}"


class Modality(Enum):
    """Provenance of a labeled vector."""

    IMAGE_MEAN = 0
    TEXT = 1
    MIXED = 2


class TaskKind(Enum):
    CIL = "cil"  # each task introduces new classes
    DIL = "dil"  # tasks reuse classes under new domains


@dataclass(frozen=True, eq=False)
class LabelVector:
    """An embedding with known identity.

    ``sample_count`` is the number of training embeddings averaged into
    ``vector`` (0 is permitted only for text vectors); it makes count-weighted
    pool merging exact.
    """

    vector: np.ndarray
    class_id: ClassId
    modality: Modality
    domain_id: Optional[int] = None
    sample_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "vector", as_embedding(self.vector))
        if self.sample_count < 0:
            raise ValidationError("sample_count must be non-negative")
        if self.modality is not Modality.TEXT and self.sample_count < 1:
            raise ValidationError(f"{self.modality.name} label vectors need sample_count >= 1")
        if self.domain_id is not None and self.domain_id < 0:
            raise ValidationError("domain_id must be non-negative when present")

    @property
    def dim(self) -> int:
        return self.vector.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabelVector):
            return NotImplemented
        return (
            self.class_id == other.class_id
            and self.modality is other.modality
            and self.domain_id == other.domain_id
            and self.sample_count == other.sample_count
            and self.vector.dtype == other.vector.dtype
            and np.array_equal(self.vector, other.vector)
        )

    __hash__ = None  # type: ignore[assignment]


def _entry_sort_key(entry: LabelVector):
    domain = -1 if entry.domain_id is None else entry.domain_id
    return (domain, entry.modality.value)


class Pool:
    """Immutable map from class id to its labeled reference vectors.

    Every class holds at least one entry and all entries share the pool
    dimension. Classes are kept in canonical (sorted) order. Equality is map
    equality over entries plus display names; the provenance log is excluded
    so that pools built along different (equivalent) routes compare equal.
    """

    __slots__ = ("dim", "entries", "provenance", "display_names", "_cache")

    def __init__(
        self,
        dim: int,
        entries: Mapping[ClassId, Sequence[LabelVector]],
        provenance: Iterable[str] = (),
        display_names: Optional[Mapping[ClassId, str]] = None,
    ):
        if dim < 1:
            raise ValidationError("pool dimension must be >= 1")
        if not entries:
            raise ValidationError("pool must contain at least one class")
        canonical: dict[ClassId, tuple[LabelVector, ...]] = {}
        for class_id in sorted(entries):
            items = tuple(entries[class_id])
            if not items:
                raise ValidationError(f"class {class_id} has an empty entry list")
            for item in items:
                if item.dim != dim:
                    raise ValidationError(
                        f"class {class_id}: entry dimension {item.dim} != pool dimension {dim}"
                    )
                if item.class_id != class_id:
                    raise ValidationError(
                        f"entry labeled {item.class_id} stored under class {class_id}"
                    )
            canonical[class_id] = items
        self.dim = dim
        self.entries = canonical
        self.provenance = tuple(provenance)
        self.display_names = dict(display_names or {})
        self._cache: dict = {}

    @property
    def classes(self) -> tuple[ClassId, ...]:
        return tuple(self.entries)

    @property
    def num_classes(self) -> int:
        return len(self.entries)

    def pool_sizes(self) -> dict[ClassId, int]:
        return {cid: len(items) for cid, items in self.entries.items()}

    def stacked(self):
        """Return (matrix, offsets, classes): all entry vectors stacked as a
        float64 (O, D) matrix with per-class segment offsets (K+1,).

        Cached; the pool is immutable so the cache never invalidates.
        """
        if "stacked" not in self._cache:
            classes = self.classes
            counts = [len(self.entries[c]) for c in classes]
            offsets = np.zeros(len(classes) + 1, dtype=np.int64)
            np.cumsum(counts, out=offsets[1:])
            matrix = np.empty((int(offsets[-1]), self.dim), dtype=np.float64)
            row = 0
            for c in classes:
                for entry in self.entries[c]:
                    matrix[row] = entry.vector
                    row += 1
            matrix.setflags(write=False)
            offsets.setflags(write=False)
            self._cache["stacked"] = (matrix, offsets, classes)
        return self._cache["stacked"]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pool):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.classes == other.classes
            and all(self.entries[c] == other.entries[c] for c in self.entries)
            and self.display_names == other.display_names
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"Pool(dim={self.dim}, classes={self.num_classes}, entries={sum(len(v) for v in self.entries.values())})"


@dataclass(frozen=True, eq=False)
class Record:
    """One training or testing sample: an embedding with its label."""

    embedding: np.ndarray
    class_id: ClassId
    domain_id: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "embedding", as_embedding(self.embedding))
        if self.domain_id is not None and self.domain_id < 0:
            raise ValidationError("domain_id must be non-negative when present")

    @property
    def dim(self) -> int:
        return self.embedding.shape[0]


@dataclass
class TaskSpec:
    """One unit of the learning stream (1-based index, ordered records)."""

    index: int
    records: list[Record]
    kind: TaskKind = TaskKind.CIL

    def __post_init__(self):
        if self.index < 1:
            raise ValidationError("task index is 1-based")

    @property
    def class_ids(self) -> tuple[ClassId, ...]:
        return tuple(sorted({r.class_id for r in self.records}))

    @property
    def dim(self) -> Optional[int]:
        return self.records[0].dim if self.records else None


@dataclass
class EvalReport:
    """Per-task accuracy across learning stages.

    ``matrix[s][j]`` is the accuracy of test task j after training stage s,
    or None while that test task's classes are not yet learned.
    ``final_average`` is the plain mean of the last row's present entries;
    ``final_average_weighted`` weights them by test-task sample counts.
    """

    matrix: list[list[Optional[float]]]
    test_task_labels: list[str]
    stage_labels: list[str]
    test_task_sizes: list[int]
    final_average: float = field(default=float("nan"))
    final_average_weighted: float = field(default=float("nan"))
    config: dict = field(default_factory=dict)
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.matrix:
            raise ValidationError("report needs at least one stage row")
        width = len(self.test_task_labels)
        for row in self.matrix:
            if len(row) != width:
                raise ValidationError("matrix rows must match the number of test tasks")
            for value in row:
                if value is not None and not (0.0 <= value <= 1.0):
                    raise ValidationError(f"accuracy {value} outside [0, 1]")
        if np.isnan(self.final_average):
            self.final_average = self.compute_final_average()
        if np.isnan(self.final_average_weighted):
            self.final_average_weighted = self.compute_final_average(weighted=True)

    def compute_final_average(self, weighted: bool = False) -> float:
        last = self.matrix[-1]
        present = [(v, self.test_task_sizes[j]) for j, v in enumerate(last) if v is not None]
        if not present:
            raise ValidationError("last stage row has no evaluated test task")
        if weighted:
            total = sum(n for _, n in present)
            return sum(v * n for v, n in present) / total
        return sum(v for v, _ in present) / len(present)
