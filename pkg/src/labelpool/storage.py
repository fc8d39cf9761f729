"""Binary file formats and the report schema.

Four little-endian formats, all magic-tagged and versioned, all written
atomically (temp file + rename) and read with strict bounds checking:

* ``LVPE`` - embedding datasets: header (version, dim, count, flags,
  namespace), then ``count`` records of (local class id u32, domain id u32
  with 0xFFFFFFFF meaning "none", dim float32).
* ``LVPP`` - pools: header (version, dim, class count, provenance), then per
  class (namespace, local id, display name, entry count) and per entry
  (modality u8, domain id u32, sample count u64, dim float32).
* ``LVPM`` - mixing parameters grouped by task (alpha/beta as float32).
* ``LVPH`` - linear heads (float64 weights and bias).

Vectors narrow to float32 on write (the storage precision); everything
re-read then round-trips byte-identically. Reports are JSON plus a
human-readable table formatter.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    BadMagicError,
    FormatError,
    TruncatedFileError,
    ValidationError,
    VersionMismatchError,
)
from .head import LinearClassifier
from .mixing import MixParams
from .types import ClassId, EvalReport, LabelVector, Modality, Pool, Record

MAGIC_EMBEDDINGS = b"LVPE"
MAGIC_POOL = b"LVPP"
MAGIC_MIX_PARAMS = b"LVPM"
MAGIC_HEAD = b"LVPH"
FORMAT_VERSION = 1
DOMAIN_NONE = 0xFFFFFFFF


def _atomic_write_bytes(path: str, payload: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    """Bounds-checked cursor over a byte buffer."""

    def __init__(self, data: bytes, path: str):
        self.data = data
        self.path = path
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(
                f"{self.path}: needed {n} bytes at offset {self.pos}, file has {len(self.data)}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def text(self) -> str:
        n = self.u32()
        return self.take(n).decode("utf-8")

    def f32_array(self, count: int) -> np.ndarray:
        raw = self.take(4 * count)
        return np.frombuffer(raw, dtype="<f4", count=count).copy()

    def f64_array(self, count: int) -> np.ndarray:
        raw = self.take(8 * count)
        return np.frombuffer(raw, dtype="<f8", count=count).copy()

    def expect_magic(self, magic: bytes) -> None:
        found = self.take(4)
        if found != magic:
            raise BadMagicError(magic, found)

    def expect_version(self) -> None:
        version = self.u32()
        if version != FORMAT_VERSION:
            raise VersionMismatchError(FORMAT_VERSION, version)

    def done(self) -> None:
        if self.pos != len(self.data):
            raise FormatError(
                f"{self.path}: {len(self.data) - self.pos} trailing bytes after payload"
            )


def _pack_text(value: str) -> bytes:
    raw = value.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _check_finite_f32(vectors: np.ndarray, path: str) -> None:
    if not np.isfinite(vectors).all():
        raise FormatError(f"{path}: payload contains NaN or Inf vectors")


# ---------------------------------------------------------------------------
# Embedding datasets (LVPE)
# ---------------------------------------------------------------------------

FLAG_NORMALIZED = 1 << 0


@dataclass
class EmbeddingDataset:
    """Columnar in-memory form of an embedding file."""

    namespace: str
    dim: int
    normalized: bool
    local_ids: np.ndarray  # (n,) uint32
    domain_ids: np.ndarray  # (n,) uint32, DOMAIN_NONE for absent
    vectors: np.ndarray  # (n, dim) float32

    def __post_init__(self):
        self.local_ids = np.asarray(self.local_ids, dtype=np.uint32)
        self.domain_ids = np.asarray(self.domain_ids, dtype=np.uint32)
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        n = self.vectors.shape[0]
        if self.vectors.ndim != 2 or self.vectors.shape[1] != self.dim:
            raise ValidationError("vectors must have shape (n, dim)")
        if self.local_ids.shape != (n,) or self.domain_ids.shape != (n,):
            raise ValidationError("id columns must match the record count")
        if n and not np.isfinite(self.vectors).all():
            raise ValidationError("vectors contain NaN or Inf")

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def to_records(self) -> list[Record]:
        out = []
        for i in range(len(self)):
            domain = int(self.domain_ids[i])
            out.append(
                Record(
                    embedding=self.vectors[i],
                    class_id=ClassId(self.namespace, int(self.local_ids[i])),
                    domain_id=None if domain == DOMAIN_NONE else domain,
                )
            )
        return out

    @classmethod
    def from_records(
        cls, namespace: str, records: Sequence[Record], normalize: bool = False
    ) -> "EmbeddingDataset":
        if not records:
            raise ValidationError("cannot build a dataset from zero records")
        dim = records[0].dim
        vectors = np.stack([r.embedding for r in records]).astype(np.float32)
        if normalize:
            norms = np.linalg.norm(vectors.astype(np.float64), axis=1, keepdims=True)
            if (norms == 0).any():
                raise ValidationError("cannot L2-normalize a zero vector")
            vectors = (vectors / norms).astype(np.float32)
        local_ids = np.array([r.class_id.local_id for r in records], dtype=np.uint32)
        domain_ids = np.array(
            [DOMAIN_NONE if r.domain_id is None else r.domain_id for r in records],
            dtype=np.uint32,
        )
        for r in records:
            if r.class_id.namespace != namespace:
                raise ValidationError(
                    f"record namespace {r.class_id.namespace!r} != dataset namespace {namespace!r}"
                )
            if r.dim != dim:
                raise ValidationError("records have inconsistent dimensions")
        return cls(namespace, dim, normalize, local_ids, domain_ids, vectors)


def write_embeddings(dataset: EmbeddingDataset, path: str) -> None:
    n = len(dataset)
    header = MAGIC_EMBEDDINGS + struct.pack(
        "<IIQI", FORMAT_VERSION, dataset.dim, n, FLAG_NORMALIZED if dataset.normalized else 0
    )
    header += _pack_text(dataset.namespace)
    if n:
        rows = np.zeros(n, dtype=_record_dtype(dataset.dim))
        rows["cls"] = dataset.local_ids
        rows["dom"] = dataset.domain_ids
        rows["vec"] = dataset.vectors
        payload = rows.tobytes()
    else:
        payload = b""
    _atomic_write_bytes(path, header + payload)


def _record_dtype(dim: int) -> np.dtype:
    return np.dtype([("cls", "<u4"), ("dom", "<u4"), ("vec", "<f4", (dim,))])


def read_embeddings(path: str) -> EmbeddingDataset:
    with open(path, "rb") as handle:
        reader = _Reader(handle.read(), path)
    reader.expect_magic(MAGIC_EMBEDDINGS)
    reader.expect_version()
    dim = reader.u32()
    if dim < 1:
        raise FormatError(f"{path}: dimension must be >= 1")
    count = reader.u64()
    flags = reader.u32()
    namespace = reader.text()
    if count:
        dtype = _record_dtype(dim)
        rows = np.frombuffer(reader.take(dtype.itemsize * count), dtype=dtype, count=count)
        local_ids = rows["cls"].copy()
        domain_ids = rows["dom"].copy()
        vectors = rows["vec"].copy()
    else:
        local_ids = np.zeros(0, dtype=np.uint32)
        domain_ids = np.zeros(0, dtype=np.uint32)
        vectors = np.zeros((0, dim), dtype=np.float32)
    reader.done()
    _check_finite_f32(vectors, path)
    return EmbeddingDataset(namespace, dim, bool(flags & FLAG_NORMALIZED), local_ids, domain_ids, vectors)


# ---------------------------------------------------------------------------
# Pools (LVPP)
# ---------------------------------------------------------------------------


def write_pool(pool: Pool, path: str) -> None:
    parts = [
        MAGIC_POOL,
        struct.pack("<III", FORMAT_VERSION, pool.dim, pool.num_classes),
        _pack_text("\n".join(pool.provenance)),
    ]
    for class_id in pool.classes:
        entries = pool.entries[class_id]
        parts.append(_pack_text(class_id.namespace))
        parts.append(struct.pack("<I", class_id.local_id))
        parts.append(_pack_text(pool.display_names.get(class_id, "")))
        parts.append(struct.pack("<I", len(entries)))
        for entry in entries:
            domain = DOMAIN_NONE if entry.domain_id is None else entry.domain_id
            parts.append(struct.pack("<BIQ", entry.modality.value, domain, entry.sample_count))
            parts.append(np.asarray(entry.vector, dtype="<f4").tobytes())
    _atomic_write_bytes(path, b"".join(parts))


def read_pool(path: str) -> Pool:
    with open(path, "rb") as handle:
        reader = _Reader(handle.read(), path)
    reader.expect_magic(MAGIC_POOL)
    reader.expect_version()
    dim = reader.u32()
    n_classes = reader.u32()
    if dim < 1 or n_classes < 1:
        raise FormatError(f"{path}: dimension and class count must be >= 1")
    provenance_blob = reader.text()
    provenance = tuple(provenance_blob.split("\n")) if provenance_blob else ()
    entries: dict[ClassId, list[LabelVector]] = {}
    names: dict[ClassId, str] = {}
    for _ in range(n_classes):
        namespace = reader.text()
        local_id = reader.u32()
        class_id = ClassId(namespace, local_id)
        display = reader.text()
        if display:
            names[class_id] = display
        n_entries = reader.u32()
        if n_entries < 1:
            raise FormatError(f"{path}: class {class_id} declares zero entries")
        items = []
        for _ in range(n_entries):
            modality_code = reader.u8()
            try:
                modality = Modality(modality_code)
            except ValueError:
                raise FormatError(f"{path}: unknown modality byte {modality_code}") from None
            domain = reader.u32()
            sample_count = reader.u64()
            vector = reader.f32_array(dim)
            _check_finite_f32(vector, path)
            items.append(
                LabelVector(
                    vector=vector,
                    class_id=class_id,
                    modality=modality,
                    domain_id=None if domain == DOMAIN_NONE else domain,
                    sample_count=sample_count,
                )
            )
        if class_id in entries:
            raise FormatError(f"{path}: duplicate class {class_id}")
        entries[class_id] = items
    reader.done()
    return Pool(dim, entries, provenance, names)


# ---------------------------------------------------------------------------
# Mixing parameters (LVPM)
# ---------------------------------------------------------------------------


def write_mix_params(params: Sequence[MixParams], path: str) -> None:
    if not params:
        raise ValidationError("nothing to write")
    dim = params[0].dim
    parts = [MAGIC_MIX_PARAMS, struct.pack("<III", FORMAT_VERSION, dim, len(params))]
    for p in sorted(params, key=lambda p: p.task_index):
        if p.dim != dim:
            raise ValidationError("mixing parameter dimension mismatch")
        domain = DOMAIN_NONE if p.domain_id is None else p.domain_id
        parts.append(struct.pack("<III", p.task_index, domain, len(p.classes)))
        for i, class_id in enumerate(p.classes):
            parts.append(_pack_text(class_id.namespace))
            parts.append(struct.pack("<I", class_id.local_id))
            parts.append(np.asarray(p.alpha[i], dtype="<f4").tobytes())
            parts.append(np.asarray(p.beta[i], dtype="<f4").tobytes())
    _atomic_write_bytes(path, b"".join(parts))


def read_mix_params(path: str) -> list[MixParams]:
    with open(path, "rb") as handle:
        reader = _Reader(handle.read(), path)
    reader.expect_magic(MAGIC_MIX_PARAMS)
    reader.expect_version()
    dim = reader.u32()
    n_tasks = reader.u32()
    out = []
    for _ in range(n_tasks):
        task_index = reader.u32()
        domain = reader.u32()
        n_classes = reader.u32()
        classes = []
        alpha = np.zeros((n_classes, dim))
        beta = np.zeros((n_classes, dim))
        for i in range(n_classes):
            namespace = reader.text()
            local_id = reader.u32()
            classes.append(ClassId(namespace, local_id))
            alpha[i] = reader.f32_array(dim)
            beta[i] = reader.f32_array(dim)
        out.append(
            MixParams(
                task_index,
                tuple(classes),
                alpha,
                beta,
                None if domain == DOMAIN_NONE else domain,
            )
        )
    reader.done()
    return out


# ---------------------------------------------------------------------------
# Linear heads (LVPH)
# ---------------------------------------------------------------------------


def write_head(head: LinearClassifier, path: str) -> None:
    parts = [
        MAGIC_HEAD,
        struct.pack(
            "<IIIdIB",
            FORMAT_VERSION,
            head.dim,
            len(head.class_order),
            head.final_loss,
            head.steps,
            1 if head.reached_low else 0,
        ),
    ]
    for class_id in head.class_order:
        parts.append(_pack_text(class_id.namespace))
        parts.append(struct.pack("<I", class_id.local_id))
    parts.append(np.asarray(head.weights, dtype="<f8").tobytes())
    parts.append(np.asarray(head.bias, dtype="<f8").tobytes())
    _atomic_write_bytes(path, b"".join(parts))


def read_head(path: str) -> LinearClassifier:
    with open(path, "rb") as handle:
        reader = _Reader(handle.read(), path)
    reader.expect_magic(MAGIC_HEAD)
    reader.expect_version()
    dim = reader.u32()
    n_classes = reader.u32()
    final_loss = reader.f64()
    steps = reader.u32()
    reached_low = bool(reader.u8())
    classes = []
    for _ in range(n_classes):
        namespace = reader.text()
        classes.append(ClassId(namespace, reader.u32()))
    weights = reader.f64_array(n_classes * dim).reshape(n_classes, dim)
    bias = reader.f64_array(n_classes)
    reader.done()
    return LinearClassifier(
        weights, bias, tuple(classes), final_loss=final_loss, steps=steps, reached_low=reached_low
    )


# ---------------------------------------------------------------------------
# Reports (JSON + table)
# ---------------------------------------------------------------------------


def report_to_dict(report: EvalReport) -> dict:
    return {
        "matrix": report.matrix,
        "test_task_labels": report.test_task_labels,
        "stage_labels": report.stage_labels,
        "test_task_sizes": report.test_task_sizes,
        "final_average": report.final_average,
        "final_average_weighted": report.final_average_weighted,
        "config": report.config,
        "seed": report.seed,
    }


def report_from_dict(data: dict) -> EvalReport:
    return EvalReport(
        matrix=[[None if v is None else float(v) for v in row] for row in data["matrix"]],
        test_task_labels=list(data["test_task_labels"]),
        stage_labels=list(data["stage_labels"]),
        test_task_sizes=[int(v) for v in data["test_task_sizes"]],
        final_average=float(data["final_average"]),
        final_average_weighted=float(data["final_average_weighted"]),
        config=dict(data.get("config", {})),
        seed=data.get("seed"),
    )


def write_report(report: EvalReport, path: str) -> None:
    payload = json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n"
    _atomic_write_bytes(path, payload.encode("utf-8"))


def read_report(path: str) -> EvalReport:
    with open(path, "rb") as handle:
        try:
            data = json.loads(handle.read().decode("utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not valid report JSON ({exc})") from None
    return report_from_dict(data)


def format_report_table(report: EvalReport) -> str:
    """Stage-by-task accuracy table with a trailing average column."""
    headers = [""] + report.test_task_labels + ["average"]
    rows = []
    for label, row in zip(report.stage_labels, report.matrix):
        present = [v for v in row if v is not None]
        avg = sum(present) / len(present) if present else float("nan")
        rows.append([label] + [("-" if v is None else f"{100 * v:.1f}") for v in row] + [f"{100 * avg:.1f}"])
    widths = [max(len(str(r[i])) for r in [headers] + rows) for i in range(len(headers))]
    lines = ["  ".join(str(cell).rjust(w) for cell, w in zip(headers, widths))]
    for row in rows:
        lines.append("  ".join(str(cell).rjust(w) for cell, w in zip(row, widths)))
    lines.append(
        f"final average: {100 * report.final_average:.2f}"
        f"  (sample-weighted: {100 * report.final_average_weighted:.2f})"
    )
    return "\n".join(lines)
