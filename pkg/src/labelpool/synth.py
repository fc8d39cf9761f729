"""Synthetic embedding generation and dependency-free oracles.

Classes are isotropic Gaussians: a seeded mean per class, optional additive
per-domain offsets, and optional pseudo-text vectors (mean plus noise) that
give the mixing trainer a controllable second modality. The generator uses
numpy's Philox counter-based bit generator (4x64 with 10 rounds, default
key schedule), so a (spec, seed) pair identifies the dataset exactly.

The oracles are deliberately naive scalar loops, independent of the
accelerated kernels they validate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ValidationError
from .similarity import SimilarityKind
from .types import ClassId, LabelVector, Modality, Pool, Record, TaskKind, TaskSpec


@dataclass(frozen=True)
class SynthSpec:
    n_classes: int
    dim: int
    mean_scale: float = 1.0
    within_std: float = 0.1
    train_per_class: int = 20
    test_per_class: int = 10
    n_tasks: int = 1
    domain_offset_scales: Optional[tuple[float, ...]] = None
    text_noise: Optional[float] = None
    seed: int = 0
    namespace: str = "synth"

    def __post_init__(self):
        if self.n_classes < 1 or self.dim < 1:
            raise ValidationError("need n_classes >= 1 and dim >= 1")
        if self.train_per_class < 1 or self.test_per_class < 1:
            raise ValidationError("need at least one record per class and split")
        if not (1 <= self.n_tasks <= self.n_classes):
            raise ValidationError("n_tasks must be in [1, n_classes]")
        for scale in (self.mean_scale, self.within_std):
            if scale < 0:
                raise ValidationError("scales must be non-negative")
        if self.domain_offset_scales is not None:
            if len(self.domain_offset_scales) < 1 or any(s < 0 for s in self.domain_offset_scales):
                raise ValidationError("domain offset scales must be a non-empty list of non-negatives")
        if self.text_noise is not None and self.text_noise < 0:
            raise ValidationError("text_noise must be non-negative")


@dataclass
class SynthData:
    spec: SynthSpec
    train_tasks: list[TaskSpec]
    test_tasks: list[TaskSpec]
    text_pool: Optional[Pool]
    true_means: dict[ClassId, np.ndarray]
    domain_offsets: dict[int, np.ndarray]


def _records_for(
    rng, classes, means, offset, sigma, per_class, domain_id
) -> list[Record]:
    records = []
    for cid, mean in zip(classes, means):
        noise = rng.normal(0.0, 1.0, size=(per_class, mean.shape[0]))
        samples = mean + offset + sigma * noise
        for row in samples:
            records.append(Record(embedding=row, class_id=cid, domain_id=domain_id))
    return records


def generate(spec: SynthSpec) -> SynthData:
    """Deterministic dataset for one spec; see the module docstring for the
    draw order (means, domain offsets, text, train, test)."""
    rng = np.random.Generator(np.random.Philox(spec.seed))
    classes = [ClassId(spec.namespace, i) for i in range(spec.n_classes)]
    means = rng.normal(0.0, spec.mean_scale, size=(spec.n_classes, spec.dim))

    domain_ids: list[Optional[int]] = [None]
    offsets: dict[int, np.ndarray] = {}
    if spec.domain_offset_scales is not None:
        domain_ids = list(range(len(spec.domain_offset_scales)))
        for d, scale in enumerate(spec.domain_offset_scales):
            offsets[d] = rng.normal(0.0, scale, size=spec.dim) if scale > 0 else np.zeros(spec.dim)

    text_pool = None
    if spec.text_noise is not None:
        texts = means + spec.text_noise * rng.normal(0.0, 1.0, size=means.shape)
        entries = {
            cid: [LabelVector(vector=texts[i], class_id=cid, modality=Modality.TEXT)]
            for i, cid in enumerate(classes)
        }
        text_pool = Pool(spec.dim, entries, (f"text-pool seed={spec.seed} classes={spec.n_classes}",))

    groups = [list(g) for g in np.array_split(np.arange(spec.n_classes), spec.n_tasks)]
    train_tasks: list[TaskSpec] = []
    test_tasks: list[TaskSpec] = []

    if spec.domain_offset_scales is None:
        # class-incremental: one task per class group
        per_group_train = []
        for group in groups:
            cls = [classes[i] for i in group]
            per_group_train.append(
                _records_for(rng, cls, means[group], 0.0, spec.within_std, spec.train_per_class, None)
            )
        for t, records in enumerate(per_group_train, start=1):
            train_tasks.append(TaskSpec(index=t, records=records, kind=TaskKind.CIL))
        for t, group in enumerate(groups, start=1):
            cls = [classes[i] for i in group]
            records = _records_for(rng, cls, means[group], 0.0, spec.within_std, spec.test_per_class, None)
            test_tasks.append(TaskSpec(index=t, records=records, kind=TaskKind.CIL))
    else:
        # domain-incremental: one task per domain over the full class set
        for t, d in enumerate(domain_ids, start=1):
            records = _records_for(
                rng, classes, means, offsets[d], spec.within_std, spec.train_per_class, d
            )
            train_tasks.append(TaskSpec(index=t, records=records, kind=TaskKind.DIL))
        for t, d in enumerate(domain_ids, start=1):
            records = _records_for(
                rng, classes, means, offsets[d], spec.within_std, spec.test_per_class, d
            )
            test_tasks.append(TaskSpec(index=t, records=records, kind=TaskKind.DIL))

    true_means = {cid: means[i].copy() for i, cid in enumerate(classes)}
    return SynthData(spec, train_tasks, test_tasks, text_pool, true_means, offsets)


def _scalar_sim(kind: SimilarityKind, a: Sequence[float], b: Sequence[float]) -> float:
    if kind is SimilarityKind.L1:
        acc = 0.0
        for x, y in zip(a, b):
            acc += math.fabs(x - y)
        return -acc
    if kind is SimilarityKind.L2:
        acc = 0.0
        for x, y in zip(a, b):
            acc += (x - y) * (x - y)
        return -math.sqrt(acc)
    dot = 0.0
    na = 0.0
    nb = 0.0
    for x, y in zip(a, b):
        dot += x * y
        na += x * x
        nb += y * y
    return dot / (math.sqrt(na) * math.sqrt(nb))


def oracle_nearest_class_mean(means, kind: SimilarityKind, query) -> ClassId:
    """Naive argmax over per-class similarities; scalar loops only.

    ``means`` maps ClassId to one vector or to a sequence of vectors (pass
    the full training set per class for the exhaustive configuration). Ties
    resolve to the smallest ClassId.
    """
    q = [float(v) for v in np.asarray(query, dtype=np.float64)]
    best_cid = None
    best = -math.inf
    for cid in sorted(means):
        candidate = means[cid]
        vectors = np.asarray(candidate, dtype=np.float64)
        if vectors.ndim == 1:
            vectors = vectors[None, :]
        for row in vectors:
            s = _scalar_sim(kind, [float(v) for v in row], q)
            if s > best:
                best = s
                best_cid = cid
    return best_cid


def oracle_one_nn(labeled_vectors, kind: SimilarityKind, query) -> ClassId:
    """Plain 1-nearest-neighbor over (ClassId, vector) pairs."""
    q = [float(v) for v in np.asarray(query, dtype=np.float64)]
    best_cid = None
    best = -math.inf
    for cid, vector in labeled_vectors:
        s = _scalar_sim(kind, [float(v) for v in np.asarray(vector, dtype=np.float64)], q)
        if s > best or (s == best and (best_cid is None or cid < best_cid)):
            best = s
            best_cid = cid
    return best_cid


def oracle_softmax(scores: Mapping, tau: float = 1.0) -> dict:
    """Reference softmax: python floats, max subtraction, 64-bit arithmetic."""
    if not scores:
        raise ValidationError("empty score map")
    keys = list(scores)
    logits = [tau * float(scores[k]) for k in keys]
    m = max(logits)
    exps = [math.exp(v - m) for v in logits]
    total = sum(exps)
    return {k: e / total for k, e in zip(keys, exps)}
