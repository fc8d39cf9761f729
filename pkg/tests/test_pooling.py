import itertools
import math

import numpy as np
import pytest

from labelpool import (
    MeanAccumulator,
    MergePolicy,
    Modality,
    Pool,
    Record,
    SimilarityKind,
    TaskKind,
    TaskSpec,
    ValidationError,
    accumulate,
    build_mean_pool,
    build_sharded,
    classify,
    complexity,
    memory_floats,
    merge,
)

from conftest import cid, mean_vector


def make_task(records, index=1, kind=TaskKind.CIL):
    return TaskSpec(index=index, records=records, kind=kind)


class TestMeanAccumulator:
    def test_single_sample(self):
        acc = MeanAccumulator(cid(0), 2)
        accumulate(acc, [1.0, 3.0])
        assert acc.count == 1
        assert acc.mean.tolist() == [1.0, 3.0]

    def test_two_point_mean(self):
        acc = MeanAccumulator(cid(0), 2)
        acc.update([1.0, 3.0]).update([3.0, 1.0])
        assert acc.mean.tolist() == [2.0, 2.0]
        assert acc.count == 2

    def test_streaming_matches_exact_batch_mean(self, rng):
        data = rng.normal(loc=2.0, size=(10_000, 3))
        acc = MeanAccumulator(cid(0), 3)
        for row in data:
            acc.update(row)
        exact = np.array([math.fsum(data[:, j]) / len(data) for j in range(3)])
        assert np.abs(acc.mean - exact).max() <= 1e-12 * np.abs(exact).max()

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            MeanAccumulator(cid(0), 2).update([1.0])

    def test_merged_with_is_count_weighted(self):
        a = MeanAccumulator(cid(0), 2).update([0.0, 0.0])
        b = MeanAccumulator(cid(0), 2)
        for _ in range(3):
            b.update([2.0, 2.0])
        combined = a.merged_with(b)
        assert combined.mean.tolist() == [1.5, 1.5]
        assert combined.count == 4


class TestBuildMeanPool:
    def test_single_record(self):
        e = np.array([0.25, -1.0])
        pool = build_mean_pool(make_task([Record(e, cid(0))]))
        entry = pool.entries[cid(0)][0]
        assert entry.vector.tolist() == e.tolist()
        assert entry.sample_count == 1
        assert entry.modality is Modality.IMAGE_MEAN

    def test_cifar_shaped_counts(self, rng):
        # 100 classes, one entry each: K=100 and O=100
        records = [Record(rng.normal(size=4), cid(i)) for i in range(100) for _ in range(3)]
        pool = build_mean_pool(make_task(records))
        assert pool.num_classes == 100
        assert complexity(pool) == 100

    def test_dil_task_has_entry_per_domain(self, rng):
        records = [
            Record(rng.normal(size=3), cid(k), domain_id=d) for k in range(4) for d in range(6)
        ]
        pool = build_mean_pool(make_task(records, kind=TaskKind.DIL))
        assert all(len(items) == 6 for items in pool.entries.values())

    def test_cil_ignores_domains(self, rng):
        records = [Record(rng.normal(size=3), cid(0), domain_id=d) for d in range(4)]
        pool = build_mean_pool(make_task(records, kind=TaskKind.CIL))
        assert len(pool.entries[cid(0)]) == 1
        assert pool.entries[cid(0)][0].sample_count == 4

    def test_empty_task_rejected(self):
        with pytest.raises(ValidationError):
            build_mean_pool(make_task([]))

    def test_provenance_records_task_index(self, rng):
        pool = build_mean_pool(make_task([Record(rng.normal(size=2), cid(0))], index=7))
        assert any("task=7" in line for line in pool.provenance)


class TestMerge:
    def test_single_pool_identity(self, rng):
        pool = build_mean_pool(make_task([Record(rng.normal(size=2), cid(0))]))
        assert merge([pool]) is pool

    def test_disjoint_classes_copy_verbatim(self, rng):
        a = build_mean_pool(make_task([Record(rng.normal(size=2), cid(0))], index=1))
        b = build_mean_pool(make_task([Record(rng.normal(size=2), cid(1))], index=2))
        combined = merge([a, b])
        # not just equal: the very same immutable entries are reused
        assert combined.entries[cid(0)][0] is a.entries[cid(0)][0]
        assert combined.entries[cid(1)][0] is b.entries[cid(1)][0]

    def test_weighted_mean_merge(self):
        a = Pool(2, {cid(0): [mean_vector([0.0, 0.0], 0, count=1)]})
        b = Pool(2, {cid(0): [mean_vector([2.0, 2.0], 0, count=3)]})
        combined = merge([a, b], MergePolicy.WEIGHTED_MEAN)
        entry = combined.entries[cid(0)][0]
        assert entry.vector.tolist() == [1.5, 1.5]
        assert entry.sample_count == 4

    def test_append_grows_pool_size(self):
        a = Pool(1, {cid(0): [mean_vector([0.0], 0, domain=0)]})
        b = Pool(1, {cid(0): [mean_vector([1.0], 0, domain=1)]})
        combined = merge([a, b], MergePolicy.APPEND)
        assert len(combined.entries[cid(0)]) == 2

    def test_error_policy_names_class(self):
        a = Pool(1, {cid(3): [mean_vector([0.0], 3)]})
        b = Pool(1, {cid(3): [mean_vector([1.0], 3)]})
        with pytest.raises(ValidationError, match="test/3"):
            merge([a, b], MergePolicy.ERROR)

    def test_dim_mismatch_rejected(self):
        a = Pool(1, {cid(0): [mean_vector([0.0], 0)]})
        b = Pool(2, {cid(1): [mean_vector([0.0, 1.0], 1)]})
        with pytest.raises(ValidationError):
            merge([a, b])

    def test_all_merge_orders_identical(self, rng):
        pools = [
            build_mean_pool(make_task([Record(rng.normal(size=3), cid(i))], index=i + 1))
            for i in range(4)
        ]
        reference = merge(pools)
        for permutation in itertools.permutations(pools):
            assert merge(list(permutation)) == reference

    def test_entry_order_within_class_does_not_change_classification(self, rng):
        e1 = mean_vector(rng.normal(size=4), 0, domain=0)
        e2 = mean_vector(rng.normal(size=4), 0, domain=1)
        other = mean_vector(rng.normal(size=4), 1)
        fwd = Pool(4, {cid(0): [e1, e2], cid(1): [other]})
        rev = Pool(4, {cid(0): [e2, e1], cid(1): [other]})
        for _ in range(25):
            q = rng.normal(size=4)
            assert classify(SimilarityKind.L1, fwd, q)[0] == classify(SimilarityKind.L1, rev, q)[0]


class TestAccounting:
    def test_complexity_counts_all_entries(self, rng):
        for k in (40, 53):
            pool = Pool(2, {cid(i): [mean_vector(rng.normal(size=2), i)] for i in range(k)})
            assert complexity(pool) == k

    def test_memory_floats(self, rng):
        pool = Pool(
            768,
            {cid(i): [mean_vector(rng.normal(size=768), i)] for i in range(100)},
        )
        assert memory_floats(pool) == 76_800


class TestOrderAndInterference:
    def test_task_order_invariance(self, rng):
        tasks = [
            make_task(
                [Record(rng.normal(size=3), cid(3 * t + j)) for j in range(3) for _ in range(5)],
                index=t + 1,
            )
            for t in range(4)
        ]
        reference = build_sharded(tasks)
        for permutation in itertools.permutations(tasks):
            assert build_sharded(list(permutation)) == reference

    def test_merging_new_task_leaves_old_entries_bit_identical(self, rng):
        old = build_mean_pool(make_task([Record(rng.normal(size=4), cid(0))], index=1))
        snapshot = {c: [e.vector.copy() for e in items] for c, items in old.entries.items()}
        new = build_mean_pool(make_task([Record(rng.normal(size=4), cid(1))], index=2))
        combined = merge([old, new])
        for c, vectors in snapshot.items():
            for stored, kept in zip(vectors, combined.entries[c]):
                assert np.array_equal(stored, kept.vector)

    def test_sharded_by_class_equals_monolithic_bitwise(self, rng):
        records = [
            Record(rng.normal(size=3), cid(k)) for k in range(6) for _ in range(20)
        ]
        whole = build_mean_pool(make_task(records, index=1))
        shard_pools = []
        for k in range(6):
            shard = [r for r in records if r.class_id == cid(k)]
            shard_pools.append(build_mean_pool(make_task(shard, index=1)))
        merged = merge(shard_pools)
        assert merged == whole  # bitwise equality of all vectors and counts
