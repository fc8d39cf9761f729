import numpy as np
import pytest

from labelpool import (
    Protocol,
    ProtocolKind,
    SimilarityKind,
    SynthSpec,
    ValidationError,
    Variant,
    build_mean_pool,
    classify,
    generate,
    oracle_nearest_class_mean,
    oracle_one_nn,
    oracle_softmax,
    run,
)

from conftest import cid


class TestGenerate:
    def test_fixed_seed_is_bit_reproducible(self):
        spec = SynthSpec(n_classes=4, dim=6, seed=42, text_noise=0.1)
        a = generate(spec)
        b = generate(spec)
        for ta, tb in zip(a.train_tasks, b.train_tasks):
            for ra, rb in zip(ta.records, tb.records):
                assert np.array_equal(ra.embedding, rb.embedding)
        for c in a.text_pool.classes:
            assert np.array_equal(
                a.text_pool.entries[c][0].vector, b.text_pool.entries[c][0].vector
            )

    def test_sigma_zero_records_equal_means(self):
        data = generate(SynthSpec(n_classes=3, dim=5, within_std=0.0, seed=7))
        for task in data.train_tasks:
            for record in task.records:
                assert np.allclose(record.embedding, data.true_means[record.class_id])

    def test_sigma_zero_gives_perfect_accuracy_for_all_variants(self):
        spec = SynthSpec(
            n_classes=4, dim=6, within_std=0.0, train_per_class=5, test_per_class=3,
            text_noise=0.0, seed=3,
        )
        data = generate(spec)
        for variant in Variant:
            protocol = Protocol(ProtocolKind.CIL, variant)
            report = run(protocol, data.train_tasks, data.test_tasks, data.text_pool)
            assert report.final_average == 1.0

    def test_text_noise_zero_equals_true_mean(self):
        data = generate(SynthSpec(n_classes=3, dim=4, text_noise=0.0, seed=5))
        for c, mean in data.true_means.items():
            assert np.allclose(data.text_pool.entries[c][0].vector, mean)

    def test_domain_tasks(self):
        spec = SynthSpec(
            n_classes=3, dim=4, domain_offset_scales=(0.0, 1.0), seed=1, train_per_class=4
        )
        data = generate(spec)
        assert len(data.train_tasks) == 2
        assert all(r.domain_id == 0 for r in data.train_tasks[0].records)
        assert all(r.domain_id == 1 for r in data.train_tasks[1].records)

    def test_empirical_mean_converges_to_true_mean(self):
        sigma = 0.5
        spec = SynthSpec(
            n_classes=1, dim=16, within_std=sigma, train_per_class=10_000, seed=11
        )
        data = generate(spec)
        rows = np.stack([r.embedding for r in data.train_tasks[0].records])
        gap = np.linalg.norm(rows.mean(axis=0) - data.true_means[cid(0, "synth")])
        assert gap <= 5 * sigma * np.sqrt(16 / 10_000)

    def test_separation_ladder_never_hurts_accuracy(self):
        accuracies = []
        for scale in (0.5, 1.5, 4.0):
            spec = SynthSpec(
                n_classes=6, dim=8, mean_scale=scale, within_std=0.5,
                train_per_class=30, test_per_class=30, seed=21,
            )
            data = generate(spec)
            protocol = Protocol(ProtocolKind.CIL, Variant.IMAGE_MEAN)
            accuracies.append(run(protocol, data.train_tasks, data.test_tasks).final_average)
        assert accuracies == sorted(accuracies)

    def test_invalid_specs_rejected(self):
        with pytest.raises(ValidationError):
            SynthSpec(n_classes=0, dim=4)
        with pytest.raises(ValidationError):
            SynthSpec(n_classes=4, dim=4, n_tasks=9)
        with pytest.raises(ValidationError):
            SynthSpec(n_classes=4, dim=4, within_std=-1.0)


class TestOracles:
    def test_query_at_mean_wins(self, rng):
        means = {cid(i): rng.normal(size=5) for i in range(4)}
        for kind in SimilarityKind:
            assert oracle_nearest_class_mean(means, kind, means[cid(2)]) == cid(2)

    @pytest.mark.parametrize("kind", list(SimilarityKind))
    def test_oracle_agrees_with_engine_classifier(self, kind, rng):
        data = generate(SynthSpec(n_classes=5, dim=6, seed=13, train_per_class=10))
        pool = build_mean_pool(data.train_tasks[0])
        means = {c: pool.entries[c][0].vector for c in pool.classes}
        for _ in range(300):
            q = rng.normal(size=6)
            assert classify(kind, pool, q)[0] == oracle_nearest_class_mean(means, kind, q)

    def test_full_training_set_mode_equals_one_nn(self, rng):
        data = generate(SynthSpec(n_classes=4, dim=5, seed=17, train_per_class=8))
        records = data.train_tasks[0].records
        grouped = {}
        for r in records:
            grouped.setdefault(r.class_id, []).append(np.asarray(r.embedding))
        flat = [(r.class_id, r.embedding) for r in records]
        for kind in SimilarityKind:
            for _ in range(100):
                q = rng.normal(size=5)
                assert oracle_nearest_class_mean(grouped, kind, q) == oracle_one_nn(flat, kind, q)

    def test_softmax_uniform(self):
        probs = oracle_softmax({cid(i): 2.0 for i in range(5)})
        assert all(abs(v - 0.2) < 1e-15 for v in probs.values())

    def test_softmax_hand_value(self):
        probs = oracle_softmax({cid(0): 1.0, cid(1): 0.0})
        assert probs[cid(0)] == pytest.approx(0.7310586, abs=1e-6)
        assert probs[cid(1)] == pytest.approx(0.2689414, abs=1e-6)
