import os

import pytest

from labelpool import NumericError, SynthSpec
from labelpool.cli import main
from labelpool.storage import read_embeddings, read_pool, read_report


def read_bytes(path):
    with open(path, "rb") as handle:
        return handle.read()


def run_cli(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "data"
    code = run_cli(
        "--seed", 42, "synth", "--classes", 6, "--dim", 8, "--tasks", 2,
        "--train-per-class", 12, "--test-per-class", 6, "--sigma", 0.05,
        "--text-noise", 0.02, "--out", out,
    )
    assert code == 0
    return out


class TestSynth:
    def test_produces_readable_files(self, synth_dir):
        train = read_embeddings(str(synth_dir / "train.lvpe"))
        assert len(train) == 6 * 12
        assert train.dim == 8
        assert sorted(os.listdir(synth_dir)) == ["test_01.lvpe", "test_02.lvpe", "text.lvpp", "train.lvpe"]
        text = read_pool(str(synth_dir / "text.lvpp"))
        assert text.num_classes == 6

    def test_fixed_seed_outputs_are_byte_identical(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            assert run_cli("--seed", 9, "synth", "--classes", 3, "--dim", 4, "--out", out) == 0
        for name in os.listdir(out1):
            assert read_bytes(out1 / name) == read_bytes(out2 / name)

    def test_cifar_shaped_spec_is_expressible(self):
        spec = SynthSpec(n_classes=100, dim=768, train_per_class=500, n_tasks=10)
        assert spec.n_classes * spec.train_per_class == 50_000

    def test_bad_spec_is_usage_or_data_error(self, tmp_path):
        code = run_cli("synth", "--classes", 0, "--out", tmp_path / "x")
        assert code == 2


class TestBuild:
    def test_one_task_build_equals_direct_library_build(self, synth_dir, tmp_path):
        from labelpool import TaskSpec, build_mean_pool
        from labelpool.storage import write_pool

        pool_path = tmp_path / "pool.lvpp"
        assert run_cli("build", "--train", synth_dir / "train.lvpe", "--tasks", "1",
                       "--out-pool", pool_path) == 0
        records = read_embeddings(str(synth_dir / "train.lvpe")).to_records()
        direct = build_mean_pool(TaskSpec(1, records))
        expected = tmp_path / "direct.lvpp"
        write_pool(direct, str(expected))
        assert read_bytes(pool_path) == read_bytes(expected)

    def test_layout_n_by_m_accepted(self, synth_dir, tmp_path):
        pool_path = tmp_path / "p.lvpp"
        assert run_cli("build", "--train", synth_dir / "train.lvpe", "--tasks", "2x3",
                       "--out-pool", pool_path) == 0
        assert read_pool(str(pool_path)).num_classes == 6

    def test_layout_mismatch_rejected(self, synth_dir, tmp_path):
        code = run_cli("build", "--train", synth_dir / "train.lvpe", "--tasks", "4x7",
                       "--out-pool", tmp_path / "p.lvpp")
        assert code == 2

    def test_sharded_build_plus_merge_equals_monolithic(self, synth_dir, tmp_path):
        mono = tmp_path / "mono.lvpp"
        assert run_cli("build", "--train", synth_dir / "train.lvpe", "--tasks", "2x3",
                       "--out-pool", mono) == 0
        # shard the records by class into two half datasets
        records = read_embeddings(str(synth_dir / "train.lvpe")).to_records()
        from labelpool.storage import EmbeddingDataset, write_embeddings

        lower = [r for r in records if r.class_id.local_id < 3]
        upper = [r for r in records if r.class_id.local_id >= 3]
        a_path, b_path = str(tmp_path / "a.lvpe"), str(tmp_path / "b.lvpe")
        write_embeddings(EmbeddingDataset.from_records("synth", lower), a_path)
        write_embeddings(EmbeddingDataset.from_records("synth", upper), b_path)
        pa, pb = tmp_path / "a.lvpp", tmp_path / "b.lvpp"
        assert run_cli("build", "--train", a_path, "--tasks", "1x3", "--first-task", 1,
                       "--out-pool", pa) == 0
        assert run_cli("build", "--train", b_path, "--tasks", "1x3", "--first-task", 2,
                       "--out-pool", pb) == 0
        merged = tmp_path / "merged.lvpp"
        assert run_cli("build", "--merge-pools", pa, pb, "--out-pool", merged) == 0
        assert read_bytes(merged) == read_bytes(mono)

    def test_variant_it_requires_text(self, synth_dir, tmp_path):
        code = run_cli("build", "--train", synth_dir / "train.lvpe", "--variant", "it",
                       "--out-pool", tmp_path / "p.lvpp")
        assert code == 2

    def test_variant_it_composes_mixed_pool(self, synth_dir, tmp_path):
        pool_path = tmp_path / "it.lvpp"
        params_path = tmp_path / "it.lvpm"
        assert run_cli("build", "--train", synth_dir / "train.lvpe", "--variant", "it",
                       "--text", synth_dir / "text.lvpp", "--tasks", "2",
                       "--out-pool", pool_path, "--out-params", params_path) == 0
        from labelpool import Modality
        from labelpool.storage import read_mix_params

        pool = read_pool(str(pool_path))
        assert all(e.modality is Modality.MIXED for items in pool.entries.values() for e in items)
        assert len(read_mix_params(str(params_path))) == 2

    def test_variant_c_writes_head(self, synth_dir, tmp_path):
        head_path = tmp_path / "h.lvph"
        pool_path = tmp_path / "inputs.lvpp"
        assert run_cli("build", "--train", synth_dir / "train.lvpe", "--variant", "c",
                       "--text", synth_dir / "text.lvpp",
                       "--out-pool", pool_path, "--out-head", head_path) == 0
        from labelpool.storage import read_head

        head = read_head(str(head_path))
        assert head.weights.shape == (6, 8)

    def test_threads_flag_never_changes_bytes(self, synth_dir, tmp_path):
        p1, p2 = tmp_path / "t1.lvpp", tmp_path / "t2.lvpp"
        assert run_cli("--threads", 1, "build", "--train", synth_dir / "train.lvpe",
                       "--out-pool", p1) == 0
        assert run_cli("--threads", 2, "build", "--train", synth_dir / "train.lvpe",
                       "--out-pool", p2) == 0
        assert read_bytes(p1) == read_bytes(p2)


class TestEvalAndInfo:
    def test_noiseless_training_file_scores_one(self, tmp_path, capsys):
        data_dir = tmp_path / "d"
        assert run_cli("--seed", 3, "synth", "--classes", 4, "--dim", 6, "--sigma", 0.0,
                       "--out", data_dir) == 0
        pool_path = tmp_path / "pool.lvpp"
        assert run_cli("build", "--train", data_dir / "train.lvpe", "--out-pool", pool_path) == 0
        report_path = tmp_path / "report.json"
        code = run_cli("eval", "--pool", pool_path, "--test", data_dir / "train.lvpe",
                       "--report", report_path)
        assert code == 0
        out = capsys.readouterr().out
        assert "100.0" in out
        report = read_report(str(report_path))
        assert report.matrix == [[1.0]]
        assert report.final_average == 1.0

    def test_eval_prints_per_task_columns(self, synth_dir, tmp_path, capsys):
        pool_path = tmp_path / "pool.lvpp"
        assert run_cli("build", "--train", synth_dir / "train.lvpe", "--out-pool", pool_path) == 0
        assert run_cli("eval", "--pool", pool_path,
                       "--test", synth_dir / "test_01.lvpe", synth_dir / "test_02.lvpe") == 0
        out = capsys.readouterr().out
        assert "test_01" in out and "test_02" in out and "average" in out

    def test_report_reparse_consistency(self, synth_dir, tmp_path):
        pool_path = tmp_path / "pool.lvpp"
        report_path = tmp_path / "r.json"
        assert run_cli("build", "--train", synth_dir / "train.lvpe", "--out-pool", pool_path) == 0
        assert run_cli("eval", "--pool", pool_path, "--test", synth_dir / "test_01.lvpe",
                       "--report", report_path) == 0
        report = read_report(str(report_path))
        assert report.final_average == pytest.approx(report.compute_final_average())

    def test_info_prints_accounting(self, synth_dir, tmp_path, capsys):
        pool_path = tmp_path / "pool.lvpp"
        assert run_cli("build", "--train", synth_dir / "train.lvpe", "--out-pool", pool_path) == 0
        assert run_cli("info", "--pool", pool_path) == 0
        out = capsys.readouterr().out
        assert "classes (K): 6" in out
        assert "(O): 6" in out
        assert f"stored floats: {6 * 8}" in out
        assert "mean-pool task=1" in out

    def test_eval_dimension_mismatch_is_data_error(self, synth_dir, tmp_path):
        other = tmp_path / "other"
        assert run_cli("--seed", 1, "synth", "--classes", 2, "--dim", 5, "--out", other) == 0
        pool_path = tmp_path / "pool.lvpp"
        assert run_cli("build", "--train", synth_dir / "train.lvpe", "--out-pool", pool_path) == 0
        code = run_cli("eval", "--pool", pool_path, "--test", other / "train.lvpe")
        assert code == 2


class TestExitCodes:
    def test_usage_error_is_one(self):
        assert run_cli("build") == 1  # missing required --out-pool
        assert run_cli("no-such-command") == 1

    def test_help_is_zero(self):
        assert run_cli("--help") == 0

    def test_missing_file_is_two(self, tmp_path):
        assert run_cli("info", "--pool", tmp_path / "absent.lvpp") == 2

    def test_numeric_failure_is_three(self, monkeypatch):
        import labelpool.cli as cli

        def explode(args):
            raise NumericError("synthetic failure")

        monkeypatch.setitem(cli._COMMANDS, "info", explode)
        assert run_cli("info", "--pool", "whatever") == 3
