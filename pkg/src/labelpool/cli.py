"""Command-line pipelines: synth -> build -> eval, plus pool inspection.

Subcommands communicate through files only, so distributed builds are a
matter of copying pool files and merging them. Every subcommand is a pure
function of (flags, input files, seed); --threads affects wall time only.

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings
from typing import Optional, Sequence

import numpy as np

from . import _kernels, storage
from .errors import LabelPoolError, NumericError, StorageError, ValidationError
from .head import HeadTrainConfig, predict_batch, select_head_inputs, train_head
from .mixing import MixTrainConfig, build_mixed_pool, train_mixing_for_task
from .pooling import MergePolicy, build_mean_pool, complexity, memory_floats, merge
from .similarity import SimilarityKind, SoftmaxConfig, classify_batch
from .synth import SynthSpec, generate
from .types import ClassId, EvalReport, Modality, Pool, Record, TaskKind, TaskSpec

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="labelpool",
        description="Continual-learning classification over precomputed embedding vectors.",
    )
    parser.add_argument("--seed", type=int, default=0, help="global RNG seed")
    parser.add_argument("--threads", type=int, default=None, help="kernel thread count")
    parser.add_argument(
        "--similarity",
        choices=[k.value for k in SimilarityKind],
        default=None,
        help="similarity kind (default: l1 for image-mean pools, cosine otherwise)",
    )
    parser.add_argument("--tau", type=float, default=1.0, help="softmax inverse temperature")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic embedding dataset")
    p_synth.add_argument("--classes", type=int, default=10)
    p_synth.add_argument("--dim", type=int, default=32)
    p_synth.add_argument("--train-per-class", type=int, default=20)
    p_synth.add_argument("--test-per-class", type=int, default=10)
    p_synth.add_argument("--sigma", type=float, default=0.1, help="within-class std")
    p_synth.add_argument("--mean-scale", type=float, default=1.0)
    p_synth.add_argument("--text-noise", type=float, default=None)
    p_synth.add_argument(
        "--domains", default=None, help="comma-separated per-domain offset scales (enables DIL)"
    )
    p_synth.add_argument("--tasks", type=int, default=1, help="number of class groups")
    p_synth.add_argument("--namespace", default="synth")
    p_synth.add_argument("--normalize", action="store_true", help="L2-normalize exported vectors")
    p_synth.add_argument("--out", required=True, help="output directory")

    p_build = sub.add_parser("build", help="build pools/parameters from embedding files")
    p_build.add_argument("--train", nargs="+", default=None, help="LVPE training files")
    p_build.add_argument("--merge-pools", nargs="+", default=None, help="merge LVPP files instead")
    p_build.add_argument(
        "--merge-policy",
        choices=[p.value for p in MergePolicy],
        default="append",
    )
    p_build.add_argument("--variant", choices=["i", "it", "c"], default="i")
    p_build.add_argument(
        "--tasks",
        default="1",
        help='task layout: "N" groups, "NxM" tasks-by-classes, or "domains"',
    )
    p_build.add_argument("--first-task", type=int, default=1, help="index of the first task")
    p_build.add_argument("--text", default=None, help="LVPP file of text label vectors")
    p_build.add_argument("--out-pool", required=True)
    p_build.add_argument("--out-params", default=None)
    p_build.add_argument("--out-head", default=None)
    p_build.add_argument("--mix-lr", type=float, default=1e-4)
    p_build.add_argument("--mix-epochs", type=int, default=10)
    p_build.add_argument("--mix-batch-size", type=int, default=256)
    p_build.add_argument("--mix-tau", type=float, default=100.0)
    p_build.add_argument("--alpha-init", type=float, default=0.5)
    p_build.add_argument("--beta-init", type=float, default=1.0)
    p_build.add_argument("--head-lr", type=float, default=0.01)
    p_build.add_argument("--head-max-steps", type=int, default=5000)

    p_eval = sub.add_parser("eval", help="evaluate a pool (or head) on test files")
    p_eval.add_argument("--pool", required=True)
    p_eval.add_argument("--head", default=None)
    p_eval.add_argument("--test", nargs="+", required=True)
    p_eval.add_argument("--report", default=None, help="write the report JSON here")

    p_info = sub.add_parser("info", help="summarize a pool file")
    p_info.add_argument("--pool", required=True)
    return parser


def _parse_domains(text: Optional[str]):
    if text is None:
        return None
    try:
        return tuple(float(v) for v in text.split(",") if v.strip() != "")
    except ValueError:
        raise ValidationError(f"bad --domains value: {text!r}") from None


def _cmd_synth(args) -> int:
    spec = SynthSpec(
        n_classes=args.classes,
        dim=args.dim,
        mean_scale=args.mean_scale,
        within_std=args.sigma,
        train_per_class=args.train_per_class,
        test_per_class=args.test_per_class,
        n_tasks=args.tasks,
        domain_offset_scales=_parse_domains(args.domains),
        text_noise=args.text_noise,
        seed=args.seed,
        namespace=args.namespace,
    )
    data = generate(spec)
    os.makedirs(args.out, exist_ok=True)
    train_records = [r for task in data.train_tasks for r in task.records]
    train_ds = storage.EmbeddingDataset.from_records(spec.namespace, train_records, args.normalize)
    train_path = os.path.join(args.out, "train.lvpe")
    storage.write_embeddings(train_ds, train_path)
    test_paths = []
    for task in data.test_tasks:
        ds = storage.EmbeddingDataset.from_records(spec.namespace, task.records, args.normalize)
        path = os.path.join(args.out, f"test_{task.index:02d}.lvpe")
        storage.write_embeddings(ds, path)
        test_paths.append(path)
    print(f"spec: {spec}")
    print(f"train: {train_path} ({len(train_ds)} records)")
    print(f"test: {len(test_paths)} task file(s)")
    if data.text_pool is not None:
        text_path = os.path.join(args.out, "text.lvpp")
        storage.write_pool(data.text_pool, text_path)
        print(f"text: {text_path}")
    return EXIT_OK


def _split_tasks(records: list[Record], layout: str, first_task: int) -> list[TaskSpec]:
    layout = layout.strip().lower()
    if layout == "domains":
        domains = sorted({r.domain_id for r in records}, key=lambda d: (d is None, d))
        tasks = []
        for offset, domain in enumerate(domains):
            subset = [r for r in records if r.domain_id == domain]
            tasks.append(TaskSpec(index=first_task + offset, records=subset, kind=TaskKind.DIL))
        return tasks
    classes = sorted({r.class_id for r in records})
    if "x" in layout:
        n_tasks_s, per_task_s = layout.split("x", 1)
        try:
            n_tasks, per_task = int(n_tasks_s), int(per_task_s)
        except ValueError:
            raise ValidationError(f"bad --tasks layout: {layout!r}") from None
        if n_tasks * per_task != len(classes):
            raise ValidationError(
                f"layout {layout!r} covers {n_tasks * per_task} classes, dataset has {len(classes)}"
            )
        groups = [classes[i * per_task : (i + 1) * per_task] for i in range(n_tasks)]
    else:
        try:
            n_tasks = int(layout)
        except ValueError:
            raise ValidationError(f"bad --tasks layout: {layout!r}") from None
        if not (1 <= n_tasks <= len(classes)):
            raise ValidationError(f"--tasks {n_tasks} out of range for {len(classes)} classes")
        groups = [list(g) for g in np.array_split(np.array(classes, dtype=object), n_tasks)]
    by_class: dict[ClassId, list[Record]] = {}
    for record in records:
        by_class.setdefault(record.class_id, []).append(record)
    tasks = []
    for offset, group in enumerate(groups):
        subset = [r for cid in group for r in by_class[cid]]
        tasks.append(TaskSpec(index=first_task + offset, records=subset, kind=TaskKind.CIL))
    return tasks


def _load_records(paths: Sequence[str]) -> list[Record]:
    records: list[Record] = []
    dim = None
    for path in paths:
        dataset = storage.read_embeddings(path)
        if dim is None:
            dim = dataset.dim
        elif dataset.dim != dim:
            raise ValidationError(f"{path}: dimension {dataset.dim} != {dim}")
        records.extend(dataset.to_records())
    if not records:
        raise ValidationError("no records in the given training files")
    return records


def _cmd_build(args) -> int:
    if (args.train is None) == (args.merge_pools is None):
        raise ValidationError("exactly one of --train or --merge-pools is required")
    if args.merge_pools is not None:
        pools = [storage.read_pool(path) for path in args.merge_pools]
        merged = merge(pools, MergePolicy(args.merge_policy))
        storage.write_pool(merged, args.out_pool)
        print(f"merged {len(pools)} pools -> {args.out_pool} "
              f"(K={merged.num_classes}, O={complexity(merged)})")
        return EXIT_OK

    records = _load_records(args.train)
    tasks = _split_tasks(records, args.tasks, args.first_task)
    pool = None
    for task in tasks:
        task_pool = build_mean_pool(task)
        pool = task_pool if pool is None else merge([pool, task_pool], MergePolicy.APPEND)

    text_pool = storage.read_pool(args.text) if args.text else None
    out_pool = pool
    if args.variant == "it" and text_pool is None:
        raise ValidationError("--variant it requires --text (text label vectors)")

    mix_params = []
    mixed_pool = None
    if args.variant in ("it", "c") and text_pool is not None:
        cfg = MixTrainConfig(
            learning_rate=args.mix_lr,
            epochs=args.mix_epochs,
            batch_size=args.mix_batch_size,
            tau=args.mix_tau,
            seed=args.seed,
            alpha_init=args.alpha_init,
            beta_init=args.beta_init,
        )
        for task in tasks:
            task_pool = build_mean_pool(task)
            domains = {r.domain_id for r in task.records}
            domain = domains.pop() if len(domains) == 1 else None
            means = {}
            for cid, entries in task_pool.entries.items():
                for entry in entries:
                    if entry.domain_id == domain:
                        means[cid] = entry.vector
            mix_params.append(train_mixing_for_task(task, text_pool, means, cfg))
        mixed_pool = build_mixed_pool(pool, text_pool, mix_params)
        if args.variant == "it":
            out_pool = mixed_pool
    if args.out_params:
        if not mix_params:
            raise ValidationError("--out-params given but no mixing parameters were trained")
        storage.write_mix_params(mix_params, args.out_params)
        print(f"params -> {args.out_params} ({len(mix_params)} task(s))")

    if args.variant == "c":
        head_cfg = HeadTrainConfig(
            learning_rate=args.head_lr, max_steps=args.head_max_steps, seed=args.seed
        )
        inputs = select_head_inputs(pool, mixed_pool)
        head = train_head(inputs, head_cfg)
        out_pool = inputs
        if not args.out_head:
            raise ValidationError("--variant c requires --out-head")
        storage.write_head(head, args.out_head)
        print(f"head -> {args.out_head} (loss={head.final_loss:.4f}, steps={head.steps})")

    storage.write_pool(out_pool, args.out_pool)
    print(
        f"pool -> {args.out_pool} (K={out_pool.num_classes}, O={complexity(out_pool)}, "
        f"floats={memory_floats(out_pool)}, tasks={len(tasks)})"
    )
    return EXIT_OK


def _default_similarity(pool: Pool) -> SimilarityKind:
    modalities = {e.modality for items in pool.entries.values() for e in items}
    if modalities <= {Modality.TEXT, Modality.MIXED}:
        return SimilarityKind.COSINE
    return SimilarityKind.L1


def _cmd_eval(args) -> int:
    pool = storage.read_pool(args.pool)
    head = storage.read_head(args.head) if args.head else None
    kind = SimilarityKind(args.similarity) if args.similarity else _default_similarity(pool)
    cfg = SoftmaxConfig(args.tau)
    row: list[Optional[float]] = []
    labels = []
    sizes = []
    for path in args.test:
        dataset = storage.read_embeddings(path)
        if dataset.dim != pool.dim:
            raise ValidationError(f"{path}: dimension {dataset.dim} != pool dimension {pool.dim}")
        records = dataset.to_records()
        if not records:
            raise ValidationError(f"{path}: empty test task")
        queries = dataset.vectors.astype(np.float64)
        truth = [r.class_id for r in records]
        if head is not None:
            predicted = predict_batch(head, queries)
        else:
            predicted = classify_batch(kind, pool, queries, cfg)
        hits = sum(1 for p, t in zip(predicted, truth) if p == t)
        row.append(hits / len(truth))
        labels.append(os.path.splitext(os.path.basename(path))[0])
        sizes.append(len(truth))
    report = EvalReport(
        matrix=[row],
        test_task_labels=labels,
        stage_labels=["final"],
        test_task_sizes=sizes,
        config={
            "pool": args.pool,
            "head": args.head,
            "similarity": kind.value,
            "tau": args.tau,
        },
        seed=args.seed,
    )
    print(storage.format_report_table(report))
    if args.report:
        storage.write_report(report, args.report)
        print(f"report -> {args.report}")
    return EXIT_OK


def _cmd_info(args) -> int:
    pool = storage.read_pool(args.pool)
    sizes = sorted(len(items) for items in pool.entries.values())
    per_class = f"{sizes[0]}" if sizes[0] == sizes[-1] else f"{sizes[0]}..{sizes[-1]}"
    print(f"file: {args.pool} ({os.path.getsize(args.pool)} bytes)")
    print(f"dim: {pool.dim}")
    print(f"classes (K): {pool.num_classes}")
    print(f"pool size per class (P): {per_class}")
    print(f"similarity evaluations per query (O): {complexity(pool)}")
    print(f"stored floats: {memory_floats(pool)}")
    print("provenance:")
    for line in pool.provenance:
        print(f"  {line}")
    if not pool.provenance:
        print("  (none)")
    return EXIT_OK


_COMMANDS = {"synth": _cmd_synth, "build": _cmd_build, "eval": _cmd_eval, "info": _cmd_info}


def main(argv: Optional[Sequence[str]] = None) -> int:
    # numba's TBB-version notice is harmless here (it falls back to another
    # threading layer) and would otherwise land on every user's stderr
    warnings.filterwarnings("ignore", message="The TBB threading layer")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors; remap
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if args.threads is not None and _kernels.USE_NUMBA:
        import numba

        numba.set_num_threads(max(1, args.threads))
    try:
        return _COMMANDS[args.command](args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValidationError, StorageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except LabelPoolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
