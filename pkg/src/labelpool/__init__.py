"""Continual-learning classification over precomputed embedding vectors.

Classes are represented by small pools of labeled reference vectors (image
means, text vectors, or trained mixtures of both); classification is an
exact max-similarity search over the pool, so learning a new task never
modifies what earlier tasks stored.
"""

from .errors import (
    BadMagicError,
    FormatError,
    LabelPoolError,
    NumericError,
    StorageError,
    TruncatedFileError,
    ValidationError,
    VersionMismatchError,
)
from .gate import Gate, Route, build_gate, domain_selector, gated_classify, namespace_selector, route
from .harness import (
    Protocol,
    ProtocolKind,
    RunState,
    Variant,
    forgetting_audit,
    interleave_streams,
    run,
    upper_bound,
)
from .head import (
    HeadTrainConfig,
    LinearClassifier,
    predict,
    predict_batch,
    select_head_inputs,
    train_head,
)
from .mixing import (
    MixParams,
    MixTrainConfig,
    build_mixed_pool,
    compose_mixed,
    mixing_loss_and_grads,
    task_loss_and_grads,
    train_mixing_for_task,
)
from .pooling import (
    MeanAccumulator,
    MergePolicy,
    accumulate,
    build_mean_pool,
    build_sharded,
    complexity,
    memory_floats,
    merge,
)
from .similarity import (
    SimilarityKind,
    SoftmaxConfig,
    class_probabilities,
    class_scores,
    classify,
    classify_batch,
    pool_similarity,
    score_matrix,
    sim,
)
from .synth import (
    SynthData,
    SynthSpec,
    generate,
    oracle_nearest_class_mean,
    oracle_one_nn,
    oracle_softmax,
)
from .types import (
    ClassId,
    EvalReport,
    LabelVector,
    Modality,
    Pool,
    Record,
    TaskKind,
    TaskSpec,
    as_embedding,
)

__version__ = "0.1.0"
