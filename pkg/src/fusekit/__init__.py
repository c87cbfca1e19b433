"""fusekit: fuse finetuned checkpoints into better base models.

Combines aligned model checkpoints by (weighted) elementwise averaging,
trains and evaluates a small tanh classifier on deterministic synthetic
task families, and runs the comparison protocols (base-model table,
pairwise fusion matrix, weight-decay ablation, source-size sweep,
interpolation diagnostics) end to end with seeded reproducibility.
"""

from .checkpoint import (
    Checkpoint,
    Tensor,
    axpy,
    l2_distance,
    l2_norm,
    load_checkpoint,
    save_checkpoint,
    zero_like,
)
from .errors import (
    AlignmentError,
    ConfigError,
    DataError,
    EmptyFusionError,
    FormatError,
    FusekitError,
    IoError,
    NoCandidateError,
    WeightError,
)
from .fusion import (
    FusionMode,
    FusionWeights,
    SourceModelMeta,
    available_pool,
    fuse,
    fuse_deltas,
    select_intertrain,
)
from .tasks import (
    Dataset,
    FamilyKind,
    Split,
    TaskSpec,
    make_family,
    materialize,
    pretext_task,
)
from .training import (
    ModelConfig,
    TrainConfig,
    TrainLog,
    adamw_step,
    evaluate,
    finetune,
    forward,
    init_checkpoint,
    loss_and_grad,
    pretrain,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentError",
    "Checkpoint",
    "ConfigError",
    "DataError",
    "Dataset",
    "EmptyFusionError",
    "FamilyKind",
    "FormatError",
    "FusekitError",
    "FusionMode",
    "FusionWeights",
    "IoError",
    "ModelConfig",
    "NoCandidateError",
    "SourceModelMeta",
    "Split",
    "TaskSpec",
    "Tensor",
    "TrainConfig",
    "TrainLog",
    "WeightError",
    "adamw_step",
    "available_pool",
    "axpy",
    "evaluate",
    "finetune",
    "forward",
    "fuse",
    "fuse_deltas",
    "init_checkpoint",
    "l2_distance",
    "l2_norm",
    "load_checkpoint",
    "loss_and_grad",
    "make_family",
    "materialize",
    "pretext_task",
    "pretrain",
    "save_checkpoint",
    "select_intertrain",
    "zero_like",
]
