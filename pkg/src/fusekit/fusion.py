"""Combining finetuned checkpoints into a single base model.

The core operation is a convex combination of aligned checkpoints:
uniform averaging by default, or weights proportional to training-set
sizes or an explicit non-negative list. ``fuse_deltas`` expresses the
same combination relative to a shared initialization; for weights that
sum to one the two agree elementwise, which the tests pin down.

Also here: the bookkeeping for a pool of available source models and
the pick-the-largest-training-set heuristic used to choose a single
source model as an initialization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .checkpoint import ARCH_KEY, Checkpoint, Tensor
from .errors import AlignmentError, EmptyFusionError, NoCandidateError, WeightError


class FusionMode(Enum):
    UNIFORM = "uniform"
    DATA_SIZE = "datasize"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class FusionWeights:
    """How to weight the models being fused.

    UNIFORM ignores ``values``. DATA_SIZE and EXPLICIT read ``values``
    (raw example counts or arbitrary non-negative scalars, one per
    model) and normalize them to sum to one.
    """

    mode: FusionMode = FusionMode.UNIFORM
    values: tuple[float, ...] | None = None

    @classmethod
    def uniform(cls) -> "FusionWeights":
        return cls(FusionMode.UNIFORM)

    @classmethod
    def data_sizes(cls, sizes: list[int] | tuple[int, ...]) -> "FusionWeights":
        return cls(FusionMode.DATA_SIZE, tuple(float(s) for s in sizes))

    @classmethod
    def explicit(cls, weights: list[float] | tuple[float, ...]) -> "FusionWeights":
        return cls(FusionMode.EXPLICIT, tuple(float(w) for w in weights))

    def normalized(self, n: int) -> np.ndarray:
        """Effective weights for ``n`` models: non-negative, summing to 1."""
        if self.mode is FusionMode.UNIFORM:
            return np.full(n, 1.0 / n)
        if self.values is None or len(self.values) != n:
            raise WeightError(
                f"{self.mode.value} weights need {n} values, "
                f"got {None if self.values is None else len(self.values)}"
            )
        w = np.asarray(self.values, dtype=np.float64)
        if np.any(w < 0.0) or not np.all(np.isfinite(w)):
            raise WeightError("weights must be finite and non-negative")
        total = float(w.sum())
        if total <= 0.0:
            raise WeightError("weights must not be all zero")
        return w / total


@dataclass(frozen=True)
class SourceModelMeta:
    """A finetuned checkpoint plus the identity and size of its source task."""

    task_id: str
    train_size: int
    checkpoint: Checkpoint = field(compare=False)

    def __post_init__(self) -> None:
        if not self.task_id:
            raise ValueError("task_id must be non-empty")
        if self.train_size < 1:
            raise ValueError("train_size must be >= 1")


def _fusion_meta(models: list[Checkpoint]) -> dict[str, str]:
    meta: dict[str, str] = {}
    for m in models:
        if ARCH_KEY in m.meta:
            meta[ARCH_KEY] = m.meta[ARCH_KEY]
            break
    tasks = [m.meta["task"] for m in models if "task" in m.meta]
    if tasks:
        meta["sources"] = ",".join(tasks)
    return meta


def fuse(models: list[Checkpoint], weights: FusionWeights | None = None) -> Checkpoint:
    """Convex combination of pairwise-aligned checkpoints.

    A single model fuses to itself, which is exactly the intertraining
    initialization. The result's meta records the contributing task ids
    (from each model's "task" meta entry, when present).
    """
    if not models:
        raise EmptyFusionError("fuse() needs at least one model")
    head = models[0]
    for other in models[1:]:
        if not head.aligned_with(other):
            raise AlignmentError("fuse: models are not pairwise aligned")
    w = (weights or FusionWeights.uniform()).normalized(len(models))
    tensors = {}
    for name, t0 in head.tensors.items():
        acc = np.zeros(t0.shape)
        for wi, m in zip(w, models):
            acc += wi * m[name]
        tensors[name] = Tensor(acc, t0.dtype)
    return Checkpoint(tensors, _fusion_meta(models))


def fuse_deltas(
    base: Checkpoint,
    models: list[Checkpoint],
    weights: FusionWeights | None = None,
) -> Checkpoint:
    """``base + sum_i w_i * (model_i - base)`` with normalized weights.

    Reads each finetuned model as a delta over the shared initialization.
    Because the weights sum to one, the base contribution cancels and the
    result matches ``fuse(models, weights)`` up to float rounding.
    """
    if not models:
        raise EmptyFusionError("fuse_deltas() needs at least one model")
    for m in models:
        if not base.aligned_with(m):
            raise AlignmentError("fuse_deltas: base and models are not aligned")
    w = (weights or FusionWeights.uniform()).normalized(len(models))
    tensors = {}
    for name, tb in base.tensors.items():
        acc = tb.data.copy()
        for wi, m in zip(w, models):
            acc += wi * (m[name] - tb.data)
        tensors[name] = Tensor(acc, tb.dtype)
    return Checkpoint(tensors, _fusion_meta(models))


def available_pool(
    all_models: list[SourceModelMeta], target_task: str
) -> list[SourceModelMeta]:
    """The source pool for a target task: everything not trained on it."""
    return [m for m in all_models if m.task_id != target_task]


def select_intertrain(
    pool: list[SourceModelMeta], target_task: str
) -> SourceModelMeta:
    """Pick the source model with the largest training set.

    The target task's own model is excluded first; ties on train_size go
    to the lexicographically smallest task_id so the choice is
    deterministic.
    """
    candidates = available_pool(pool, target_task)
    if not candidates:
        raise NoCandidateError(
            f"no source model available for target {target_task!r}"
        )
    seen = set()
    for m in candidates:
        if m.task_id in seen:
            raise ValueError(f"duplicate task_id {m.task_id!r} in pool")
        seen.add(m.task_id)
    return min(candidates, key=lambda m: (-m.train_size, m.task_id))
