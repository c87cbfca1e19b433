"""Loss-landscape probes: linear interpolation curves and distance maps.

Walking the straight line between two checkpoints and evaluating loss
and accuracy at each point shows whether the segment stays in a low-loss
region; a curve that never rises is the classic sign that averaging the
endpoints is safe. With an adaptive optimizer in the loop, non-monotone
curves are an expected outcome worth reporting, not an error.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .checkpoint import Checkpoint, l2_distance
from .errors import AlignmentError, ConfigError, IoError
from .fusion import FusionWeights, fuse
from .tasks import Split
from .training import evaluate, mean_loss

MONOTONE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class InterpolationCurve:
    """Loss/accuracy along (1-alpha)*a + alpha*b for an alpha grid in [0, 1]."""

    alphas: tuple[float, ...]
    losses: tuple[float, ...]
    accuracies: tuple[float, ...]
    endpoints: tuple[str, str]

    def __post_init__(self) -> None:
        if not (len(self.alphas) == len(self.losses) == len(self.accuracies)):
            raise ConfigError("curve fields must have equal lengths")
        if len(self.alphas) < 2:
            raise ConfigError("a curve needs at least 2 points")
        if self.alphas[0] != 0.0 or self.alphas[-1] != 1.0:
            raise ConfigError("alpha grid must start at 0.0 and end at 1.0")
        if any(b <= a for a, b in zip(self.alphas, self.alphas[1:])):
            raise ConfigError("alphas must be strictly increasing")

    def to_csv(self, path) -> None:
        try:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["alpha", "loss", "accuracy"])
                for a, l, acc in zip(self.alphas, self.losses, self.accuracies):
                    writer.writerow([repr(a), repr(l), repr(acc)])
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc


@dataclass(frozen=True)
class MonotonicityReport:
    monotone_decreasing: bool
    max_bump: float


def _endpoint_label(ckpt: Checkpoint, fallback: str) -> str:
    return ckpt.meta.get("task", fallback)


def interpolate(
    a: Checkpoint,
    b: Checkpoint,
    data: Split,
    num_points: int,
) -> InterpolationCurve:
    """Evaluate (1-alpha)*a + alpha*b on ``data`` over a uniform alpha grid.

    alpha=0 reproduces a's metrics exactly and alpha=1 reproduces b's;
    the midpoint of a 2-endpoint curve is exactly their uniform fusion.
    """
    if num_points < 2:
        raise ConfigError("num_points must be >= 2")
    if not a.aligned_with(b):
        raise AlignmentError("interpolate: endpoints are not aligned")
    alphas, losses, accs = [], [], []
    for i in range(num_points):
        alpha = i / (num_points - 1)
        point = fuse([a, b], FusionWeights.explicit([1.0 - alpha, alpha]))
        alphas.append(alpha)
        losses.append(mean_loss(point, data))
        accs.append(evaluate(point, data))
    return InterpolationCurve(
        alphas=tuple(alphas),
        losses=tuple(losses),
        accuracies=tuple(accs),
        endpoints=(_endpoint_label(a, "a"), _endpoint_label(b, "b")),
    )


def monotonicity_report(curve: InterpolationCurve) -> MonotonicityReport:
    """Whether losses only ever decrease (up to float noise), and the
    largest successive increase seen."""
    diffs = [b - a for a, b in zip(curve.losses, curve.losses[1:])]
    max_bump = max((d for d in diffs if d > 0.0), default=0.0)
    monotone = all(d <= MONOTONE_TOLERANCE for d in diffs)
    return MonotonicityReport(monotone_decreasing=monotone, max_bump=max_bump)


def distance_matrix(models: list[Checkpoint]) -> np.ndarray:
    """Symmetric matrix of pairwise checkpoint distances, zero diagonal."""
    n = len(models)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = l2_distance(models[i], models[j])
            out[i, j] = out[j, i] = d
    return out
