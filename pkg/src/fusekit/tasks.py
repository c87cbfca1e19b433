"""Deterministic synthetic classification tasks, grouped into families.

Each task draws inputs from a Gaussian mixture pushed through a
task-specific linear domain transform (random orthogonal matrix plus
per-dimension scaling), and labels them with a linear teacher acting on
the latent (pre-transform) coordinates. Three family kinds control what
the tasks in a family share:

* ``general``    - domain and teacher both vary per task
* ``sametask``   - one base teacher, lightly perturbed per task;
                   domains vary (same task, different inputs)
* ``samedomain`` - one shared domain; teachers vary (same inputs,
                   different tasks)

All sampling is a pure function of the task spec: the same spec always
materializes bit-identical splits. Train/val/test use disjoint RNG
substreams, and each draw kind has its own substream so that a larger
train_size extends a smaller one as a prefix.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .errors import ConfigError, DataError, IoError
from .rng import derive_seed, substream

# Generator shape constants. The teacher rows are rescaled to unit norm so
# every class has the same margin scale; mixture means are recentered so the
# latent distribution has mean zero, keeping classes near-balanced.
N_MIXTURE_COMPONENTS = 4
MIXTURE_MEAN_SCALE = 1.0
DEFAULT_LABEL_NOISE = 0.1
DEFAULT_PERTURB_SCALE = 0.1


class FamilyKind(Enum):
    GENERAL = "general"
    SAME_TASK = "sametask"
    SAME_DOMAIN = "samedomain"


@dataclass(frozen=True)
class TaskSpec:
    """Complete generator parameters for one task; hashable and immutable."""

    task_id: str
    family_id: str
    input_dim: int = 16
    num_classes: int = 4
    domain_seed: int = 0
    concept_seed: int = 0
    concept_perturb_index: int = 0
    concept_perturb_scale: float = 0.0
    label_noise: float = 0.0
    train_size: int = 1000
    val_size: int = 400
    test_size: int = 2000

    def __post_init__(self) -> None:
        if not self.task_id or not self.family_id:
            raise ConfigError("task_id and family_id must be non-empty")
        if self.input_dim < 1:
            raise ConfigError("input_dim must be >= 1")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if not 0.0 <= self.label_noise < 0.5:
            raise ConfigError("label_noise must be in [0, 0.5)")
        if min(self.train_size, self.val_size, self.test_size) < 1:
            raise ConfigError("split sizes must be >= 1")
        if self.concept_perturb_scale < 0.0:
            raise ConfigError("concept_perturb_scale must be >= 0")


@dataclass(frozen=True)
class Split:
    """One dataset split: features [n, d] float64 and labels [n] int64."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.int64)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise DataError("split features/labels have inconsistent shapes")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class Dataset:
    spec: TaskSpec
    train: Split
    val: Split
    test: Split


@lru_cache(maxsize=512)
def _domain_params(
    domain_seed: int, input_dim: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(mixture means, orthogonal matrix, per-dimension scales) of a domain.

    Draw order from the domain substream is fixed: means, transform,
    scales. Changing it would silently change every dataset.
    """
    rng = substream(domain_seed, "domain")
    mus = rng.standard_normal((N_MIXTURE_COMPONENTS, input_dim))
    mus = mus * MIXTURE_MEAN_SCALE
    mus -= mus.mean(axis=0, keepdims=True)
    gauss = rng.standard_normal((input_dim, input_dim))
    q, r = np.linalg.qr(gauss)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs[np.newaxis, :]
    scales = np.exp2(rng.uniform(-1.0, 1.0, size=input_dim))
    for arr in (mus, q, scales):
        arr.setflags(write=False)
    return mus, q, scales


@lru_cache(maxsize=512)
def _feature_teacher(spec: TaskSpec) -> np.ndarray:
    """Teacher matrix W with logits = x @ W.T, acting on features directly.

    The teacher is drawn in latent space (unit-norm rows, optionally
    perturbed for sametask families); the domain transform's inverse is
    folded in so stored labels and teacher queries share one code path.
    """
    k, d = spec.num_classes, spec.input_dim
    crng = substream(spec.concept_seed, "concept")
    teacher = crng.standard_normal((k, d))
    if spec.concept_perturb_scale > 0.0:
        prng = substream(spec.concept_seed, "perturb", spec.concept_perturb_index)
        noise = prng.standard_normal((k, d))
        rel = spec.concept_perturb_scale * float(np.linalg.norm(teacher))
        teacher = teacher + rel / float(np.linalg.norm(noise)) * noise
    teacher /= np.linalg.norm(teacher, axis=1, keepdims=True)

    _, q, scales = _domain_params(spec.domain_seed, spec.input_dim)
    teacher_x = (teacher @ q.T) / scales[np.newaxis, :]
    teacher_x.setflags(write=False)
    return teacher_x


def teacher_logits(spec: TaskSpec, x: np.ndarray) -> np.ndarray:
    """Teacher scores for features ``x`` [n, d]; labels are their argmax."""
    return np.asarray(x, dtype=np.float64) @ _feature_teacher(spec).T


def teacher_predict(spec: TaskSpec, x: np.ndarray) -> np.ndarray:
    return np.argmax(teacher_logits(spec, x), axis=1)


def _sample_split(spec: TaskSpec, split_name: str, n: int) -> Split:
    d = spec.input_dim
    mus, q, scales = _domain_params(spec.domain_seed, d)
    key = (spec.domain_seed, "sample", spec.concept_seed,
           spec.concept_perturb_index, split_name)

    comps = substream(*key, "component").integers(0, N_MIXTURE_COMPONENTS, size=n)
    latents = substream(*key, "latent").standard_normal((n, d)) + mus[comps]
    x = (latents @ q.T) * scales[np.newaxis, :]
    labels = teacher_predict(spec, x)

    if spec.label_noise > 0.0:
        flip = substream(*key, "flip-gate").random(n) < spec.label_noise
        offsets = substream(*key, "flip-class").integers(
            1, spec.num_classes, size=n
        )
        labels = np.where(flip, (labels + offsets) % spec.num_classes, labels)
    return Split(x, labels)


def materialize(spec: TaskSpec) -> Dataset:
    """Generate the task's train/val/test splits, deterministically."""
    return Dataset(
        spec=spec,
        train=_sample_split(spec, "train", spec.train_size),
        val=_sample_split(spec, "val", spec.val_size),
        test=_sample_split(spec, "test", spec.test_size),
    )


def make_family(
    kind: FamilyKind,
    num_tasks: int,
    sizes: list[int] | tuple[int, ...],
    seed: int,
    *,
    label_noise: float = DEFAULT_LABEL_NOISE,
    perturb_scale: float = DEFAULT_PERTURB_SCALE,
    input_dim: int = 16,
    num_classes: int = 4,
    val_size: int = 400,
    test_size: int = 2000,
) -> list[TaskSpec]:
    """Build the specs of one task family.

    Training-set sizes must be pairwise distinct so that "the model with
    the largest training set" is always unambiguous.
    """
    if num_tasks < 2:
        raise ConfigError("a family needs at least 2 tasks")
    if len(sizes) != num_tasks:
        raise ConfigError(f"expected {num_tasks} sizes, got {len(sizes)}")
    if len(set(sizes)) != len(sizes):
        raise ConfigError("training sizes must be pairwise distinct")

    shared_concept = derive_seed(seed, "family", kind.value, "concept-base")
    shared_domain = derive_seed(seed, "family", kind.value, "domain-base")
    specs = []
    for i, train_size in enumerate(sizes):
        if kind is FamilyKind.SAME_TASK:
            domain = derive_seed(seed, "family", kind.value, "domain", i)
            concept, pidx, pscale = shared_concept, i, perturb_scale
        elif kind is FamilyKind.SAME_DOMAIN:
            domain = shared_domain
            concept = derive_seed(seed, "family", kind.value, "concept", i)
            pidx, pscale = 0, 0.0
        else:
            domain = derive_seed(seed, "family", kind.value, "domain", i)
            concept = derive_seed(seed, "family", kind.value, "concept", i)
            pidx, pscale = 0, 0.0
        specs.append(
            TaskSpec(
                task_id=f"{kind.value}-{i}",
                family_id=kind.value,
                input_dim=input_dim,
                num_classes=num_classes,
                domain_seed=domain,
                concept_seed=concept,
                concept_perturb_index=pidx,
                concept_perturb_scale=pscale,
                label_noise=label_noise,
                train_size=int(train_size),
                val_size=val_size,
                test_size=test_size,
            )
        )
    return specs


def pretext_task(
    seed: int,
    *,
    input_dim: int = 16,
    num_classes: int = 4,
    train_size: int = 20000,
    label_noise: float = DEFAULT_LABEL_NOISE,
    val_size: int = 2000,
    test_size: int = 2000,
) -> TaskSpec:
    """The broad task used only to produce the shared initialization."""
    return TaskSpec(
        task_id="pretext",
        family_id="pretext",
        input_dim=input_dim,
        num_classes=num_classes,
        domain_seed=derive_seed(seed, "pretext", "domain"),
        concept_seed=derive_seed(seed, "pretext", "concept"),
        label_noise=label_noise,
        train_size=train_size,
        val_size=val_size,
        test_size=test_size,
    )


def spec_to_json(spec: TaskSpec) -> str:
    return json.dumps(dataclasses.asdict(spec), indent=2, sort_keys=True)


def spec_from_json(text: str) -> TaskSpec:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid task spec JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("task spec JSON must be an object")
    known = {f.name for f in dataclasses.fields(TaskSpec)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown task spec fields: {sorted(unknown)}")
    return TaskSpec(**raw)


def save_task_spec(spec: TaskSpec, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(spec_to_json(spec) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_task_spec(path) -> TaskSpec:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return spec_from_json(fh.read())
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def split_to_csv(split: Split, path) -> None:
    """Write a split as CSV with header f0..f{d-1},label."""
    d = split.x.shape[1]
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([f"f{i}" for i in range(d)] + ["label"])
            for xi, yi in zip(split.x, split.y):
                writer.writerow([repr(float(v)) for v in xi] + [int(yi)])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def split_from_csv(path, input_dim: int, num_classes: int) -> Split:
    """Read a split written by split_to_csv; validates d and the label range."""
    try:
        with open(path, "r", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: empty CSV")
    header = rows[0]
    expected = [f"f{i}" for i in range(input_dim)] + ["label"]
    if header != expected:
        raise DataError(
            f"{path}: header mismatch (expected {input_dim} features)"
        )
    xs, ys = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != input_dim + 1:
            raise DataError(f"{path}:{lineno}: wrong column count")
        try:
            xs.append([float(v) for v in row[:-1]])
            label = int(row[-1])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        if not 0 <= label < num_classes:
            raise DataError(
                f"{path}:{lineno}: label {label} outside [0, {num_classes})"
            )
        ys.append(label)
    if not xs:
        raise DataError(f"{path}: no data rows")
    return Split(np.array(xs), np.array(ys))
