"""A small fixed-architecture classifier with exact analytic gradients.

The network is a single-hidden-layer tanh MLP whose parameters live in a
checkpoint under the names l1.w [h, d], l1.b [h], l2.w [K, h], l2.b [K].
Training is minibatch AdamW with decoupled weight decay and early
stopping on validation accuracy: evaluate every ``eval_every_batches``
updates, stop after ``patience_evals`` consecutive evaluations without
an improvement of at least ``min_improvement`` over the best so far, and
return the checkpoint from the best evaluation rather than the last one.

Everything here is a pure function of its inputs: repeated calls with
the same arguments produce bit-identical results. Optimizer state is
created fresh for each run and is never serialized.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .checkpoint import ARCH_KEY, Checkpoint, Tensor
from .errors import AlignmentError, ConfigError, DataError
from .rng import derive_seed, substream
from .tasks import Dataset, Split, materialize, pretext_task

PARAM_NAMES = ("l1.b", "l1.w", "l2.b", "l2.w")


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int = 16
    hidden_dim: int = 32
    num_classes: int = 4

    def __post_init__(self) -> None:
        if min(self.input_dim, self.hidden_dim, self.num_classes) < 1:
            raise ConfigError("model dimensions must be >= 1")

    @property
    def architecture_id(self) -> str:
        return f"mlp-tanh-{self.input_dim}x{self.hidden_dim}x{self.num_classes}"

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        d, h, k = self.input_dim, self.hidden_dim, self.num_classes
        return {"l1.w": (h, d), "l1.b": (h,), "l2.w": (k, h), "l2.b": (k,)}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    batch_size: int = 32
    max_steps: int = 2000
    eval_every_batches: int = 50
    patience_evals: int = 50
    min_improvement: float = 0.001
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise ConfigError("learning_rate and epsilon must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("betas must be in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_steps < 0:
            raise ConfigError("max_steps must be >= 0")
        if self.eval_every_batches < 1 or self.patience_evals < 1:
            raise ConfigError("eval cadence and patience must be >= 1")


class StopReason(Enum):
    PATIENCE = "patience"
    MAX_STEPS = "max_steps"


@dataclass(frozen=True)
class EvalRecord:
    step: int
    train_loss: float
    val_accuracy: float


@dataclass(frozen=True)
class TrainLog:
    records: tuple[EvalRecord, ...]
    stopping_reason: StopReason
    best_step: int | None

    def best_val_accuracy(self) -> float | None:
        if self.best_step is None:
            return None
        return max(r.val_accuracy for r in self.records)

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["step", "train_loss", "val_accuracy"])
            for r in self.records:
                writer.writerow([r.step, repr(r.train_loss), repr(r.val_accuracy)])


@dataclass
class AdamState:
    """First/second moment accumulators, keyed like the parameter map."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def zeros(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={n: np.zeros_like(a) for n, a in params.items()},
            v={n: np.zeros_like(a) for n, a in params.items()},
        )


def config_from_checkpoint(ckpt: Checkpoint) -> ModelConfig:
    """Recover (d, h, K) from a checkpoint, validating the parameter layout."""
    if ckpt.names() != sorted(PARAM_NAMES):
        raise AlignmentError(
            f"expected tensors {sorted(PARAM_NAMES)}, got {ckpt.names()}"
        )
    l1w, l1b = ckpt["l1.w"], ckpt["l1.b"]
    l2w, l2b = ckpt["l2.w"], ckpt["l2.b"]
    if l1w.ndim != 2 or l2w.ndim != 2 or l1b.ndim != 1 or l2b.ndim != 1:
        raise AlignmentError("parameter tensors have wrong ranks")
    h, d = l1w.shape
    k = l2w.shape[0]
    if l1b.shape != (h,) or l2w.shape != (k, h) or l2b.shape != (k,):
        raise AlignmentError("parameter tensor shapes are inconsistent")
    return ModelConfig(input_dim=d, hidden_dim=h, num_classes=k)


def init_checkpoint(cfg: ModelConfig, seed: int) -> Checkpoint:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init, seeded per tensor."""
    fan_in = {"l1.w": cfg.input_dim, "l1.b": cfg.input_dim,
              "l2.w": cfg.hidden_dim, "l2.b": cfg.hidden_dim}
    tensors = {}
    for name, shape in cfg.param_shapes().items():
        bound = 1.0 / np.sqrt(fan_in[name])
        rng = substream(seed, "init", name)
        tensors[name] = Tensor(rng.uniform(-bound, bound, size=shape))
    return Checkpoint(tensors, {ARCH_KEY: cfg.architecture_id, "seed": str(seed)})


def _params_of(ckpt: Checkpoint) -> dict[str, np.ndarray]:
    return {name: ckpt[name] for name in PARAM_NAMES}


def _forward(params: dict[str, np.ndarray], x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Returns (logits [B, K], hidden activations [B, h])."""
    hidden = np.tanh(x @ params["l1.w"].T + params["l1.b"])
    logits = hidden @ params["l2.w"].T + params["l2.b"]
    return logits, hidden


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _check_batch(params: dict[str, np.ndarray], x: np.ndarray, y: np.ndarray | None) -> None:
    h, d = params["l1.w"].shape
    k = params["l2.w"].shape[0]
    if x.ndim != 2 or x.shape[1] != d:
        raise AlignmentError(f"batch features must be [B, {d}], got {x.shape}")
    if y is not None:
        if y.shape != (x.shape[0],):
            raise DataError("labels must be one per example")
        if y.size and (y.min() < 0 or y.max() >= k):
            raise DataError(f"labels must lie in [0, {k})")


def _loss_grad(
    params: dict[str, np.ndarray], x: np.ndarray, y: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean softmax cross-entropy and its exact gradient."""
    batch = x.shape[0]
    logits, hidden = _forward(params, x)
    logp = _log_softmax(logits)
    loss = -float(logp[np.arange(batch), y].mean())

    g_logits = np.exp(logp)
    g_logits[np.arange(batch), y] -= 1.0
    g_logits /= batch

    g_hidden = g_logits @ params["l2.w"]
    g_pre = g_hidden * (1.0 - hidden * hidden)
    grads = {
        "l2.w": g_logits.T @ hidden,
        "l2.b": g_logits.sum(axis=0),
        "l1.w": g_pre.T @ x,
        "l1.b": g_pre.sum(axis=0),
    }
    return loss, grads


def _adamw_update(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    t: int,
    cfg: TrainConfig,
) -> dict[str, np.ndarray]:
    """One decoupled-decay AdamW step; mutates ``state``, returns new params."""
    b1, b2 = cfg.beta1, cfg.beta2
    bias1 = 1.0 - b1**t
    bias2 = 1.0 - b2**t
    out = {}
    for name, w in params.items():
        g = grads[name]
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = m / bias1
        v_hat = v / bias2
        step = m_hat / (np.sqrt(v_hat) + cfg.epsilon)
        if cfg.weight_decay:
            step = step + cfg.weight_decay * w
        out[name] = w - cfg.learning_rate * step
    return out


def forward(ckpt: Checkpoint, x: np.ndarray) -> tuple[np.ndarray, dict]:
    """Logits for a feature batch, plus the activation cache for backward."""
    config_from_checkpoint(ckpt)
    params = _params_of(ckpt)
    x = np.asarray(x, dtype=np.float64)
    _check_batch(params, x, None)
    logits, hidden = _forward(params, x)
    return logits, {"x": x, "hidden": hidden}


def loss_and_grad(
    ckpt: Checkpoint, batch: tuple[np.ndarray, np.ndarray]
) -> tuple[float, Checkpoint]:
    """Mean cross-entropy over the batch and the gradient as a checkpoint
    aligned with ``ckpt``."""
    config_from_checkpoint(ckpt)
    params = _params_of(ckpt)
    x = np.asarray(batch[0], dtype=np.float64)
    y = np.asarray(batch[1], dtype=np.int64)
    if x.shape[0] == 0:
        raise DataError("cannot take gradients over an empty batch")
    _check_batch(params, x, y)
    loss, grads = _loss_grad(params, x, y)
    tensors = {
        n: Tensor(grads[n], ckpt.tensors[n].dtype) for n in PARAM_NAMES
    }
    return loss, Checkpoint(tensors, dict(ckpt.meta))


def adamw_step(
    ckpt: Checkpoint,
    grad: Checkpoint,
    state: AdamState | None,
    t: int,
    cfg: TrainConfig,
) -> tuple[Checkpoint, AdamState]:
    """Apply one AdamW update at step index ``t`` (1-based).

    Pass ``state=None`` at t=1 for fresh zero moments. Decay is decoupled:
    it scales the weights directly instead of entering the gradient.
    """
    if t < 1:
        raise ConfigError(f"step index must be >= 1, got {t}")
    if not ckpt.aligned_with(grad):
        raise AlignmentError("gradient is not aligned with the checkpoint")
    params = {n: ckpt[n] for n in ckpt.names()}
    grads = {n: grad[n] for n in params}
    new_state = AdamState(
        m={n: a.copy() for n, a in state.m.items()},
        v={n: a.copy() for n, a in state.v.items()},
    ) if state is not None else AdamState.zeros(params)
    new_params = _adamw_update(params, grads, new_state, t, cfg)
    tensors = {n: Tensor(new_params[n], ckpt.tensors[n].dtype) for n in params}
    return Checkpoint(tensors, dict(ckpt.meta)), new_state


def evaluate(ckpt: Checkpoint, split: Split | tuple[np.ndarray, np.ndarray]) -> float:
    """Fraction of examples whose argmax logit matches the label.

    Argmax ties resolve to the lowest class index.
    """
    x, y = (split.x, split.y) if isinstance(split, Split) else split
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.shape[0] == 0:
        raise DataError("cannot evaluate an empty split")
    config_from_checkpoint(ckpt)
    params = _params_of(ckpt)
    _check_batch(params, x, y)
    logits, _ = _forward(params, x)
    return float((np.argmax(logits, axis=1) == y).mean())


def mean_loss(ckpt: Checkpoint, split: Split | tuple[np.ndarray, np.ndarray]) -> float:
    """Mean cross-entropy of a checkpoint over a whole split."""
    x, y = (split.x, split.y) if isinstance(split, Split) else split
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.shape[0] == 0:
        raise DataError("cannot evaluate an empty split")
    config_from_checkpoint(ckpt)
    params = _params_of(ckpt)
    _check_batch(params, x, y)
    logits, _ = _forward(params, x)
    logp = _log_softmax(logits)
    return -float(logp[np.arange(x.shape[0]), y].mean())


def finetune(
    base: Checkpoint, data: Dataset, cfg: TrainConfig
) -> tuple[Checkpoint, TrainLog]:
    """Train ``base`` on the dataset's train split with early stopping.

    Minibatches come from a fresh seeded shuffle each epoch, keeping the
    final partial batch. Returns the checkpoint from the evaluation with
    the highest validation accuracy (first occurrence on ties); if no
    evaluation happened before max_steps, returns the final parameters.
    """
    mcfg = config_from_checkpoint(base)
    if mcfg.input_dim != data.spec.input_dim:
        raise AlignmentError(
            f"model expects {mcfg.input_dim}-dim inputs, "
            f"task has {data.spec.input_dim}"
        )
    if mcfg.num_classes != data.spec.num_classes:
        raise AlignmentError(
            f"model has {mcfg.num_classes} classes, "
            f"task has {data.spec.num_classes}"
        )
    n_train = len(data.train)
    if n_train == 0:
        raise DataError("train split is empty")

    params = {n: base[n].copy() for n in PARAM_NAMES}
    state = AdamState.zeros(params)
    x_train, y_train = data.train.x, data.train.y
    x_val, y_val = data.val.x, data.val.y

    records: list[EvalRecord] = []
    window_losses: list[float] = []
    best_acc = -np.inf
    best_step: int | None = None
    best_params: dict[str, np.ndarray] | None = None
    patience_ref = -np.inf
    stale_evals = 0
    reason = StopReason.MAX_STEPS
    step = 0
    stop = cfg.max_steps == 0

    for epoch in itertools.count():
        if stop:
            break
        order = substream(cfg.seed, "shuffle", epoch).permutation(n_train)
        for lo in range(0, n_train, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            step += 1
            loss, grads = _loss_grad(params, x_train[idx], y_train[idx])
            params = _adamw_update(params, grads, state, step, cfg)
            window_losses.append(loss)

            if step % cfg.eval_every_batches == 0:
                logits, _ = _forward(params, x_val)
                acc = float((np.argmax(logits, axis=1) == y_val).mean())
                records.append(
                    EvalRecord(step, float(np.mean(window_losses)), acc)
                )
                window_losses.clear()
                if acc > best_acc:
                    best_acc, best_step = acc, step
                    best_params = {n: a.copy() for n, a in params.items()}
                if acc > patience_ref + cfg.min_improvement:
                    patience_ref = acc
                    stale_evals = 0
                else:
                    stale_evals += 1
                    if stale_evals >= cfg.patience_evals:
                        reason = StopReason.PATIENCE
                        stop = True
                        break
            if step >= cfg.max_steps:
                stop = True
                break

    final = best_params if best_params is not None else params
    meta = {
        "task": data.spec.task_id,
        "train_size": str(n_train),
        "seed": str(cfg.seed),
        ARCH_KEY: mcfg.architecture_id,
    }
    tensors = {n: Tensor(final[n], base.tensors[n].dtype) for n in PARAM_NAMES}
    log = TrainLog(tuple(records), reason, best_step)
    return Checkpoint(tensors, meta), log


def pretrain(cfg: ModelConfig, tcfg: TrainConfig, seed: int) -> Checkpoint:
    """Train a fresh random init on the pretext task; the shared start point.

    The given seed drives the init, the pretext task's generator seeds,
    and the shuffle order (overriding ``tcfg.seed``).
    """
    spec = pretext_task(
        seed, input_dim=cfg.input_dim, num_classes=cfg.num_classes
    )
    data = materialize(spec)
    start = init_checkpoint(cfg, derive_seed(seed, "pretrain-init"))
    run_cfg = replace(tcfg, seed=derive_seed(seed, "pretrain-shuffle"))
    ckpt, _ = finetune(start, data, run_cfg)
    return ckpt
