"""Mini-batch SGD training and evaluation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .model import N_CLASSES, Network, NetworkSpec

log = logging.getLogger(__name__)

HUMAN = 0


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 30
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        # lr == 0 is allowed: it freezes the parameters (useful as a control)
        if not self.learning_rate >= 0:
            raise ValueError("learning rate must be non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class Metrics:
    accuracy: float
    confusion: np.ndarray      # rows: true class, columns: predicted
    loss: float

    @property
    def count(self) -> int:
        return int(self.confusion.sum())

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "loss": self.loss, "count": self.count,
                "confusion": self.confusion.tolist()}


@dataclass
class Split:
    """Images [N, H, W, 2], integer labels and variant tags (0 human, 1 sterile)."""
    x: np.ndarray
    y: np.ndarray
    variant: np.ndarray = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.variant is None:
            self.variant = np.zeros(len(self.y), dtype=np.int64)
        self.variant = np.asarray(self.variant, dtype=np.int64)
        if not (len(self.x) == len(self.y) == len(self.variant)):
            raise ValueError("split arrays have different lengths")

    def __len__(self) -> int:
        return len(self.y)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainResult:
    model: Network
    history: list = field(default_factory=list)
    best_epoch: int = 0
    best_val: Metrics | None = None


def metrics_from_logits(logits: np.ndarray, labels: np.ndarray) -> Metrics:
    labels = np.asarray(labels, dtype=np.int64)
    pred = np.argmax(logits, axis=1)
    confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(confusion, (labels, pred), 1)
    loss, _ = ops.softmax_cross_entropy(logits, labels)
    return Metrics(accuracy=float(np.trace(confusion) / len(labels)), confusion=confusion, loss=float(loss))


def evaluate(model: Network, data: Split, batch_size: int = 256) -> Metrics:
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    return metrics_from_logits(model.predict(data.x, batch_size), data.y)


def train(spec: NetworkSpec, train_set: Split, val_set: Split, cfg: TrainConfig,
          allow_sterile_val: bool = False, progress=None) -> TrainResult:
    """Train from a seeded initialization; keep the best-validation-accuracy epoch.

    The validation set must hold human captures only unless
    ``allow_sterile_val`` is set explicitly.  Ties in validation accuracy keep
    the earlier epoch.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("training and validation splits must be non-empty")
    if not allow_sterile_val and np.any(val_set.variant != HUMAN):
        raise ValueError("validation set contains sterile samples")
    rng = np.random.default_rng(cfg.seed)
    model = Network(spec, seed=int(rng.integers(0, 2 ** 63)))
    order_rng = np.random.default_rng(int(rng.integers(0, 2 ** 63)))
    names = list(model.params)

    result = TrainResult(model=model.copy())
    best_acc = -1.0
    n = len(train_set)
    for epoch in range(1, cfg.epochs + 1):
        order = order_rng.permutation(n) if cfg.shuffle else np.arange(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, logits, grads = model.loss_and_grads(train_set.x[idx], train_set.y[idx])
            if not np.isfinite(loss):
                raise ops.NumericError(f"loss became non-finite in epoch {epoch}")
            loss_sum += loss * len(idx)
            correct += int(np.sum(np.argmax(logits, axis=1) == train_set.y[idx]))
            new = ops.sgd_step([model.params[k] for k in names], [grads[k] for k in names], cfg.learning_rate)
            model.params = dict(zip(names, new))
        val = evaluate(model, val_set)
        rec = EpochRecord(epoch, loss_sum / n, correct / n, val.loss, val.accuracy)
        result.history.append(rec)
        log.info("epoch %d train_loss %.4f train_acc %.4f val_loss %.4f val_acc %.4f",
                 epoch, rec.train_loss, rec.train_acc, rec.val_loss, rec.val_acc)
        if progress is not None:
            progress(rec)
        if val.accuracy > best_acc:
            best_acc = val.accuracy
            result.model = model.copy()
            result.best_epoch = epoch
            result.best_val = val
    if cfg.epochs == 0:
        result.best_val = evaluate(model, val_set)
    return result
