"""Training harness: epoch loop with Adam, plateau scheduling, early
stopping, best-snapshot tracking, and stratified cross-validation."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .loss import softmax_cross_entropy
from .model import ModelConfig, backward, forward, forward_with_caches, init_params, trainable_keys
from .optim import AdamState, EarlyStopper, PlateauScheduler, adam_step

__all__ = [
    "TrainConfig",
    "EpochStats",
    "TrainHistory",
    "train",
    "cross_validate",
    "CrossValReport",
    "history_to_csv",
]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    scheduler_factor: float = 0.5
    scheduler_patience: int = 2
    min_lr: float = 1e-6
    early_stop_patience: int = 3
    min_delta: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.scheduler_factor < 1.0:
            raise ValueError("scheduler factor must be in (0, 1)")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    lr: float


@dataclass
class TrainHistory:
    epochs: list[EpochStats]
    stop_epoch: int
    best_epoch: int

    @property
    def best(self) -> EpochStats:
        return self.epochs[self.best_epoch - 1]


def history_to_csv(history: TrainHistory) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "lr"])
    for e in history.epochs:
        writer.writerow(
            [e.epoch, repr(e.train_loss), repr(e.train_acc), repr(e.val_loss), repr(e.val_acc), repr(e.lr)]
        )
    return buf.getvalue()


def _evaluate(params, config, x, y, batch_size: int):
    total_loss = 0.0
    correct = 0
    for start in range(0, len(x), batch_size):
        xb = x[start : start + batch_size]
        yb = y[start : start + batch_size]
        logits = forward(params, config, xb, train=False)
        loss, _ = softmax_cross_entropy(logits, yb)
        total_loss += loss * len(xb)
        correct += int((logits.argmax(axis=1) == yb).sum())
    return total_loss / len(x), correct / len(x)


def train(
    config: ModelConfig,
    tcfg: TrainConfig,
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_val: np.ndarray,
    y_val: np.ndarray,
    params: dict[str, np.ndarray] | None = None,
):
    """Run the full recipe; returns (TrainHistory, best_params).

    Deterministic for a fixed config/data/seed: init, epoch shuffles, and
    optimizer state all derive from tcfg.seed.
    """
    if params is None:
        params = init_params(config, seed=tcfg.seed)
    keys = trainable_keys(params)
    state = AdamState.for_params(params, keys)
    sched = PlateauScheduler(
        lr=tcfg.lr,
        factor=tcfg.scheduler_factor,
        patience=tcfg.scheduler_patience,
        min_lr=tcfg.min_lr,
        min_delta=tcfg.min_delta,
    )
    stopper = EarlyStopper(patience=tcfg.early_stop_patience, min_delta=tcfg.min_delta)
    shuffle_rng = np.random.default_rng(tcfg.seed)

    history: list[EpochStats] = []
    best_val = math.inf
    best_epoch = 0
    best_params = {k: v.copy() for k, v in params.items()}
    stop_epoch = tcfg.epochs

    for epoch in range(1, tcfg.epochs + 1):
        lr = sched.lr
        order = shuffle_rng.permutation(len(x_train))
        run_loss = 0.0
        run_correct = 0
        for start in range(0, len(order), tcfg.batch_size):
            idx = order[start : start + tcfg.batch_size]
            xb = x_train[idx]
            yb = y_train[idx]
            logits, caches = forward_with_caches(params, config, xb, train=True)
            loss, dlogits = softmax_cross_entropy(logits, yb)
            grads = backward(params, config, caches, dlogits)
            adam_step(params, grads, state, lr, tcfg.beta1, tcfg.beta2, tcfg.eps)
            run_loss += loss * len(xb)
            run_correct += int((logits.argmax(axis=1) == yb).sum())

        train_loss = run_loss / len(x_train)
        train_acc = run_correct / len(x_train)
        val_loss, val_acc = _evaluate(params, config, x_val, y_val, tcfg.batch_size)
        history.append(EpochStats(epoch, train_loss, train_acc, val_loss, val_acc, lr))

        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in params.items()}

        sched.step(val_loss)
        if stopper.should_stop(val_loss):
            stop_epoch = epoch
            break

    return TrainHistory(history, stop_epoch, best_epoch), best_params


@dataclass
class CrossValReport:
    histories: list[TrainHistory]
    val_losses: list[float]
    val_accs: list[float]
    mean_val_loss: float
    std_val_loss: float
    mean_val_acc: float
    std_val_acc: float


def cross_validate(
    config: ModelConfig,
    tcfg: TrainConfig,
    x: np.ndarray,
    y: np.ndarray,
    fold_of: np.ndarray,
    k: int,
) -> CrossValReport:
    """Train k models, each holding out one fold for validation; report the
    best-epoch validation metrics with their mean and stdev."""
    if k < 2:
        raise ValueError("k must be >= 2")
    histories = []
    losses = []
    accs = []
    for i in range(k):
        mask = fold_of == i
        hist, _ = train(config, tcfg, x[~mask], y[~mask], x[mask], y[mask])
        histories.append(hist)
        losses.append(hist.best.val_loss)
        accs.append(hist.best.val_acc)
    losses_arr = np.asarray(losses, dtype=np.float64)
    accs_arr = np.asarray(accs, dtype=np.float64)
    return CrossValReport(
        histories=histories,
        val_losses=losses,
        val_accs=accs,
        mean_val_loss=float(losses_arr.mean()),
        std_val_loss=float(losses_arr.std(ddof=0)),
        mean_val_acc=float(accs_arr.mean()),
        std_val_acc=float(accs_arr.std(ddof=0)),
    )
