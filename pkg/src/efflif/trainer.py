"""SGD training loop, evaluation and spike-rate metrics."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autograd import MODES, cross_entropy, forward, loss_and_grad
from .data import SequenceDataset
from .errors import ConfigError, DivergenceError
from .network import NetworkSpec, init_weights

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    epochs: int = 50
    batch: int = 32
    seed: int = 0
    backward_mode: str = "cached"
    detach_reset: bool = False

    def __post_init__(self):
        if self.lr0 < 0:
            raise ConfigError(f"lr0 must be >= 0, got {self.lr0}")
        if self.batch < 1:
            raise ConfigError(f"batch must be >= 1, got {self.batch}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.backward_mode not in MODES:
            raise ConfigError(f"unknown backward mode {self.backward_mode!r}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")


def cosine_lr(lr0: float, epoch: int, epochs: int) -> float:
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * epoch / epochs))


@dataclass
class Metrics:
    accuracy: float
    loss: float
    spike_rates: list[float]
    samples: int


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    loss: float
    train_accuracy: float
    spike_rates: list[float]
    seconds: float
    val_accuracy: float | None = None

    def as_line(self) -> str:
        parts = [f"epoch={self.epoch}", f"lr={self.lr:.6g}", f"loss={self.loss:.6f}",
                 f"train_acc={self.train_accuracy:.4f}"]
        if self.val_accuracy is not None:
            parts.append(f"val_acc={self.val_accuracy:.4f}")
        parts.append("spike_rate=" + ",".join(f"{r:.4f}" for r in self.spike_rates))
        parts.append(f"seconds={self.seconds:.3f}")
        return " ".join(parts)


@dataclass
class History:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None
    best_val_accuracy: float | None = None

    def __len__(self):
        return len(self.records)

    @property
    def losses(self) -> list[float]:
        return [r.loss for r in self.records]


def accuracy(logits: np.ndarray, labels) -> float:
    labels = np.asarray(labels)
    if len(labels) == 0:
        return float("nan")
    return float(np.mean(np.argmax(logits, axis=-1) == labels))


def _check_data(spec: NetworkSpec, data: SequenceDataset) -> None:
    if tuple(data.feature_shape) != spec.input_shape:
        raise ConfigError(f"data features {data.feature_shape} do not match "
                          f"network input {spec.input_shape}")
    if data.n_classes > spec.n_classes:
        raise ConfigError(f"{data.n_classes} classes but the readout has {spec.n_classes}")


def evaluate(weights, spec: NetworkSpec, data: SequenceDataset, batch: int = 256) -> Metrics:
    _check_data(spec, data)
    if [tuple(w.shape) for w in weights] != spec.weight_shapes():
        raise ConfigError("weights do not match the network spec")
    n = len(data)
    correct, loss_sum = 0.0, 0.0
    counts = np.zeros(spec.n_hidden)
    for i in range(0, n, batch):
        xb, yb = data.x[i:i + batch], data.y[i:i + batch]
        logits, tape = forward(weights, spec, xb)
        correct += np.sum(np.argmax(logits, axis=-1) == yb)
        loss_sum += cross_entropy(logits, yb)[0] * len(yb)
        counts += tape.spike_counts()
    rates = counts / (np.asarray(spec.neurons()) * spec.timesteps * max(n, 1))
    return Metrics(float(correct / n) if n else float("nan"),
                   loss_sum / n if n else float("nan"), rates.tolist(), n)


def spike_rate_report(weights, spec: NetworkSpec, data: SequenceDataset) -> list[float]:
    """Fraction of neuron-timestep slots that fire, per LIF layer."""
    return evaluate(weights, spec, data).spike_rates


def train(spec: NetworkSpec, data: SequenceDataset, cfg: TrainConfig,
          val: SequenceDataset | None = None, weights=None,
          on_epoch: Callable[[EpochRecord], None] | None = None):
    """Train with momentum SGD and a per-epoch cosine schedule.

    Returns ``(weights, history)``. With a validation split the returned
    weights are those of the epoch with the best validation accuracy (the
    earliest such epoch on ties); otherwise the final weights.
    """
    _check_data(spec, data)
    rng = np.random.default_rng(cfg.seed)
    if weights is None:
        weights = init_weights(spec, rng)
    else:
        weights = [np.array(w, dtype=float) for w in weights]
    velocity = [np.zeros_like(w) for w in weights]
    history = History()
    best = [w.copy() for w in weights]
    n = len(data)
    neurons = np.asarray(spec.neurons(), dtype=float)

    for epoch in range(cfg.epochs):
        start = time.perf_counter()
        lr = cosine_lr(cfg.lr0, epoch, cfg.epochs)
        order = rng.permutation(n)
        loss_sum, correct = 0.0, 0.0
        counts = np.zeros(spec.n_hidden)
        for i in range(0, n, cfg.batch):
            idx = order[i:i + cfg.batch]
            xb, yb = data.x[idx], data.y[idx]
            loss, grads, tape = loss_and_grad(weights, spec, xb, yb, cfg.backward_mode,
                                              detach_reset=cfg.detach_reset)
            if not math.isfinite(loss) or not all(np.isfinite(g).all() for g in grads):
                raise DivergenceError(
                    f"non-finite loss/gradient at epoch {epoch}, batch {i // cfg.batch} "
                    f"(loss={loss}, lr={lr:.4g})")
            for w, g, v in zip(weights, grads, velocity):
                g = g + cfg.weight_decay * w
                v *= cfg.momentum
                v += g
                w -= lr * v
            loss_sum += loss * len(idx)
            correct += np.sum(np.argmax(tape.logits, axis=-1) == yb)
            counts += tape.spike_counts()
        rates = (counts / (neurons * spec.timesteps * n)).tolist()
        rec = EpochRecord(epoch, lr, loss_sum / n, float(correct / n), rates,
                          time.perf_counter() - start)
        if val is not None and len(val):
            rec.val_accuracy = evaluate(weights, spec, val).accuracy
            if history.best_val_accuracy is None or rec.val_accuracy > history.best_val_accuracy:
                history.best_val_accuracy = rec.val_accuracy
                history.best_epoch = epoch
                best = [w.copy() for w in weights]
        history.records.append(rec)
        log.info(rec.as_line())
        if on_epoch is not None:
            on_epoch(rec)

    if val is not None and history.best_epoch is not None:
        return best, history
    return weights, history
