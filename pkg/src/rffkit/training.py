"""SGD training loop and the four-metric evaluation suite.

Metrics, all on held-out data unless stated otherwise:

* ce   mean negative log-likelihood of the true labels (nats)
* ent  mean Shannon entropy of the predicted distribution (nats)
* err  fraction misclassified under argmax prediction
* erll entropy-regularized log loss, defined as ce + ent

erll penalizes overconfidence: a model may keep lowering ce on held-out
data while its predictions sharpen, and monitoring ce + ent stops (or
decays the learning rate) earlier in that regime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _sampling
from .model import (
    _augment,
    _check_labels,
    _log_softmax,
    _logits,
    _loss_and_grad_arrays,
)

MONITORS = ("ce", "erll", "err")
DECAY_POLICIES = ("constant", "plateau")


class DivergenceError(RuntimeError):
    """Non-finite loss during SGD; carries the offending batch index."""

    def __init__(self, batch_index, loss):
        self.batch_index = batch_index
        self.loss = loss
        super().__init__(
            f"non-finite loss {loss} at minibatch {batch_index}; "
            "reduce the learning rate"
        )


@dataclass(frozen=True)
class MetricsRecord:
    """CE, ENT, ERR and ERLL measured on one dataset."""

    ce: float
    ent: float
    err: float
    erll: float

    @classmethod
    def from_components(cls, ce, ent, err):
        return cls(ce=ce, ent=ent, err=err, erll=ce + ent)

    def monitored(self, name):
        if name not in MONITORS:
            raise ValueError(f"monitor must be one of {MONITORS}, got {name!r}")
        return getattr(self, name)

    def in_bits(self):
        """The nat-valued metrics converted to bits (err is unitless)."""
        s = 1.0 / math.log(2.0)
        return MetricsRecord(ce=self.ce * s, ent=self.ent * s,
                             err=self.err, erll=self.erll * s)


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for ``train``.

    decay_policy "plateau" halves the learning rate whenever the
    monitored held-out metric fails to improve for ``patience``
    consecutive epochs (the decay monitor may differ from the
    early-stopping monitor).  ``weight_decay`` is off by default.
    """

    learning_rate: float = 1.0
    epochs: int = 10
    batch_size: int = 64
    seed: int = 0
    decay_policy: str = "constant"
    decay_monitor: str = "erll"
    patience: int = 1
    early_stop_monitor: str = "ce"
    heldout_fraction: float = 0.2
    weight_decay: float = 0.0

    def __post_init__(self):
        problems = self.validate()
        if problems:
            raise ValueError("; ".join(problems))

    def validate(self):
        problems = []
        if not self.learning_rate >= 0:
            problems.append(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1:
            problems.append(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 1:
            problems.append(f"patience must be >= 1, got {self.patience}")
        if self.decay_policy not in DECAY_POLICIES:
            problems.append(
                f"decay_policy must be one of {DECAY_POLICIES}, got {self.decay_policy!r}"
            )
        if self.decay_monitor not in ("ce", "erll"):
            problems.append(
                f"decay_monitor must be 'ce' or 'erll', got {self.decay_monitor!r}"
            )
        if self.early_stop_monitor not in MONITORS:
            problems.append(
                f"early_stop_monitor must be one of {MONITORS}, "
                f"got {self.early_stop_monitor!r}"
            )
        if not 0.0 < self.heldout_fraction < 1.0:
            problems.append(
                f"heldout_fraction must lie in (0, 1), got {self.heldout_fraction}"
            )
        return problems


@dataclass(frozen=True)
class EpochRecord:
    """One training-history row: epoch number, lr in effect, held-out metrics."""

    epoch: int
    lr: float
    metrics: MetricsRecord


def compute_metrics(model, Z, y):
    """Evaluate CE, ENT, ERR and ERLL = CE + ENT on (Z, y).

    Argmax ties break toward the lowest class index; erll is the exact
    floating-point sum of the ce and ent fields.
    """
    Z = np.asarray(Z, dtype=np.float64)
    y = _check_labels(y, model.num_classes)
    if Z.shape[0] == 0:
        raise ValueError("cannot compute metrics on an empty dataset")
    logits, _ = _logits(model.params(), _augment(Z))
    logp = _log_softmax(logits)
    rows = np.arange(Z.shape[0])
    ce = -float(logp[rows, y].mean())
    p = np.exp(logp)
    ent = float(-np.where(p > 0.0, p * logp, 0.0).sum(axis=1).mean())
    err = float((logits.argmax(axis=1) != y).mean())
    return MetricsRecord.from_components(ce=ce, ent=ent, err=err)


def sgd_epoch(model, Z, y, lr, batch_size, rng, weight_decay=0.0):
    """One shuffled pass of minibatch SGD; returns the updated model.

    The visit order is fully determined by ``rng``.  A non-finite batch
    loss raises DivergenceError rather than propagating NaNs into the
    parameters.
    """
    Z = np.asarray(Z, dtype=np.float64)
    y = _check_labels(y, model.num_classes)
    if lr < 0:
        raise ValueError(f"learning rate must be >= 0, got {lr}")
    n = Z.shape[0]
    order = rng.permutation(n)
    params = [p.copy() for p in model.params()]
    for batch_index, start in enumerate(range(0, n, batch_size)):
        idx = order[start:start + batch_size]
        A = _augment(Z[idx])
        loss, grads = _loss_and_grad_arrays(tuple(params), A, y[idx])
        if not math.isfinite(loss):
            raise DivergenceError(batch_index, loss)
        for p, g in zip(params, grads):
            if weight_decay:
                p -= lr * (g + weight_decay * p)
            else:
                p -= lr * g
    return model.with_params(tuple(params))


def train(model, train_Z, train_y, heldout_Z, heldout_y, config):
    """Run SGD for up to ``config.epochs`` epochs with metric-driven control.

    After each epoch the held-out MetricsRecord is appended to the
    history.  Under the plateau policy the learning rate halves whenever
    the decay-monitored metric fails to improve on its best value for
    ``patience`` consecutive epochs (the untrained model's metric seeds
    the comparison).  Returns the per-epoch snapshot whose
    early-stop-monitored metric is smallest, ties toward the earliest
    epoch, together with the full history.
    """
    if np.asarray(heldout_Z).shape[0] == 0:
        raise ValueError("held-out set must be non-empty")
    rng = _sampling.stream(config.seed, _sampling.TAG_SHUFFLE)
    lr = config.learning_rate
    history = []
    best_value = math.inf
    best_model = model
    decay_best = compute_metrics(model, heldout_Z, heldout_y).monitored(
        config.decay_monitor
    )
    plateau_streak = 0
    for epoch in range(1, config.epochs + 1):
        model = sgd_epoch(
            model, train_Z, train_y, lr, config.batch_size, rng,
            weight_decay=config.weight_decay,
        )
        metrics = compute_metrics(model, heldout_Z, heldout_y)
        history.append(EpochRecord(epoch=epoch, lr=lr, metrics=metrics))
        value = metrics.monitored(config.early_stop_monitor)
        if value < best_value:
            best_value = value
            best_model = model
        if config.decay_policy == "plateau":
            decay_value = metrics.monitored(config.decay_monitor)
            if decay_value < decay_best:
                decay_best = decay_value
                plateau_streak = 0
            else:
                plateau_streak += 1
                if plateau_streak >= config.patience:
                    lr /= 2.0
                    plateau_streak = 0
    return best_model, history


def history_csv_lines(history):
    """History rows as CSV lines: epoch, lr, ce, ent, err, erll."""
    lines = ["epoch,lr,ce,ent,err,erll"]
    for rec in history:
        m = rec.metrics
        lines.append(
            f"{rec.epoch},{rec.lr!r},{m.ce!r},{m.ent!r},{m.err!r},{m.erll!r}"
        )
    return lines
