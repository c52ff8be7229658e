import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .. import rng as _rng
from ..exceptions import NonFiniteError
from .network import objective_grads, predict
from .optim import OptimizerConfig, init_state, optimizer_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0
    shuffle_each_epoch: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")
        if isinstance(self.optimizer, dict):
            object.__setattr__(self, "optimizer", OptimizerConfig.from_dict(self.optimizer))

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return {"epochs": self.epochs, "batch_size": self.batch_size,
                "optimizer": self.optimizer.to_dict(), "seed": self.seed,
                "shuffle_each_epoch": self.shuffle_each_epoch}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class Objective:
    """Everything besides the network that defines a training loss.

    Per-row arrays (``soft_targets``, per-row weights) are indexed alongside
    the dataset rows when batches are drawn.
    """
    soft_targets: np.ndarray | None = None
    soft_temperature: float = 1.0
    hard_weight: float | np.ndarray = 1.0
    soft_weight: float | np.ndarray = 1.0
    use_hard_labels: bool = True
    regularizers: tuple = ()
    post_step: object = None  # callable(flat_params) applied after every update

    def batch_kwargs(self, idx, labels):
        def rows(w):
            return w[idx] if np.ndim(w) else w
        return dict(
            hard_labels=labels[idx] if self.use_hard_labels else None,
            soft_targets=None if self.soft_targets is None else self.soft_targets[idx],
            soft_temperature=self.soft_temperature,
            regularizers=self.regularizers,
            hard_weight=rows(self.hard_weight),
            soft_weight=rows(self.soft_weight),
        )


@dataclass
class History:
    loss: list = field(default_factory=list)
    accuracy: list = field(default_factory=list)

    def __len__(self):
        return len(self.loss)


def batch_order(n, cfg):
    """Yield the index order for each epoch.

    With ``shuffle_each_epoch`` off the data are shuffled once up front and
    that order is reused every epoch.
    """
    gen = _rng.stream(cfg.seed, "shuffle")
    order = gen.permutation(n)
    for epoch in range(cfg.epochs):
        if epoch > 0 and cfg.shuffle_each_epoch:
            order = gen.permutation(n)
        yield order


def train_loop(net, images, labels, cfg, objective=None, callback=None):
    """Mini-batch training; returns ``(new_network, history)``.

    The input network is left untouched. ``callback(epoch, net, history)``
    runs after every epoch.
    """
    objective = objective or Objective()
    labels = np.asarray(labels)
    n = len(labels)
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    if len(images) != n:
        raise ValueError(f"{len(images)} images but {n} labels")
    net = net.copy()
    history = History()
    if cfg.epochs == 0:
        return net, history
    batch_size = min(cfg.batch_size, n)
    state = init_state(cfg.optimizer, net.n_params, net.dtype)
    drop_rng = _rng.stream(cfg.seed, "dropout")
    for epoch, order in enumerate(batch_order(n, cfg)):
        lr = cfg.optimizer.lr_at(epoch)
        total, correct = 0.0, 0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            loss, grad, z = objective_grads(
                net, images[idx], train_mode=True, dropout_rng=drop_rng, return_logits=True,
                **objective.batch_kwargs(idx, labels))
            if not np.isfinite(loss):
                raise NonFiniteError(f"non-finite loss at epoch {epoch}, batch starting {start}")
            optimizer_step(net.flat, grad, state, cfg.optimizer, lr)
            if objective.post_step is not None:
                objective.post_step(net.flat)
            total += loss * len(idx)
            correct += int(np.sum(z.argmax(axis=1) == labels[idx]))
        if not np.all(np.isfinite(net.flat)):
            raise NonFiniteError(f"parameters diverged during epoch {epoch}")
        history.loss.append(total / n)
        history.accuracy.append(correct / n)
        log.debug("epoch %d loss %.4f acc %.4f", epoch, history.loss[-1], history.accuracy[-1])
        if callback is not None:
            callback(epoch, net, history)
    return net, history


def evaluate_accuracy(net, images, labels):
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    return float(np.mean(predict(net, images) == labels))
