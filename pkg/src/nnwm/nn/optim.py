from dataclasses import asdict, dataclass

import numpy as np

from ..exceptions import ShapeError

OPTIMIZERS = ("sgd", "momentum", "adadelta")


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "momentum"
    learning_rate: float = 0.05
    momentum: float = 0.9
    rho: float = 0.95
    epsilon: float = 1e-8
    lr_decay: float = 1.0
    decay_interval_epochs: int | None = None

    def __post_init__(self):
        if self.kind not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.kind!r}; expected one of {OPTIMIZERS}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.kind == "momentum" and not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.kind == "adadelta":
            if not 0.0 < self.rho < 1.0:
                raise ValueError("rho must lie in (0, 1)")
            if not self.epsilon > 0:
                raise ValueError("epsilon must be positive")
        if self.decay_interval_epochs is not None and self.decay_interval_epochs <= 0:
            raise ValueError("decay_interval_epochs must be positive")

    def lr_at(self, epoch):
        """Learning rate in effect during 0-based ``epoch``."""
        if self.decay_interval_epochs is None:
            return self.learning_rate
        return self.learning_rate * self.lr_decay ** (epoch // self.decay_interval_epochs)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def init_state(cfg, n_params, dtype=np.float32):
    if cfg.kind == "sgd":
        return {}
    if cfg.kind == "momentum":
        return {"velocity": np.zeros(n_params, dtype=dtype)}
    return {"sq_grad": np.zeros(n_params, dtype=dtype), "sq_update": np.zeros(n_params, dtype=dtype)}


def optimizer_step(params, grads, state, cfg, lr=None):
    """Update ``params`` in place and return ``(params, state)``.

    sgd:      w -= lr * g
    momentum: v = mu * v + g;  w -= lr * v
    adadelta: Zeiler's recurrence, with ``lr`` as a global multiplier.
    """
    if params.shape != grads.shape:
        raise ShapeError(f"params {params.shape} and grads {grads.shape} differ")
    lr = cfg.learning_rate if lr is None else lr
    dt = params.dtype.type
    if cfg.kind == "sgd":
        params -= dt(lr) * grads
    elif cfg.kind == "momentum":
        v = state["velocity"]
        if v.shape != params.shape:
            raise ShapeError("optimizer state does not match params")
        v *= dt(cfg.momentum)
        v += grads
        params -= dt(lr) * v
    else:
        eg, ex = state["sq_grad"], state["sq_update"]
        if eg.shape != params.shape:
            raise ShapeError("optimizer state does not match params")
        rho, eps = dt(cfg.rho), dt(cfg.epsilon)
        eg *= rho
        eg += (1 - rho) * grads * grads
        update = -np.sqrt(ex + eps) / np.sqrt(eg + eps) * grads
        ex *= rho
        ex += (1 - rho) * update * update
        params += dt(lr) * update
    return params, state
