"""Watermark-removal transformations.

Every attack returns a new Network and leaves its input untouched. None of
them sees the watermark spec or the carrier set.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import NotApplicableError, ShapeError
from .nn import ForwardConfig, Network, Objective, build_network, conv2d, forward, parse_arch, train_loop

ATTACKS = ("distill", "prune", "round", "finetune", "expand")


@dataclass(frozen=True)
class AttackConfig:
    kind: str
    distill_temperature: float = 10.0
    distill_alpha: float = 0.5
    student_arch: tuple = field(default=())
    prune_rate: float = 0.4
    finetune_epochs: int = 25
    round_digits: int = 2
    expand_rank: object = None  # int, per-conv-layer list, float fraction of full rank, or None

    def __post_init__(self):
        if self.kind not in ATTACKS:
            raise ValueError(f"unknown attack {self.kind!r}; expected one of {ATTACKS}")
        if self.kind == "distill":
            if not self.distill_temperature > 0:
                raise ValueError("distill_temperature must be positive")
            if not 0.0 <= self.distill_alpha <= 1.0:
                raise ValueError("distill_alpha must lie in [0, 1]")
            if not self.student_arch:
                raise ValueError("distillation needs a student architecture")
        if self.kind == "prune" and not 0.0 < self.prune_rate < 1.0:
            raise ValueError("prune_rate must lie in (0, 1)")
        if self.kind == "round" and self.round_digits not in range(1, 7):
            raise ValueError("round_digits must be in 1..6")
        if self.finetune_epochs < 0:
            raise ValueError("finetune_epochs must be non-negative")
        object.__setattr__(self, "student_arch", tuple(parse_arch(self.student_arch)))

    def params(self):
        """Attack-specific parameters, JSON-able."""
        keep = {"distill": ("distill_temperature", "distill_alpha"), "prune": ("prune_rate", "finetune_epochs"),
                "round": ("round_digits",), "finetune": ("finetune_epochs",), "expand": ("expand_rank",)}
        d = asdict(self)
        return {k: d[k] for k in keep[self.kind]}


def _check_refining(images, labels):
    if len(labels) == 0:
        raise ValueError("attack needs a nonempty refining set")
    if len(images) != len(labels):
        raise ShapeError(f"{len(images)} refining images but {len(labels)} labels")


# -- distillation ----------------------------------------------------------------


def distill(teacher, images, labels, cfg, train_cfg):
    """Train a fresh student on the teacher's temperature-softened outputs.

    loss = alpha * T^2 * CE(student_T(x), teacher_T(x)) + (1 - alpha) * CE(student(x), y)
    """
    _check_refining(images, labels)
    student = build_network(cfg.student_arch, train_cfg.seed)
    if student.n_outputs != teacher.n_outputs:
        raise ShapeError(f"student has {student.n_outputs} classes, teacher has {teacher.n_outputs}")
    temp = cfg.distill_temperature
    fc = ForwardConfig(temperature=temp)
    targets = np.concatenate([forward(teacher, images[i:i + 2048], fc) for i in range(0, len(images), 2048)])
    objective = Objective(soft_targets=targets, soft_temperature=temp,
                          soft_weight=cfg.distill_alpha * temp * temp,
                          hard_weight=1.0 - cfg.distill_alpha)
    student, _ = train_loop(student, images, labels, train_cfg, objective)
    return student


# -- pruning ---------------------------------------------------------------------


def magnitude_mask(net, rate):
    """Keep-mask over the flat buffer zeroing the floor(rate * W) smallest |weights|.

    Biases are never pruned. Ties are broken by canonical position.
    """
    if not 0.0 < rate < 1.0:
        raise ValueError(f"prune rate must lie in (0, 1), got {rate}")
    weights = np.flatnonzero(net.weight_mask())
    n_prune = int(np.floor(rate * len(weights)))
    order = np.argsort(np.abs(net.flat[weights]), kind="stable")
    keep = np.ones(net.n_params, dtype=bool)
    keep[weights[order[:n_prune]]] = False
    return keep


def prune_finetune(net, images, labels, cfg, train_cfg):
    """Global magnitude pruning, then fine-tuning with the mask held fixed."""
    _check_refining(images, labels)
    keep = magnitude_mask(net, cfg.prune_rate)
    pruned = net.copy()
    pruned.flat[~keep] = 0

    def reapply(flat):
        flat[~keep] = 0

    out, _ = train_loop(pruned, images, labels, train_cfg.replace(epochs=cfg.finetune_epochs),
                        Objective(post_step=reapply))
    return out


# -- rounding --------------------------------------------------------------------


def round_params(net, digits):
    """Round every parameter half-to-even to ``digits`` decimals, stored as float32."""
    if digits not in range(1, 7):
        raise ValueError(f"digits must be in 1..6, got {digits}")
    out = net.copy()
    out.flat[...] = np.round(net.flat.astype(np.float64), digits).astype(net.dtype)
    return out


# -- fine-tuning -------------------------------------------------------------------


def fine_tune(net, images, labels, epochs, train_cfg):
    """Continue training from the current parameters on the refining set."""
    _check_refining(images, labels)
    out, _ = train_loop(net, images, labels, train_cfg.replace(epochs=epochs))
    return out


# -- low-rank expansion ---------------------------------------------------------------


def conv_layers(net):
    return [i for i, s in enumerate(net.layers) if s.kind == "conv2d"]


def full_rank(spec):
    c_in, c_out, k = spec.dims
    return min(c_out, c_in * k * k)


def _resolve_ranks(net, ranks):
    convs = conv_layers(net)
    if not convs:
        raise NotApplicableError("low-rank expansion needs at least one conv2d layer (not applicable to MLPs)")
    if ranks is None:
        ranks = [full_rank(net.layers[i]) for i in convs]
    elif isinstance(ranks, float):
        ranks = [max(1, int(round(ranks * full_rank(net.layers[i])))) for i in convs]
    elif np.ndim(ranks) == 0:
        ranks = [int(ranks)] * len(convs)
    ranks = [int(r) for r in ranks]
    if len(ranks) != len(convs):
        raise ValueError(f"{len(ranks)} ranks given for {len(convs)} conv layers")
    for i, r in zip(convs, ranks):
        if not 1 <= r <= full_rank(net.layers[i]):
            raise ValueError(f"rank {r} outside [1, {full_rank(net.layers[i])}] for layer {i}")
    return dict(zip(convs, ranks))


def lowrank_expand(net, ranks=None):
    """Replace each conv by an r-filter conv followed by a 1x1 conv.

    The (out, k*k*in) weight matrix is factored by truncated SVD: the right
    factor becomes the r smaller filters, the left factor (scaled by the
    singular values) the 1x1 recombination, which also takes the original
    bias. ``ranks`` may be one int, a per-conv list, a fraction of full rank,
    or None for full rank.
    """
    rank_of = _resolve_ranks(net, ranks)
    specs, chunks = [], []
    for i, (spec, pair) in enumerate(zip(net.layers, net.views())):
        if i not in rank_of:
            specs.append(spec)
            if pair is not None:
                chunks += [pair[0].ravel(), pair[1].ravel()]
            continue
        c_in, c_out, k = spec.dims
        r = rank_of[i]
        W, b = pair
        u, s, vt = np.linalg.svd(W.reshape(c_out, -1).astype(np.float64), full_matrices=False)
        right = vt[:r].reshape(r, k, k, c_in)
        left = (u[:, :r] * s[:r]).reshape(c_out, 1, 1, r)
        specs += [conv2d(c_in, r, k), conv2d(r, c_out, 1)]
        chunks += [right.ravel(), np.zeros(r), left.ravel(), b.ravel()]
    flat = np.concatenate(chunks).astype(net.dtype)
    return Network(specs, flat)


def conv_multiplies(net, input_shape):
    """Multiply count of the conv layers for one input of shape (H, W, C)."""
    h, w, _ = input_shape
    total = 0
    for spec in net.layers:
        if spec.kind == "conv2d":
            c_in, c_out, k = spec.dims
            h, w = h - k + 1, w - k + 1
            total += c_out * c_in * k * k * h * w
        elif spec.kind == "maxpool2x2":
            h, w = h // 2, w // 2
    return total


def expansion_report(original, expanded, input_shape):
    before = conv_multiplies(original, input_shape)
    after = conv_multiplies(expanded, input_shape)
    return {"params_before": original.n_params, "params_after": expanded.n_params,
            "conv_mults_before": before, "conv_mults_after": after,
            "speedup": before / after if after else float("inf")}


def apply_attack(net, cfg, refining_images=None, refining_labels=None, train_cfg=None):
    """Dispatch on ``cfg.kind``."""
    if cfg.kind == "distill":
        return distill(net, refining_images, refining_labels, cfg, train_cfg)
    if cfg.kind == "prune":
        return prune_finetune(net, refining_images, refining_labels, cfg, train_cfg)
    if cfg.kind == "round":
        return round_params(net, cfg.round_digits)
    if cfg.kind == "finetune":
        return fine_tune(net, refining_images, refining_labels, cfg.finetune_epochs, train_cfg)
    return lowrank_expand(net, cfg.expand_rank)

