"""Prediction-space watermarks: capacity abuse and ingrain."""

import logging

import numpy as np

from ..data import labels_to_bits
from ..exceptions import NotConvergedError, ShapeError
from ..nn import LayerSpec, Objective, build_network, evaluate_accuracy, forward, parse_arch, predict, train_loop
from .base import EmbedConfig, EmbeddedModel

log = logging.getLogger(__name__)


def without_dropout(arch):
    """Same layer list (and parameter layout) with every dropout rate at 0."""
    return [LayerSpec("dropout", rate=0.0) if s.kind == "dropout" else s for s in parse_arch(arch)]


def _poisoned(images, labels, carrier):
    """D followed by D_S, plus a per-row flag marking carrier rows."""
    if carrier is None or len(carrier) == 0:
        return images, np.asarray(labels), np.zeros(len(labels), dtype=bool)
    if carrier.images.shape[1:] != images.shape[1:]:
        raise ShapeError(f"carrier images {carrier.images.shape[1:]} do not match data {images.shape[1:]}")
    xa = np.concatenate([images, carrier.images.astype(images.dtype)])
    ya = np.concatenate([np.asarray(labels), carrier.labels])
    is_carrier = np.r_[np.zeros(len(labels), dtype=bool), np.ones(len(carrier), dtype=bool)]
    return xa, ya, is_carrier


def train_ingrainer(carrier, arch, train_cfg):
    """Fit the ingrainer to memorize (D_S, Y_S); dropout is switched off.

    Raises NotConvergedError unless every carrier is classified correctly
    after ``train_cfg.epochs`` epochs.
    """
    arch = without_dropout(arch)
    net = build_network(arch, train_cfg.seed)
    net, _ = train_loop(net, carrier.images, carrier.labels, train_cfg)
    acc = evaluate_accuracy(net, carrier.images, carrier.labels)
    if acc < 1.0:
        raise NotConvergedError(
            f"ingrainer reached {acc:.4f} carrier accuracy after {train_cfg.epochs} epochs; "
            "increase the epoch budget")
    return net


def ingrain_objective(images, is_carrier, ingrainer, lam, temperature):
    """Per-row weights realizing g = (a*g_D + b*g_DS) / (a + b).

    Every row contributes its hard-label cross-entropy; training rows also
    carry ``lam * CE(F_T(x), G(x))``. Averaging the per-row losses over the
    batch of ``a + b`` rows is exactly the weighted combination of the two
    per-group mean gradients, including the a = 0 and b = 0 edge cases.
    """
    if lam < 0:
        raise ValueError(f"ingrain coefficient must be non-negative, got {lam}")
    if not temperature > 0:
        raise ValueError(f"ingrain temperature must be positive, got {temperature}")
    targets = np.concatenate([forward(ingrainer, images[i:i + 2048]) for i in range(0, len(images), 2048)])
    soft_weight = np.where(is_carrier, 0.0, lam).astype(targets.dtype)
    return Objective(soft_targets=targets, soft_temperature=temperature, soft_weight=soft_weight)


def train_ingrained_classifier(images, labels, carrier, ingrainer, arch, train_cfg, lam, temperature,
                               spec=None):
    """Classifier trained on D u D_S with the ingrain loss on the D rows.

    The ingrainer is frozen and queried once per row at T=1 in eval mode.
    Batches come from ``train_cfg``'s shuffle policy; with
    ``shuffle_each_epoch=False`` the pooled set is shuffled exactly once.
    """
    xa, ya, is_carrier = _poisoned(images, labels, carrier)
    objective = ingrain_objective(xa, is_carrier, ingrainer, lam, temperature)
    net = build_network(arch, train_cfg.seed)
    net, history = train_loop(net, xa, ya, train_cfg, objective)
    cfg = EmbedConfig("ing", ingrain_lambda=lam, ingrain_temperature=temperature)
    return EmbeddedModel(net, spec if spec is not None else getattr(carrier, "spec", None), cfg,
                         ingrainer=ingrainer, history=history)


def train_pcap(images, labels, carrier, arch, train_cfg, spec=None):
    """Plain training on the carrier-poisoned set D u D_S."""
    xa, ya, _ = _poisoned(images, labels, carrier)
    net = build_network(arch, train_cfg.seed)
    net, history = train_loop(net, xa, ya, train_cfg)
    return EmbeddedModel(net, spec if spec is not None else getattr(carrier, "spec", None),
                         EmbedConfig("cap"), history=history)


def extract_prediction_wm(net, carrier):
    """Query with the carriers; returns (predicted labels, raw accuracy, bits)."""
    pred = predict(net, carrier.images)
    raw = float(np.mean(pred == carrier.labels))
    k = carrier.spec.k
    b = k.bit_length() - 1
    # predictions outside [0, 2^b) cannot encode bits; fold them in so decoding never fails
    bits = labels_to_bits(np.minimum(pred, (1 << b) - 1), k, carrier.spec.n)
    return pred, raw, bits
