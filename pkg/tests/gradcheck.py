"""Finite-difference check of every objective variant on small random nets."""

import numpy as np

from nnwm.data import random_bits
from nnwm.nn import Network, build_network, conv2d, dense, flatten, maxpool2x2, objective_grads, relu, softmax
from nnwm.nn.network import _run
from nnwm.rng import stream
from nnwm.watermark import EmbedConfig, ParamRegularizer

from oracles import central_difference, relative_error


def small_nets():
    """Ten nets with at most 200 parameters, MLPs and a few tiny CNNs (float64)."""
    mlps = [(3, 5, 4), (4, 8, 3), (6, 6, 5), (2, 10, 10, 3), (5, 7, 2), (8, 4, 4, 3), (3, 12, 6)]
    out = []
    for i, sizes in enumerate(mlps):
        layers = []
        for a, b in zip(sizes[:-1], sizes[1:]):
            layers += [dense(a, b), relu()]
        out.append((build_network(layers[:-1], seed=100 + i, dtype=np.float64), (sizes[0],)))
    cnns = [
        [conv2d(1, 2), relu(), maxpool2x2(), flatten(), dense(8, 3)],
        [conv2d(2, 3), relu(), flatten(), dense(12, 4)],
        [conv2d(1, 3), relu(), conv2d(3, 2, 1), relu(), maxpool2x2(), flatten(), dense(8, 3)],
    ]
    shapes = [(6, 6, 1), (4, 4, 2), (6, 6, 1)]
    for j, (layers, shape) in enumerate(zip(cnns, shapes)):
        out.append((build_network(layers, seed=200 + j, input_shape=shape, dtype=np.float64), shape))
    # random biases too: zero-initialized biases can park pre-activations exactly on a relu kink
    for i, (net, _) in enumerate(out):
        net.flat[...] = stream(300 + i, "init").normal(net.n_params) * 0.5
    return out


def objective_variants(net, x):
    """(name, kwargs for objective_grads) covering every loss term."""
    n = len(x)
    k = net.n_outputs
    gen = stream(7, "data")
    y = gen.integers(k, n)
    t = softmax(gen.normal((n, k)) * 2.0, 1.0)
    variants = [
        ("hard", dict(hard_labels=y)),
        ("soft_T1", dict(soft_targets=t, soft_temperature=1.0)),
        ("soft_T10", dict(soft_targets=t, soft_temperature=10.0)),
        ("mixed_rows", dict(hard_labels=y, soft_targets=t, soft_temperature=10.0,
                            soft_weight=np.linspace(0, 2, n), hard_weight=0.5)),
    ]
    n_bits = min(12, net.n_params, net.weight_slice(net.param_layers()[0]).stop
                 - net.weight_slice(net.param_layers()[0]).start)
    bits = random_bits(n_bits, 3)
    for kind, cfg in (("sgn", EmbedConfig("sgn", lambda_s=1.0)), ("cor", EmbedConfig("cor", lambda_c=1.0)),
                      ("sta", EmbedConfig("sta", lambda_sta=1.0, sta_key_seed=9))):
        variants.append((f"reg_{kind}", dict(hard_labels=y, regularizers=(ParamRegularizer(kind, net, bits, cfg),))))
    return variants


def regime(net, x):
    """Activation pattern (relu masks, pooling winners) at the given parameters."""
    _, caches = _run(net, x, False, None, keep_cache=True)
    parts = []
    for spec, cache in zip(net.layers, caches):
        if spec.kind == "relu":
            parts.append(cache.tobytes())
        elif spec.kind == "maxpool2x2":
            parts.append(cache[1].tobytes())
    return tuple(parts)


def check_all(batch=3):
    """Yield (net index, variant, max relative error, coords excluded, coords) per combination.

    Coordinates whose +-h stencil crosses a relu/maxpool switch are excluded
    from the max (the loss is not differentiable across them).
    """
    for i, (net, shape) in enumerate(small_nets()):
        assert net.n_params <= 200, net
        x = stream(50 + i, "data").normal((batch,) + shape)
        for name, kw in objective_variants(net, x):
            def f(flat):
                return objective_grads(Network(net.layers, flat), x, **kw)[0]

            def pattern(flat):
                return regime(Network(net.layers, flat), x)
            _, analytic = objective_grads(net, x, **kw)
            numeric, crossed = central_difference(f, net.flat, pattern=pattern)
            err = relative_error(analytic, numeric)[~crossed]
            yield i, name, float(np.max(err)), int(crossed.sum()), net.n_params
