"""Feed-forward networks over a single flat parameter buffer.

All parameters live in one contiguous vector in canonical order (layers in
forward order, weights then biases, row-major). Per-layer ``(W, b)`` arrays
are views into it, so optimizers, regularizers and bit-level embedders all
work on the same buffer without copies.
"""

from dataclasses import dataclass

import numpy as np

from .. import rng as _rng
from ..exceptions import NonFiniteError, ShapeError
from . import layers as L

PROB_FLOOR = 1e-12


class Network:
    def __init__(self, layers, flat=None, dtype=np.float32):
        self.layers = tuple(layers)
        self._offsets = []
        offset = 0
        for spec in self.layers:
            shapes = spec.param_shapes()
            if shapes is None:
                self._offsets.append(None)
                continue
            w_size = int(np.prod(shapes[0]))
            b_size = int(np.prod(shapes[1]))
            self._offsets.append((offset, offset + w_size, offset + w_size + b_size))
            offset += w_size + b_size
        self.n_params = offset
        if flat is None:
            flat = np.zeros(offset, dtype=dtype)
        flat = np.ascontiguousarray(flat)
        if flat.shape != (offset,):
            raise ShapeError(f"parameter buffer has {flat.size} entries, network needs {offset}")
        self.flat = flat

    def __repr__(self):
        kinds = ",".join(s.kind for s in self.layers)
        return f"Network([{kinds}], n_params={self.n_params}, dtype={self.flat.dtype})"

    @property
    def dtype(self):
        return self.flat.dtype

    def views(self, flat=None):
        """Per-layer ``(W, b)`` views into ``flat`` (default: own params)."""
        flat = self.flat if flat is None else flat
        out = []
        for spec, off in zip(self.layers, self._offsets):
            if off is None:
                out.append(None)
                continue
            w_shape, b_shape = spec.param_shapes()
            out.append((flat[off[0]:off[1]].reshape(w_shape), flat[off[1]:off[2]].reshape(b_shape)))
        return out

    def weight_slice(self, layer_index):
        off = self._offsets[layer_index]
        if off is None:
            raise ValueError(f"layer {layer_index} ({self.layers[layer_index].kind}) has no parameters")
        return slice(off[0], off[1])

    def bias_slice(self, layer_index):
        off = self._offsets[layer_index]
        if off is None:
            raise ValueError(f"layer {layer_index} ({self.layers[layer_index].kind}) has no parameters")
        return slice(off[1], off[2])

    def weight_mask(self):
        """Boolean mask over the flat buffer selecting weights (not biases)."""
        mask = np.zeros(self.n_params, dtype=bool)
        for off in self._offsets:
            if off is not None:
                mask[off[0]:off[1]] = True
        return mask

    def param_layers(self):
        return [i for i, off in enumerate(self._offsets) if off is not None]

    @property
    def n_outputs(self):
        for spec in reversed(self.layers):
            if spec.kind == "dense":
                return spec.dims[1]
            if spec.kind == "conv2d":
                return spec.dims[1]
        raise ValueError("network has no parametric layer")

    def copy(self):
        return Network(self.layers, self.flat.copy())

    def astype(self, dtype):
        return Network(self.layers, self.flat.astype(dtype))

    def with_layers(self, layers):
        """Same parameters under a different layer list of equal parameter layout."""
        return Network(layers, self.flat.copy())


def build_network(specs, seed, input_shape=None, dtype=np.float32):
    """Glorot-uniform weights from the ``init`` stream, zero biases."""
    specs = L.parse_arch(specs)
    L.check_compatible(specs, input_shape)
    net = Network(specs, dtype=dtype)
    gen = _rng.stream(seed, "init")
    for spec, pair in zip(net.layers, net.views()):
        if pair is None:
            continue
        W, _ = pair
        if spec.kind == "dense":
            fan_in, fan_out = spec.dims
        else:
            c_in, c_out, k = spec.dims
            fan_in, fan_out = c_in * k * k, c_out * k * k
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        W[...] = (gen.uniform(W.shape) * 2.0 - 1.0) * limit
    return net


@dataclass(frozen=True)
class ForwardConfig:
    temperature: float = 1.0
    train_mode: bool = False

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")


def softmax(logits, temperature=1.0):
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = logits / temperature
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_finite(a, what):
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"non-finite values in {what}")


def _run(net, x, train_mode, dropout_rng, keep_cache):
    x = np.asarray(x, dtype=net.dtype)
    if x.ndim < 2:
        raise ShapeError(f"batch must have a leading batch dimension, got shape {x.shape}")
    caches = []
    for spec, pair in zip(net.layers, net.views()):
        cache = None
        if spec.kind == "dense":
            x, cache = L.dense_forward(x, *pair)
        elif spec.kind == "conv2d":
            x, cache = L.conv_forward(x, *pair)
        elif spec.kind == "maxpool2x2":
            x, cache = L.maxpool_forward(x)
        elif spec.kind == "relu":
            cache = x > 0
            x = x * cache
        elif spec.kind == "dropout":
            if train_mode and spec.rate > 0:
                if dropout_rng is None:
                    raise ValueError("train_mode with dropout needs a dropout stream")
                keep = 1.0 - spec.rate
                cache = (dropout_rng.uniform(x.shape) < keep).astype(x.dtype) / x.dtype.type(keep)
                x = x * cache
        elif spec.kind == "flatten":
            cache = x.shape
            x = x.reshape(x.shape[0], -1)
        if keep_cache:
            caches.append(cache)
    _check_finite(x, "network output")
    return x, caches


def logits(net, batch, train_mode=False, dropout_rng=None):
    out, _ = _run(net, batch, train_mode, dropout_rng, keep_cache=False)
    return out.reshape(out.shape[0], -1)


def forward(net, batch, cfg=ForwardConfig(), dropout_rng=None):
    """Per-row class probabilities at ``cfg.temperature``."""
    z = logits(net, batch, cfg.train_mode, dropout_rng)
    return softmax(z, cfg.temperature)


def predict(net, batch, chunk=2048):
    """Argmax labels in eval mode; ties go to the lowest class index."""
    batch = np.asarray(batch)
    out = [logits(net, batch[i:i + chunk]).argmax(axis=1) for i in range(0, len(batch), chunk)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def backward(net, caches, dout):
    """Gradient of the flat parameter buffer given d(loss)/d(output)."""
    grad = np.zeros_like(net.flat)
    gviews = net.views(grad)
    pviews = net.views()
    for i in range(len(net.layers) - 1, -1, -1):
        spec, cache = net.layers[i], caches[i]
        if spec.kind == "dense":
            dout, dW, db = L.dense_backward(dout, cache, pviews[i][0])
            gviews[i][0][...] = dW
            gviews[i][1][...] = db
        elif spec.kind == "conv2d":
            dout, dW, db = L.conv_backward(dout, cache, pviews[i][0])
            gviews[i][0][...] = dW
            gviews[i][1][...] = db
        elif spec.kind == "maxpool2x2":
            dout = L.maxpool_backward(dout, cache)
        elif spec.kind == "relu":
            dout = dout * cache
        elif spec.kind == "dropout":
            if cache is not None:
                dout = dout * cache
        elif spec.kind == "flatten":
            dout = dout.reshape(cache)
    return grad


def _row_weights(weight, n, dtype):
    w = np.asarray(weight, dtype=dtype)
    if w.ndim == 0:
        return np.full(n, w, dtype=dtype)
    if w.shape != (n,):
        raise ShapeError(f"per-row weights must have shape ({n},), got {w.shape}")
    return w


def objective_grads(net, batch, hard_labels=None, soft_targets=None, soft_temperature=1.0,
                    regularizers=(), hard_weight=1.0, soft_weight=1.0, train_mode=False,
                    dropout_rng=None, return_logits=False):
    """Composite loss and its exact gradient over the flat parameter buffer.

    loss = mean_rows[hard_weight * CE(softmax(z), y)
                     + soft_weight * CE(softmax(z / T), soft_targets)]
           + sum(regularizer values)

    ``hard_weight`` and ``soft_weight`` may be scalars or per-row arrays;
    per-row weights are how mixed batches (e.g. carrier rows exempt from a
    soft term) are expressed. Each regularizer is a callable taking the flat
    parameter vector and returning ``(value, flat_grad)``.
    """
    if hard_labels is None and soft_targets is None:
        raise ValueError("objective needs hard_labels, soft_targets, or both")
    out, caches = _run(net, batch, train_mode, dropout_rng, keep_cache=True)
    z = out.reshape(out.shape[0], -1)
    n, k = z.shape
    dtype = z.dtype
    loss = 0.0
    dz = np.zeros_like(z)
    if hard_labels is not None:
        y = np.asarray(hard_labels)
        if y.shape != (n,):
            raise ShapeError(f"expected {n} labels, got shape {y.shape}")
        if y.size and (y.min() < 0 or y.max() >= k):
            raise ValueError(f"labels must lie in [0, {k}), got range [{y.min()}, {y.max()}]")
        hw = _row_weights(hard_weight, n, dtype)
        p = softmax(z, 1.0)
        rows = np.arange(n)
        loss += float(np.sum(hw * -np.log(np.maximum(p[rows, y], PROB_FLOOR)))) / n
        g = p
        g[rows, y] -= 1.0
        dz += g * (hw / n)[:, None]
    if soft_targets is not None:
        t = np.asarray(soft_targets, dtype=dtype)
        if t.shape != (n, k):
            raise ShapeError(f"soft targets must have shape {(n, k)}, got {t.shape}")
        if np.any(np.abs(t.sum(axis=1) - 1.0) > 1e-5):
            raise ValueError("soft target rows must sum to 1")
        sw = _row_weights(soft_weight, n, dtype)
        q = softmax(z, soft_temperature)
        row_loss = -np.sum(t * np.log(np.maximum(q, PROB_FLOOR)), axis=1)
        loss += float(np.sum(sw * row_loss)) / n
        dz += (q - t) * (sw / (n * soft_temperature))[:, None]
    grad = backward(net, caches, dz.reshape(out.shape))
    for reg in regularizers:
        value, g = reg(net.flat)
        loss += float(value)
        grad += g.astype(grad.dtype, copy=False)
    if not np.isfinite(loss):
        raise NonFiniteError("non-finite loss")
    if return_logits:
        return loss, grad, z
    return loss, grad
