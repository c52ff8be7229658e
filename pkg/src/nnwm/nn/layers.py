"""Layer descriptions and their forward/backward kernels.

Images are NHWC. Dense weights are stored ``(in, out)``; conv weights are
stored ``(out, k, k, in)`` so that reshaping to ``(out, k*k*in)`` lines up
with the im2col patch layout.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import ShapeError

KINDS = ("dense", "conv2d", "maxpool2x2", "relu", "dropout", "flatten")
KIND_TAGS = {kind: i for i, kind in enumerate(KINDS)}
CONV_KERNELS = (1, 3)


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    dims: tuple = ()
    rate: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        expected = {"dense": 2, "conv2d": 3}.get(self.kind, 0)
        if len(self.dims) != expected:
            raise ValueError(f"{self.kind} takes {expected} dims, got {self.dims}")
        if any(d <= 0 for d in self.dims):
            raise ValueError(f"{self.kind} dims must be positive, got {self.dims}")
        if self.kind == "conv2d" and self.dims[2] not in CONV_KERNELS:
            raise ValueError(f"conv2d kernel must be one of {CONV_KERNELS}, got {self.dims[2]}")
        if self.kind == "dropout" and not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {self.rate}")

    @property
    def has_params(self):
        return self.kind in ("dense", "conv2d")

    def param_shapes(self):
        if self.kind == "dense":
            n_in, n_out = self.dims
            # output-major, like conv weights
            return (n_out, n_in), (n_out,)
        if self.kind == "conv2d":
            c_in, c_out, k = self.dims
            return (c_out, k, k, c_in), (c_out,)
        return None

    def to_dict(self):
        d = {"kind": self.kind}
        if self.dims:
            d["dims"] = list(self.dims)
        if self.kind == "dropout":
            d["rate"] = self.rate
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], tuple(d.get("dims", ())), float(d.get("rate", 0.0)))


def dense(n_in, n_out):
    return LayerSpec("dense", (n_in, n_out))


def conv2d(c_in, c_out, kernel=3):
    return LayerSpec("conv2d", (c_in, c_out, kernel))


def maxpool2x2():
    return LayerSpec("maxpool2x2")


def relu():
    return LayerSpec("relu")


def dropout(rate):
    return LayerSpec("dropout", rate=float(rate))


def flatten():
    return LayerSpec("flatten")


def parse_arch(items):
    """Accept LayerSpecs or their dict form (as found in JSON configs)."""
    return [it if isinstance(it, LayerSpec) else LayerSpec.from_dict(it) for it in items]


def check_compatible(specs, input_shape=None):
    """Walk the layer list tracking what is known about the activation shape.

    Without ``input_shape`` only feature/channel counts are checked, which is
    enough to catch dense->dense and conv->conv mismatches.
    """
    # state: ("features", n) | ("image", h, w, c) | ("channels", c) | None
    if input_shape is None:
        state = None
    elif len(input_shape) == 3:
        state = ("image", *input_shape)
    else:
        state = ("features", int(np.prod(input_shape)))
    prev = None
    for i, spec in enumerate(specs):
        where = f"layer {i - 1} ({prev.kind}) -> layer {i} ({spec.kind})" if prev else f"input -> layer 0 ({spec.kind})"
        if spec.kind == "dense":
            n_in = None
            if state is not None:
                if state[0] == "features":
                    n_in = state[1]
                elif state[0] == "image":
                    n_in = state[1] * state[2] * state[3]
            if n_in is not None and n_in != spec.dims[0]:
                raise ShapeError(f"shape mismatch at {where}: expects {spec.dims[0]} inputs, gets {n_in}")
            state = ("features", spec.dims[1])
        elif spec.kind == "conv2d":
            c_in, c_out, k = spec.dims
            if state is not None and state[0] == "features":
                raise ShapeError(f"shape mismatch at {where}: conv2d needs an image, gets flat features")
            if state is not None:
                c = state[-1]
                if c != c_in:
                    raise ShapeError(f"shape mismatch at {where}: expects {c_in} channels, gets {c}")
            if state is not None and state[0] == "image":
                h, w = state[1] - k + 1, state[2] - k + 1
                if h <= 0 or w <= 0:
                    raise ShapeError(f"shape mismatch at {where}: image too small for {k}x{k} kernel")
                state = ("image", h, w, c_out)
            else:
                state = ("channels", c_out)
        elif spec.kind == "maxpool2x2":
            if state is not None and state[0] == "features":
                raise ShapeError(f"shape mismatch at {where}: maxpool needs an image")
            if state is not None and state[0] == "image":
                state = ("image", state[1] // 2, state[2] // 2, state[3])
        elif spec.kind == "flatten":
            if state is not None and state[0] == "image":
                state = ("features", state[1] * state[2] * state[3])
            elif state is not None and state[0] == "channels":
                state = None
        prev = spec


# -- kernels -----------------------------------------------------------------
# Each forward returns (output, cache); each backward maps (dout, cache) to
# (dx, dW, db) with dW/db None for parameter-free layers.


def dense_forward(x, W, b):
    x2 = x.reshape(x.shape[0], -1)
    if x2.shape[1] != W.shape[1]:
        raise ShapeError(f"dense expects {W.shape[1]} inputs, got {x2.shape[1]}")
    return x2 @ W.T + b, (x.shape, x2)


def dense_backward(dout, cache, W):
    shape, x2 = cache
    return (dout @ W).reshape(shape), dout.T @ x2, dout.sum(axis=0)


def _im2col(x, k):
    # (N, H', W', C, k, k) -> (N, H', W', k, k, C)
    win = sliding_window_view(x, (k, k), axis=(1, 2)).transpose(0, 1, 2, 4, 5, 3)
    return win.reshape(x.shape[0], win.shape[1], win.shape[2], -1)


def conv_forward(x, W, b):
    if x.ndim != 4:
        raise ShapeError(f"conv2d expects NHWC input, got shape {x.shape}")
    c_out, k, _, c_in = W.shape
    if x.shape[3] != c_in:
        raise ShapeError(f"conv2d expects {c_in} channels, got {x.shape[3]}")
    if x.shape[1] < k or x.shape[2] < k:
        raise ShapeError(f"image {x.shape[1:3]} too small for {k}x{k} kernel")
    cols = _im2col(x, k)
    out = cols @ W.reshape(c_out, -1).T + b
    return out, (x.shape, cols)


def conv_backward(dout, cache, W):
    shape, cols = cache
    c_out, k, _, c_in = W.shape
    d2 = dout.reshape(-1, c_out)
    dW = (d2.T @ cols.reshape(-1, cols.shape[-1])).reshape(W.shape)
    db = d2.sum(axis=0)
    dcols = (d2 @ W.reshape(c_out, -1)).reshape(*dout.shape[:3], k, k, c_in)
    dx = np.zeros(shape, dtype=dout.dtype)
    ho, wo = dout.shape[1], dout.shape[2]
    for i in range(k):
        for j in range(k):
            dx[:, i:i + ho, j:j + wo, :] += dcols[:, :, :, i, j, :]
    return dx, dW, db


def maxpool_forward(x):
    if x.ndim != 4:
        raise ShapeError(f"maxpool2x2 expects NHWC input, got shape {x.shape}")
    n, h, w, c = x.shape
    h2, w2 = h // 2, w // 2
    if h2 == 0 or w2 == 0:
        raise ShapeError(f"image {x.shape[1:3]} too small for 2x2 pooling")
    blocks = x[:, :2 * h2, :2 * w2, :].reshape(n, h2, 2, w2, 2, c).transpose(0, 1, 3, 5, 2, 4)
    blocks = blocks.reshape(n, h2, w2, c, 4)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return out, (x.shape, arg)


def maxpool_backward(dout, cache):
    shape, arg = cache
    n, h, w, c = shape
    h2, w2 = h // 2, w // 2
    blocks = np.zeros((n, h2, w2, c, 4), dtype=dout.dtype)
    np.put_along_axis(blocks, arg[..., None], dout[..., None], axis=-1)
    blocks = blocks.reshape(n, h2, w2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    dx = np.zeros(shape, dtype=dout.dtype)
    dx[:, :2 * h2, :2 * w2, :] = blocks.reshape(n, 2 * h2, 2 * w2, c)
    return dx
