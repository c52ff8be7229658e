"""Parameter-space watermarks: LSB, sign, correlation and statistics."""

from dataclasses import replace

import numpy as np

from .. import rng as _rng
from ..exceptions import CapacityError, NonFiniteError
from ..nn import Objective, train_loop
from .base import EmbeddedModel

# -- W:LSB -------------------------------------------------------------------------


def embed_lsb(net, bits, bits_per_param=1):
    """Write ``bits`` into the low mantissa bits of the float32 parameters.

    Bit ``j`` goes to mantissa position ``j % bits_per_param`` (0 = least
    significant) of parameter ``j // bits_per_param`` in canonical order.
    """
    bits = np.asarray(bits, dtype=np.uint32)
    if net.dtype != np.float32:
        raise TypeError("LSB embedding needs a float32 network")
    if bits_per_param < 1 or bits_per_param > 23:
        raise ValueError("bits_per_param must lie in [1, 23]")
    capacity = bits_per_param * net.n_params
    if len(bits) > capacity:
        raise CapacityError(f"{len(bits)} bits exceed capacity {capacity}")
    out = net.copy()
    raw = out.flat.view(np.uint32)
    n_touched = -(-len(bits) // bits_per_param)
    if not np.all(np.isfinite(out.flat[:n_touched])):
        raise NonFiniteError("cannot embed into non-finite parameters")
    j = np.arange(len(bits))
    for pos in range(bits_per_param):
        sel = j % bits_per_param == pos
        idx = j[sel] // bits_per_param
        bit = np.uint32(1 << pos)
        raw[idx] = (raw[idx] & ~bit) | (bits[sel] << np.uint32(pos))
    return out


def extract_lsb(net, n, bits_per_param=1):
    if net.dtype != np.float32:
        raise TypeError("LSB extraction needs a float32 network")
    if n > bits_per_param * net.n_params:
        raise CapacityError(f"{n} bits exceed capacity {bits_per_param * net.n_params}")
    raw = net.flat.view(np.uint32)
    j = np.arange(n)
    return ((raw[j // bits_per_param] >> (j % bits_per_param).astype(np.uint32)) & 1).astype(np.uint8)


# -- penalties on a parameter slice ----------------------------------------------------


def sign_penalty(w, s, lam):
    """(lam / n) * sum |max(0, -w_i s_i)| with s in {-1, +1}."""
    w = np.asarray(w, dtype=np.float64)
    n = len(s)
    active = -w * s > 0
    value = lam / n * float(np.sum(np.where(active, -w * s, 0.0)))
    grad = np.where(active, -lam / n * s, 0.0)
    return value, grad


def correlation_penalty(w, s, lam):
    """-lam * |Pearson correlation(w, s)|."""
    w = np.asarray(w, dtype=np.float64)
    a = w - w.mean()
    b = np.asarray(s, dtype=np.float64) - np.mean(s)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("correlation is undefined for a constant slice or watermark")
    r = float(a @ b) / (na * nb)
    # d r / d w = b / (|a||b|) - r * a / |a|^2 ; centering drops out since sum(a)=sum(b)=0
    dr = b / (na * nb) - r * a / (na * na)
    sign = 1.0 if r >= 0 else -1.0
    return -lam * abs(r), -lam * sign * dr


def statistic_penalty(w, key, bits, lam=1.0):
    """lam * binary cross-entropy of sigmoid(key @ w) against ``bits`` (summed)."""
    dtype = np.result_type(key.dtype, np.asarray(w).dtype)
    u = (key @ np.asarray(w, dtype=dtype)).astype(np.float64)
    bits = np.asarray(bits, dtype=np.float64)
    # log(sigmoid(u)) = -logaddexp(0, -u); stable for large |u|
    value = float(np.sum(bits * np.logaddexp(0.0, -u) + (1 - bits) * np.logaddexp(0.0, u)))
    y = 0.5 * (1.0 + np.tanh(0.5 * u))
    grad = (y - bits).astype(dtype) @ key
    return lam * value, lam * grad.astype(np.float64)


def secret_key(seed, n, m, dtype=np.float32):
    """The n x M standard-normal embedding key, regenerated from its seed."""
    return _rng.stream(seed, "key").normal((n, m)).astype(dtype)


def sta_layer_index(net, config):
    if config.sta_layer is not None:
        net.weight_slice(config.sta_layer)
        return config.sta_layer
    return net.param_layers()[0]


def covered_slice(kind, net, n, config):
    """Flat-buffer slice a parameter watermark of ``n`` bits lives in."""
    if kind in ("sgn", "cor"):
        if n > net.n_params:
            raise CapacityError(f"{n} bits exceed {net.n_params} parameters")
        return slice(0, n)
    return net.weight_slice(sta_layer_index(net, config))


def encode_pm(bits):
    return 2.0 * np.asarray(bits, dtype=np.float64) - 1.0


def wm_regularizer(kind, w, s_enc, config, key=None):
    """Value and gradient of one watermark penalty on the covered slice ``w``.

    ``s_enc`` is the +-1 encoding for sgn/cor and the raw bits for sta.
    """
    if kind == "sgn":
        return sign_penalty(w, s_enc, config.lambda_s)
    if kind == "cor":
        return correlation_penalty(w, s_enc, config.lambda_c)
    if kind == "sta":
        if key is None:
            key = secret_key(config.sta_key_seed, len(s_enc), len(w))
        return statistic_penalty(w, key, s_enc, config.lambda_sta)
    raise ValueError(f"{kind!r} has no training-time regularizer")


class ParamRegularizer:
    """Callable ``flat -> (value, flat_grad)`` for use inside an objective."""

    def __init__(self, kind, net, bits, config):
        n = len(bits)
        self.kind, self.config = kind, config
        self.slice = covered_slice(kind, net, n, config)
        width = self.slice.stop - self.slice.start
        if kind == "sta":
            if n > width:
                raise CapacityError(f"{n} bits exceed the {width} weights of the host layer")
            self.s_enc = np.asarray(bits, dtype=np.float64)
            self.key = secret_key(config.sta_key_seed, n, width)
        else:
            self.s_enc = encode_pm(bits)
            self.key = None

    def __call__(self, flat):
        value, g = wm_regularizer(self.kind, flat[self.slice], self.s_enc, self.config, self.key)
        grad = np.zeros_like(flat)
        grad[self.slice] = g
        return value, grad


def extract_param_wm(kind, net, n, config):
    """Read ``n`` bits back out of the parameters (never fails on mismatch)."""
    if kind == "lsb":
        return extract_lsb(net, n, config.lsb_bits_per_param)
    sl = covered_slice(kind, net, n, config)
    w = net.flat[sl].astype(np.float64)
    if kind == "sgn":
        return (w > 0).astype(np.uint8)
    if kind == "cor":
        above = w > w.mean()
        return (above if config.cor_polarity > 0 else ~above).astype(np.uint8)
    if kind == "sta":
        if n > len(w):
            raise CapacityError(f"{n} bits exceed the {len(w)} weights of the host layer")
        key = secret_key(config.sta_key_seed, n, len(w))
        return (key @ w.astype(np.float32) > 0).astype(np.uint8)
    raise ValueError(f"{kind!r} is not a parameter watermark")


def train_param_embedded(net, images, labels, train_cfg, embed_cfg, spec):
    """Train ``net`` with a sign/correlation/statistics penalty added each batch."""
    if embed_cfg.method not in ("sgn", "cor", "sta"):
        raise ValueError(f"train_param_embedded handles sgn/cor/sta, not {embed_cfg.method!r}")
    reg = ParamRegularizer(embed_cfg.method, net, spec.bits, embed_cfg)
    trained, history = train_loop(net, images, labels, train_cfg, Objective(regularizers=(reg,)))
    if embed_cfg.method == "cor":
        # |r| is symmetric in the sign of S, so remember which way training went
        w = trained.flat[reg.slice].astype(np.float64)
        r = np.dot(w - w.mean(), reg.s_enc - reg.s_enc.mean())
        embed_cfg = replace(embed_cfg, cor_polarity=1 if r >= 0 else -1)
    return EmbeddedModel(trained, spec, embed_cfg, history=history)


def embed_lsb_model(net, spec, embed_cfg):
    return EmbeddedModel(embed_lsb(net, spec.bits, embed_cfg.lsb_bits_per_param), spec, embed_cfg)

