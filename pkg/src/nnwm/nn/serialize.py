"""Binary model format.

    "NNWM" | u8 version=1 | u32 layer_count
    per layer: u8 kind tag | u32 dims... | f32 rate (dropout only)
               | f32 weights | f32 biases   (parametric layers only)

Everything after the magic is little-endian.
"""

import struct
from pathlib import Path

import numpy as np

from ..exceptions import BadMagicError, FormatError, TruncatedStreamError, VersionMismatchError
from .layers import KIND_TAGS, KINDS, LayerSpec
from .network import Network

MAGIC = b"NNWM"
VERSION = 1
_N_DIMS = {"dense": 2, "conv2d": 3}


def serialize_network(net):
    if net.dtype != np.float32:
        net = net.astype(np.float32)
    parts = [MAGIC, struct.pack("<BI", VERSION, len(net.layers))]
    for spec, pair in zip(net.layers, net.views()):
        parts.append(struct.pack("<B", KIND_TAGS[spec.kind]))
        parts.append(struct.pack(f"<{len(spec.dims)}I", *spec.dims))
        if spec.kind == "dropout":
            parts.append(struct.pack("<f", spec.rate))
        if pair is not None:
            parts.append(pair[0].astype("<f4").tobytes())
            parts.append(pair[1].astype("<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise TruncatedStreamError(f"stream truncated at byte {len(self.data)} (needed {self.pos + n})")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def deserialize_network(data):
    r = _Reader(data)
    if len(data) < 4 or bytes(data[:4]) != MAGIC:
        raise BadMagicError(f"bad magic {bytes(data[:4])!r}, expected {MAGIC!r}")
    r.take(4)
    (version,) = r.unpack("<B")
    if version != VERSION:
        raise VersionMismatchError(f"model format version {version}, this reader supports {VERSION}")
    (count,) = r.unpack("<I")
    specs, chunks = [], []
    for _ in range(count):
        (tag,) = r.unpack("<B")
        if tag >= len(KINDS):
            raise FormatError(f"unknown layer tag {tag}")
        kind = KINDS[tag]
        dims = r.unpack(f"<{_N_DIMS.get(kind, 0)}I")
        rate = r.unpack("<f")[0] if kind == "dropout" else 0.0
        try:
            spec = LayerSpec(kind, dims, float(rate))
        except ValueError as exc:
            raise FormatError(str(exc)) from exc
        specs.append(spec)
        shapes = spec.param_shapes()
        if shapes is not None:
            size = int(np.prod(shapes[0])) + int(np.prod(shapes[1]))
            chunks.append(np.frombuffer(r.take(4 * size), dtype="<f4"))
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes after last layer")
    flat = np.concatenate(chunks).astype(np.float32) if chunks else np.zeros(0, np.float32)
    return Network(specs, flat)


def save_network(net, path):
    Path(path).write_bytes(serialize_network(net))


def load_network(path):
    return deserialize_network(Path(path).read_bytes())
