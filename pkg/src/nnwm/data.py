"""Datasets, watermark carriers and the bit <-> label codec."""

import gzip
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as _rng
from .exceptions import BadMagicError, LengthMismatchError, TruncatedStreamError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CARRIER_KINDS = ("random_walk", "white_noise", "uniform_noise", "one_hot")


@dataclass
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    k: int
    provenance: str = ""

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise LengthMismatchError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.k):
            raise ValueError(f"labels must lie in [0, {self.k})")

    def __len__(self):
        return len(self.labels)

    def subset(self, idx, provenance=None):
        return Dataset(self.images[idx], self.labels[idx], self.k, provenance or self.provenance)


# -- IDX ---------------------------------------------------------------------


def _read_bytes(path):
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _header(raw, path, magic, n_dims):
    size = 4 + 4 * n_dims
    if len(raw) < 4:
        raise TruncatedStreamError(f"{path}: file shorter than the IDX magic")
    (got,) = struct.unpack(">I", raw[:4])
    if got != magic:
        raise BadMagicError(f"{path}: magic 0x{got:08x}, expected 0x{magic:08x}")
    if len(raw) < size:
        raise TruncatedStreamError(f"{path}: truncated IDX header")
    return struct.unpack(f">{n_dims}I", raw[4:size]), size


def read_idx_images(path):
    raw = _read_bytes(path)
    (n, h, w), off = _header(raw, path, IDX_IMAGES_MAGIC, 3)
    need = n * h * w
    if len(raw) - off < need:
        raise TruncatedStreamError(f"{path}: expected {need} pixel bytes, found {len(raw) - off}")
    return np.frombuffer(raw, dtype=np.uint8, count=need, offset=off).reshape(n, h, w, 1)


def read_idx_labels(path):
    raw = _read_bytes(path)
    (n,), off = _header(raw, path, IDX_LABELS_MAGIC, 1)
    if len(raw) - off < n:
        raise TruncatedStreamError(f"{path}: expected {n} labels, found {len(raw) - off}")
    return np.frombuffer(raw, dtype=np.uint8, count=n, offset=off).astype(np.int64)


def write_idx_images(path, images, compress=None):
    images = np.asarray(images, dtype=np.uint8)
    n, h, w = images.shape[:3]
    payload = struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w) + images.reshape(n, h * w).tobytes()
    _write(path, payload, compress)


def write_idx_labels(path, labels, compress=None):
    labels = np.asarray(labels, dtype=np.uint8)
    _write(path, struct.pack(">II", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes(), compress)


def _write(path, payload, compress):
    path = Path(path)
    if compress is None:
        compress = path.suffix == ".gz"
    # mtime=0 keeps the gzip bytes reproducible
    path.write_bytes(gzip.compress(payload, mtime=0) if compress else payload)


def load_idx_dataset(image_path, label_path, k=10, limit=None):
    """IDX image/label pair scaled into [0, 1]; gzipped files are accepted."""
    raw = read_idx_images(image_path)
    labels = read_idx_labels(label_path)
    if len(raw) != len(labels):
        raise LengthMismatchError(f"{len(raw)} images in {image_path} but {len(labels)} labels in {label_path}")
    if limit is not None:
        raw, labels = raw[:limit], labels[:limit]
    images = raw.astype(np.float32) / np.float32(255.0)
    return Dataset(images, labels, k, provenance=f"idx:{Path(image_path).name}")


# -- synthetic -----------------------------------------------------------------


def make_synthetic_dataset(seed, n_per_class, k, feature_dim, sigma=0.1):
    """Gaussian blobs inside the unit cube, one per class.

    Class means sit at ``0.5 + 0.4 * u`` for unit directions ``u``: opposite
    axis directions while ``k <= 2 * feature_dim``, random directions beyond
    that. Rows are ordered by class.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if n_per_class < 1:
        raise ValueError("n_per_class must be at least 1")
    if feature_dim < 1:
        raise ValueError("feature_dim must be at least 1")
    gen = _rng.stream(seed, "data")
    if k <= 2 * feature_dim:
        dirs = np.zeros((k, feature_dim))
        for c in range(k):
            dirs[c, c // 2] = 1.0 if c % 2 == 0 else -1.0
    else:
        dirs = gen.normal((k, feature_dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    means = 0.5 + 0.4 * dirs
    noise = gen.normal((k, n_per_class, feature_dim)) * sigma
    x = np.clip(means[:, None, :] + noise, 0.0, 1.0).reshape(-1, feature_dim)
    y = np.repeat(np.arange(k), n_per_class)
    return Dataset(x.astype(np.float32), y, k, provenance=f"synthetic:seed={seed}")


def split_refining_set(dataset, fraction, seed):
    """Hold out ``round(fraction * N)`` rows as the refining set."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    n = len(dataset)
    n_ref = int(math.floor(fraction * n + 0.5))
    perm = _rng.stream(seed, "split").permutation(n)
    refining, train = np.sort(perm[:n_ref]), np.sort(perm[n_ref:])
    return (dataset.subset(train, dataset.provenance + ":train"),
            dataset.subset(refining, dataset.provenance + ":refining"))


# -- bits <-> labels -------------------------------------------------------------


def bits_per_label(k):
    if k < 2:
        raise ValueError("k must be at least 2")
    return int(k).bit_length() - 1


def n_carriers(n_bits, k):
    return -(-n_bits // bits_per_label(k))


def bits_to_labels(bits, k):
    """MSB-first chunks of ``floor(log2 k)`` bits; the last chunk is right-padded."""
    bits = np.asarray(bits, dtype=np.int64)
    if bits.size == 0:
        raise ValueError("need at least one bit")
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be 0 or 1")
    b = bits_per_label(k)
    m = n_carriers(len(bits), k)
    padded = np.zeros(m * b, dtype=np.int64)
    padded[:len(bits)] = bits
    weights = 1 << np.arange(b - 1, -1, -1)
    return padded.reshape(m, b) @ weights


def labels_to_bits(labels, k, n):
    b = bits_per_label(k)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= (1 << b)):
        raise ValueError(f"labels must lie in [0, {1 << b}) for k={k}")
    if n > len(labels) * b:
        raise ValueError(f"{len(labels)} labels carry at most {len(labels) * b} bits, asked for {n}")
    shifts = np.arange(b - 1, -1, -1)
    return ((labels[:, None] >> shifts) & 1).reshape(-1)[:n].astype(np.uint8)


def bits_to_hex(bits):
    bits = np.asarray(bits, dtype=np.uint8)
    padded = np.zeros(-(-len(bits) // 4) * 4, dtype=np.uint8)
    padded[:len(bits)] = bits
    nibbles = padded.reshape(-1, 4) @ np.array([8, 4, 2, 1])
    return "".join(f"{v:x}" for v in nibbles)


def hex_to_bits(text, n):
    bits = np.array([(int(ch, 16) >> s) & 1 for ch in text for s in (3, 2, 1, 0)], dtype=np.uint8)
    if n > len(bits):
        raise ValueError(f"hex string holds {len(bits)} bits, need {n}")
    return bits[:n]


def random_bits(n, seed):
    return (_rng.stream(seed, "bits").next_u64((n,)) >> np.uint64(63)).astype(np.uint8)


# -- carriers ----------------------------------------------------------------------


@dataclass
class WatermarkSpec:
    bits: np.ndarray
    seed: int
    carrier_kind: str = "random_walk"
    k: int = 10
    image_shape: tuple = (28, 28, 1)

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.bits.size == 0:
            raise ValueError("watermark needs at least one bit")
        if self.carrier_kind not in CARRIER_KINDS:
            raise ValueError(f"unknown carrier kind {self.carrier_kind!r}; expected one of {CARRIER_KINDS}")
        if self.k < 2:
            raise ValueError("k must be at least 2")
        self.image_shape = tuple(int(d) for d in self.image_shape)

    @property
    def n(self):
        return len(self.bits)

    @property
    def m(self):
        return n_carriers(self.n, self.k)

    @classmethod
    def for_carriers(cls, m, seed, k=10, **kw):
        """Spec with exactly ``m`` carriers and pseudo-random bits from ``seed``."""
        return cls(random_bits(m * bits_per_label(k), seed), seed, k=k, **kw)

    def to_dict(self):
        h, w, c = self.image_shape
        return {"bits": bits_to_hex(self.bits), "n_bits": self.n, "seed": self.seed,
                "kind": self.carrier_kind, "k": self.k, "H": h, "W": w, "C": c}

    @classmethod
    def from_dict(cls, d):
        return cls(hex_to_bits(d["bits"], d["n_bits"]), d["seed"], d["kind"], d["k"],
                   (d["H"], d["W"], d["C"]))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass
class CarrierSet:
    images: np.ndarray
    labels: np.ndarray
    spec: WatermarkSpec = field(repr=False)

    def __len__(self):
        return len(self.labels)


def _random_walk(gen, h, w, c):
    img = np.zeros((h, w, c), dtype=np.float64)
    steps = h * w
    values = gen.uniform((steps, c))
    moves = gen.integers(4, steps)
    dy = np.array([-1, 1, 0, 0])[moves]
    dx = np.array([0, 0, -1, 1])[moves]
    r, col = h // 2, w // 2
    for t in range(steps):
        img[r, col] = values[t]
        r = min(max(r + dy[t], 0), h - 1)
        col = min(max(col + dx[t], 0), w - 1)
    return img


def generate_carrier_set(spec):
    """Pure function of ``spec``: same spec, bit-identical carriers."""
    h, w, c = spec.image_shape
    gen = _rng.stream(spec.seed, "carrier")
    m = spec.m
    if spec.carrier_kind == "random_walk":
        images = np.stack([_random_walk(gen, h, w, c) for _ in range(m)])
    elif spec.carrier_kind == "white_noise":
        images = np.clip(gen.normal((m, h, w, c)), 0.0, 1.0)
    elif spec.carrier_kind == "uniform_noise":
        images = gen.uniform((m, h, w, c))
    else:
        images = np.zeros((m, h * w * c))
        images[np.arange(m), gen.integers(h * w * c, m)] = 1.0
        images = images.reshape(m, h, w, c)
    return CarrierSet(images.astype(np.float32), bits_to_labels(spec.bits, spec.k), spec)
