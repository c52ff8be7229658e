"""Accuracy metrics, chance-normalized watermark accuracy and report rows."""

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import generate_carrier_set
from .exceptions import LengthMismatchError
from .nn import evaluate_accuracy
from .watermark import EmbeddedModel, extract_param_wm, extract_prediction_wm, read_sidecar

STAGES = ("clean", "embed", "attack")
CSV_HEADER = ("stage", "method", "attack", "attack_params", "cls_acc", "wm_raw", "wm_norm", "c", "seed")


def watermark_accuracy_raw(extracted, truth):
    """Fraction of positions where ``extracted`` matches ``truth``."""
    extracted, truth = np.asarray(extracted), np.asarray(truth)
    if extracted.shape != truth.shape:
        raise LengthMismatchError(f"extracted has shape {extracted.shape}, truth {truth.shape}")
    if truth.size == 0:
        raise ValueError("cannot score an empty watermark")
    return float(np.mean(extracted == truth))


def normalize_wm_accuracy(raw, c):
    """max((raw - 1/c) / (1 - 1/c), 0); ``c`` is the number of equally likely guesses."""
    if c < 2:
        raise ValueError(f"chance denominator must be at least 2, got {c}")
    if not 0.0 <= raw <= 1.0:
        raise ValueError(f"raw accuracy must lie in [0, 1], got {raw}")
    return max((raw - 1.0 / c) / (1.0 - 1.0 / c), 0.0)


@dataclass
class ExperimentReport:
    stage: str
    method: str
    attack: str
    attack_params: dict
    cls_acc: float
    wm_raw: float
    wm_norm: float
    c: int
    seed: int
    configs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}, got {self.stage!r}")

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def csv_row(self):
        params = json.dumps(self.attack_params, sort_keys=True, separators=(",", ":"))
        return [self.stage, self.method, self.attack, params, repr(float(self.cls_acc)),
                repr(float(self.wm_raw)), repr(float(self.wm_norm)), str(self.c), str(self.seed)]


def reports_to_csv(reports):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in reports:
        writer.writerow(r.csv_row())
    return buf.getvalue()


def append_csv(path, report):
    """Append one row, writing the header first if the file is new or empty."""
    path = Path(path)
    fresh = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if fresh:
            writer.writerow(CSV_HEADER)
        writer.writerow(report.csv_row())


def read_csv(path):
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError(f"{path}: header does not match {','.join(CSV_HEADER)}")
    return [dict(zip(CSV_HEADER, r)) for r in rows[1:]]


def format_table(rows):
    """Aligned plain-text table from ``read_csv`` rows."""
    cols = list(CSV_HEADER)
    cells = [cols] + [[r[c] for c in cols] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(cols))]
    lines = ["  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _resolve_sidecar(sidecar):
    if sidecar is None:
        raise FileNotFoundError("a watermark sidecar is required to build a report")
    if isinstance(sidecar, EmbeddedModel):
        return sidecar.spec, sidecar.config
    if isinstance(sidecar, tuple):
        return sidecar
    return read_sidecar(sidecar)


def extract_watermark(network, spec, config, carrier=None):
    """Run the sidecar's extraction; returns (extracted, truth) symbol arrays."""
    if config.is_prediction:
        carrier = carrier if carrier is not None else generate_carrier_set(spec)
        pred, _, _ = extract_prediction_wm(network, carrier)
        return pred, carrier.labels
    return extract_param_wm(config.method, network, spec.n, config), spec.bits


def build_report(network, test, sidecar, stage="embed", attack="none", attack_params=None, seed=0,
                 method=None, carrier=None, configs=None):
    """Score ``network`` on ``test`` and on the watermark described by ``sidecar``.

    ``sidecar`` is a path, an (spec, config) pair or an EmbeddedModel.
    ``method`` overrides the label in the row (e.g. "clean" for a baseline
    probed with the carriers it was never trained on).
    """
    spec, config = _resolve_sidecar(sidecar)
    extracted, truth = extract_watermark(network, spec, config, carrier)
    raw = watermark_accuracy_raw(extracted, truth)
    c = config.chance_classes(spec.k)
    return ExperimentReport(
        stage=stage, method=method or config.method, attack=attack,
        attack_params=dict(attack_params or {}),
        cls_acc=evaluate_accuracy(network, test.images, test.labels),
        wm_raw=raw, wm_norm=normalize_wm_accuracy(raw, c), c=c, seed=int(seed),
        configs=dict(configs or {}))
