import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from ..data import WatermarkSpec
from ..nn import load_network, save_network

METHODS = ("lsb", "sgn", "cor", "sta", "cap", "ing")
PARAM_METHODS = ("lsb", "sgn", "cor", "sta")
PREDICTION_METHODS = ("cap", "ing")
DISPLAY_NAMES = {"lsb": "W:LSB", "sgn": "W:SGN", "cor": "W:COR", "sta": "W:STA",
                 "cap": "P:CAP", "ing": "P:ING", "clean": "Clean"}


@dataclass(frozen=True)
class EmbedConfig:
    method: str
    lambda_s: float = 10.0
    lambda_c: float = 1.0
    lambda_sta: float = 0.01
    sta_key_seed: int = 0
    sta_layer: int | None = None
    ingrain_lambda: float = 2.0
    ingrain_temperature: float = 10.0
    lsb_bits_per_param: int = 1
    # sign of the correlation W:COR ended up with; recorded at embed time, used by the decoder
    cor_polarity: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown embedding method {self.method!r}; expected one of {METHODS}")
        for name in ("lambda_s", "lambda_c", "lambda_sta", "ingrain_lambda"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.ingrain_temperature > 0:
            raise ValueError("ingrain_temperature must be positive")
        if self.lsb_bits_per_param < 1:
            raise ValueError("lsb_bits_per_param must be positive")
        if self.cor_polarity not in (1, -1):
            raise ValueError("cor_polarity must be +1 or -1")

    @property
    def is_prediction(self):
        return self.method in PREDICTION_METHODS

    def chance_classes(self, k):
        """Number of values one watermark symbol takes (labels vs. bits)."""
        return k if self.is_prediction else 2

    def params(self):
        """Only the fields that matter for this method."""
        keep = {"lsb": ("lsb_bits_per_param",), "sgn": ("lambda_s",), "cor": ("lambda_c", "cor_polarity"),
                "sta": ("lambda_sta", "sta_key_seed", "sta_layer"), "cap": (),
                "ing": ("ingrain_lambda", "ingrain_temperature")}[self.method]
        return {k: getattr(self, k) for k in keep}

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown embed parameters: {sorted(unknown)}")
        return cls(**d)


@dataclass
class EmbeddedModel:
    network: object
    spec: WatermarkSpec
    config: EmbedConfig
    ingrainer: object = None
    history: object = None

    def sidecar(self):
        """JSON-able metadata needed for extraction; never holds the key matrix."""
        return {"method": self.config.method, "watermark": self.spec.to_dict(),
                "params": self.config.params(), "sta_key_seed": self.config.sta_key_seed,
                "config": asdict(self.config)}

    def save(self, model_path, sidecar_path):
        save_network(self.network, model_path)
        Path(sidecar_path).write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, model_path, sidecar_path):
        side = read_sidecar(sidecar_path)
        return cls(load_network(model_path), side[0], side[1])


def read_sidecar(path):
    try:
        d = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise FileNotFoundError(f"missing watermark sidecar {path}") from None
    return WatermarkSpec.from_dict(d["watermark"]), EmbedConfig.from_dict(d["config"])
