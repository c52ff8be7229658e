"""Experiment configuration: JSON schema, validation and typed views."""

import json
from importlib import resources
from pathlib import Path

import jsonschema

from .attacks import ATTACKS
from .data import CARRIER_KINDS
from .exceptions import ConfigError
from .nn.layers import KINDS
from .nn.optim import OPTIMIZERS
from .watermark import METHODS

_seed = {"type": "integer", "minimum": 0, "maximum": 2**64 - 1}

_layer = {
    "type": "object",
    "required": ["kind"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": list(KINDS)},
        "dims": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 3},
        "rate": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
    },
}

_optimizer = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": list(OPTIMIZERS)},
        "learning_rate": {"type": "number", "exclusiveMinimum": 0},
        "momentum": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "rho": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "lr_decay": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "decay_interval_epochs": {"type": ["integer", "null"], "minimum": 1},
    },
}

_train = {
    "type": "object",
    "required": ["epochs", "seed"],
    "additionalProperties": False,
    "properties": {
        "epochs": {"type": "integer", "minimum": 0},
        "batch_size": {"type": "integer", "minimum": 1},
        "optimizer": _optimizer,
        "seed": _seed,
        "shuffle_each_epoch": {"type": "boolean"},
    },
}

_embed = {
    "type": "object",
    "required": ["method"],
    "additionalProperties": False,
    "properties": {
        "method": {"enum": list(METHODS)},
        "lambda_s": {"type": "number", "minimum": 0},
        "lambda_c": {"type": "number", "minimum": 0},
        "lambda_sta": {"type": "number", "minimum": 0},
        "sta_key_seed": _seed,
        "sta_layer": {"type": ["integer", "null"], "minimum": 0},
        "ingrain_lambda": {"type": "number", "minimum": 0},
        "ingrain_temperature": {"type": "number", "exclusiveMinimum": 0},
        "lsb_bits_per_param": {"type": "integer", "minimum": 1, "maximum": 23},
    },
}

_attack = {
    "type": "object",
    "required": ["kind"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": list(ATTACKS)},
        "distill_temperature": {"type": "number", "exclusiveMinimum": 0},
        "distill_alpha": {"type": "number", "minimum": 0, "maximum": 1},
        "student_arch": {"type": "array", "items": _layer, "minItems": 1},
        "prune_rate": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "finetune_epochs": {"type": "integer", "minimum": 0},
        "round_digits": {"type": "integer", "minimum": 1, "maximum": 6},
        "expand_rank": {"type": ["integer", "number", "array", "null"]},
        "train": _train,
    },
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "nnwm experiment config",
    "type": "object",
    "required": ["data", "split", "arch", "train", "watermark", "embeds"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "data": {
            "oneOf": [
                {"type": "object", "additionalProperties": False,
                 "required": ["source", "train_images", "train_labels", "test_images", "test_labels"],
                 "properties": {"source": {"const": "idx"}, "train_images": {"type": "string"},
                                "train_labels": {"type": "string"}, "test_images": {"type": "string"},
                                "test_labels": {"type": "string"},
                                "k": {"type": "integer", "minimum": 2, "maximum": 256},
                                "limit": {"type": "integer", "minimum": 1}}},
                {"type": "object", "additionalProperties": False,
                 "required": ["source", "seed", "n_per_class", "k", "feature_dim"],
                 "properties": {"source": {"const": "synthetic"}, "seed": _seed,
                                "n_per_class": {"type": "integer", "minimum": 2},
                                "k": {"type": "integer", "minimum": 2, "maximum": 256},
                                "feature_dim": {"type": "integer", "minimum": 1},
                                "sigma": {"type": "number", "exclusiveMinimum": 0},
                                "test_fraction": {"type": "number", "exclusiveMinimum": 0,
                                                  "exclusiveMaximum": 1}}},
            ]
        },
        "split": {"type": "object", "required": ["fraction", "seed"], "additionalProperties": False,
                  "properties": {"fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                                 "seed": _seed}},
        "arch": {"type": "array", "items": _layer, "minItems": 1},
        "train": _train,
        "watermark": {
            "type": "object", "required": ["seed"], "additionalProperties": False,
            "properties": {"seed": _seed, "n_bits": {"type": "integer", "minimum": 1},
                           "n_carriers": {"type": "integer", "minimum": 1},
                           "carrier_kind": {"enum": list(CARRIER_KINDS)}},
            "oneOf": [{"required": ["n_bits"]}, {"required": ["n_carriers"]}],
        },
        "ingrainer": {"type": "object", "additionalProperties": False, "required": ["epochs", "seed"],
                      "properties": {"epochs": {"type": "integer", "minimum": 1},
                                     "batch_size": {"type": "integer", "minimum": 1},
                                     "optimizer": _optimizer, "seed": _seed}},
        "clean_baseline": {"type": "boolean"},
        "attack_clean": {"type": "boolean"},
        "embeds": {"type": "array", "items": _embed},
        "attacks": {"type": "array", "items": _attack},
        "output_dir": {"type": "string"},
    },
}


def validate_config(cfg):
    """Raise ConfigError describing the first schema violation."""
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None
    if any(e["method"] == "ing" for e in cfg["embeds"]) and "ingrainer" not in cfg:
        raise ConfigError("embeds include 'ing' but the config has no 'ingrainer' block")
    if cfg["data"]["source"] == "synthetic" and "test_fraction" not in cfg["data"]:
        raise ConfigError("synthetic data needs 'test_fraction' to hold out a test set")
    return cfg


def load_config(path):
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return validate_config(cfg)


def bundled_config_path(name="desk_mnist_ing.json"):
    return Path(str(resources.files("nnwm") / "configs" / name))


def schema_json():
    return json.dumps(SCHEMA, indent=2, sort_keys=True) + "\n"
