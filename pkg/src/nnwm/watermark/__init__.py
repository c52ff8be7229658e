from .base import (DISPLAY_NAMES, METHODS, PARAM_METHODS, PREDICTION_METHODS, EmbedConfig, EmbeddedModel,
                   read_sidecar)
from .params import (ParamRegularizer, correlation_penalty, embed_lsb, embed_lsb_model, extract_lsb,
                     extract_param_wm, secret_key, sign_penalty, statistic_penalty, train_param_embedded,
                     wm_regularizer)
from .predictions import (extract_prediction_wm, ingrain_objective, train_ingrained_classifier,
                          train_ingrainer, train_pcap, without_dropout)

__all__ = [
    "DISPLAY_NAMES", "METHODS", "PARAM_METHODS", "PREDICTION_METHODS", "EmbedConfig", "EmbeddedModel",
    "read_sidecar", "ParamRegularizer", "correlation_penalty", "embed_lsb", "embed_lsb_model",
    "extract_lsb", "extract_param_wm", "secret_key", "sign_penalty", "statistic_penalty",
    "train_param_embedded", "wm_regularizer", "extract_prediction_wm", "ingrain_objective",
    "train_ingrained_classifier", "train_ingrainer", "train_pcap", "without_dropout",
]
