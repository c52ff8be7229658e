from .layers import LayerSpec, conv2d, dense, dropout, flatten, maxpool2x2, parse_arch, relu
from .network import (ForwardConfig, Network, backward, build_network, forward, logits,
                      objective_grads, predict, softmax)
from .optim import OptimizerConfig, init_state, optimizer_step
from .serialize import deserialize_network, load_network, save_network, serialize_network
from .train import History, Objective, TrainConfig, evaluate_accuracy, train_loop

__all__ = [
    "LayerSpec", "conv2d", "dense", "dropout", "flatten", "maxpool2x2", "parse_arch", "relu",
    "ForwardConfig", "Network", "backward", "build_network", "forward", "logits",
    "objective_grads", "predict", "softmax",
    "OptimizerConfig", "init_state", "optimizer_step",
    "deserialize_network", "load_network", "save_network", "serialize_network",
    "History", "Objective", "TrainConfig", "evaluate_accuracy", "train_loop",
]
