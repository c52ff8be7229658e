import numpy as np
import pytest

from nnwm.data import make_synthetic_dataset
from nnwm.exceptions import NonFiniteError
from nnwm.nn import (Objective, OptimizerConfig, TrainConfig, build_network, dense, dropout, evaluate_accuracy,
                     relu, train_loop)
from nnwm.nn.train import batch_order


def test_separable_two_class_reaches_99_percent():
    ds = make_synthetic_dataset(seed=1, n_per_class=50, k=2, feature_dim=2)
    net = build_network([dense(2, 2)], seed=0)
    cfg = TrainConfig(50, 16, OptimizerConfig("momentum", 0.1, 0.9), seed=0)
    trained, hist = train_loop(net, ds.images, ds.labels, cfg)
    assert hist.accuracy[-1] >= 0.99
    assert evaluate_accuracy(trained, ds.images, ds.labels) >= 0.99


def test_zero_epochs_returns_identical_copy(blobs, quick_cfg):
    net = build_network([dense(16, 4)], seed=0)
    out, hist = train_loop(net, blobs.images, blobs.labels, quick_cfg.replace(epochs=0))
    assert out is not net and out.flat.tobytes() == net.flat.tobytes() and len(hist) == 0


def test_same_seed_bit_identical(blobs, quick_cfg):
    arch = [dense(16, 12), relu(), dropout(0.3), dense(12, 4)]
    a, ha = train_loop(build_network(arch, 1), blobs.images, blobs.labels, quick_cfg)
    b, hb = train_loop(build_network(arch, 1), blobs.images, blobs.labels, quick_cfg)
    assert a.flat.tobytes() == b.flat.tobytes() and ha.loss == hb.loss


def test_input_network_untouched(blobs, quick_cfg):
    net = build_network([dense(16, 4)], seed=0)
    before = net.flat.copy()
    train_loop(net, blobs.images, blobs.labels, quick_cfg)
    assert np.array_equal(net.flat, before)


def test_history_length(blobs, quick_cfg):
    _, hist = train_loop(build_network([dense(16, 4)], 0), blobs.images, blobs.labels, quick_cfg.replace(epochs=7))
    assert len(hist.loss) == len(hist.accuracy) == 7


def test_batch_larger_than_dataset_is_clamped(blobs, quick_cfg):
    _, hist = train_loop(build_network([dense(16, 4)], 0), blobs.images[:10], blobs.labels[:10],
                         quick_cfg.replace(batch_size=1000, epochs=2))
    assert len(hist) == 2


def test_shuffle_once_reuses_the_order():
    cfg = TrainConfig(epochs=3, seed=4, shuffle_each_epoch=False)
    orders = [o.copy() for o in batch_order(20, cfg)]
    assert all(np.array_equal(orders[0], o) for o in orders)
    cfg = cfg.replace(shuffle_each_epoch=True)
    orders = [o.copy() for o in batch_order(20, cfg)]
    assert not np.array_equal(orders[0], orders[1])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_aborts(blobs, quick_cfg):
    def poison(flat):
        flat[3] = np.inf
    with pytest.raises(NonFiniteError):
        train_loop(build_network([dense(16, 4)], 0), blobs.images, blobs.labels, quick_cfg, Objective(post_step=poison))


def test_empty_dataset_rejected(quick_cfg):
    with pytest.raises(ValueError):
        train_loop(build_network([dense(16, 4)], 0), np.zeros((0, 16)), np.zeros(0, dtype=int), quick_cfg)


def test_post_step_hook_runs(blobs, quick_cfg):
    calls = []
    def hook(flat):
        flat[0] = 0.0
        calls.append(1)
    out, _ = train_loop(build_network([dense(16, 4)], 0), blobs.images, blobs.labels, quick_cfg.replace(epochs=1),
                        Objective(post_step=hook))
    assert out.flat[0] == 0.0 and len(calls) == -(-len(blobs) // quick_cfg.batch_size)


def test_train_config_round_trip(quick_cfg):
    assert TrainConfig.from_dict(quick_cfg.to_dict()) == quick_cfg
