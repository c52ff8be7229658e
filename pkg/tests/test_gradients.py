import numpy as np
import pytest

from nnwm.nn import Network, build_network, dense, objective_grads, relu
from nnwm.rng import stream

from gradcheck import check_all
from oracles import central_difference, relative_error


def test_twelve_parameter_net():
    # 2 -> 2 -> 2 MLP: 2*2+2 + 2*2+2 = 12 parameters
    net = build_network([dense(2, 2), relu(), dense(2, 2)], seed=21, dtype=np.float64)
    net.flat[...] = stream(22, "init").normal(12)
    assert net.n_params == 12
    x = stream(23, "data").normal((3, 2))
    y = np.array([0, 1, 1])
    _, analytic = objective_grads(net, x, hard_labels=y)
    numeric = central_difference(lambda f: objective_grads(Network(net.layers, f), x, hard_labels=y)[0], net.flat)
    assert relative_error(analytic, numeric).max() <= 1e-3


@pytest.fixture(scope="module")
def all_checks():
    return list(check_all())


def test_every_variant_matches_finite_differences(all_checks):
    worst = max(all_checks, key=lambda r: r[2])
    assert worst[2] <= 1e-3, worst


def test_kink_exclusions_are_rare(all_checks):
    excluded = sum(r[3] for r in all_checks)
    total = sum(r[4] for r in all_checks)
    assert excluded / total < 0.05
