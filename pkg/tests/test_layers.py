import numpy as np
import pytest

from nnwm.exceptions import ShapeError
from nnwm.nn import LayerSpec, build_network, conv2d, dense, dropout, flatten, maxpool2x2, relu
from nnwm.nn.layers import check_compatible, conv_forward, maxpool_forward

from oracles import conv_valid_loops


def test_desk_mlp_parameter_count():
    specs = [dense(784, 1200), relu(), dropout(0.5), dense(1200, 1200), relu(), dropout(0.5), dense(1200, 10)]
    assert build_network(specs, seed=0).n_params == 2_395_210


def test_incompatible_dense_pair_named():
    with pytest.raises(ShapeError, match="dense"):
        build_network([dense(4, 2), dense(3, 1)], seed=0)


def test_conv_channel_mismatch():
    with pytest.raises(ShapeError):
        check_compatible([conv2d(1, 8), relu(), conv2d(4, 16)])


def test_conv_to_dense_size_checked_with_input_shape():
    with pytest.raises(ShapeError):
        check_compatible([conv2d(1, 2), flatten(), dense(10, 2)], input_shape=(5, 5, 1))
    check_compatible([conv2d(1, 2), flatten(), dense(18, 2)], input_shape=(5, 5, 1))


@pytest.mark.parametrize("bad", [
    dict(kind="dense", dims=(3,)),
    dict(kind="conv2d", dims=(1, 2, 5)),
    dict(kind="dropout", rate=1.0),
    dict(kind="softmax"),
])
def test_layer_validation(bad):
    with pytest.raises(ValueError):
        LayerSpec(**bad)


def test_layerspec_dict_round_trip():
    for s in (dense(3, 4), conv2d(2, 5, 1), dropout(0.25), relu(), flatten(), maxpool2x2()):
        assert LayerSpec.from_dict(s.to_dict()) == s


@pytest.mark.parametrize("k", [1, 3])
def test_conv_matches_loop_oracle(k, rng):
    x = rng.normal(size=(2, 6, 5, 3))
    W = rng.normal(size=(4, k, k, 3))
    b = rng.normal(size=4)
    out, _ = conv_forward(x, W, b)
    np.testing.assert_allclose(out, conv_valid_loops(x, W, b), atol=1e-12)


def test_maxpool_floor_and_values(rng):
    x = rng.normal(size=(1, 5, 5, 2))
    out, _ = maxpool_forward(x)
    assert out.shape == (1, 2, 2, 2)
    assert out[0, 1, 0, 1] == x[0, 2:4, 0:2, 1].max()
