import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reluadv.exceptions import InvalidDimensionError, InvalidInputError, KinkProximityError
from reluadv.linalg import RngState, spectral_norm
from reluadv.relunet import (
    ForwardTrace,
    NetworkWeights,
    activation_pattern,
    forward,
    gradient_check,
    input_gradient,
    random_network,
    value_and_gradient,
)

seeds = st.integers(min_value=0, max_value=2**32)


def masked_product(net, x):
    """Gradient as the explicit matrix product W^x_t ... W^x_1."""
    P = np.eye(net.input_dim)
    a = x
    for W in net.layers[:-1]:
        z = W @ a
        P = np.diag((z > 0).astype(float)) @ W @ P
        a = np.maximum(z, 0)
    return (net.layers[-1] @ P)[0]


def kink_free_point(net, gen, margin=1e-3):
    while True:
        x = gen.standard_normal(net.input_dim)
        tr = forward(net, x)
        if all(np.min(np.abs(z)) > margin for z in tr.pre_activations[:-1]):
            return x


def test_forward_examples():
    assert forward(NetworkWeights([[[1.0, -1.0]]]), [2.0, 3.0]).output == -1.0
    net = NetworkWeights([np.eye(2), [[1.0, 1.0]]])
    assert forward(net, [2.0, -3.0]).output == 2.0


def test_trace_shapes():
    net = random_network([6, 4, 3, 1], RngState(0))
    tr = forward(net, np.ones(6))
    assert [z.shape[0] for z in tr.pre_activations] == [4, 3, 1]
    assert np.array_equal(tr.post_activations[0], np.maximum(tr.pre_activations[0], 0))


def test_zero_pre_activation_is_off():
    z = [np.array([-1.0, 0.0, 3.0]), np.array([5.0])]
    tr = ForwardTrace(z, [np.maximum(v, 0) for v in z])
    (mask,) = activation_pattern(tr).masks
    assert mask.tolist() == [False, False, True]


def test_gradient_examples():
    assert input_gradient(NetworkWeights([[[3.0, 4.0]]]), [1.0, 1.0]).tolist() == [3.0, 4.0]
    net = NetworkWeights([np.eye(2), [[1.0, 1.0]]])
    assert input_gradient(net, [2.0, -3.0]).tolist() == [1.0, 0.0]


def test_linear_net_gradient_is_row():
    W = np.array([[0.5, -2.0, 1.5]])
    h, g = value_and_gradient(NetworkWeights([W]), [1.0, 2.0, 3.0])
    assert h == pytest.approx(1.0)
    assert np.array_equal(g, W[0])
    g[0] = 99.0  # returned gradient is the caller's to mutate
    assert W[0, 0] == 0.5


def test_input_validation():
    net = random_network([4, 2, 1], RngState(0))
    with pytest.raises(InvalidInputError):
        forward(net, np.ones(5))
    with pytest.raises(InvalidInputError):
        forward(net, [1.0, np.nan, 0.0, 0.0])


def test_architecture_validation():
    with pytest.raises(InvalidDimensionError):
        NetworkWeights([np.ones((3, 4)), np.ones((1, 2))])
    with pytest.raises(InvalidDimensionError):
        NetworkWeights([np.ones((2, 4))])
    with pytest.raises(InvalidDimensionError):
        random_network([4, 2, 2], RngState(0))


@settings(max_examples=25, deadline=None)
@given(seed=seeds)
def test_gradient_matches_masked_product(seed):
    gen = RngState(seed).generator()
    net = random_network([12, 8, 5, 1], gen)
    x = gen.standard_normal(12)
    assert np.allclose(input_gradient(net, x), masked_product(net, x), rtol=1e-12, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(seed=seeds, alpha=st.floats(1e-3, 1e3))
def test_positive_homogeneity(seed, alpha):
    gen = RngState(seed).generator()
    net = random_network([10, 6, 1], gen)
    x = gen.standard_normal(10)
    h, g = value_and_gradient(net, x)
    assert forward(net, alpha * x).output == pytest.approx(alpha * h, rel=1e-10, abs=1e-12)
    # Euler: h(x) = <grad h(x), x>
    assert h == pytest.approx(g @ x, rel=1e-10, abs=1e-12)


def test_finite_differences_independent_stencil():
    gen = RngState(3).generator()
    net = random_network([50, 20, 5, 1], gen)
    for _ in range(10):
        x = kink_free_point(net, gen)
        eps = 1e-7
        fd = np.array([
            (forward(net, x + eps * e).output - forward(net, x - eps * e).output) / (2 * eps)
            for e in np.eye(50)
        ])
        assert np.max(np.abs(fd - input_gradient(net, x))) <= 1e-5 * np.max(np.abs(fd))


def test_gradient_check_small_examples():
    assert gradient_check(NetworkWeights([[[3.0, 4.0]]]), [1.0, 1.0]) <= 1e-10
    net = NetworkWeights([np.eye(2), [[1.0, 1.0]]])
    assert gradient_check(net, [2.0, -3.0]) <= 1e-6


def test_gradient_check_refuses_near_kinks():
    net = NetworkWeights([np.eye(2), [[1.0, 1.0]]])
    with pytest.raises(KinkProximityError) as info:
        gradient_check(net, [2.0, 1e-9])
    assert (info.value.layer, info.value.neuron) == (0, 1)


@settings(max_examples=25, deadline=None)
@given(seed=seeds, frac=st.floats(0.0, 1.0))
def test_local_linearity_within_pattern(seed, frac):
    gen = RngState(seed).generator()
    net = random_network([8, 6, 4, 1], gen)
    x = gen.standard_normal(8)
    y = x + 1e-4 * gen.standard_normal(8)
    px = activation_pattern(forward(net, x))
    if px != activation_pattern(forward(net, y)):
        return
    p = x + frac * (y - x)
    if activation_pattern(forward(net, p)) != px:
        return
    h, g = value_and_gradient(net, x)
    assert forward(net, p).output - h == pytest.approx(g @ (p - x), rel=1e-8, abs=1e-13)


@settings(max_examples=25, deadline=None)
@given(seed=seeds)
def test_lipschitz_bound(seed):
    gen = RngState(seed).generator()
    net = random_network([9, 7, 3, 1], gen)
    x, y = gen.standard_normal(9), gen.standard_normal(9)
    lip = np.prod([spectral_norm(W) for W in net.layers])
    gap = abs(forward(net, x).output - forward(net, y).output)
    assert gap <= lip * np.linalg.norm(x - y) * (1 + 1e-9)
    assert np.linalg.norm(input_gradient(net, x)) <= lip * (1 + 1e-9)


def test_json_round_trip_exact(tmp_path):
    net = random_network([7, 5, 2, 1], RngState(8))
    assert NetworkWeights.from_json(net.to_json()) == net
    path = tmp_path / "net.json"
    net.save(path)
    back = NetworkWeights.load(path)
    assert all(a.tobytes() == b.tobytes() for a, b in zip(net.layers, back.layers))
    assert json.loads(path.read_text())["dims"] == [7, 5, 2, 1]


def test_json_rejects_bad_documents():
    with pytest.raises(InvalidInputError):
        NetworkWeights.from_json('{"dims": [2, 1]}')
    with pytest.raises(InvalidDimensionError):
        NetworkWeights.from_json('{"dims": [2, 1], "layers": [[1.0]]}')


def test_equality_and_hash():
    a = random_network([4, 2, 1], RngState(1))
    b = random_network([4, 2, 1], RngState(1))
    assert a == b and hash(a) == hash(b)
    assert a != random_network([4, 2, 1], RngState(2))
    assert a.scaled(2.0).layers[0][0, 0] == 2 * a.layers[0][0, 0]
