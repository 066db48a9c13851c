"""Network init, forward (scalar and jet paths), flat parameters, and
checkpoint round-trips."""

import numpy as np
import pytest

from piat import jets, network
from piat.network import CheckpointError, NetworkError
from piat.tape import Tape


def test_param_count():
    mlp = network.init([2, 10, 1], seed=0)
    assert mlp.param_count == 41            # 2*10 + 10 + 10*1 + 1
    assert mlp.flat_params().shape == (41,)


def test_init_deterministic():
    a = network.init([2, 10, 1], seed=123)
    b = network.init([2, 10, 1], seed=123)
    c = network.init([2, 10, 1], seed=124)
    assert np.array_equal(a.flat_params(), b.flat_params())
    assert not np.array_equal(a.flat_params(), c.flat_params())


def test_init_glorot_bounds_and_zero_biases():
    mlp = network.init([2, 10, 1], seed=7)
    bound = np.sqrt(6.0 / 12.0)
    assert np.all(np.abs(mlp.weights[0]) <= bound)
    assert np.all(mlp.biases[0] == 0.0)
    assert np.all(mlp.biases[1] == 0.0)


def test_init_validation():
    with pytest.raises(NetworkError):
        network.init([2], seed=0)
    with pytest.raises(NetworkError):
        network.init([2, 0, 1], seed=0)
    with pytest.raises(NetworkError):
        network.init([2, 4, 3], seed=0)     # output must be scalar


def test_flat_round_trip():
    mlp = network.init([3, 5, 4, 1], seed=2)
    flat = mlp.flat_params()
    again = mlp.with_params(flat)
    assert np.array_equal(again.flat_params(), flat)
    for w1, w2 in zip(mlp.weights, again.weights):
        assert np.array_equal(w1, w2)


def test_zero_weights_output_is_last_bias():
    mlp = network.init([2, 4, 1], seed=0)
    flat = np.zeros(mlp.param_count)
    flat[-1] = 0.75                          # last bias in flat layout
    mlp = mlp.with_params(flat)
    t = Tape()
    leaves = network.register_leaves(t, mlp)
    out = network.forward(t, leaves, [t.leaf(0.3), t.leaf(0.9)])
    assert t.value(out.coeffs[0]) == pytest.approx(0.75)
    assert mlp.predict(np.array([[0.3, 0.9]]))[0] == pytest.approx(0.75)


def test_linear_net_jet_derivative():
    # single linear layer u = 2x + 0t: first derivative in x is 2
    mlp = network.init([2, 1], seed=0).with_params(np.array([2.0, 0.0, 0.0]))
    t = Tape()
    leaves = network.register_leaves(t, mlp)
    out = network.forward(t, leaves, [jets.seed(t, t.leaf(3.0), 1),
                                      t.leaf(0.5)])
    assert t.value(jets.extract(out, 0)) == pytest.approx(6.0)
    assert t.value(jets.extract(out, 1)) == pytest.approx(2.0)


def test_scalar_pass_equals_jet_coefficient_zero():
    mlp = network.init([2, 12, 12, 1], seed=4)
    for order in range(8):
        t = Tape()
        leaves = network.register_leaves(t, mlp)
        x, tv = t.leaf(0.8), t.leaf(0.2)
        scalar = network.forward(t, leaves, [x, tv])
        jet = network.forward(t, leaves, [jets.seed(t, x, order)
                                          if order else x, tv])
        assert t.value(scalar.coeffs[0]) == t.value(jet.coeffs[0])


def test_two_seeded_inputs_rejected():
    mlp = network.init([2, 4, 1], seed=0)
    t = Tape()
    leaves = network.register_leaves(t, mlp)
    with pytest.raises(NetworkError):
        network.forward(t, leaves, [jets.seed(t, t.leaf(0.1), 2),
                                    jets.seed(t, t.leaf(0.2), 2)])


def test_input_count_checked():
    mlp = network.init([3, 4, 1], seed=0)
    t = Tape()
    leaves = network.register_leaves(t, mlp)
    with pytest.raises(NetworkError):
        network.forward(t, leaves, [t.leaf(0.1), t.leaf(0.2)])


def test_predict_matches_tape_forward():
    mlp = network.init([3, 9, 7, 1], seed=11)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, size=(20, 3))
    preds = mlp.predict(pts)
    for row, expected in zip(pts, preds):
        t = Tape()
        leaves = network.register_leaves(t, mlp)
        out = network.forward(t, leaves, [t.leaf(v) for v in row])
        assert t.value(out.coeffs[0]) == pytest.approx(expected, rel=1e-12)


def test_weight_gradient_with_fourth_derivative_loss():
    """d(loss)/d(theta) vs central differences for a loss built from a
    fourth-order extracted derivative."""
    mlp = network.init([2, 10, 10, 1], seed=3)
    flat = mlp.flat_params()
    t = Tape()
    leaves = network.register_leaves(t, mlp)
    out = network.forward(t, leaves, [jets.seed(t, t.leaf(0.7), 4),
                                      jets.lift(t, t.leaf(0.25), 4)])
    u4 = jets.extract(out, 4)
    loss = t.mul(u4, u4)
    grads = t.backward(loss)
    rows = leaves.flat_rows
    flat_vars = leaves.flat_vars()
    rng = np.random.default_rng(1)
    h = 1e-6
    worst = 0.0
    for idx in rng.choice(flat.size, size=20, replace=False):
        up, dn = flat.copy(), flat.copy()
        up[idx] += h
        dn[idx] -= h
        t.set_leaf_rows(rows, up)
        t.forward()
        f_up = t.value(loss)
        t.set_leaf_rows(rows, dn)
        t.forward()
        f_dn = t.value(loss)
        fd = (f_up - f_dn) / (2 * h)
        ad = grads.grad(flat_vars[idx])
        worst = max(worst, abs(ad - fd) / max(abs(ad), abs(fd), 1e-2))
    t.set_leaf_rows(rows, flat)
    assert worst < 1e-5


def test_checkpoint_round_trip_bitwise():
    mlp = network.init([3, 8, 5, 1], seed=21)
    blob = network.serialize(mlp)
    again = network.deserialize(blob)
    assert again.layer_sizes == mlp.layer_sizes
    assert again.activation == mlp.activation
    assert again.init_seed == mlp.init_seed
    assert np.array_equal(again.flat_params(), mlp.flat_params())


def test_checkpoint_truncated_rejected():
    blob = network.serialize(network.init([2, 4, 1], seed=0))
    with pytest.raises(CheckpointError):
        network.deserialize(blob[:-8])
    with pytest.raises(CheckpointError):
        network.deserialize(blob[:10])
    with pytest.raises(CheckpointError):
        network.deserialize(b"NOTMAGIC" + blob[8:])


def test_checkpoint_extra_payload_rejected():
    blob = network.serialize(network.init([2, 4, 1], seed=0))
    with pytest.raises(CheckpointError):
        network.deserialize(blob + b"\x00" * 8)


def test_checkpoint_dimension_guard(tmp_path):
    mlp = network.init([4, 5, 1], seed=0)     # d = 3
    path = tmp_path / "net.bin"
    network.write_checkpoint(mlp, path)
    loaded = network.read_checkpoint(path, expect_d=3)
    assert loaded.d == 3
    with pytest.raises(CheckpointError):
        network.read_checkpoint(path, expect_d=1)
