"""Jet arithmetic: seeds, Cauchy products, elementary recurrences,
derivative extraction, and differentiability through the coefficients."""

import math

import numpy as np
import pytest

from piat import jets, network
from piat.jets import Jet, JetError
from piat.tape import Tape


def coeff_values(jet):
    return [jet.coeff_value(k) for k in range(jet.order + 1)]


def test_seed_coefficients():
    t = Tape()
    x = t.leaf(2.0)
    j = jets.seed(t, x, 3)
    assert coeff_values(j) == [2.0, 1.0, 0.0, 0.0]


def test_seed_order_zero():
    t = Tape()
    j = jets.seed(t, t.leaf(1.5), 0)
    assert j.order == 0
    assert coeff_values(j) == [1.5]


def test_seed_first_derivative_is_one():
    t = Tape()
    j = jets.seed(t, t.leaf(0.3), 2)
    assert t.value(jets.extract(j, 1)) == 1.0
    assert jets.extract(j, 0) == j.coeffs[0]


def test_cauchy_product():
    t = Tape()
    a = Jet(t, [t.leaf(1.0), t.leaf(2.0), t.leaf(0.0)])
    b = Jet(t, [t.leaf(3.0), t.leaf(4.0), t.leaf(0.0)])
    assert coeff_values(a * b) == [3.0, 10.0, 8.0]


def test_add_zero_jet_identity():
    t = Tape()
    a = Jet(t, [t.leaf(1.0), t.leaf(-2.0)])
    z = jets.lift(t, 0.0, 1)
    assert coeff_values(a + z) == coeff_values(a)


def test_scale():
    t = Tape()
    a = Jet(t, [t.leaf(1.0), t.leaf(2.0)])
    assert coeff_values(a * 2.0) == [2.0, 4.0]
    assert coeff_values(2.0 * a) == [2.0, 4.0]


def test_sub_and_neg():
    t = Tape()
    a = Jet(t, [t.leaf(3.0), t.leaf(1.0)])
    b = Jet(t, [t.leaf(1.0), t.leaf(4.0)])
    assert coeff_values(a - b) == [2.0, -3.0]
    assert coeff_values(-a) == [-3.0, -1.0]
    assert coeff_values(1.0 - a) == [-2.0, -1.0]


def test_order_mismatch_rejected():
    t = Tape()
    a = Jet(t, [t.leaf(1.0), t.leaf(2.0)])
    b = Jet(t, [t.leaf(1.0)])
    with pytest.raises(JetError):
        a + b
    with pytest.raises(JetError):
        a * b


def test_tape_mismatch_rejected():
    t1, t2 = Tape(), Tape()
    a = Jet(t1, [t1.leaf(1.0), 0.0])
    b = Jet(t2, [t2.leaf(1.0), 0.0])
    with pytest.raises(JetError):
        a + b


def test_tanh_series_at_zero():
    # tanh(x) = x - x^3/3 + ...
    t = Tape()
    j = jets.tanh(jets.seed(t, t.leaf(0.0), 3))
    np.testing.assert_allclose(coeff_values(j), [0.0, 1.0, 0.0, -1.0 / 3.0],
                               atol=1e-15)


def test_sin_series_at_zero():
    # sin(x) = x - x^3/6 + ...
    t = Tape()
    j = jets.sin(jets.seed(t, t.leaf(0.0), 3))
    np.testing.assert_allclose(coeff_values(j), [0.0, 1.0, 0.0, -1.0 / 6.0],
                               atol=1e-15)


def test_exp_series_at_zero():
    # exp(x) = 1 + x + x^2/2
    t = Tape()
    j = jets.exp(jets.seed(t, t.leaf(0.0), 2))
    np.testing.assert_allclose(coeff_values(j), [1.0, 1.0, 0.5], atol=1e-15)


def test_cos_series_at_zero():
    t = Tape()
    j = jets.cos(jets.seed(t, t.leaf(0.0), 4))
    np.testing.assert_allclose(coeff_values(j),
                               [1.0, 0.0, -0.5, 0.0, 1.0 / 24.0], atol=1e-15)


def test_sin_derivatives_at_one():
    """Extracted orders 0..7 of sin at x=1 follow the sin/cos cycle."""
    t = Tape()
    j = jets.sin(jets.seed(t, t.leaf(1.0), 7))
    cycle = [math.sin(1.0), math.cos(1.0), -math.sin(1.0), -math.cos(1.0)]
    for k in range(8):
        got = t.value(jets.extract(j, k))
        assert got == pytest.approx(cycle[k % 4], abs=1e-8)


def test_extract_beyond_order_rejected():
    t = Tape()
    j = jets.seed(t, t.leaf(0.0), 7)
    with pytest.raises(JetError):
        jets.extract(j, 8)


def test_shift_derivative_coefficients():
    t = Tape()
    vals = [0.5, -1.0, 2.0, 0.25]
    j = Jet(t, [t.leaf(v) for v in vals])
    s1 = jets.shift_derivative(j, 1)
    np.testing.assert_allclose(coeff_values(s1),
                               [vals[1], 2 * vals[2], 3 * vals[3]])
    s0 = jets.shift_derivative(j, 0)
    assert coeff_values(s0) == vals
    with pytest.raises(JetError):
        jets.shift_derivative(j, 4)


def test_shift_of_sin_is_negative_sin():
    # shifting sin by 2 at x=0 gives the jet of -sin: [0, -1, ...]
    t = Tape()
    j = jets.sin(jets.seed(t, t.leaf(0.0), 3))
    s = jets.shift_derivative(j, 2)
    assert s.coeff_value(0) == pytest.approx(0.0, abs=1e-15)
    assert s.coeff_value(1) == pytest.approx(-1.0, rel=1e-12)


def test_truncate():
    t = Tape()
    j = jets.seed(t, t.leaf(1.0), 4)
    short = jets.truncate(j, 1)
    assert short.order == 1
    with pytest.raises(JetError):
        jets.truncate(short, 3)


def test_polynomial_derivatives_exact():
    """Jets of random degree-5 polynomials reproduce analytic derivatives
    to relative 1e-12."""
    rng = np.random.default_rng(5)
    for _ in range(10):
        coefs = rng.uniform(-2, 2, 6)     # highest power first
        x0 = rng.uniform(-1.5, 1.5)
        t = Tape()
        xj = jets.seed(t, t.leaf(x0), 7)
        acc = jets.lift(t, float(coefs[0]), 7)
        for c in coefs[1:]:
            acc = acc * xj + float(c)
        poly = np.poly1d(coefs)
        for k in range(8):
            expected = poly.deriv(k)(x0) if k <= 5 else 0.0
            got = t.value(jets.extract(acc, k))
            assert got == pytest.approx(expected, rel=1e-12, abs=1e-10)


@pytest.mark.parametrize("order", [1, 2, 4, 7])
def test_weight_gradients_through_jets_match_fd(order):
    """d/dw of an extracted derivative agrees with central differences."""
    mlp = network.init([2, 8, 8, 1], seed=order)
    flat = mlp.flat_params()
    t = Tape()
    leaves = network.register_leaves(t, mlp)
    x = t.leaf(0.6)
    tv = t.leaf(0.4)
    out = network.forward(t, leaves, [jets.seed(t, x, order),
                                      jets.lift(t, tv, order)])
    target = jets.extract(out, order)
    grads = t.backward(target)
    rows = leaves.flat_rows
    flat_vars = leaves.flat_vars()
    rng = np.random.default_rng(0)
    h = 1e-6
    for idx in rng.choice(flat.size, size=12, replace=False):
        up, dn = flat.copy(), flat.copy()
        up[idx] += h
        dn[idx] -= h
        t.set_leaf_rows(rows, up)
        t.forward()
        f_up = t.value(target)
        t.set_leaf_rows(rows, dn)
        t.forward()
        f_dn = t.value(target)
        t.set_leaf_rows(rows, flat)
        t.forward()
        fd = (f_up - f_dn) / (2 * h)
        ad = grads.grad(flat_vars[idx])
        scale = max(abs(ad), abs(fd), 1e-2)
        assert abs(ad - fd) / scale < 1e-5


def test_seed_point_chain_rule():
    """d/dx of the k-th derivative equals the (k+1)-th derivative."""
    mlp = network.init([2, 6, 1], seed=9)
    for k in (1, 3):
        t = Tape()
        leaves = network.register_leaves(t, mlp)
        x = t.leaf(0.35)
        tv = t.leaf(0.8)
        out = network.forward(t, leaves, [jets.seed(t, x, k + 1),
                                          jets.lift(t, tv, k + 1)])
        dk = jets.extract(jets.truncate(out, k), k)
        grads = t.backward(dk)
        d_dx = grads.grad(x)
        dk1 = t.value(jets.extract(out, k + 1))
        assert d_dx == pytest.approx(dk1, rel=1e-8)


def test_sin_jet_matches_scalar_sin():
    t = Tape()
    x = t.leaf(0.9)
    j = jets.sin(jets.seed(t, x, 0))
    assert t.value(j.coeffs[0]) == t.value(t.sin(x))
