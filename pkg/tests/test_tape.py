"""Tape recording, reverse sweep, and replay semantics."""

import math

import numpy as np
import pytest

from piat.tape import Tape, TapeError


def test_leaf_backward_identity():
    t = Tape()
    a = t.leaf(2.0)
    buf = t.backward(a)
    assert buf.grad(a) == 1.0


def test_product_rule():
    t = Tape()
    a, b = t.leaf(2.0), t.leaf(3.0)
    c = t.mul(a, b)
    buf = t.backward(c)
    assert buf.grad(a) == 3.0
    assert buf.grad(b) == 2.0


def test_leaf_rejects_nonfinite_with_role():
    t = Tape()
    with pytest.raises(TapeError, match="weight"):
        t.leaf(float("nan"), role="weight[0][1,2]")
    with pytest.raises(TapeError):
        t.leaf(float("inf"))


def test_tanh_partial_at_zero():
    t = Tape()
    x = t.leaf(0.0)
    y = t.tanh(x)
    view = t.node(y.index)
    assert view.value == 0.0
    assert view.partials[0] == 1.0


def test_sin_at_pi_half():
    t = Tape()
    x = t.leaf(math.pi / 2)
    y = t.sin(x)
    view = t.node(y.index)
    assert view.value == pytest.approx(1.0)
    assert abs(view.partials[0]) < 1e-15


def test_div_by_zero_carries_node_id():
    t = Tape()
    a, b = t.leaf(1.0), t.leaf(0.0)
    with pytest.raises(TapeError, match=r"node 2"):
        t.div(a, b)


def test_div_value_and_gradient():
    t = Tape()
    a, b = t.leaf(3.0), t.leaf(4.0)
    c = t.div(a, b)
    assert t.value(c) == pytest.approx(0.75)
    buf = t.backward(c)
    assert buf.grad(a) == pytest.approx(0.25)
    assert buf.grad(b) == pytest.approx(-3.0 / 16.0)


def test_analytic_gradient():
    # f = x*y + sin(x) at (2, 3)
    t = Tape()
    x, y = t.leaf(2.0), t.leaf(3.0)
    f = t.add(t.mul(x, y), t.sin(x))
    buf = t.backward(f)
    assert buf.grad(x) == pytest.approx(3.0 + math.cos(2.0))
    assert buf.grad(y) == pytest.approx(2.0)


def test_tanh_chain_gradient():
    # f = tanh(w * x) at w=0.3, x=1
    t = Tape()
    w, x = t.leaf(0.3), t.leaf(1.0)
    f = t.tanh(t.mul(w, x))
    buf = t.backward(f)
    expected = (1.0 - math.tanh(0.3) ** 2) * 1.0
    assert buf.grad(w) == pytest.approx(expected, rel=1e-12)


def test_powi_and_scale():
    t = Tape()
    x = t.leaf(-1.5)
    y = t.powi(x, 3)
    z = t.scale(y, 2.0)
    assert t.value(z) == pytest.approx(2.0 * (-1.5) ** 3)
    buf = t.backward(z)
    assert buf.grad(x) == pytest.approx(2.0 * 3.0 * (-1.5) ** 2)


def test_apply_primitive_generic():
    t = Tape()
    a, b = t.leaf(1.2), t.leaf(0.7)
    s = t.apply("add", a, b)
    assert t.value(s) == pytest.approx(1.9)
    p = t.apply("powi", a, exponent=2)
    assert t.value(p) == pytest.approx(1.44)
    c = t.apply("scale", b, factor=3.0)
    assert t.value(c) == pytest.approx(2.1)
    with pytest.raises(TapeError):
        t.apply("log", a)
    with pytest.raises(TapeError):
        t.apply("add", a)
    with pytest.raises(TapeError):
        t.apply("powi", a)


def test_foreign_variable_rejected():
    t1, t2 = Tape(), Tape()
    a = t1.leaf(1.0)
    b = t2.leaf(2.0)
    with pytest.raises(TapeError):
        t1.add(a, b)


def _record_random_expression(tape, leaves, rng, depth=8):
    """Random expression over {add, mul, sin, tanh, exp} rooted at leaves.

    exp arguments are kept small so central differences stay well
    conditioned.
    """
    pool = list(leaves)
    for _ in range(depth):
        op = rng.choice(["add", "mul", "sin", "tanh", "exp"])
        a = pool[rng.integers(len(pool))]
        if op == "add":
            b = pool[rng.integers(len(pool))]
            pool.append(tape.add(a, b))
        elif op == "mul":
            b = pool[rng.integers(len(pool))]
            pool.append(tape.mul(a, b))
        elif op == "exp":
            v = tape.value(a)
            val = v if np.ndim(v) == 0 else float(np.max(np.abs(v)))
            if abs(val) > 2.0:
                pool.append(tape.tanh(a))
            else:
                pool.append(tape.exp(a))
        else:
            pool.append(getattr(tape, op)(a))
    out = pool[-1]
    for node in reversed(pool):
        out = tape.add(out, node)   # make every subexpression contribute
    return out


def test_gradient_matches_central_differences():
    """100 random expressions, depth <= 8: max relative error < 1e-6."""
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(100):
        values = rng.uniform(-1.5, 1.5, size=4)
        t = Tape()
        leaves = [t.leaf(v) for v in values]
        out = _record_random_expression(t, leaves, rng)
        grads = t.backward(out)
        h = 1e-6
        for i, leaf in enumerate(leaves):
            up, dn = values.copy(), values.copy()
            up[i] += h
            dn[i] -= h
            for bump, store in ((up, "up"), (dn, "dn")):
                for l, v in zip(leaves, bump):
                    t.set_leaf(l, v)
                t.forward()
                if store == "up":
                    f_up = t.value(out)
                else:
                    f_dn = t.value(out)
            for l, v in zip(leaves, values):
                t.set_leaf(l, v)
            t.forward()
            fd = (f_up - f_dn) / (2 * h)
            ad = grads.grad(leaf)
            rel = abs(ad - fd) / max(abs(ad), abs(fd), 1e-3)
            worst = max(worst, rel)
    assert worst < 1e-6


def test_linearity_of_backward():
    """Adjoints of a*f + b*g equal a*adj_f + b*adj_g on shared leaves."""
    rng = np.random.default_rng(7)
    for _ in range(20):
        values = rng.uniform(-1.0, 1.0, size=3)
        a, b = rng.uniform(-2, 2, size=2)

        t = Tape()
        leaves = [t.leaf(v) for v in values]
        f = _record_random_expression(t, leaves, np.random.default_rng(1))
        g = _record_random_expression(t, leaves, np.random.default_rng(2))
        combo = t.add(t.scale(f, a), t.scale(g, b))
        adj_f = t.backward(f)
        adj_g = t.backward(g)
        adj_c = t.backward(combo)
        for leaf in leaves:
            expected = a * adj_f.grad(leaf) + b * adj_g.grad(leaf)
            assert adj_c.grad(leaf) == pytest.approx(expected, rel=1e-9,
                                                     abs=1e-12)


def test_determinism_bitwise():
    def build():
        t = Tape()
        x, y = t.leaf(0.37), t.leaf(-1.2)
        f = t.mul(t.sin(t.mul(x, y)), t.exp(t.tanh(x)))
        return t, t.backward(f)

    t1, b1 = build()
    t2, b2 = build()
    assert np.array_equal(b1.values, b2.values)
    assert np.array_equal(t1._vals[:len(t1)], t2._vals[:len(t2)])


def test_node_records_are_finite():
    rng = np.random.default_rng(3)
    t = Tape()
    leaves = [t.leaf(v) for v in rng.uniform(-1, 1, 3)]
    _record_random_expression(t, leaves, rng)
    for i in range(len(t)):
        view = t.node(i)
        assert np.isfinite(view.value)
        assert all(np.all(np.isfinite(p)) for p in view.partials)


def test_batched_lanes_match_scalar_tapes():
    """A 3-lane tape is exactly three scalar tapes run in lockstep."""
    xs = [0.2, -0.7, 1.4]
    ys = [1.0, 0.5, -0.3]

    def build(tape, x, y):
        a = tape.leaf(x)
        b = tape.leaf(y)
        f = tape.add(tape.mul(a, tape.sin(b)), tape.tanh(tape.mul(a, b)))
        return a, b, f

    batched = Tape(lanes=3)
    a, b, f = build(batched, np.asarray(xs), np.asarray(ys))
    batch_vals = batched.value(f)
    batch_adj = batched.backward(f)
    for lane, (x, y) in enumerate(zip(xs, ys)):
        t = Tape()
        a1, b1, f1 = build(t, x, y)
        adj = t.backward(f1)
        assert batch_vals[lane] == t.value(f1)
        assert batch_adj.grad(a)[lane] == adj.grad(a1)
        assert batch_adj.grad(b)[lane] == adj.grad(b1)


def test_replay_matches_fresh_record():
    def record(x_val):
        t = Tape()
        x = t.leaf(x_val)
        f = t.exp(t.sin(t.mul(x, x)))
        return t, x, f

    t1, x1, f1 = record(0.8)
    t1.set_leaf(x1, 1.9)
    t1.forward()
    t2, _, f2 = record(1.9)
    assert t1.value(f1) == t2.value(f2)
    assert np.array_equal(t1.backward(f1).values, t2.backward(f2).values)


def test_set_leaf_only_on_leaves():
    t = Tape()
    x = t.leaf(1.0, role="input coordinate x")
    y = t.sin(x)
    with pytest.raises(TapeError):
        t.set_leaf(y, 2.0)
    with pytest.raises(TapeError, match="input coordinate"):
        t.set_leaf(x, float("nan"))


def test_backward_nonfinite_adjoint_reports_node():
    t = Tape()
    a = t.leaf(1e300)
    b = t.leaf(1e-300)
    f = t.mul(a, b)           # value 1.0
    g = t.mul(f, t.leaf(1e300))   # finite value, adjoint of b overflows
    with pytest.raises(TapeError, match="non-finite adjoint"):
        t.backward(g)


def test_backward_fast_path_matches_full():
    rng = np.random.default_rng(11)
    t = Tape(lanes=4)
    leaves = [t.leaf(rng.uniform(-1, 1, 4)) for _ in range(3)]
    out = _record_random_expression(t, leaves, rng)
    full = t.backward(out)
    raw = t.backward_raw(out)
    for leaf in leaves:
        assert np.array_equal(full.grad(leaf), raw[leaf.index])
    # second call must see freshly zeroed leaf rows
    raw2 = t.backward_raw(out)
    for leaf in leaves:
        assert np.array_equal(full.grad(leaf), raw2[leaf.index])
